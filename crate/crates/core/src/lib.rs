//! Sensor telemetry relay pipeline.
//!
//! A relay samples an accelerometer trace and pushes each reading to a web
//! host as a GET query. The web host keeps only the latest record, which a
//! poller fetches on its own cadence. [`sim`] replays the same pipeline on a
//! virtual clock to study request overlap and torn store reads.

pub mod codec;
pub mod loopback;
pub mod relay;
pub mod retrieval;
pub mod schedule;
pub mod sensor;
pub mod sim;
pub mod transport;
pub mod webhost;
