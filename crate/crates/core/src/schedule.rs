//! Tick arithmetic shared by the synchronous loops and the simulator.
//!
//! Ticks sit on a fixed grid `k * interval` anchored at loop start. A
//! synchronous loop that is still busy when ticks come due does not queue
//! them: once the call returns, the latest overdue tick fires immediately
//! and any earlier overdue ones are skipped.

/// The next tick a synchronous loop fires after the call for `last_tick`
/// returned at `done`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NextTick {
    pub tick: u64,
    /// When it fires, same unit as the inputs.
    pub at: u64,
    /// Overdue ticks dropped in between.
    pub skipped: u64,
}

/// `interval` and `done` share a unit (ms in the real loops, µs in the
/// simulator). `interval` must be positive.
pub fn next_sync_tick(interval: u64, last_tick: u64, done: u64) -> NextTick {
    debug_assert!(interval > 0);
    let overdue = done / interval;
    let tick = overdue.max(last_tick + 1);
    NextTick {
        tick,
        at: (tick * interval).max(done),
        skipped: tick - last_tick - 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_call_waits_for_grid() {
        assert_eq!(
            next_sync_tick(350, 0, 10),
            NextTick {
                tick: 1,
                at: 350,
                skipped: 0
            }
        );
        assert_eq!(
            next_sync_tick(350, 3, 1060),
            NextTick {
                tick: 4,
                at: 1400,
                skipped: 0
            }
        );
    }

    #[test]
    fn slow_call_fires_latest_overdue_tick_at_once() {
        // 500 ms calls on a 350 ms grid.
        assert_eq!(
            next_sync_tick(350, 0, 500),
            NextTick {
                tick: 1,
                at: 500,
                skipped: 0
            }
        );
        assert_eq!(
            next_sync_tick(350, 1, 1000),
            NextTick {
                tick: 2,
                at: 1000,
                skipped: 0
            }
        );
        assert_eq!(
            next_sync_tick(350, 2, 1500),
            NextTick {
                tick: 4,
                at: 1500,
                skipped: 1
            }
        );
    }

    #[test]
    fn exact_grid_completion() {
        assert_eq!(
            next_sync_tick(100, 0, 100),
            NextTick {
                tick: 1,
                at: 100,
                skipped: 0
            }
        );
        assert_eq!(
            next_sync_tick(100, 0, 300),
            NextTick {
                tick: 3,
                at: 300,
                skipped: 2
            }
        );
    }

    /// Steady-state rate of a synchronous loop is 1 / max(interval, latency).
    #[test]
    fn steady_rate_matches_max_of_interval_and_latency() {
        for (interval, latency) in [(350u64, 500u64), (350, 100), (100, 730), (50, 50)] {
            let (mut tick, mut at, mut sends) = (0u64, 0u64, 0u64);
            let horizon = 200 * interval.max(latency);
            while at < horizon {
                sends += 1;
                let n = next_sync_tick(interval, tick, at + latency);
                tick = n.tick;
                at = n.at;
            }
            let expected = horizon as f64 / interval.max(latency) as f64;
            let err = (sends as f64 - expected).abs() / expected;
            assert!(
                err < 0.10,
                "interval {interval} latency {latency}: {sends} vs {expected}"
            );
        }
    }
}
