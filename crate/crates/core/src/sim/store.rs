//! Byte-level model of the single-slot store file.

/// File content as a reader would see it. Offsets past the current end
/// that a writer skips over read back as NUL, as with a sparse write past
/// EOF.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ByteStore {
    content: Vec<u8>,
    /// Version whose complete record is exactly the current content.
    version: Option<u64>,
}

impl ByteStore {
    pub fn content(&self) -> &[u8] {
        &self.content
    }

    pub fn version(&self) -> Option<u64> {
        self.version
    }

    /// Open-for-write: length drops to zero. Returns whether content changed.
    pub fn truncate(&mut self) -> bool {
        self.version = None;
        let changed = !self.content.is_empty();
        self.content.clear();
        changed
    }

    /// Writes one byte at `offset`. Returns whether content changed.
    pub fn write_byte(&mut self, offset: usize, byte: u8) -> bool {
        self.version = None;
        if offset >= self.content.len() {
            self.content.resize(offset, 0);
            self.content.push(byte);
            true
        } else {
            let changed = self.content[offset] != byte;
            self.content[offset] = byte;
            changed
        }
    }

    /// Swaps in a whole record at once. Returns whether content changed.
    pub fn replace(&mut self, record: &[u8], version: u64) -> bool {
        let changed = self.content != record;
        self.content.clear();
        self.content.extend_from_slice(record);
        self.version = Some(version);
        changed
    }

    /// Marks `version` as the owner of the content if it matches exactly.
    pub fn claim(&mut self, record: &[u8], version: u64) {
        if self.content == record {
            self.version = Some(version);
        }
    }
}
