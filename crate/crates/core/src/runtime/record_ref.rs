use std::fmt;

/// Packed 64-bit physical record reference.
///
/// The top 16 bits carry the table id and the low 48 bits the slot offset
/// inside that table. Table id 0 is reserved, so the all-zero value is the
/// null reference.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct RecordRef(u64);

impl RecordRef {
    pub const NULL: RecordRef = RecordRef(0);
    pub const OFFSET_BITS: u32 = 48;
    pub const MAX_OFFSET: u64 = (1 << Self::OFFSET_BITS) - 1;

    /// Packs a table id and slot offset. Returns `None` when the offset does
    /// not fit in 48 bits.
    pub fn new(table_id: u16, offset: u64) -> Option<Self> {
        if offset > Self::MAX_OFFSET {
            return None;
        }
        Some(RecordRef(((table_id as u64) << Self::OFFSET_BITS) | offset))
    }

    pub const fn from_raw(raw: u64) -> Self {
        RecordRef(raw)
    }

    pub const fn raw(self) -> u64 {
        self.0
    }

    pub const fn table_id(self) -> u16 {
        (self.0 >> Self::OFFSET_BITS) as u16
    }

    pub const fn offset(self) -> u64 {
        self.0 & Self::MAX_OFFSET
    }

    pub const fn is_null(self) -> bool {
        self.0 == 0
    }

    /// Reference to the slot `delta` rows after this one in the same table.
    pub fn offset_by(self, delta: u64) -> Option<Self> {
        let offset = self.offset().checked_add(delta)?;
        Self::new(self.table_id(), offset)
    }
}

impl fmt::Debug for RecordRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_null() {
            write!(f, "RecordRef(null)")
        } else {
            write!(f, "RecordRef({}:{})", self.table_id(), self.offset())
        }
    }
}

impl fmt::Display for RecordRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_null() {
            f.write_str("null")
        } else {
            write!(f, "@{}:{}", self.table_id(), self.offset())
        }
    }
}
