use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;

use dashmap::DashMap;
use smallvec::SmallVec;

use super::segvec::SegVec;
use super::RecordRef;

pub type KeyBytes = SmallVec<[u8; 16]>;

/// Hash index from encoded keys to value-row references. Point operations
/// are internally synchronized; transactional isolation comes from the
/// row locks taken around them.
#[derive(Default)]
pub struct KeyIndex {
    map: DashMap<KeyBytes, RecordRef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    Inserted,
    KeyExists,
}

impl KeyIndex {
    pub fn lookup(&self, key: &[u8]) -> Option<RecordRef> {
        self.map.get(key).map(|r| *r)
    }

    pub fn contains(&self, key: &[u8]) -> bool {
        self.map.contains_key(key)
    }

    pub(crate) fn insert_raw(&self, key: &[u8], r: RecordRef) -> InsertOutcome {
        match self.map.entry(KeyBytes::from_slice(key)) {
            dashmap::mapref::entry::Entry::Occupied(_) => InsertOutcome::KeyExists,
            dashmap::mapref::entry::Entry::Vacant(v) => {
                v.insert(r);
                InsertOutcome::Inserted
            }
        }
    }

    pub(crate) fn put_raw(&self, key: &[u8], r: RecordRef) {
        self.map.insert(KeyBytes::from_slice(key), r);
    }

    pub(crate) fn erase_raw(&self, key: &[u8]) -> Option<RecordRef> {
        self.map.remove(key).map(|(_, r)| r)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Snapshot of all (key, ref) pairs.
    pub fn entries(&self) -> Vec<(Vec<u8>, RecordRef)> {
        self.map.iter().map(|e| (e.key().to_vec(), *e.value())).collect()
    }

    pub fn clear(&self) {
        self.map.clear();
    }
}

/// Indexes are addressed by a 64-bit handle stored in the owning row's
/// column. Handles are never reused; a destroyed index is only cleared.
pub struct IndexRegistry {
    slots: SegVec<OnceLock<KeyIndex>>,
    next: AtomicU64,
}

static INDEXES: OnceLock<IndexRegistry> = OnceLock::new();

impl IndexRegistry {
    pub fn global() -> &'static IndexRegistry {
        // Handle 0 stays unused so a zeroed column never names an index.
        INDEXES.get_or_init(|| IndexRegistry { slots: SegVec::new(), next: AtomicU64::new(1) })
    }

    pub fn create(&self) -> u64 {
        let h = self.next.fetch_add(1, Ordering::Relaxed);
        self.slots.get_or_alloc(h).get_or_init(KeyIndex::default);
        h
    }

    #[inline]
    pub fn get(&self, handle: u64) -> Option<&KeyIndex> {
        self.slots.get(handle)?.get()
    }
}
