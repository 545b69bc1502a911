use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, AtomicU8, Ordering};
use std::sync::OnceLock;

use parking_lot::Mutex;

use super::segvec::SegVec;
use super::{RecordRef, RuntimeError};
use crate::types::{Value, ValueType};

const EXCLUSIVE: u64 = 1 << 63;

/// Reader-writer try-lock. The low bits count sharers so a sole sharer can
/// detect that an upgrade is safe.
#[derive(Default)]
pub struct RowLock(AtomicU64);

impl RowLock {
    pub fn try_shared(&self) -> bool {
        let mut cur = self.0.load(Ordering::Relaxed);
        loop {
            if cur & EXCLUSIVE != 0 {
                return false;
            }
            match self.0.compare_exchange_weak(cur, cur + 1, Ordering::Acquire, Ordering::Relaxed) {
                Ok(_) => return true,
                Err(actual) => cur = actual,
            }
        }
    }

    pub fn try_exclusive(&self) -> bool {
        self.0.compare_exchange(0, EXCLUSIVE, Ordering::Acquire, Ordering::Relaxed).is_ok()
    }

    /// Shared to exclusive; only the sole sharer succeeds.
    pub fn try_upgrade(&self) -> bool {
        self.0.compare_exchange(1, EXCLUSIVE, Ordering::Acquire, Ordering::Relaxed).is_ok()
    }

    pub fn release_shared(&self) {
        let prev = self.0.fetch_sub(1, Ordering::Release);
        debug_assert!(prev & !EXCLUSIVE > 0 && prev & EXCLUSIVE == 0);
    }

    pub fn release_exclusive(&self) {
        let prev = self.0.swap(0, Ordering::Release);
        debug_assert_eq!(prev, EXCLUSIVE);
    }

    pub fn sharers(&self) -> u64 {
        let v = self.0.load(Ordering::Relaxed);
        if v & EXCLUSIVE != 0 {
            0
        } else {
            v
        }
    }

    pub fn is_exclusive(&self) -> bool {
        self.0.load(Ordering::Relaxed) & EXCLUSIVE != 0
    }
}

pub const FREE: u8 = 0;
pub const LIVE: u8 = 1;
/// Deleted by a transaction that has not committed yet.
pub const DELETED: u8 = 2;

/// One slot. The row lock is the transactional lock; the data mutex is a
/// short-term latch guarding the bytes during a single read or write.
#[derive(Default)]
pub struct Row {
    pub lock: RowLock,
    pub(crate) state: AtomicU8,
    pub(crate) row_id: AtomicU64,
    pub(crate) data: Mutex<Box<[u8]>>,
}

impl Row {
    pub fn state(&self) -> u8 {
        self.state.load(Ordering::Acquire)
    }

    pub fn row_id(&self) -> u64 {
        self.row_id.load(Ordering::Relaxed)
    }

    pub fn bytes(&self) -> Vec<u8> {
        self.data.lock().to_vec()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub name: String,
    pub ty: ValueType,
}

impl Column {
    pub fn new(name: impl Into<String>, ty: ValueType) -> Self {
        Self { name: name.into(), ty }
    }
}

/// Fixed-size rows of one record type. Offsets are slot indexes.
pub struct Table {
    id: u16,
    name: String,
    columns: Vec<Column>,
    offsets: Vec<usize>,
    width: usize,
    rows: SegVec<Row>,
    next_slot: AtomicU64,
    free: Mutex<Vec<u64>>,
    next_row_id: AtomicU64,
}

impl std::fmt::Debug for Table {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Table").field("id", &self.id).field("name", &self.name).finish()
    }
}

impl Table {
    fn new(id: u16, name: String, columns: Vec<Column>) -> Self {
        let mut offsets = Vec::with_capacity(columns.len());
        let mut width = 0;
        for c in &columns {
            offsets.push(width);
            width += c.ty.width();
        }
        Self {
            id,
            name,
            columns,
            offsets,
            width,
            rows: SegVec::new(),
            next_slot: AtomicU64::new(0),
            free: Mutex::new(Vec::new()),
            next_row_id: AtomicU64::new(1),
        }
    }

    pub fn id(&self) -> u16 {
        self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Record size in bytes: the sum of the column widths.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn record_ref(&self, offset: u64) -> RecordRef {
        RecordRef::new(self.id, offset).expect("offset within 48 bits")
    }

    /// Slots handed out so far (live, pending or free).
    pub fn high_water(&self) -> u64 {
        self.next_slot.load(Ordering::Acquire)
    }

    pub fn free_count(&self) -> usize {
        self.free.lock().len()
    }

    pub fn live_count(&self) -> usize {
        (0..self.high_water()).filter(|&o| self.rows.get(o).is_some_and(|r| r.state() == LIVE)).count()
    }

    /// Any allocated slot, whatever its state.
    pub fn slot(&self, offset: u64) -> Result<&Row, RuntimeError> {
        if offset >= self.high_water() {
            return Err(RuntimeError::InvalidRef(RecordRef::new(self.id, offset).unwrap_or(RecordRef::NULL)));
        }
        Ok(self.rows.get_or_alloc(offset))
    }

    /// A live (or delete-pending) row.
    #[inline]
    pub fn row(&self, offset: u64) -> Result<&Row, RuntimeError> {
        let row = self.slot(offset)?;
        if row.state() == FREE {
            return Err(RuntimeError::InvalidRef(self.record_ref(offset)));
        }
        Ok(row)
    }

    pub fn column_range(&self, col: usize) -> Result<std::ops::Range<usize>, RuntimeError> {
        let ty = &self.columns.get(col).ok_or(RuntimeError::InvalidColumn(col))?.ty;
        let start = self.offsets[col];
        Ok(start..start + ty.width())
    }

    /// Reads a column without any transactional check.
    pub fn peek(&self, offset: u64, col: usize) -> Result<Value, RuntimeError> {
        let range = self.column_range(col)?;
        let row = self.row(offset)?;
        let data = row.data.lock();
        Ok(Value::decode(&self.columns[col].ty, &data[range]))
    }

    /// Reserves one slot, reusing freed slots first. The row is not live
    /// until [`Table::activate`].
    pub(crate) fn allocate(&self) -> Result<u64, RuntimeError> {
        if let Some(o) = self.free.lock().pop() {
            return Ok(o);
        }
        self.allocate_contiguous(1)
    }

    /// Reserves `n` fresh adjacent slots.
    pub(crate) fn allocate_contiguous(&self, n: u64) -> Result<u64, RuntimeError> {
        let start = self.next_slot.fetch_add(n, Ordering::AcqRel);
        if start + n > RecordRef::MAX_OFFSET + 1 {
            return Err(RuntimeError::CapacityExceeded(self.name.clone()));
        }
        for o in start..start + n {
            self.rows.get_or_alloc(o);
        }
        Ok(start)
    }

    /// Initializes a reserved slot and marks it live.
    pub(crate) fn activate(&self, offset: u64, init: &[u8]) {
        let row = self.rows.get_or_alloc(offset);
        {
            let mut data = row.data.lock();
            if data.len() != self.width {
                *data = vec![0; self.width].into_boxed_slice();
            }
            if init.is_empty() {
                data.fill(0);
            } else {
                data.copy_from_slice(init);
            }
        }
        row.row_id.store(self.next_row_id.fetch_add(1, Ordering::Relaxed), Ordering::Relaxed);
        row.state.store(LIVE, Ordering::Release);
    }

    pub(crate) fn release(&self, offset: u64) {
        self.rows.get_or_alloc(offset).state.store(FREE, Ordering::Release);
        self.free.lock().push(offset);
    }

    pub(crate) fn push_free(&self, offsets: impl IntoIterator<Item = u64>) {
        self.free.lock().extend(offsets);
    }
}

/// Process-wide table registry. Table ids index a fixed array so lookups
/// from a [`RecordRef`] take no lock. Tables live for the whole process.
pub struct TableRegistry {
    by_id: Box<[OnceLock<&'static Table>]>,
    by_name: Mutex<HashMap<String, &'static Table>>,
}

static REGISTRY: OnceLock<TableRegistry> = OnceLock::new();

impl TableRegistry {
    pub fn global() -> &'static TableRegistry {
        REGISTRY.get_or_init(|| TableRegistry {
            by_id: (0..=u16::MAX as usize).map(|_| OnceLock::new()).collect(),
            by_name: Mutex::new(HashMap::new()),
        })
    }

    /// Registers `namespace::name`, or returns the existing table when the
    /// schema matches.
    pub fn register(&self, namespace: &str, name: &str, columns: Vec<Column>) -> Result<&'static Table, RuntimeError> {
        let full = format!("{namespace}::{name}");
        let mut by_name = self.by_name.lock();
        if let Some(t) = by_name.get(&full) {
            if t.columns != columns {
                return Err(RuntimeError::SchemaConflict(full));
            }
            return Ok(t);
        }
        // Id 0 is reserved for the null reference.
        let id = by_name.len() + 1;
        if id > u16::MAX as usize {
            return Err(RuntimeError::CapacityExceeded("table registry".into()));
        }
        let table: &'static Table = Box::leak(Box::new(Table::new(id as u16, full.clone(), columns)));
        self.by_id[id].set(table).ok().expect("fresh id");
        by_name.insert(full, table);
        Ok(table)
    }

    pub fn lookup(&self, namespace: &str, name: &str) -> Option<&'static Table> {
        self.by_name.lock().get(&format!("{namespace}::{name}")).copied()
    }

    #[inline]
    pub fn table(&self, id: u16) -> Option<&'static Table> {
        self.by_id.get(id as usize)?.get().copied()
    }

    pub fn resolve(&self, r: RecordRef) -> Result<(&'static Table, u64), RuntimeError> {
        if r.is_null() {
            return Err(RuntimeError::NullDereference);
        }
        let t = self.table(r.table_id()).ok_or(RuntimeError::InvalidRef(r))?;
        Ok((t, r.offset()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_lock_modes() {
        let l = RowLock::default();
        assert!(l.try_shared());
        assert!(l.try_shared());
        assert!(!l.try_exclusive());
        assert!(!l.try_upgrade());
        l.release_shared();
        assert!(l.try_upgrade());
        assert!(!l.try_shared());
        l.release_exclusive();
        assert!(l.try_exclusive());
        l.release_exclusive();
        assert_eq!(l.sharers(), 0);
    }

    #[test]
    fn schema_conflict_and_idempotence() {
        let reg = TableRegistry::global();
        let a = reg.register("table_test", "T", vec![Column::new("x", ValueType::I64)]).unwrap();
        let b = reg.register("table_test", "T", vec![Column::new("x", ValueType::I64)]).unwrap();
        assert!(std::ptr::eq(a, b));
        assert!(matches!(
            reg.register("table_test", "T", vec![Column::new("x", ValueType::I32)]),
            Err(RuntimeError::SchemaConflict(_))
        ));
        assert_eq!(a.width(), 8);
        assert!(std::ptr::eq(reg.table(a.id()).unwrap(), a));
    }
}
