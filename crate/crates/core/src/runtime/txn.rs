use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::OnceLock;

use parking_lot::Mutex;
use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use smallvec::SmallVec;

use super::index::{IndexRegistry, InsertOutcome, KeyIndex};
use super::table::{Table, DELETED, FREE, LIVE};
use super::{LockMode, RecordRef, RuntimeError};
use crate::types::Value;

pub const DEFAULT_NAMESPACE: &str = "default";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxnStatus {
    Active,
    Committed,
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Commit,
    Abort,
}

/// Lock-relevant events of one transaction, in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceEvent {
    Acquire(RecordRef, LockMode),
    Upgrade(RecordRef),
    Create(RecordRef),
    ReleaseAll,
    Commit,
    Abort,
}

#[derive(Debug, Clone)]
pub struct TxnTrace {
    pub txn: u64,
    pub events: Vec<TraceEvent>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub commits: u64,
    pub aborts: u64,
    pub conflicts: u64,
    pub injected: u64,
    pub shared_locks: u64,
    pub exclusive_locks: u64,
    pub upgrades: u64,
    pub audited_aborts: u64,
    pub audit_failures: u64,
}

impl Stats {
    fn add(&mut self, o: &Stats) {
        self.commits += o.commits;
        self.aborts += o.aborts;
        self.conflicts += o.conflicts;
        self.injected += o.injected;
        self.shared_locks += o.shared_locks;
        self.exclusive_locks += o.exclusive_locks;
        self.upgrades += o.upgrades;
        self.audited_aborts += o.audited_aborts;
        self.audit_failures += o.audit_failures;
    }
}

const STRIPES: usize = 16;

#[repr(align(128))]
#[derive(Default)]
struct Stripe {
    counters: [AtomicU64; 9],
}

impl Stripe {
    fn add(&self, s: &Stats) {
        let vals = [
            s.commits,
            s.aborts,
            s.conflicts,
            s.injected,
            s.shared_locks,
            s.exclusive_locks,
            s.upgrades,
            s.audited_aborts,
            s.audit_failures,
        ];
        for (c, v) in self.counters.iter().zip(vals) {
            if v != 0 {
                c.fetch_add(v, Ordering::Relaxed);
            }
        }
    }

    fn load(&self) -> Stats {
        let v: Vec<u64> = self.counters.iter().map(|c| c.load(Ordering::Relaxed)).collect();
        Stats {
            commits: v[0],
            aborts: v[1],
            conflicts: v[2],
            injected: v[3],
            shared_locks: v[4],
            exclusive_locks: v[5],
            upgrades: v[6],
            audited_aborts: v[7],
            audit_failures: v[8],
        }
    }
}

/// Transaction manager of one namespace.
pub struct TxnManager {
    namespace: String,
    next_id: AtomicU64,
    stripes: [Stripe; STRIPES],
    strict: AtomicBool,
    inject: AtomicU64,
    tracing: AtomicBool,
    traces: Mutex<Vec<TxnTrace>>,
    audit: AtomicBool,
}

static MANAGERS: OnceLock<Mutex<HashMap<String, &'static TxnManager>>> = OnceLock::new();

/// The manager for `namespace`, created on first request.
pub fn get_or_create_txn_manager(namespace: &str) -> &'static TxnManager {
    let mut map = MANAGERS.get_or_init(|| Mutex::new(HashMap::new())).lock();
    map.entry(namespace.to_string()).or_insert_with(|| Box::leak(Box::new(TxnManager::new(namespace))))
}

impl TxnManager {
    fn new(namespace: &str) -> Self {
        Self {
            namespace: namespace.to_string(),
            next_id: AtomicU64::new(1),
            stripes: Default::default(),
            strict: AtomicBool::new(cfg!(debug_assertions)),
            inject: AtomicU64::new(0f64.to_bits()),
            tracing: AtomicBool::new(false),
            traces: Mutex::new(Vec::new()),
            audit: AtomicBool::new(false),
        }
    }

    pub fn namespace(&self) -> &str {
        &self.namespace
    }

    /// Checks lock coverage on every field access.
    pub fn set_strict(&self, on: bool) {
        self.strict.store(on, Ordering::Relaxed);
    }

    /// Fails each fresh acquisition or upgrade with probability `p`.
    pub fn set_conflict_injection(&self, p: f64) {
        self.inject.store(p.to_bits(), Ordering::Relaxed);
    }

    pub fn set_tracing(&self, on: bool) {
        self.tracing.store(on, Ordering::Relaxed);
    }

    /// Compares every aborted transaction's touched rows and index entries
    /// against their state at first touch.
    pub fn set_audit(&self, on: bool) {
        self.audit.store(on, Ordering::Relaxed);
    }

    pub fn take_traces(&self) -> Vec<TxnTrace> {
        std::mem::take(&mut *self.traces.lock())
    }

    pub fn stats(&self) -> Stats {
        let mut s = Stats::default();
        for st in &self.stripes {
            s.add(&st.load());
        }
        s
    }

    pub fn begin_txn(&'static self) -> TransactionContext {
        self.begin_with(true)
    }

    /// A transaction that takes no locks and keeps no undo log, for
    /// single-threaded or externally serialized execution.
    pub fn begin_unsynchronized(&'static self) -> TransactionContext {
        self.begin_with(false)
    }

    fn begin_with(&'static self, synchronized: bool) -> TransactionContext {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let inject = if synchronized { f64::from_bits(self.inject.load(Ordering::Relaxed)) } else { 0.0 };
        TransactionContext {
            mgr: self,
            id,
            status: TxnStatus::Active,
            synchronized,
            strict: synchronized && self.strict.load(Ordering::Relaxed),
            locks: Vec::new(),
            undo: Vec::new(),
            created: Vec::new(),
            pending_free: Vec::new(),
            inject,
            rng: (inject > 0.0).then(|| SmallRng::seed_from_u64(id.wrapping_mul(0x9E37_79B9_7F4A_7C15))),
            trace: (synchronized && self.tracing.load(Ordering::Relaxed)).then(Vec::new),
            audit: (synchronized && self.audit.load(Ordering::Relaxed)).then(Audit::default),
            local: Stats::default(),
        }
    }

    pub fn end_txn(&self, txn: &mut TransactionContext, outcome: Outcome) -> Result<TxnStatus, RuntimeError> {
        match outcome {
            Outcome::Commit => txn.commit(),
            Outcome::Abort => txn.abort(),
        }
    }

    fn finish(&self, txn: &mut TransactionContext) {
        self.stripes[(txn.id as usize) % STRIPES].add(&txn.local);
        if let Some(events) = txn.trace.take() {
            self.traces.lock().push(TxnTrace { txn: txn.id, events });
        }
    }
}

struct HeldLock {
    table: &'static Table,
    offset: u64,
    mode: LockMode,
}

enum Undo {
    FieldWrite { table: &'static Table, offset: u64, start: usize, old: SmallVec<[u8; 16]> },
    RecordCreate { table: &'static Table, offset: u64 },
    RecordDelete { table: &'static Table, offset: u64, old: Box<[u8]> },
    IndexInsert { index: u64, key: SmallVec<[u8; 16]> },
    IndexErase { index: u64, key: SmallVec<[u8; 16]>, old: RecordRef },
}

#[derive(Default)]
struct Audit {
    rows: Vec<(&'static Table, u64, u8, Vec<u8>)>,
    entries: Vec<(u64, Vec<u8>, Option<RecordRef>)>,
}

impl Audit {
    fn row(&mut self, table: &'static Table, offset: u64) {
        if self.rows.iter().any(|(t, o, ..)| std::ptr::eq(*t, table) && *o == offset) {
            return;
        }
        let (state, bytes) = match table.slot(offset) {
            Ok(r) => (r.state(), r.bytes()),
            Err(_) => (FREE, Vec::new()),
        };
        self.rows.push((table, offset, state, bytes));
    }

    fn entry(&mut self, index: u64, idx: &KeyIndex, key: &[u8]) {
        if self.entries.iter().any(|(i, k, _)| *i == index && k == key) {
            return;
        }
        self.entries.push((index, key.to_vec(), idx.lookup(key)));
    }

    fn verify(&self) -> bool {
        let rows_ok = self.rows.iter().all(|(t, o, state, bytes)| {
            let row = t.slot(*o).expect("audited slot");
            row.state() == *state && (*state == FREE || row.bytes() == *bytes)
        });
        let entries_ok = self.entries.iter().all(|(i, key, old)| {
            IndexRegistry::global().get(*i).is_some_and(|idx| idx.lookup(key) == *old)
        });
        rows_ok && entries_ok
    }
}

/// A live transaction. Owned by one thread for its whole lifetime.
pub struct TransactionContext {
    mgr: &'static TxnManager,
    id: u64,
    status: TxnStatus,
    synchronized: bool,
    strict: bool,
    locks: Vec<HeldLock>,
    undo: Vec<Undo>,
    created: Vec<(&'static Table, u64)>,
    pending_free: Vec<(&'static Table, u64)>,
    inject: f64,
    rng: Option<SmallRng>,
    trace: Option<Vec<TraceEvent>>,
    audit: Option<Audit>,
    local: Stats,
}

impl TransactionContext {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn status(&self) -> TxnStatus {
        self.status
    }

    pub fn manager(&self) -> &'static TxnManager {
        self.mgr
    }

    pub fn is_synchronized(&self) -> bool {
        self.synchronized
    }

    pub fn held_locks(&self) -> usize {
        self.locks.len()
    }

    pub fn lock_mode(&self, table: &Table, offset: u64) -> Option<LockMode> {
        self.locks.iter().find(|l| std::ptr::eq(l.table, table) && l.offset == offset).map(|l| l.mode)
    }

    fn active(&self) -> Result<(), RuntimeError> {
        if self.status != TxnStatus::Active {
            return Err(RuntimeError::InvalidState(format!("transaction {} is {:?}", self.id, self.status)));
        }
        Ok(())
    }

    fn inject_conflict(&mut self) -> bool {
        let Some(rng) = self.rng.as_mut() else { return false };
        if rng.random::<f64>() < self.inject {
            self.local.injected += 1;
            return true;
        }
        false
    }

    fn conflict(&mut self) -> RuntimeError {
        self.local.conflicts += 1;
        RuntimeError::Conflict
    }

    /// NO_WAIT acquisition. Requesting Exclusive while holding Shared is an
    /// upgrade, which only the sole sharer obtains.
    pub fn try_lock(&mut self, table: &'static Table, offset: u64, mode: LockMode) -> Result<(), RuntimeError> {
        self.active()?;
        if !self.synchronized {
            return Ok(());
        }
        let held = self.locks.iter().position(|l| std::ptr::eq(l.table, table) && l.offset == offset);
        match (held, mode) {
            (Some(i), LockMode::Exclusive) if self.locks[i].mode == LockMode::Shared => {
                let row = table.row(offset)?;
                if self.inject_conflict() || !row.lock.try_upgrade() {
                    return Err(self.conflict());
                }
                self.locks[i].mode = LockMode::Exclusive;
                self.local.upgrades += 1;
                if let Some(t) = self.trace.as_mut() {
                    t.push(TraceEvent::Upgrade(table.record_ref(offset)));
                }
                Ok(())
            }
            (Some(_), _) => Ok(()),
            (None, _) => {
                let row = table.row(offset)?;
                if self.inject_conflict() {
                    return Err(self.conflict());
                }
                let granted = match mode {
                    LockMode::Shared => row.lock.try_shared(),
                    LockMode::Exclusive => row.lock.try_exclusive(),
                };
                if !granted {
                    return Err(self.conflict());
                }
                // The row may have been freed between the state check and
                // the acquisition.
                if row.state() == FREE {
                    match mode {
                        LockMode::Shared => row.lock.release_shared(),
                        LockMode::Exclusive => row.lock.release_exclusive(),
                    }
                    return Err(RuntimeError::InvalidRef(table.record_ref(offset)));
                }
                self.locks.push(HeldLock { table, offset, mode });
                match mode {
                    LockMode::Shared => self.local.shared_locks += 1,
                    LockMode::Exclusive => self.local.exclusive_locks += 1,
                }
                if let Some(t) = self.trace.as_mut() {
                    t.push(TraceEvent::Acquire(table.record_ref(offset), mode));
                }
                if let Some(a) = self.audit.as_mut() {
                    a.row(table, offset);
                }
                Ok(())
            }
        }
    }

    fn created_here(&self, table: &Table, offset: u64) -> bool {
        self.created.iter().any(|(t, o)| std::ptr::eq(*t, table) && *o == offset)
    }

    fn check(&self, table: &Table, offset: u64, need: LockMode) -> Result<(), RuntimeError> {
        if !self.strict {
            return Ok(());
        }
        let ok = match self.lock_mode(table, offset) {
            Some(m) => m >= need,
            None => self.created_here(table, offset),
        };
        if ok {
            Ok(())
        } else {
            Err(RuntimeError::LockProtocolViolation(table.record_ref(offset)))
        }
    }

    pub fn read_field(&self, table: &'static Table, offset: u64, col: usize) -> Result<Value, RuntimeError> {
        self.active()?;
        self.check(table, offset, LockMode::Shared)?;
        table.peek(offset, col)
    }

    pub fn write_field(&mut self, table: &'static Table, offset: u64, col: usize, v: &Value) -> Result<(), RuntimeError> {
        self.active()?;
        self.check(table, offset, LockMode::Exclusive)?;
        let range = table.column_range(col)?;
        let row = table.row(offset)?;
        let mut data = row.data.lock();
        if self.synchronized {
            self.undo.push(Undo::FieldWrite {
                table,
                offset,
                start: range.start,
                old: SmallVec::from_slice(&data[range.clone()]),
            });
        }
        v.encode_into(&mut data[range]);
        Ok(())
    }

    /// Allocates and initializes a record. `init` is the full record
    /// encoding, or empty for all zeros.
    pub fn insert_record(&mut self, table: &'static Table, init: &[u8]) -> Result<RecordRef, RuntimeError> {
        self.active()?;
        let offset = table.allocate()?;
        if let Some(a) = self.audit.as_mut() {
            a.row(table, offset);
        }
        table.activate(offset, init);
        self.register_created(table, offset);
        Ok(table.record_ref(offset))
    }

    /// Allocates `n` adjacent records, each initialized from `init`.
    pub fn insert_contiguous(&mut self, table: &'static Table, n: u64, init: &[u8]) -> Result<RecordRef, RuntimeError> {
        self.active()?;
        let start = table.allocate_contiguous(n)?;
        for o in start..start + n {
            if let Some(a) = self.audit.as_mut() {
                a.row(table, o);
            }
            table.activate(o, init);
            self.register_created(table, o);
        }
        Ok(table.record_ref(start))
    }

    fn register_created(&mut self, table: &'static Table, offset: u64) {
        if self.synchronized {
            self.undo.push(Undo::RecordCreate { table, offset });
            self.created.push((table, offset));
        }
        if let Some(t) = self.trace.as_mut() {
            t.push(TraceEvent::Create(table.record_ref(offset)));
        }
    }

    /// Marks the record deleted; the slot is freed when the transaction
    /// commits.
    pub fn delete_record(&mut self, table: &'static Table, offset: u64) -> Result<(), RuntimeError> {
        self.active()?;
        self.check(table, offset, LockMode::Exclusive)?;
        let row = table.row(offset)?;
        if row.state() != LIVE {
            return Err(RuntimeError::InvalidRef(table.record_ref(offset)));
        }
        if self.synchronized {
            let old = row.data.lock().clone();
            self.undo.push(Undo::RecordDelete { table, offset, old });
            row.state.store(DELETED, Ordering::Release);
            self.pending_free.push((table, offset));
        } else {
            table.release(offset);
        }
        Ok(())
    }

    pub fn index_lookup(&self, idx: &KeyIndex, key: &[u8]) -> Option<RecordRef> {
        idx.lookup(key)
    }

    pub fn index_insert(&mut self, handle: u64, key: &[u8], r: RecordRef) -> Result<InsertOutcome, RuntimeError> {
        self.active()?;
        let idx = IndexRegistry::global().get(handle).ok_or(RuntimeError::InvalidIndex(handle))?;
        if let Some(a) = self.audit.as_mut() {
            a.entry(handle, idx, key);
        }
        let out = idx.insert_raw(key, r);
        if out == InsertOutcome::Inserted && self.synchronized {
            self.undo.push(Undo::IndexInsert { index: handle, key: SmallVec::from_slice(key) });
        }
        Ok(out)
    }

    pub fn index_erase(&mut self, handle: u64, key: &[u8]) -> Result<Option<RecordRef>, RuntimeError> {
        self.active()?;
        let idx = IndexRegistry::global().get(handle).ok_or(RuntimeError::InvalidIndex(handle))?;
        if let Some(a) = self.audit.as_mut() {
            a.entry(handle, idx, key);
        }
        let old = idx.erase_raw(key);
        if let (Some(old), true) = (old, self.synchronized) {
            self.undo.push(Undo::IndexErase { index: handle, key: SmallVec::from_slice(key), old });
        }
        Ok(old)
    }

    fn release_locks(&mut self) {
        for l in self.locks.drain(..) {
            let row = l.table.slot(l.offset).expect("locked row exists");
            match l.mode {
                LockMode::Shared => row.lock.release_shared(),
                LockMode::Exclusive => row.lock.release_exclusive(),
            }
        }
    }

    /// Releases every lock. No acquisition may follow.
    pub fn release_all(&mut self) -> Result<(), RuntimeError> {
        self.active()?;
        self.release_locks();
        if let Some(t) = self.trace.as_mut() {
            t.push(TraceEvent::ReleaseAll);
        }
        Ok(())
    }

    pub fn commit(&mut self) -> Result<TxnStatus, RuntimeError> {
        self.active()?;
        self.release_locks();
        for (t, o) in self.pending_free.drain(..) {
            t.release(o);
        }
        self.undo.clear();
        self.created.clear();
        self.status = TxnStatus::Committed;
        self.local.commits += 1;
        if let Some(t) = self.trace.as_mut() {
            t.push(TraceEvent::Commit);
        }
        self.mgr.finish(self);
        Ok(self.status)
    }

    /// Rolls back every logged change in reverse order, then releases the
    /// locks and returns created slots to the free lists.
    pub fn abort(&mut self) -> Result<TxnStatus, RuntimeError> {
        self.active()?;
        let mut freed: Vec<(&'static Table, u64)> = Vec::new();
        let registry = IndexRegistry::global();
        while let Some(u) = self.undo.pop() {
            match u {
                Undo::FieldWrite { table, offset, start, old } => {
                    let row = table.slot(offset).expect("logged row");
                    row.data.lock()[start..start + old.len()].copy_from_slice(&old);
                }
                Undo::RecordCreate { table, offset } => {
                    table.slot(offset).expect("logged row").state.store(FREE, Ordering::Release);
                    freed.push((table, offset));
                }
                Undo::RecordDelete { table, offset, old } => {
                    let row = table.slot(offset).expect("logged row");
                    row.data.lock().copy_from_slice(&old);
                    row.state.store(LIVE, Ordering::Release);
                }
                Undo::IndexInsert { index, key } => {
                    if let Some(idx) = registry.get(index) {
                        idx.erase_raw(&key);
                    }
                }
                Undo::IndexErase { index, key, old } => {
                    if let Some(idx) = registry.get(index) {
                        idx.put_raw(&key, old);
                    }
                }
            }
        }
        if let Some(a) = self.audit.take() {
            self.local.audited_aborts += 1;
            if !a.verify() {
                self.local.audit_failures += 1;
            }
        }
        self.release_locks();
        self.pending_free.clear();
        self.created.clear();
        for (t, o) in &freed {
            t.push_free([*o]);
        }
        self.status = TxnStatus::Aborted;
        self.local.aborts += 1;
        if let Some(t) = self.trace.as_mut() {
            t.push(TraceEvent::ReleaseAll);
            t.push(TraceEvent::Abort);
        }
        self.mgr.finish(self);
        Ok(self.status)
    }
}

impl Drop for TransactionContext {
    fn drop(&mut self) {
        if self.status == TxnStatus::Active {
            let _ = self.abort();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::{Column, TableRegistry};
    use crate::types::ValueType;

    fn table(ns: &str) -> &'static Table {
        TableRegistry::global()
            .register(ns, "Cell", vec![Column::new("a", ValueType::I64), Column::new("b", ValueType::I32)])
            .unwrap()
    }

    #[test]
    fn managers_are_per_namespace() {
        let a = get_or_create_txn_manager("txn_test_a");
        assert!(std::ptr::eq(a, get_or_create_txn_manager("txn_test_a")));
        assert!(!std::ptr::eq(a, get_or_create_txn_manager("txn_test_b")));
    }

    #[test]
    fn abort_restores_field() {
        let mgr = get_or_create_txn_manager("txn_test_field");
        let t = table("txn_test_field");
        let mut tx = mgr.begin_txn();
        let r = tx.insert_record(t, &[]).unwrap();
        tx.write_field(t, r.offset(), 0, &Value::I64(5)).unwrap();
        tx.commit().unwrap();

        let mut tx = mgr.begin_txn();
        tx.try_lock(t, r.offset(), LockMode::Exclusive).unwrap();
        tx.write_field(t, r.offset(), 0, &Value::I64(9)).unwrap();
        assert_eq!(tx.read_field(t, r.offset(), 0).unwrap(), Value::I64(9));
        tx.abort().unwrap();
        assert_eq!(tx.held_locks(), 0);

        let mut tx = mgr.begin_txn();
        tx.try_lock(t, r.offset(), LockMode::Shared).unwrap();
        assert_eq!(tx.read_field(t, r.offset(), 0).unwrap(), Value::I64(5));
        assert_eq!(tx.read_field(t, r.offset(), 7), Err(RuntimeError::InvalidColumn(7)));
        tx.commit().unwrap();
        assert!(matches!(tx.commit(), Err(RuntimeError::InvalidState(_))));
    }

    #[test]
    fn aborted_create_slot_is_reused() {
        let mgr = get_or_create_txn_manager("txn_test_reuse");
        let t = table("txn_test_reuse");
        let mut tx = mgr.begin_txn();
        let r = tx.insert_record(t, &[]).unwrap();
        tx.abort().unwrap();
        assert_eq!(t.free_count(), 1);
        let mut tx = mgr.begin_txn();
        assert_eq!(tx.insert_record(t, &[]).unwrap(), r);
        tx.commit().unwrap();
    }

    #[test]
    fn delete_then_abort_restores_bytes() {
        let mgr = get_or_create_txn_manager("txn_test_delete");
        let t = table("txn_test_delete");
        let mut tx = mgr.begin_txn();
        let r = tx.insert_record(t, &[]).unwrap();
        tx.write_field(t, r.offset(), 1, &Value::I32(-3)).unwrap();
        tx.commit().unwrap();
        let before = t.row(r.offset()).unwrap().bytes();

        let mut tx = mgr.begin_txn();
        tx.try_lock(t, r.offset(), LockMode::Exclusive).unwrap();
        tx.delete_record(t, r.offset()).unwrap();
        tx.abort().unwrap();
        assert_eq!(t.row(r.offset()).unwrap().bytes(), before);
        assert_eq!(t.row(r.offset()).unwrap().state(), LIVE);

        let mut tx = mgr.begin_txn();
        tx.try_lock(t, r.offset(), LockMode::Exclusive).unwrap();
        tx.delete_record(t, r.offset()).unwrap();
        tx.commit().unwrap();
        assert!(t.row(r.offset()).is_err());
    }

    #[test]
    fn no_wait_modes() {
        let mgr = get_or_create_txn_manager("txn_test_modes");
        let t = table("txn_test_modes");
        let mut setup = mgr.begin_txn();
        let r = setup.insert_record(t, &[]).unwrap();
        setup.commit().unwrap();
        let o = r.offset();

        let mut t1 = mgr.begin_txn();
        let mut t2 = mgr.begin_txn();
        t1.try_lock(t, o, LockMode::Exclusive).unwrap();
        assert_eq!(t2.try_lock(t, o, LockMode::Shared), Err(RuntimeError::Conflict));
        t1.try_lock(t, o, LockMode::Shared).unwrap();
        t1.commit().unwrap();

        let mut t1 = mgr.begin_txn();
        t1.try_lock(t, o, LockMode::Shared).unwrap();
        t1.try_lock(t, o, LockMode::Exclusive).unwrap();
        t1.commit().unwrap();

        let mut t1 = mgr.begin_txn();
        t1.try_lock(t, o, LockMode::Shared).unwrap();
        t2.try_lock(t, o, LockMode::Shared).unwrap();
        assert_eq!(t1.try_lock(t, o, LockMode::Exclusive), Err(RuntimeError::Conflict));
        t1.abort().unwrap();
        t2.commit().unwrap();
        assert_eq!(t.row(o).unwrap().lock.sharers(), 0);
    }

    #[test]
    fn index_rollback() {
        let mgr = get_or_create_txn_manager("txn_test_index");
        let h = IndexRegistry::global().create();
        let r = RecordRef::new(1, 1).unwrap();
        let mut tx = mgr.begin_txn();
        assert_eq!(tx.index_insert(h, b"k", r).unwrap(), InsertOutcome::Inserted);
        assert_eq!(tx.index_lookup(IndexRegistry::global().get(h).unwrap(), b"k"), Some(r));
        tx.abort().unwrap();
        assert_eq!(IndexRegistry::global().get(h).unwrap().lookup(b"k"), None);
    }

    #[test]
    fn strict_mode_rejects_unlocked_write() {
        let mgr = get_or_create_txn_manager("txn_test_strict");
        mgr.set_strict(true);
        let t = table("txn_test_strict");
        let mut tx = mgr.begin_txn();
        let r = tx.insert_record(t, &[]).unwrap();
        tx.commit().unwrap();
        let mut tx = mgr.begin_txn();
        tx.try_lock(t, r.offset(), LockMode::Shared).unwrap();
        assert!(matches!(
            tx.write_field(t, r.offset(), 0, &Value::I64(1)),
            Err(RuntimeError::LockProtocolViolation(_))
        ));
        tx.abort().unwrap();
    }
}
