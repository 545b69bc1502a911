#![allow(dead_code)]

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::{mpsc, Arc, Barrier};
use std::time::{Duration, Instant};

use dsgen::bench::{BenchConfig, Workload};
use dsgen::executor::{backoff, Instance};
use dsgen::runtime::{get_or_create_txn_manager, Column, LockMode, RecordRef, RuntimeError, TableRegistry, TraceEvent, TxnTrace};
use dsgen::{Value, ValueType};
use rand::rngs::SmallRng;
use rand::Rng;

/// One exposed-method call with its initial arguments.
#[derive(Debug, Clone)]
pub struct Op {
    pub method: &'static str,
    pub args: Vec<Value>,
}

fn op(method: &'static str, args: Vec<i64>) -> Op {
    Op { method, args: args.into_iter().map(Value::I64).collect() }
}

/// Return value and final argument values, or "error".
pub type Outcome = Result<(Value, Vec<Value>), String>;

pub fn apply(inst: &Instance, o: &Op) -> Outcome {
    let mut args = o.args.clone();
    inst.invoke(o.method, &mut args).map(|r| (r, args)).map_err(|e| e.to_string())
}

pub const LRU_CAPACITY: usize = 4;
pub const LRU_KEYS: i64 = 12;
pub const YCSB_COLUMNS: usize = 3;
pub const YCSB_RECORDS: usize = 8;

pub fn trace(structure: &str, rng: &mut SmallRng, len: usize) -> Vec<Op> {
    (0..len)
        .map(|_| {
            let v = rng.random_range(-1000..1000);
            match structure {
                "dll" => match rng.random_range(0..5) {
                    0 => op("push_back", vec![v]),
                    1 => op("push_front", vec![v]),
                    2 => op("pop_front", vec![0]),
                    3 => op("pop_back", vec![0]),
                    _ => op("empty", vec![]),
                },
                "fifo" => {
                    if rng.random_bool(0.5) {
                        op("push", vec![v])
                    } else {
                        op("pop", vec![0])
                    }
                }
                "lru" => {
                    let k = rng.random_range(0..LRU_KEYS);
                    if rng.random_bool(0.6) {
                        op("insert", vec![k, v])
                    } else {
                        op("find", vec![k, 0])
                    }
                }
                "ycsb" => {
                    let idx = rng.random_range(0..=YCSB_RECORDS as i64);
                    if rng.random_bool(0.5) {
                        op("read_record", std::iter::once(idx).chain(std::iter::repeat_n(0, YCSB_COLUMNS)).collect())
                    } else {
                        op("update_record", std::iter::once(idx).chain((0..YCSB_COLUMNS as i64).map(|c| v + c)).collect())
                    }
                }
                other => panic!("no trace generator for {other}"),
            }
        })
        .collect()
}

/// Plain reference implementations of the catalog structures.
pub enum Model {
    Deque(VecDeque<i64>),
    /// Keys, most recent first.
    Lru(VecDeque<i64>, usize),
    Table(Vec<Vec<i64>>),
}

impl Model {
    pub fn new(structure: &str) -> Self {
        match structure {
            "dll" | "fifo" => Model::Deque(VecDeque::new()),
            "lru" => Model::Lru(VecDeque::new(), LRU_CAPACITY),
            "ycsb" => Model::Table(vec![vec![0; YCSB_COLUMNS]; YCSB_RECORDS]),
            other => panic!("no model for {other}"),
        }
    }

    pub fn apply(&mut self, o: &Op) -> Outcome {
        let int = |i: usize| o.args[i].as_i64().unwrap();
        let mut args = o.args.clone();
        let popped = |v: Option<i64>, args: &mut Vec<Value>| {
            if let Some(v) = v {
                args[0] = Value::I64(v);
            }
            Value::Bool(v.is_some())
        };
        let ret = match (self, o.method) {
            (Model::Deque(q), "push_back" | "push") => {
                q.push_back(int(0));
                Value::Void
            }
            (Model::Deque(q), "push_front") => {
                q.push_front(int(0));
                Value::Void
            }
            (Model::Deque(q), "pop_front" | "pop") => popped(q.pop_front(), &mut args),
            (Model::Deque(q), "pop_back") => popped(q.pop_back(), &mut args),
            (Model::Deque(q), "empty") => Value::Bool(q.is_empty()),
            (Model::Lru(keys, cap), "insert") => {
                let k = int(0);
                if let Some(pos) = keys.iter().position(|x| *x == k) {
                    keys.remove(pos);
                    keys.push_front(k);
                    Value::Bool(false)
                } else {
                    if keys.len() == *cap {
                        keys.pop_back();
                    }
                    keys.push_front(k);
                    Value::Bool(true)
                }
            }
            (Model::Lru(keys, _), "find") => {
                let k = int(0);
                match keys.iter().position(|x| *x == k) {
                    Some(pos) => {
                        keys.remove(pos);
                        keys.push_front(k);
                        args[1] = Value::I64(k);
                        Value::Bool(true)
                    }
                    None => Value::Bool(false),
                }
            }
            (Model::Table(rows), m) => {
                let idx = int(0);
                let Some(row) = usize::try_from(idx).ok().and_then(|i| rows.get_mut(i)) else {
                    return Err("index out of bounds".into());
                };
                if m == "read_record" {
                    for (c, v) in row.iter().enumerate() {
                        args[c + 1] = Value::I64(*v);
                    }
                } else {
                    for (c, v) in row.iter_mut().enumerate() {
                        *v = int(c + 1);
                    }
                }
                Value::Void
            }
            (_, m) => panic!("model cannot run {m}"),
        };
        Ok((ret, args))
    }

    /// LRU keys, most recent first.
    pub fn lru_keys(&self) -> Option<&VecDeque<i64>> {
        match self {
            Model::Lru(k, _) => Some(k),
            _ => None,
        }
    }
}

/// Collapses error messages for comparison against a model.
pub fn coarse(o: Outcome) -> Outcome {
    o.map_err(|e| if e.contains("out of bounds") { "index out of bounds".into() } else { e })
}

/// Checks one transaction's lock events: no acquisition or upgrade after
/// the first release, upgrades only of shared locks held by the same
/// transaction, and a release immediately before the final commit or
/// abort.
pub fn check_trace(t: &TxnTrace) -> Result<(), String> {
    let mut held: HashMap<RecordRef, LockMode> = HashMap::new();
    let mut released = false;
    let n = t.events.len();
    for (i, e) in t.events.iter().enumerate() {
        match e {
            TraceEvent::Acquire(r, m) => {
                if released {
                    return Err(format!("txn {} acquires {r} after releasing", t.txn));
                }
                held.insert(*r, *m);
            }
            TraceEvent::Upgrade(r) => {
                if released {
                    return Err(format!("txn {} upgrades {r} after releasing", t.txn));
                }
                if held.insert(*r, LockMode::Exclusive) != Some(LockMode::Shared) {
                    return Err(format!("txn {} upgrades {r} without holding it shared", t.txn));
                }
            }
            TraceEvent::ReleaseAll => released = true,
            TraceEvent::Commit | TraceEvent::Abort => {
                if i + 1 != n {
                    return Err(format!("txn {} has events after its end", t.txn));
                }
                if !held.is_empty() && !matches!(t.events.get(i.wrapping_sub(1)), Some(TraceEvent::ReleaseAll)) {
                    return Err(format!("txn {} ends without releasing at the end", t.txn));
                }
            }
            TraceEvent::Create(_) => {}
        }
    }
    if !matches!(t.events.last(), Some(TraceEvent::Commit | TraceEvent::Abort)) {
        return Err(format!("txn {} never ended", t.txn));
    }
    Ok(())
}

/// Acquisitions of records the same transaction created, in traces.
pub fn locks_on_created(traces: &[TxnTrace]) -> usize {
    traces
        .iter()
        .map(|t| {
            let mut created = HashSet::new();
            t.events
                .iter()
                .filter(|e| match e {
                    TraceEvent::Create(r) => {
                        created.insert(*r);
                        false
                    }
                    TraceEvent::Acquire(r, _) | TraceEvent::Upgrade(r) => created.contains(r),
                    _ => false,
                })
                .count()
        })
        .sum()
}

pub fn fifo_config(threads: usize, ops: u64) -> BenchConfig {
    BenchConfig { structure: "fifo".into(), threads, ops_per_thread: ops, pin_threads: false, strict: true, ..Default::default() }
}

/// Concurrent FIFO run with tracing on. The run itself checks value
/// conservation and per-producer order.
pub fn traced_fifo_run(threads: usize, ops: u64, inject: f64, audit: bool) -> Result<(Workload, Vec<TxnTrace>), String> {
    let w = Workload::new(&fifo_config(threads, ops)).map_err(|e| e.to_string())?;
    let mgr = w.instance.manager();
    mgr.set_tracing(true);
    mgr.set_conflict_injection(inject);
    mgr.set_audit(audit);
    w.run().map_err(|e| e.to_string())?;
    mgr.set_conflict_injection(0.0);
    mgr.set_tracing(false);
    let traces = mgr.take_traces();
    Ok((w, traces))
}

#[derive(Debug)]
pub struct ScheduleReport {
    pub aborts: u64,
    pub elapsed: Duration,
}

/// Two transactions take exclusive locks on rows A and B in opposite
/// orders, each holding its first lock until the other has its own. Each
/// retries after a conflict. Returns None if they do not both commit
/// within `limit`.
pub fn crossed_lock_schedule(limit: Duration) -> Option<ScheduleReport> {
    let ns = "crossed-locks";
    let table = TableRegistry::global().register(ns, "Cell", vec![Column::new("v", ValueType::I64)]).unwrap();
    let mgr = get_or_create_txn_manager(ns);
    let (a, b) = {
        let mut t = mgr.begin_txn();
        let a = t.insert_record(table, &[]).unwrap();
        let b = t.insert_record(table, &[]).unwrap();
        t.commit().unwrap();
        (a, b)
    };
    let barrier = Arc::new(Barrier::new(2));
    let (tx, rx) = mpsc::channel();
    let start = Instant::now();
    for (first, second) in [(a, b), (b, a)] {
        let (barrier, tx) = (barrier.clone(), tx.clone());
        std::thread::spawn(move || {
            let mut rng = rand::rng();
            let mut aborts = 0u64;
            for attempt in 0u32.. {
                let mut t = mgr.begin_txn();
                t.try_lock(table, first.offset(), LockMode::Exclusive).unwrap();
                if attempt == 0 {
                    barrier.wait();
                }
                match t.try_lock(table, second.offset(), LockMode::Exclusive) {
                    Ok(()) => {
                        t.write_field(table, second.offset(), 0, &Value::I64(attempt as i64)).unwrap();
                        t.commit().unwrap();
                        break;
                    }
                    Err(RuntimeError::Conflict) => {
                        t.abort().unwrap();
                        aborts += 1;
                        backoff(attempt, &mut rng);
                    }
                    Err(e) => panic!("{e}"),
                }
            }
            let _ = tx.send(aborts);
        });
    }
    drop(tx);
    let mut aborts = 0;
    for _ in 0..2 {
        aborts += rx.recv_timeout(limit.saturating_sub(start.elapsed())).ok()?;
    }
    Some(ScheduleReport { aborts, elapsed: start.elapsed() })
}
