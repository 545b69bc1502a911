mod common;

use std::time::Duration;

use common::{check_trace, crossed_lock_schedule, locks_on_created, traced_fifo_run};
use dsgen::catalog::{entry, CatalogParams};
use dsgen::runtime::LockMode;
use dsgen::Value;

#[test]
fn fifo_conserves_values_under_contention() {
    let (w, traces) = traced_fifo_run(4, 1000, 0.0, false).unwrap();
    assert_eq!(w.instance.stats().invocations as usize, traces.iter().filter(|t| t.events.last() == Some(&dsgen::runtime::TraceEvent::Commit)).count());
    for t in &traces {
        check_trace(t).unwrap();
    }
}

#[test]
fn fifo_survives_injected_conflicts() {
    let (w, traces) = traced_fifo_run(4, 1000, 0.2, true).unwrap();
    let s = w.instance.manager().stats();
    assert!(s.injected > 0 && s.aborts > 0);
    assert!(s.audited_aborts > 0);
    assert_eq!(s.audit_failures, 0);
    for t in &traces {
        check_trace(t).unwrap();
    }
}

#[test]
fn push_never_locks_its_new_node() {
    let (_, traces) = traced_fifo_run(2, 2000, 0.0, false).unwrap();
    assert!(traces.iter().any(|t| t.events.iter().any(|e| matches!(e, dsgen::runtime::TraceEvent::Create(_)))));
    assert_eq!(locks_on_created(&traces), 0);
}

#[test]
fn crossed_locks_abort_instead_of_deadlocking() {
    let r = crossed_lock_schedule(Duration::from_secs(1)).expect("schedule hung");
    assert!(r.aborts >= 1, "{r:?}");
}

/// A lock held by an outside transaction makes the first attempt conflict;
/// the call retries and its effect lands exactly once.
#[test]
fn forced_conflict_is_retried_once_applied() {
    let inst = entry("fifo", CatalogParams::default()).unwrap().instantiate("forced-conflict").unwrap();
    // push locks the embedded list row, not the wrapper.
    let table = inst.program().table("LL").unwrap();
    let list = inst.attribute("list").unwrap().as_ptr().unwrap();
    let mut blocker = inst.manager().begin_txn();
    blocker.try_lock(table, list.offset(), LockMode::Exclusive).unwrap();
    std::thread::scope(|s| {
        let h = s.spawn(|| inst.call("push", &[Value::I64(7)]));
        let start = std::time::Instant::now();
        while inst.stats().retries == 0 && !h.is_finished() {
            assert!(start.elapsed() < Duration::from_secs(5), "push neither retried nor finished");
            std::thread::yield_now();
        }
        assert!(!h.is_finished(), "push finished while the list was locked");
        blocker.commit().unwrap();
        h.join().unwrap().unwrap();
    });
    let mut out = [Value::I64(0)];
    assert_eq!(inst.invoke("pop", &mut out).unwrap(), Value::Bool(true));
    assert_eq!(out[0], Value::I64(7));
    assert_eq!(inst.invoke("pop", &mut out).unwrap(), Value::Bool(false));
}

#[test]
fn ycsb_reads_take_no_exclusive_locks() {
    let cfg = dsgen::bench::BenchConfig {
        structure: "ycsb".into(),
        threads: 2,
        ops_per_thread: 2000,
        read_ratio: 1.0,
        records_per_worker: 500,
        pin_threads: false,
        strict: true,
        ..Default::default()
    };
    let r = dsgen::bench::run(&cfg).unwrap();
    assert_eq!(r.locks.exclusive_locks, 0);
    assert!(r.locks.shared_locks >= 4000);
}

#[test]
fn ycsb_update_takes_one_exclusive_lock() {
    let e = entry("ycsb", CatalogParams { columns: 10, records: 4, ..Default::default() }).unwrap();
    let inst = e.instantiate("ycsb-one-lock").unwrap();
    let before = inst.manager().stats();
    let mut args: Vec<Value> = (0..11).map(Value::I64).collect();
    inst.invoke("update_record", &mut args).unwrap();
    let after = inst.manager().stats();
    assert_eq!(after.exclusive_locks - before.exclusive_locks, 1);
    assert_eq!(after.shared_locks - before.shared_locks, 0);
}
