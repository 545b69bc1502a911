use dsgen::catalog::{self, dll_standalone, entry, CatalogParams};
use dsgen::executor::{ExecError, ExecMode, Instance};
use dsgen::runtime::RuntimeError;
use dsgen::Value;

fn ns(tag: &str) -> String {
    format!("exec-{tag}")
}

fn pop(inst: &Instance, method: &str) -> Option<i64> {
    let mut args = [Value::I64(-1)];
    match inst.invoke(method, &mut args).unwrap() {
        Value::Bool(true) => Some(args[0].as_i64().unwrap()),
        Value::Bool(false) => {
            assert_eq!(args[0], Value::I64(-1), "out-param touched on failure");
            None
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn fifo_push_pop() {
    let inst = entry("fifo", CatalogParams::default()).unwrap().instantiate(&ns("fifo")).unwrap();
    assert_eq!(pop(&inst, "pop"), None);
    inst.call("push", &[Value::I64(42)]).unwrap();
    assert_eq!(pop(&inst, "pop"), Some(42));
    for v in 1..=3 {
        inst.call("push", &[Value::I64(v)]).unwrap();
    }
    assert_eq!((pop(&inst, "pop"), pop(&inst, "pop"), pop(&inst, "pop"), pop(&inst, "pop")), (Some(1), Some(2), Some(3), None));
}

#[test]
fn dll_both_ends() {
    let inst = dll_standalone().instantiate(&ns("dll")).unwrap();
    assert_eq!(inst.call("empty", &[]).unwrap(), Value::Bool(true));
    inst.call("push_back", &[Value::I64(1)]).unwrap();
    inst.call("push_back", &[Value::I64(2)]).unwrap();
    assert_eq!(pop(&inst, "pop_front"), Some(1));
    inst.call("push_front", &[Value::I64(0)]).unwrap();
    assert_eq!(pop(&inst, "pop_back"), Some(2));
    assert_eq!(pop(&inst, "pop_back"), Some(0));
    assert_eq!(pop(&inst, "pop_back"), None);
    inst.call("push_back", &[Value::I64(1)]).unwrap();
    assert_eq!(pop(&inst, "pop_back"), Some(1));
    assert_eq!(inst.call("empty", &[]).unwrap(), Value::Bool(true));
}

fn lru(capacity: usize, tag: &str) -> Instance {
    entry("lru", CatalogParams { capacity, ..Default::default() }).unwrap().instantiate(&ns(tag)).unwrap()
}

fn find(inst: &Instance, k: i64) -> bool {
    let mut args = [Value::I64(k), Value::I64(-1)];
    let hit = inst.invoke("find", &mut args).unwrap() == Value::Bool(true);
    if hit {
        assert_eq!(args[1], Value::I64(k));
    }
    hit
}

#[test]
fn lru_eviction_and_recency() {
    let inst = lru(2, "lru-evict");
    assert!(!find(&inst, 1));
    for k in [1, 2, 3] {
        assert_eq!(inst.call("insert", &[Value::I64(k), Value::I64(k * 10)]).unwrap(), Value::Bool(true));
    }
    assert!(!find(&inst, 1));
    assert!(find(&inst, 2) && find(&inst, 3));
    // 2 was touched before 3, so inserting 4 evicts 2.
    inst.call("insert", &[Value::I64(4), Value::I64(0)]).unwrap();
    assert!(!find(&inst, 2));
    assert_eq!(inst.call("insert", &[Value::I64(4), Value::I64(1)]).unwrap(), Value::Bool(false));
    assert_eq!(inst.attribute("size").unwrap(), Value::I64(2));
    assert_eq!(inst.map_len("map").unwrap(), 2);
}

#[test]
fn lru_capacity_one() {
    let inst = lru(1, "lru-one");
    for k in 0..5 {
        inst.call("insert", &[Value::I64(k), Value::I64(k)]).unwrap();
        assert!(find(&inst, k));
        assert_eq!(inst.map_len("map").unwrap(), 1);
    }
}

#[test]
fn coarse_lru_matches() {
    let a = lru(3, "lru-cmp");
    let b = catalog::build_coarse_lru(3, &ns("lru-cmp")).unwrap();
    assert_eq!(b.mode(), ExecMode::Coarse);
    for k in [1, 2, 3, 1, 4, 5, 2, 1, 6] {
        let args = [Value::I64(k), Value::I64(0)];
        assert_eq!(a.call("insert", &args).unwrap(), b.call("insert", &args).unwrap());
        assert_eq!(find(&a, (k * 7) % 5), find(&b, (k * 7) % 5));
    }
}

#[test]
fn ycsb_roundtrip_and_bounds() {
    let cols = 4;
    let inst = entry("ycsb", CatalogParams { columns: cols, records: 16, ..Default::default() })
        .unwrap()
        .instantiate(&ns("ycsb"))
        .unwrap();
    let mut args: Vec<Value> = std::iter::once(Value::I64(5)).chain((0..cols).map(|c| Value::I64(100 + c as i64))).collect();
    inst.invoke("update_record", &mut args).unwrap();
    let mut out: Vec<Value> = std::iter::once(Value::I64(5)).chain((0..cols).map(|_| Value::I64(0))).collect();
    inst.invoke("read_record", &mut out).unwrap();
    assert_eq!(out, args);
    out[0] = Value::I64(16);
    assert!(matches!(
        inst.invoke("read_record", &mut out),
        Err(ExecError::Runtime(RuntimeError::IndexOutOfBounds { index: 16, len: 16 }))
    ));
}

#[test]
fn argument_checks() {
    let inst = entry("fifo", CatalogParams::default()).unwrap().instantiate(&ns("args")).unwrap();
    assert!(matches!(inst.call("push_back", &[Value::I64(1)]), Err(ExecError::UnknownMethod(_))));
    assert!(matches!(inst.call("push", &[]), Err(ExecError::ArityOrTypeMismatch(_))));
    assert!(matches!(inst.call("push", &[Value::Bool(true)]), Err(ExecError::ArityOrTypeMismatch(_))));
    let names: Vec<String> = inst.methods().into_iter().map(|m| m.0).collect();
    assert_eq!(names, vec!["pop", "push"]);
}

#[test]
fn destroy_frees_every_node() {
    let e = dll_standalone();
    let inst = e.instantiate(&ns("destroy")).unwrap();
    let node_table = inst.program().table("Node").unwrap();
    for v in 0..100 {
        inst.call("push_back", &[Value::I64(v)]).unwrap();
    }
    let free_before = node_table.free_count();
    let freed = inst.destroy().unwrap();
    // 100 nodes plus the list record itself.
    assert_eq!(freed, 101);
    assert_eq!(node_table.free_count(), free_before + 100);
    assert!(matches!(inst.destroy(), Err(ExecError::InvalidState(_))));
    assert!(matches!(inst.call("empty", &[]), Err(ExecError::InvalidState(_))));
}

#[test]
fn two_instances_share_tables() {
    let e = entry("fifo", CatalogParams::default()).unwrap();
    let a = e.instantiate(&ns("share")).unwrap();
    let b = e.instantiate(&ns("share")).unwrap();
    assert_ne!(a.root(), b.root());
    assert_eq!(a.root().table_id(), b.root().table_id());
    a.call("push", &[Value::I64(1)]).unwrap();
    assert_eq!(pop(&b, "pop"), None);
    assert_eq!(pop(&a, "pop"), Some(1));
}

#[test]
fn transactional_needs_injected_spec() {
    let spec = catalog::build_fifo().unwrap();
    assert!(matches!(Instance::instantiate(&spec, &ns("plain"), ExecMode::Transactional), Err(ExecError::NotConcurrent)));
    assert!(Instance::instantiate(&spec, &ns("plain"), ExecMode::Serial).is_ok());
}
