mod common;

use common::{apply, coarse, trace, Model, LRU_CAPACITY, YCSB_COLUMNS, YCSB_RECORDS};
use dsgen::analysis::analyze;
use dsgen::catalog::{dll_standalone, entry, CatalogEntry, CatalogParams};
use dsgen::executor::{ExecMode, Instance};
use dsgen::Value;
use proptest::prelude::*;
use rand::rngs::SmallRng;
use rand::SeedableRng;

fn catalog(structure: &str) -> CatalogEntry {
    let params = CatalogParams { capacity: LRU_CAPACITY, columns: YCSB_COLUMNS, records: YCSB_RECORDS };
    match structure {
        "dll" => dll_standalone(),
        s => entry(s, params).unwrap(),
    }
}

/// 1000 random traces of 100 operations per structure: the concurrent
/// instance (optimized, locks injected, run transactionally) agrees with a
/// hand-written model on every return value and out-parameter.
#[test]
fn catalog_matches_reference_models() {
    for structure in ["dll", "fifo", "lru", "ycsb"] {
        let e = catalog(structure);
        let ns = format!("serial-eq-{structure}");
        let mut rng = SmallRng::seed_from_u64(11);
        for t in 0..1000 {
            let inst = e.instantiate(&ns).unwrap();
            let mut model = Model::new(structure);
            for o in trace(structure, &mut rng, 100) {
                assert_eq!(coarse(apply(&inst, &o)), model.apply(&o), "{structure} trace {t}: {o:?}");
            }
            if structure == "lru" {
                let keys = model.lru_keys().unwrap();
                assert_eq!(inst.attribute("size").unwrap(), Value::I64(keys.len() as i64));
                assert_eq!(inst.map_len("map").unwrap(), keys.len());
            }
            inst.destroy().unwrap();
        }
    }
}

/// Coarse-lock LRU and the transactional LRU answer every trace the same.
#[test]
fn coarse_lru_equals_transactional() {
    let params = CatalogParams { capacity: LRU_CAPACITY, ..Default::default() };
    let (tx, co) = (entry("lru", params).unwrap(), entry("lru-coarse", params).unwrap());
    let mut rng = SmallRng::seed_from_u64(5);
    for _ in 0..200 {
        let (a, b) = (tx.instantiate("coarse-eq").unwrap(), co.instantiate("coarse-eq").unwrap());
        for o in trace("lru", &mut rng, 100) {
            assert_eq!(apply(&a, &o), apply(&b, &o));
        }
        a.destroy().unwrap();
        b.destroy().unwrap();
    }
}

fn structure() -> impl Strategy<Value = &'static str> {
    prop_oneof![Just("dll"), Just("fifo"), Just("lru"), Just("ycsb")]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Every attribute the interpreter touches is in the static read or
    /// write set of the exposed method, and only written attributes are
    /// written.
    #[test]
    fn runtime_accesses_within_static_sets(s in structure(), seed in any::<u64>()) {
        let e = catalog(s);
        let spec = e.prepare().unwrap();
        let rw = analyze(&spec).unwrap();
        let inst = Instance::instantiate(&spec, &format!("touch-{s}"), ExecMode::Transactional).unwrap();
        let mut rng = SmallRng::seed_from_u64(seed);
        for o in trace(s, &mut rng, 60) {
            let mut args = o.args.clone();
            let Ok((_, touched)) = inst.invoke_traced(o.method, &mut args) else { continue };
            let f = rw.get(spec.name(), o.method).unwrap();
            for a in &touched.read {
                prop_assert!(f.read.contains(a), "{}: read {} outside {:?}", o.method, a, f.read);
            }
            for a in &touched.written {
                prop_assert!(f.write.contains(a), "{}: wrote {} outside {:?}", o.method, a, f.write);
            }
            if f.is_const {
                prop_assert!(touched.written.is_empty());
            }
        }
        inst.destroy().unwrap();
    }
}
