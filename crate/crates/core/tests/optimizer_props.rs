use dsgen::catalog::{build_doubly_linked_list, build_fifo, build_lru, build_ycsb};
use dsgen::cc::{make_concurrent, verify};
use dsgen::optimizer::optimize;
use dsgen::spec::validate_spec;
use dsgen::spec::DataStructureSpec;
use proptest::prelude::*;

fn spec() -> impl Strategy<Value = DataStructureSpec> {
    prop_oneof![
        Just(build_doubly_linked_list().unwrap()),
        Just(build_fifo().unwrap()),
        (1usize..5000).prop_map(|c| build_lru(c).unwrap()),
        (1usize..=10, 1usize..50).prop_map(|(c, r)| build_ycsb(c, r).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Optimizing twice changes nothing, the result is a valid spec with
    /// the same exposed methods, and lock injection on it verifies.
    #[test]
    fn optimize_is_idempotent_and_valid(s in spec()) {
        let (once, _) = optimize(&s).unwrap();
        let (twice, reports) = optimize(&once).unwrap();
        prop_assert_eq!(&once, &twice);
        prop_assert!(reports.iter().all(|r| !r.changed()));
        validate_spec(&once).unwrap();
        prop_assert_eq!(&once.exposed, &s.exposed);
        verify(&make_concurrent(&once).unwrap()).unwrap();
    }

    /// The optimizer never adds attributes or functions.
    #[test]
    fn optimize_only_removes(s in spec()) {
        let (o, _) = optimize(&s).unwrap();
        for t in o.types() {
            let before = s.types().find(|b| b.name == t.name).unwrap();
            prop_assert!(t.attributes.iter().all(|a| before.attribute(&a.name).is_some()));
            prop_assert!(t.functions.iter().all(|f| before.function(&f.name).is_some()));
        }
    }
}
