//! The estimator functions must never allocate a potential table. This
//! lives in its own test binary so the process-wide allocation counter is
//! not disturbed by concurrent compilations.

use beliefcore::clustering::{
    build_join_tree_structure, potential_allocations, TriangulationMethod,
};
use beliefcore::estimators::{estimate_jensen_init, estimate_jensen_update};
use beliefcore::generate::{random_network, RandomNetParams};
use beliefcore::model::Evidence;

#[test]
fn estimation_is_potential_free() {
    let d = random_network(&RandomNetParams {
        node_count: 20,
        max_parents: 3,
        states: (2, 3),
        arc_density: 0.4,
        polytree_only: false,
        seed: 99,
    })
    .unwrap();
    let structure = build_join_tree_structure(&d, TriangulationMethod::MinFill).unwrap();
    let before = potential_allocations();
    let mut sink = 0u64;
    for _ in 0..1000 {
        sink = sink.wrapping_add(estimate_jensen_init(&structure));
        sink = sink.wrapping_add(estimate_jensen_update(&structure, &Evidence::none()));
    }
    assert!(sink > 0);
    assert_eq!(potential_allocations(), before, "estimation allocated a potential");
}
