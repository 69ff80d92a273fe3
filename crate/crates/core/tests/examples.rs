//! Runs the quick examples end to end so they stay in sync with the library.

#[path = "../examples/store_roundtrip.rs"]
mod store_roundtrip;

#[path = "../examples/knn_search.rs"]
mod knn_search;

#[path = "../examples/field_walk.rs"]
mod field_walk;

#[path = "../examples/triage.rs"]
mod triage;

#[path = "../examples/geometry.rs"]
mod geometry;

#[test]
fn store_roundtrip_runs() {
    store_roundtrip::main().unwrap();
}

#[test]
fn knn_search_runs() {
    knn_search::main().unwrap();
}

#[test]
fn field_walk_runs() {
    field_walk::main().unwrap();
}

#[test]
fn triage_runs() {
    triage::main().unwrap();
}

#[test]
fn geometry_runs() {
    geometry::main().unwrap();
}
