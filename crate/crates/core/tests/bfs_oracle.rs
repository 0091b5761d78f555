//! Single-subproblem optimality: the lazy IW plan is as short as an
//! exhaustive breadth-first search over the same grounded actions.

#[path = "common/bfs.rs"]
mod bfs;

#[test]
fn lazy_iw_matches_bfs() {
    let rep = bfs::run_oracle(50);
    assert_eq!(rep.checked, 50, "too few solvable instances");
    assert!(rep.mismatches.is_empty(), "{:#?}", rep.mismatches);
}
