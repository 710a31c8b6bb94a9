//! The acceptance gate: every exit criterion at its pinned tolerance,
//! one pass/fail line per criterion.

use bubblelab_core::acceptance::{format_table, run_all};

#[test]
fn acceptance_suite() {
    let results = run_all();
    println!("{}", format_table(&results));
    let failed: Vec<String> = results
        .iter()
        .filter(|r| !r.pass)
        .map(|r| r.line())
        .collect();
    assert!(
        failed.is_empty(),
        "acceptance criteria failed:\n{}",
        failed.join("\n")
    );
}
