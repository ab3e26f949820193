#[test]
fn full_selfcheck() {
    let outcome = redlab_core::selfcheck::run_all(20250810);
    for c in &outcome.report.criteria {
        println!("{}", c.summary_line());
    }
    for t in &outcome.timings {
        println!("{}: {:.2} s (limit {:?})", t.id, t.seconds, t.limit);
    }
    assert!(outcome.passed_including_runtime());
}
