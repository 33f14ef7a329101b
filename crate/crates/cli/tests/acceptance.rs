use ricci_iter::checks::run_acceptance;

#[test]
fn acceptance_criteria() {
    let reports = run_acceptance(&[]);
    assert_eq!(reports.len(), 8);
    for r in &reports {
        println!("{}", r.line());
    }
    let failed: Vec<String> = reports.iter().filter(|r| !r.passed).map(|r| r.line()).collect();
    assert!(failed.is_empty(), "failing criteria:\n{}", failed.join("\n"));
}
