mod support;

use support::gradient_suite;

#[test]
fn every_op_and_loss_matches_finite_differences() {
    let outcomes = gradient_suite::run(20, 2024);
    let failed: Vec<_> = outcomes.iter().filter(|o| !o.passed).collect();
    assert!(failed.is_empty(), "gradient mismatches: {failed:#?}");
    assert!(outcomes.len() >= 45);
}
