//! Analytic gradients of every graph op against central finite differences.

use trajcast_core::gradcheck;

#[test]
fn every_op_passes_finite_difference_check() {
    let results = gradcheck::all_op_checks(1e-5).unwrap();
    assert!(results.len() >= 24, "op inventory shrank: {}", results.len());
    for (name, err) in &results {
        assert!(
            *err < 1e-4,
            "op `{name}`: max relative error {err:.3e} >= 1e-4"
        );
    }
}
