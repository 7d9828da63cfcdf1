//! Property tests for the structural invariants and the normal-equations oracle.

mod common;

use proptest::prelude::*;
use robust_qlearn::estimator::PseudoMode;

fn mode() -> impl Strategy<Value = PseudoMode> {
    prop_oneof![Just(PseudoMode::Observed), Just(PseudoMode::Model)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn injected_nuisances_match_brute_force_oracle(seed in any::<u64>(), n in 8usize..=40, mode in mode()) {
        common::check_oracle(seed, n, mode, 1e-10).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn pseudo_outcome_identity(seed in any::<u64>(), n in 8usize..=60) {
        common::check_pseudo_identity(seed, n).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn eta_shift_leaves_estimates_unchanged(seed in any::<u64>(), n in 8usize..=60, mode in mode()) {
        common::check_eta_shift(seed, n, mode).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn decisions_respect_sign_and_scale(seed in any::<u64>()) {
        common::check_decisions(seed).map_err(TestCaseError::fail)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn folds_are_isolated(seed in any::<u64>(), spec in prop_oneof![Just("glm"), Just("rf(trees=20)"), Just("sl(v=3, glm, kernel)")]) {
        common::check_fold_isolation(seed, spec).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn stacking_weights_lie_on_simplex(seed in any::<u64>()) {
        common::check_simplex(seed).map_err(TestCaseError::fail)?;
    }
}

#[test]
fn worker_count_does_not_change_experiments() {
    common::check_determinism(9, (1, 3)).unwrap();
}

#[test]
fn gauss_solve_matches_known_system() {
    // 2x + y = 5, x − 3y = −1 → (2, 1).
    let x = common::gauss_solve(&[vec![2.0, 1.0], vec![1.0, -3.0]], &[5.0, -1.0]).unwrap();
    assert!((x[0] - 2.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    assert!(common::gauss_solve(&[vec![1.0, 2.0], vec![2.0, 4.0]], &[1.0, 2.0]).is_none());
}
