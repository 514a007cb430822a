mod common;

use common::{gradient_check, REL_TOLERANCE};
use pscf_core::experiments::LossMode;

#[test]
fn rule_loss_gradient_matches_finite_differences() {
    for seed in [1, 2] {
        let check = gradient_check(LossMode::RuleOnly, seed, 120);
        assert!(check.checked >= 100, "{check:?}");
        assert!(check.max_rel_err < REL_TOLERANCE, "{check:?}");
    }
}

#[test]
fn combined_loss_gradient_matches_finite_differences() {
    for seed in [1, 2] {
        let check = gradient_check(LossMode::RulePlusParticipation, seed, 120);
        assert!(check.loss.participation_loss > 0.0, "{check:?}");
        assert!(check.checked >= 100, "{check:?}");
        assert!(check.max_rel_err < REL_TOLERANCE, "{check:?}");
    }
}
