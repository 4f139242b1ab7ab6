//! Exact bookkeeping of function-space memberships: a small rewriting engine over
//! b-Sobolev, conormal and harmonic-expansion terms, driven by a rule file.

mod derive;
mod expr;
mod rules;

pub use derive::{
    check_derivation, closed_form_floor_iterate, high_freq_table, high_freq_transcript, run_high_freq_numerology,
    run_low_freq_iteration, run_low_freq_iteration_with, Derivation, Divergence, HighFreqSummary, LowFreqSummary,
    SideStep, Step, StepOp,
};
pub use expr::{fmt_q, q, qi, SpaceExpr, Q};
pub use rules::{apply_rule, Bindings, Cmp, Ex, Guard, OutBase, OutTerm, Pattern, Rule, RuleSet, Val};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn iteration_for_five_halves() {
        let d = run_low_freq_iteration(qi(2), q(5, 2)).unwrap();
        let sm = &d.summary;
        assert_eq!(sm.j, 3);
        assert_eq!((sm.exponent, sm.exponent_minus), (q(7, 2), true));
        assert_eq!(sm.m, 4);
        assert_eq!(sm.regularity, qi(2));
        assert!(sm.matches_closed_form);
        assert_eq!(d.steps[2].expr.to_string(), "ρ^3 Y_{1..2} + H_b^{4,2-} + σ·C[σ]·H_b^{5,1-}");
        assert!(check_derivation(&d, &RuleSet::builtin()).is_ok());
    }

    #[test]
    fn iteration_for_three_halves() {
        let d = run_low_freq_iteration(qi(3), q(3, 2)).unwrap();
        assert_eq!((d.summary.exponent, d.summary.exponent_minus, d.summary.m), (q(5, 2), true, 4));
        assert!(d.summary.matches_closed_form);
        assert!(check_derivation(&d, &RuleSet::builtin()).is_ok());
    }

    #[test]
    fn tampered_weight_is_located() {
        let mut d = run_low_freq_iteration(qi(2), q(5, 2)).unwrap();
        let k = d.kappa;
        d.steps[1].expr = SpaceExpr::sum(vec![
            SpaceExpr::HarmonicSum { j_lo: 3, j_hi: Some(4), ell_lo: -2, ell_hi: -2 },
            SpaceExpr::hb(qi(3), k + q(1, 2), true),
            SpaceExpr::sigma(qi(1), false, SpaceExpr::hb(qi(4), k + q(1, 2), true)),
        ]);
        let err = check_derivation(&d, &RuleSet::builtin()).unwrap_err();
        assert_eq!(err.step, 1);
        assert_eq!(err.label, "f_1");
    }

    #[test]
    fn more_regularity_buys_one_more_derivative() {
        for kappa in [q(3, 2), q(5, 2), q(7, 2), q(9, 4)] {
            let ms: Vec<_> = (2..7)
                .map(|s| run_low_freq_iteration(qi(s), kappa).unwrap().summary)
                .collect();
            for w in ms.windows(2) {
                assert_eq!(w[1].m, w[0].m + 1);
                assert_eq!((w[1].exponent, w[1].exponent_minus), (w[0].exponent, w[0].exponent_minus));
            }
            for (s, sm) in (2..7).zip(&ms) {
                assert_eq!(sm.m, s + kappa.floor().to_integer());
                assert_eq!(sm.exponent, kappa + 1);
            }
        }
    }

    #[test]
    fn integer_decay_is_excluded() {
        for kappa in [qi(2), qi(3), qi(1), q(1, 2)] {
            assert!(matches!(run_low_freq_iteration(qi(2), kappa), Err(Error::ExcludedParameter(_))));
        }
        assert!(matches!(run_low_freq_iteration(qi(0), q(5, 2)), Err(Error::ExcludedParameter(_))));
    }

    #[test]
    fn high_frequency_thresholds() {
        assert_eq!(run_high_freq_numerology(qi(0), 3, q(3, 2)).unwrap().floor, qi(11));
        assert_eq!(run_high_freq_numerology(qi(3), 2, q(3, 2)).unwrap().floor, qi(36));
        assert_eq!(run_high_freq_numerology(qi(0), 1, q(3, 2)).unwrap().threshold, qi(14));
        let rows = high_freq_table().unwrap();
        assert_eq!(rows.len(), 12);
        for r in &rows {
            let w = r.varpi + 1;
            assert_eq!(r.floor, qi(2 * r.p + 5) * w);
            assert_eq!(r.threshold, w * (r.kappa * 2 + 9) + 2);
            assert!(r.consistent);
        }
        assert!(run_high_freq_numerology(qi(-1), 1, q(3, 2)).is_err());
    }

    #[test]
    fn transcripts_are_deterministic() {
        let a = run_low_freq_iteration(qi(2), q(5, 2)).unwrap().transcript();
        let b = run_low_freq_iteration(qi(2), q(5, 2)).unwrap().transcript();
        assert_eq!(a, b);
    }
}
