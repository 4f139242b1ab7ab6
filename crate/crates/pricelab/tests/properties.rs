use num_complex::Complex64 as C;
use pricelab::conormal::{hb_norm, le_norm, le_star_norm};
use pricelab::grid::{Grid, GridFunction};
use pricelab::mellin::{inverse_mellin, l0_poles, l0_symbol, mellin_transform, LogGrid, LogSamples};
use pricelab::spacecalc::{q, qi, run_low_freq_iteration, SpaceExpr};
use pricelab::timedomain::{fit_decay, TimeTrace, TraceMethod};
use pricelab::Exec;
use proptest::prelude::*;
use std::sync::Arc;

fn grid() -> Arc<Grid> {
    Arc::new(Grid::new(1.0, 0.02, 200.0))
}

fn packet(ell: usize, center: f64, width: f64) -> GridFunction {
    GridFunction::from_real(grid(), ell, move |r| r.powi(ell as i32) * (-((r - center) / width).powi(2)).exp())
}

/// Non-integer κ > 1 as an exact rational.
fn kappa() -> impl Strategy<Value = (i64, i64)> {
    (2i64..9, 1i64..8).prop_filter_map("integer κ", |(d, n)| {
        let num = d + n;
        (num % d != 0).then_some((num, d))
    })
}

fn atom() -> impl Strategy<Value = SpaceExpr> {
    let hb = (0i64..12, -8i64..12, any::<bool>()).prop_map(|(s, w, m)| SpaceExpr::hb(qi(s), q(w, 2), m));
    let harm = (3i64..6, prop::option::of(0i64..3), -2i64..0, 0i64..2)
        .prop_map(|(lo, hi, a, b)| SpaceExpr::HarmonicSum { j_lo: lo, j_hi: hi.map(|h| lo + h), ell_lo: a, ell_hi: b });
    prop_oneof![hb.clone(), harm, hb.clone().prop_map(SpaceExpr::poly)]
        .prop_flat_map(|e| (Just(e), 0i64..3, any::<bool>()))
        .prop_map(|(e, p, m)| if p == 0 && !m { e } else { SpaceExpr::sigma(qi(p), m, e) })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hb_norm_is_homogeneous(c in 0.1f64..10.0, phase in 0.0f64..6.3, center in 0.0f64..8.0, w in -1.0f64..2.0) {
        let u = packet(1, center, 1.5);
        let v = u.scale(C::from_polar(c, phase));
        let a = hb_norm(&u, 2, w).unwrap().value;
        let b = hb_norm(&v, 2, w).unwrap().value;
        prop_assert!((b - c * a).abs() <= 1e-10 * b);
    }

    #[test]
    fn norms_satisfy_the_triangle_inequality(c1 in 0.0f64..8.0, c2 in 0.0f64..8.0, w in -1.0f64..2.0, n in 0usize..3) {
        let (u, v) = (packet(0, c1, 1.0), packet(0, c2, 2.0));
        let s = u.add(&v);
        let hb = |f: &GridFunction| hb_norm(f, 2, w).unwrap().value;
        prop_assert!(hb(&s) <= hb(&u) + hb(&v) + 1e-12);
        let le = |f: &GridFunction| le_norm(f, n).unwrap().value;
        prop_assert!(le(&s) <= le(&u) + le(&v) + 1e-12);
        let ls = |f: &GridFunction| le_star_norm(f, n).unwrap().value;
        prop_assert!(ls(&s) <= ls(&u) + ls(&v) + 1e-12);
    }

    #[test]
    fn heavier_weight_gives_larger_norm(center in 0.0f64..8.0, w in -1.0f64..2.0, dw in 0.01f64..1.0) {
        let u = packet(2, center, 1.0);
        prop_assert!(hb_norm(&u, 1, w).unwrap().value <= hb_norm(&u, 1, w + dw).unwrap().value);
    }

    #[test]
    fn mellin_round_trip(a in -3.0f64..3.0, b in 0.3f64..2.0, mu in -0.8f64..0.8) {
        let g = LogGrid::standard();
        let u = LogSamples::from_real(g, 0, |r| (-((r.ln() - a) / b).powi(2)).exp());
        let back = inverse_mellin(&mellin_transform(&u, mu).unwrap()).unwrap();
        let err = (0..g.n)
            .filter(|&k| g.x(k).abs() <= 20.0)
            .map(|k| (back.values[k] - u.values[k]).norm())
            .fold(0.0, f64::max);
        prop_assert!(err < 1e-14 * (20.0 * mu.abs()).exp(), "{err:e}");
    }

    #[test]
    fn l0_symbol_vanishes_at_its_poles(ell in 0usize..20, re in -5.0f64..5.0) {
        for p in l0_poles(ell) {
            prop_assert!(l0_symbol(p, ell).norm() < 1e-12 * (1.0 + (ell * ell) as f64));
        }
        let xi = C::new(re, -0.5);
        prop_assert!(l0_symbol(xi, ell).re > 0.0 || ell == 0);
    }

    #[test]
    fn power_laws_are_fitted_exactly(p in 1.0f64..4.0, amp in 1e-3f64..1e3, seed in 0u64..1000) {
        let values = (0..=5000).map(|k| C::new(amp * (1.0 + 0.1 * k as f64).powf(-p), 0.0)).collect();
        let tr = TimeTrace { r0: 1.0, t0: 1.0, dt: 0.1, values, method: TraceMethod::Evolved };
        let f = fit_decay(&tr, 50.0, 500.0, seed).unwrap();
        prop_assert!((f.exponent + p).abs() < 1e-9);
    }

    #[test]
    fn execution_strategies_agree(xs in prop::collection::vec(-1e6f64..1e6, 0..200)) {
        let f = |x: &f64| (x * 1.5).sin() + x.abs().sqrt();
        prop_assert_eq!(Exec::Sequential.map(&xs, f), Exec::Parallel.map(&xs, f));
    }

    #[test]
    fn canonical_form_is_idempotent_and_equivalent(parts in prop::collection::vec(atom(), 1..6)) {
        let e = SpaceExpr::sum(parts);
        let c = e.canonical();
        prop_assert_eq!(c.canonical(), c.clone());
        prop_assert!(e.within(&c), "{} ⊄ {}", e, c);
        prop_assert!(c.within(&c));
    }

    #[test]
    fn exponent_depends_only_on_kappa((num, den) in kappa(), s in 1i64..12) {
        let k = q(num, den);
        let a = run_low_freq_iteration(qi(s), k).unwrap().summary;
        let b = run_low_freq_iteration(qi(s + 1), k).unwrap().summary;
        prop_assert_eq!((a.exponent, a.exponent_minus), (k + 1, true));
        prop_assert_eq!((b.exponent, b.exponent_minus), (a.exponent, a.exponent_minus));
        prop_assert_eq!(b.m, a.m + 1);
        prop_assert!(a.m <= s + k.floor().to_integer());
    }
}
