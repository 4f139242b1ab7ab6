//! One line per acceptance criterion; exits non-zero when any criterion fails.

use num_complex::Complex64 as C;
use pricelab::conormal::{ft_decay_check, ConormalSample, FtOptions, SampleKind};
use pricelab::grid::GridFunction;
use pricelab::jet::Jet;
use pricelab::mellin::{cutoff, l0_apply_jet, l0_solve_mode, LogGrid, LogSamples};
use pricelab::model::ReducedOperator;
use pricelab::resolvent::{
    free_resolvent, geometric, high_freq_conormal_scan, low_freq_fit, low_freq_window, neumann_expand,
    resolve_mode, ScanOptions, SolverOptions,
};
use pricelab::spacecalc::{high_freq_table, high_freq_transcript, q, qi, run_low_freq_iteration};
use pricelab::timedomain::{
    data_transform, evolve_mode, fit_decay, synthesize, CauchyData, EvolveOptions, SynthesisOptions, TimeGrid,
    TimeTrace,
};
use pricelab::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

const ZERO: C = C::new(0.0, 0.0);

type Outcome = Result<String, String>;

fn bump_source(ell: usize) -> impl Fn(f64) -> C + Sync {
    move |r: f64| {
        let z = r / 2.0;
        if z >= 1.0 {
            ZERO
        } else {
            C::new(r.powi(ell as i32) * (1.0 - 1.0 / (1.0 - z * z)).exp(), 0.0)
        }
    }
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn free_resolvent_oracle() -> Outcome {
    let opts = SolverOptions::default();
    let flat = ReducedOperator::flat();
    let mut worst = 0.0f64;
    for ell in 0..=4 {
        for s in [0.0, 0.3, 1.0, 3.0] {
            let sigma = C::new(s, 0.0);
            let g = GridFunction::from_fn(opts.grid(sigma), ell, bump_source(ell));
            let v = resolve_mode(&flat, sigma, ell, &g).map_err(|e| e.to_string())?;
            let w = free_resolvent(sigma, ell, &g).map_err(|e| e.to_string())?;
            let err = v.sub(&w).weighted_sup(1.0, f64::INFINITY) / w.weighted_sup(1.0, f64::INFINITY);
            worst = worst.max(err);
        }
    }
    verdict(worst < 1e-6, format!("max rel error {worst:.2e} (< 1e-6)"))
}

fn l0_eigenrelation() -> Outcome {
    let mut worst = 0.0f64;
    for n in 0..=6 {
        for ell in 0..=4usize {
            for x in [-3.0, -1.0, -0.2] {
                let v = l0_apply_jet(&|t: Jet| (t * n as f64).exp(), x, ell);
                let (nf, lf) = (n as f64, ell as f64);
                let expect = -(nf + lf) * (nf - lf - 1.0) * (nf * x).exp();
                worst = worst.max((v - expect).abs() / (1.0 + expect.abs()));
            }
        }
    }
    verdict(worst < 1e-13, format!("max deviation {worst:.2e} (< 1e-13)"))
}

/// `L₀⁻¹` coefficients against the static flat resolvent: outside the support of the source
/// the exact solution is `Σ c ρ^m / L̂₀(m) + Y ρ^(ℓ+1)`, with `Y` read off at three radii.
fn mellin_vs_ode() -> Outcome {
    let op = ReducedOperator::flat();
    let g = LogGrid::standard();
    let opts = SolverOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let chi = cutoff(0.3, 0.6);
    let mut worst = 0.0f64;
    for trial in 0..20 {
        let ell = trial % 4;
        let terms: Vec<(f64, f64)> =
            (0..3).map(|_| (ell as f64 + 1.7 + 2.3 * rng.random::<f64>(), rng.random_range(-1.0..1.0))).collect();
        let prof = |rho: f64| terms.iter().map(|(m, c)| c * rho.powf(*m)).sum::<f64>();
        let f = LogSamples::from_real(g, ell, |r| prof(r) * chi(r));
        let e = l0_solve_mode(&f, ell as f64 + 0.1).map_err(|e| e.to_string())?;
        let y = e.terms.first().ok_or("no residue term")?.1.re;
        let src = GridFunction::from_real(opts.grid(ZERO), ell, |r| {
            let rho = 1.0 / r;
            prof(rho) * chi(rho) * rho * rho
        });
        let u = resolve_mode(&op, ZERO, ell, &src).map_err(|e| e.to_string())?;
        let l = ell as f64;
        for re in [8.0, 10.0, 20.0] {
            let rho: f64 = 1.0 / re;
            let part: f64 = terms.iter().map(|(m, c)| c * rho.powf(*m) / (-(m + l) * (m - l - 1.0))).sum();
            let yo = (u.interpolate(re).re - part) / rho.powi(ell as i32 + 1);
            worst = worst.max((y - yo).abs() / yo.abs());
        }
    }
    verdict(worst < 1e-4, format!("20 profiles, max rel error {worst:.2e} (< 1e-4)"))
}

fn neumann_identity() -> Outcome {
    let opts = SolverOptions::default();
    let op = ReducedOperator::potential(2.5, 1.0).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for s in [0.05, 0.1, 0.2] {
        let g = GridFunction::from_fn(opts.grid(C::new(s, 0.0)), 0, bump_source(0));
        for n in 0..=2 {
            worst = worst.max(neumann_expand(&op, s, &g, n, 0).map_err(|e| e.to_string())?.residual);
        }
    }
    verdict(worst < 1e-8, format!("max residual {worst:.2e} (< 1e-8)"))
}

fn low_freq_exponent() -> Outcome {
    let opts = SolverOptions::default();
    let mut parts = Vec::new();
    let mut ok = true;
    for kappa in [1.5, 2.5] {
        let op = ReducedOperator::potential(kappa, 1.0).map_err(|e| e.to_string())?;
        let fit = low_freq_fit(&op, &bump_source(0), 0, &low_freq_window(), 1.0, &opts, Exec::Parallel)
            .map_err(|e| e.to_string())?;
        ok &= (fit.nu - (1.0 + kappa)).abs() <= 0.15;
        parts.push(format!("κ={kappa}: ν={:.3} (target {:.1} ± 0.15)", fit.nu, 1.0 + kappa));
    }
    verdict(ok, parts.join(", "))
}

/// Sup of `|a − b|` over `[t₁, t₂]` relative to the sup of `|b|` there.
fn window_gap(a: &TimeTrace, b: &TimeTrace, t1: f64, t2: f64) -> f64 {
    let (ts, vs) = b.window(t1, t2);
    let num = ts.iter().zip(&vs).map(|(t, v)| (a.at(*t) - v).norm()).fold(0.0, f64::max);
    num / vs.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

fn price_law() -> Outcome {
    let grid = Arc::new(pricelab::grid::Grid::new(1.0, 0.005, 10.0));
    let data = CauchyData::new(
        GridFunction::zeros(grid.clone(), 0),
        GridFunction::from_real(grid, 0, |r| (-r * r / 0.25).exp()),
    )
    .map_err(|e| e.to_string())?;
    let r0 = 2.0;
    let mut parts = Vec::new();
    let mut ok = true;
    for kappa in [1.5, 2.5] {
        let op = ReducedOperator::potential(kappa, 1.0).map_err(|e| e.to_string())?;
        let ev = evolve_mode(&op, &data, 500.0, r0, &EvolveOptions::default()).map_err(|e| e.to_string())?;
        let fit = fit_decay(&ev.trace, 50.0, 500.0, 7).map_err(|e| e.to_string())?;
        let (f0, g0) = data_transform(&data, &op);
        let syn = synthesize(&op, &f0, &g0, r0, &TimeGrid::span(5.0, 50.0, 0.1), &SynthesisOptions::default(), Exec::Parallel)
            .map_err(|e| e.to_string())?;
        let gap = window_gap(&syn.total(), &ev.trace, 5.0, 50.0);
        let target = -(kappa + 2.0);
        ok &= (fit.exponent - target).abs() <= 0.35 && gap < 1e-3;
        parts.push(format!("κ={kappa}: slope {:.3} (target {target} ± 0.35), evolution vs synthesis {gap:.1e}", fit.exponent));
    }
    verdict(ok, parts.join("; "))
}

fn flat_controls() -> Outcome {
    let grid = Arc::new(pricelab::grid::Grid::new(1.0, 0.005, 10.0));
    let data = CauchyData::new(
        GridFunction::zeros(grid.clone(), 0),
        GridFunction::from_real(grid, 0, |r| (-r * r / 0.25).exp()),
    )
    .map_err(|e| e.to_string())?;
    let opts = EvolveOptions { dr: 0.005, ..Default::default() };
    let ev = evolve_mode(&ReducedOperator::flat(), &data, 100.0, 0.5, &opts).map_err(|e| e.to_string())?;
    let (_, late) = ev.trace.window(4.0, 100.0);
    let tail = late.iter().map(|z| z.norm()).fold(0.0, f64::max) / ev.trace.sup();
    let drift = ev.energy_drift();
    verdict(tail < 1e-3 && drift < 1e-3, format!("Huygens tail {tail:.1e} of peak (< 1e-3), energy drift {:.3}% (< 0.1%)", 100.0 * drift))
}

fn fourier_lemma() -> Outcome {
    let opts = FtOptions::default();
    let mut parts = Vec::new();
    let mut ok = true;
    for alpha in [0.3f64, 0.5, 0.7, 1.2] {
        let m = alpha.ceil() as usize + 1;
        let u = ConormalSample::new(alpha, m, SampleKind::Power).map_err(|e| e.to_string())?;
        let d = ft_decay_check(&u, &opts).map_err(|e| e.to_string())?;
        ok &= d.pass;
        parts.push(format!("α={alpha}: {:.3} ≤ {:.2}", d.fit.exponent, -1.0 - alpha + 0.1));
    }
    verdict(ok, parts.join(", "))
}

fn spacecalc_golden() -> Outcome {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("golden");
    let d = run_low_freq_iteration(qi(2), q(5, 2)).map_err(|e| e.to_string())?;
    let sm = &d.summary;
    let mut ok = sm.exponent == q(7, 2) && sm.exponent_minus && sm.m == 2 + 2;
    let rows = high_freq_table().map_err(|e| e.to_string())?;
    ok &= rows.len() == 12
        && rows.iter().all(|r| {
            let w = r.varpi + 1;
            r.floor == qi(2 * r.p + 5) * w && r.threshold == w * (r.kappa * 2 + 9) + 2 && r.consistent
        });
    let files = [
        ("lowfreq_s2_k5-2.txt", d.transcript()),
        ("lowfreq_s3_k3-2.txt", run_low_freq_iteration(qi(3), q(3, 2)).map_err(|e| e.to_string())?.transcript()),
        ("highfreq_table.txt", high_freq_transcript(&rows)),
    ];
    let mut same = 0;
    for (name, text) in &files {
        if std::fs::read_to_string(dir.join(name)).ok().as_deref() == Some(text.as_str()) {
            same += 1;
        }
    }
    ok &= same == files.len();
    verdict(ok, format!("exponent 7/2-, M = {}, 12-row thresholds, {same}/{} golden files identical", sm.m, files.len()))
}

fn high_freq_scan() -> Outcome {
    let opts = SolverOptions::default();
    let sig = geometric(1.0, 16.0, 9);
    let mut worst = f64::NEG_INFINITY;
    let mut ok = true;
    for op in [ReducedOperator::flat(), ReducedOperator::potential(2.5, 1.0).map_err(|e| e.to_string())?] {
        for p in 0..=2 {
            let s = high_freq_conormal_scan(&op, &bump_source(0), 0, p, &sig, &ScanOptions::default(), &opts, Exec::Parallel)
                .map_err(|e| e.to_string())?;
            ok &= s.pass;
            worst = worst.max(s.octave_growth.max(s.last_octave_growth));
        }
    }
    verdict(ok, format!("worst growth per octave {:+.1}% (≤ 20%)", 100.0 * worst))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("free-resolvent oracle", free_resolvent_oracle),
        ("L0 eigenrelation", l0_eigenrelation),
        ("Mellin residue vs ODE", mellin_vs_ode),
        ("Neumann identity", neumann_identity),
        ("low-frequency singular exponent", low_freq_exponent),
        ("generalized Price law", price_law),
        ("flat-space controls", flat_controls),
        ("Fourier decay of conormal samples", fourier_lemma),
        ("spacecalc golden transcripts", spacecalc_golden),
        ("high-frequency conormal scan", high_freq_scan),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let out = run();
        let secs = t.elapsed().as_secs_f64();
        match out {
            Ok(d) => println!("criterion {:>2} PASS  {name}: {d} [{secs:.1}s]", k + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {d} [{secs:.1}s]", k + 1);
            }
        }
    }
    println!("{} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
