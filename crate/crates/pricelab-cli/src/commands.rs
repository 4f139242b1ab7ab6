use crate::config::Kind;
use crate::experiment::{stage, Experiment};
use anyhow::Result;
use num_complex::Complex64 as C;
use pricelab::conormal::{ft_decay_check, ft_trace, hb_norm, le_ratio_sweep, le_star_norm, ConormalSample, FtOptions, SampleKind};
use pricelab::grid::{Grid, GridFunction};
use pricelab::jet::Jet;
use pricelab::mellin::{cutoff, l0_apply_jet, l0_solve_mode, LogGrid, LogSamples};
use pricelab::model::ReducedOperator;
use pricelab::resolvent::{free_resolvent, neumann_expand, resolve_mode_with};
use pricelab::spacecalc::{
    check_derivation, fmt_q, high_freq_transcript, run_high_freq_numerology, run_low_freq_iteration, RuleSet,
};
use pricelab::timedomain::{data_transform, evolve_mode, fit_decay, synthesize, CauchyData, Evolution, TimeGrid, TimeTrace};
use serde::Serialize;
use std::sync::Arc;

/// Smooth bump `r^ℓ exp(1 − 1/(1 − (r/R)²))` supported in `r < R`.
fn bump(ell: usize, radius: f64) -> impl Fn(f64) -> f64 + Sync {
    move |r: f64| {
        let z = r / radius;
        if z >= 1.0 {
            0.0
        } else {
            r.powi(ell as i32) * (1.0 - 1.0 / (1.0 - z * z)).exp()
        }
    }
}

fn radius_tag(r0: f64) -> String {
    format!("{r0}").replace('.', "p")
}

pub fn model_check(x: &mut Experiment) -> Result<()> {
    let op = stage("model", x.cfg.operator())?;
    let reports = stage("model", op.check_orders(2e3))?;
    let orders = op.declared_orders();
    #[derive(Serialize)]
    struct Row {
        coefficient: String,
        declared_order: f64,
        max_ratio: f64,
        growth: f64,
        pass: bool,
    }
    let mut rows = Vec::new();
    for (i, (name, rep)) in reports.iter().enumerate() {
        let growth = rep.growth.iter().cloned().fold(0.0, f64::max);
        let ratio = rep.max_ratio.iter().cloned().fold(0.0, f64::max);
        x.check(format!("symbol order of {name}"), rep.pass, format!("order {}, growth on doubling R {growth:.3}", orders[i]));
        rows.push(Row { coefficient: name.clone(), declared_order: orders[i], max_ratio: ratio, growth, pass: rep.pass });
    }
    x.check("flat control", op.is_flat() == (x.cfg.kind == Kind::Flat), format!("zero perturbation: {}", op.is_flat()));
    x.write_csv("symbol_orders.csv", &rows)?;
    x.write_json("operator.json", &op)
}

pub fn resolve(x: &mut Experiment, sigmas: &[f64]) -> Result<()> {
    let op = stage("model", x.cfg.operator())?;
    let opts = x.cfg.solver();
    let ell = x.cfg.ell;
    let src = bump(ell, x.cfg.f("source_radius"));
    let flat = op.is_flat();
    let solved = x.cfg.exec.map(sigmas, |&s| -> pricelab::Result<(GridFunction, Option<f64>)> {
        let sigma = C::new(s, 0.0);
        let g = GridFunction::from_real(opts.grid(sigma), ell, &src);
        let v = resolve_mode_with(&op, sigma, ell, &g, &opts)?;
        let err = if flat {
            let w = free_resolvent(sigma, ell, &g)?;
            Some(v.sub(&w).weighted_sup(1.0, f64::INFINITY) / w.weighted_sup(1.0, f64::INFINITY))
        } else {
            None
        };
        Ok((v, err))
    });
    #[derive(Serialize)]
    struct Row {
        sigma: f64,
        ell: usize,
        r0: f64,
        re: f64,
        im: f64,
        oracle_rel_err: Option<f64>,
    }
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    let mut finite = true;
    for (s, res) in sigmas.iter().zip(solved) {
        let (v, err) = stage("resolvent", res)?;
        finite &= v.is_finite();
        worst = worst.max(err.unwrap_or(0.0));
        for &r0 in &x.cfg.observers {
            let z = v.interpolate(r0);
            rows.push(Row { sigma: *s, ell, r0, re: z.re, im: z.im, oracle_rel_err: err });
        }
    }
    x.write_csv("resolvent.csv", &rows)?;
    x.check("finite solutions", finite, format!("{} spectral parameters", sigmas.len()));
    if flat {
        let tol = x.cfg.f("oracle_tol");
        x.check("free-resolvent oracle", worst < tol, format!("max rel error {worst:.2e} (< {tol:e})"));
    }
    Ok(())
}

pub fn mellin_check(x: &mut Experiment) -> Result<()> {
    let mut worst = 0.0f64;
    for n in 0..=6 {
        for ell in 0..=4usize {
            for xv in [-3.0, -1.0, -0.2] {
                let v = l0_apply_jet(&|t: Jet| (t * n as f64).exp(), xv, ell);
                let (nf, lf) = (n as f64, ell as f64);
                let expect = -(nf + lf) * (nf - lf - 1.0) * (nf * xv).exp();
                worst = worst.max((v - expect).abs() / (1.0 + expect.abs()));
            }
        }
    }
    x.check("L0 eigenrelation", worst < 1e-13, format!("max deviation {worst:.2e} (< 1e-13)"));

    // leading residue of L0⁻¹ against the static flat solve
    let op = ReducedOperator::flat();
    let g = LogGrid::standard();
    let opts = x.cfg.solver();
    let chi = cutoff(0.3, 0.6);
    #[derive(Serialize)]
    struct Row {
        profile: usize,
        ell: usize,
        r: f64,
        residue_mellin: f64,
        residue_ode: f64,
        rel_err: f64,
    }
    let mut rows = Vec::new();
    for trial in 0..8usize {
        let ell = trial % 4;
        let terms: Vec<(f64, f64)> =
            (0..3).map(|i| (ell as f64 + 1.7 + 0.7 * i as f64 + 0.1 * trial as f64, ((trial + i) as f64).cos())).collect();
        let prof = |rho: f64| terms.iter().map(|(m, c)| c * rho.powf(*m)).sum::<f64>();
        let f = LogSamples::from_real(g, ell, |r| prof(r) * chi(r));
        let e = stage("mellin", l0_solve_mode(&f, ell as f64 + 0.1))?;
        let y = e.terms.first().map(|t| t.1.re).unwrap_or(0.0);
        let src = GridFunction::from_real(opts.grid(C::new(0.0, 0.0)), ell, |r| {
            let rho = 1.0 / r;
            prof(rho) * chi(rho) * rho * rho
        });
        let u = stage("resolvent", resolve_mode_with(&op, C::new(0.0, 0.0), ell, &src, &opts))?;
        let l = ell as f64;
        for re in [8.0, 10.0, 20.0] {
            let rho: f64 = 1.0 / re;
            let part: f64 = terms.iter().map(|(m, c)| c * rho.powf(*m) / (-(m + l) * (m - l - 1.0))).sum();
            let yo = (u.interpolate(re).re - part) / rho.powi(ell as i32 + 1);
            let err = (y - yo).abs() / yo.abs();
            rows.push(Row { profile: trial, ell, r: re, residue_mellin: y, residue_ode: yo, rel_err: err });
        }
    }
    let worst = rows.iter().map(|r| r.rel_err).fold(0.0, f64::max);
    x.write_csv("mellin_residues.csv", &rows)?;
    x.check("Mellin residue vs ODE", worst < 1e-4, format!("{} profiles, max rel error {worst:.2e} (< 1e-4)", 8));
    Ok(())
}

pub fn neumann_check(x: &mut Experiment) -> Result<()> {
    let op = stage("model", x.cfg.operator())?;
    let opts = x.cfg.solver();
    let ell = x.cfg.ell;
    let src = bump(ell, x.cfg.f("source_radius"));
    #[derive(Serialize)]
    struct Row {
        sigma: f64,
        order: usize,
        residual: f64,
    }
    let mut rows = Vec::new();
    for s in [0.05, 0.1, 0.2] {
        let g = GridFunction::from_real(opts.grid(C::new(s, 0.0)), ell, &src);
        for n in 0..=op.kappa.floor() as usize {
            let e = stage("resolvent", neumann_expand(&op, s, &g, n, ell))?;
            rows.push(Row { sigma: s, order: n, residual: e.residual });
        }
    }
    let worst = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
    let tol = x.cfg.f("neumann_tol");
    x.write_csv("neumann.csv", &rows)?;
    x.check("Neumann reassembly", worst < tol, format!("max residual {worst:.2e} (< {tol:e})"));
    Ok(())
}

fn cauchy_data(x: &Experiment) -> pricelab::Result<CauchyData> {
    let grid = Arc::new(Grid::new(1.0, 0.005, x.cfg.f("data_rmax")));
    let (ell, w) = (x.cfg.ell, x.cfg.f("data_width"));
    CauchyData::new(
        GridFunction::zeros(grid.clone(), ell),
        GridFunction::from_real(grid, ell, move |r| r.powi(ell as i32) * (-r * r / (w * w)).exp()),
    )
}

fn evolve_all(x: &Experiment, op: &ReducedOperator, data: &CauchyData, t_end: f64) -> Result<Vec<Evolution>> {
    let opts = x.cfg.evolve();
    let runs = x.cfg.exec.map(&x.cfg.observers, |&r0| evolve_mode(op, data, t_end, r0, &opts));
    Ok(runs.into_iter().map(|r| stage("timedomain", r)).collect::<std::result::Result<_, _>>()?)
}

/// Sup of `|a − b|` over `[t₁, t₂]` relative to the sup of `|b|` there.
fn window_gap(a: &TimeTrace, b: &TimeTrace, t1: f64, t2: f64) -> f64 {
    let (ts, vs) = b.window(t1, t2);
    let num = ts.iter().zip(&vs).map(|(t, v)| (a.at(*t) - v).norm()).fold(0.0, f64::max);
    num / vs.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

#[derive(Serialize)]
struct SummaryRow {
    r0: f64,
    check: &'static str,
    target: f64,
    measured: f64,
    tolerance: f64,
    pass: bool,
}

fn compare_at(
    x: &mut Experiment,
    op: &ReducedOperator,
    data: &CauchyData,
    ev: &Evolution,
    r0: f64,
) -> Result<f64> {
    let (t0, t1) = (x.cfg.f("synth_t0"), x.cfg.f("synth_t1"));
    let (f0, g0) = data_transform(data, op);
    let times = TimeGrid::span(t0, t1, x.cfg.f("synth_dt"));
    let syn = stage("timedomain", synthesize(op, &f0, &g0, r0, &times, &x.cfg.synthesis_options(), x.cfg.exec))?;
    let total = syn.total();
    let gap = window_gap(&total, &ev.trace, t0, t1);
    x.write_trace(&format!("compare_r{}.csv", radius_tag(r0)), &[&ev.trace, &syn.low, &syn.high, &total])?;
    x.record(&format!("synthesis_refinement_r{}", radius_tag(r0)), syn.refinement);
    Ok(gap)
}

pub fn decay_run(x: &mut Experiment) -> Result<()> {
    let op = stage("model", x.cfg.operator())?;
    let data = stage("timedomain", cauchy_data(x))?;
    let evs = evolve_all(x, &op, &data, x.cfg.f("t_end"))?;
    let observers = x.cfg.observers.clone();
    let mut summary = Vec::new();
    let mut fits = Vec::new();
    for (ev, &r0) in evs.iter().zip(&observers) {
        x.write_trace(&format!("trace_r{}.csv", radius_tag(r0)), &[&ev.trace])?;
        if op.is_flat() {
            let (_, late) = ev.trace.window(x.cfg.f("huygens_t1"), ev.trace.t_end());
            let tail = late.iter().map(|z| z.norm()).fold(0.0, f64::max) / ev.trace.sup();
            let drift = ev.energy_drift();
            let (ht, et) = (x.cfg.f("huygens_tol"), x.cfg.f("energy_tol"));
            summary.push(SummaryRow { r0, check: "huygens tail", target: 0.0, measured: tail, tolerance: ht, pass: tail < ht });
            summary.push(SummaryRow { r0, check: "energy drift", target: 0.0, measured: drift, tolerance: et, pass: drift < et });
            x.check(format!("Huygens at r0 = {r0}"), tail < ht, format!("tail {tail:.1e} of peak (< {ht:e})"));
            x.check(format!("energy at r0 = {r0}"), drift < et, format!("drift {drift:.1e} (< {et:e})"));
        } else {
            let fit = stage("timedomain", fit_decay(&ev.trace, x.cfg.f("fit_t1"), x.cfg.f("fit_t2"), x.cfg.seed))?;
            let target = -(x.cfg.kappa_f64() + 2.0);
            let band = x.cfg.f("exponent_band");
            let ok = (fit.exponent - target).abs() <= band;
            summary.push(SummaryRow { r0, check: "decay exponent", target, measured: fit.exponent, tolerance: band, pass: ok });
            x.check(
                format!("decay exponent at r0 = {r0}"),
                ok,
                format!("fitted {:.3} [{:.3}, {:.3}], target {target} ± {band}", fit.exponent, fit.band[0], fit.band[1]),
            );
            fits.push((r0, fit));
        }
        if x.cfg.synthesis {
            let gap = compare_at(x, &op, &data, ev, r0)?;
            let tol = x.cfg.f("gap_tol");
            summary.push(SummaryRow { r0, check: "evolution vs synthesis", target: 0.0, measured: gap, tolerance: tol, pass: gap < tol });
            x.check(format!("evolution vs synthesis at r0 = {r0}"), gap < tol, format!("gap {gap:.1e} (< {tol:e})"));
        }
    }
    if !fits.is_empty() {
        #[derive(Serialize)]
        struct FitRow {
            r0: f64,
            exponent: f64,
            band_lo: f64,
            band_hi: f64,
            t1: f64,
            t2: f64,
            residual: f64,
            amplitude: f64,
            points: usize,
        }
        let rows: Vec<FitRow> = fits
            .iter()
            .map(|(r0, f)| FitRow {
                r0: *r0,
                exponent: f.exponent,
                band_lo: f.band[0],
                band_hi: f.band[1],
                t1: f.window[0],
                t2: f.window[1],
                residual: f.residual,
                amplitude: f.amplitude,
                points: f.points,
            })
            .collect();
        x.write_csv("fits.csv", &rows)?;
        x.record("fits", &fits);
        let d = stage("spacecalc", run_low_freq_iteration(x.cfg.s, x.cfg.kappa))?;
        x.write_text("derivation.txt", &d.transcript())?;
    }
    x.write_csv("summary.csv", &summary)?;
    println!("{:>8}  {:<24} {:>10} {:>12} {:>10}", "r0", "check", "target", "measured", "tolerance");
    for r in &summary {
        let m = if r.measured.abs() >= 1e-2 { format!("{:.4}", r.measured) } else { format!("{:.2e}", r.measured) };
        println!("{:>8}  {:<24} {:>10.3} {:>12} {:>10.2e}", r.r0, r.check, r.target, m, r.tolerance);
    }
    Ok(())
}

pub fn decay_compare(x: &mut Experiment) -> Result<()> {
    let op = stage("model", x.cfg.operator())?;
    let data = stage("timedomain", cauchy_data(x))?;
    let evs = evolve_all(x, &op, &data, x.cfg.f("synth_t1"))?;
    let tol = x.cfg.f("gap_tol");
    for (ev, r0) in evs.iter().zip(x.cfg.observers.clone()) {
        let gap = compare_at(x, &op, &data, ev, r0)?;
        x.check(format!("evolution vs synthesis at r0 = {r0}"), gap < tol, format!("gap {gap:.1e} (< {tol:e})"));
    }
    Ok(())
}

pub fn norm(x: &mut Experiment, sigmas: &[f64], n: usize, s: usize, w: f64) -> Result<()> {
    let op = stage("model", x.cfg.operator())?;
    let opts = x.cfg.solver();
    let ell = x.cfg.ell;
    let src = bump(ell, x.cfg.f("source_radius"));
    let g = GridFunction::from_real(opts.grid(C::new(1.0, 0.0)), ell, &src);
    let hb = stage("conormal", hb_norm(&g, s, w))?;
    let le_star = stage("conormal", le_star_norm(&g, n))?;
    let ratios = stage("conormal", le_ratio_sweep(&op, &src, ell, sigmas, n, &opts, x.cfg.exec))?;
    #[derive(Serialize)]
    struct Row {
        sigma: f64,
        order: usize,
        le_sigma_over_le_star: f64,
    }
    let rows: Vec<Row> = ratios.iter().map(|&(sigma, r)| Row { sigma, order: n, le_sigma_over_le_star: r }).collect();
    x.write_csv("le_ratios.csv", &rows)?;
    x.record("source_hb", &hb);
    x.record("source_le_star", &le_star);
    let worst = ratios.iter().map(|r| r.1).fold(0.0, f64::max);
    let finite = ratios.iter().all(|r| r.1.is_finite()) && hb.value.is_finite();
    println!("‖g‖ in H_b^({s},{w}) = {:.6e}, in LE*^{n} = {:.6e}", hb.value, le_star.value);
    x.check("bounded resolvent ratios", finite, format!("max LE_σ/LE* ratio {worst:.3} over {} σ", sigmas.len()));
    Ok(())
}

pub fn ft_lemma(x: &mut Experiment, alpha: f64, m: Option<usize>, kind: SampleKind) -> Result<()> {
    let m = m.unwrap_or(alpha.ceil() as usize + 1);
    let u = stage("conormal", ConormalSample::new(alpha, m, kind))?;
    let opts = FtOptions::default();
    let d = stage("conormal", ft_decay_check(&u, &opts))?;
    x.write_trace("ft_trace.csv", &[&ft_trace(&u, &opts)])?;
    x.write_json("ft_fit.json", &d)?;
    x.record("sample", &u);
    x.check(
        "Fourier decay",
        d.pass,
        format!("slope {:.3}, refined {:.3}, target ≤ {:.3} + {}", d.fit.exponent, d.refined_slope, d.target, opts.slack),
    );
    Ok(())
}

pub fn spacecalc_derive(x: &mut Experiment) -> Result<()> {
    let (s, kappa) = (x.cfg.s, x.cfg.kappa);
    let d = stage("spacecalc", run_low_freq_iteration(s, kappa))?;
    x.write_text("derivation.txt", &d.transcript())?;
    let sm = &d.summary;
    let replay = check_derivation(&d, &RuleSet::builtin());
    x.check(
        "derivation replays",
        replay.is_ok(),
        match &replay {
            Ok(()) => format!("{} steps", d.steps.len()),
            Err(e) => format!("diverges at step {} ({})", e.step, e.label),
        },
    );
    let target = kappa + 1;
    x.check(
        "low-frequency exponent",
        sm.exponent == target && sm.exponent_minus && sm.matches_closed_form,
        format!("|σ|^({}{}) after M = {} steps, target {}-", fmt_q(sm.exponent), if sm.exponent_minus { "-" } else { "" }, sm.m, fmt_q(target)),
    );
    let row = stage("spacecalc", run_high_freq_numerology(x.cfg.varpi, x.cfg.p, kappa))?;
    x.write_text("highfreq.txt", &high_freq_transcript(std::slice::from_ref(&row)))?;
    x.check(
        "high-frequency threshold",
        row.consistent,
        format!("s > {} (floor {})", fmt_q(row.threshold), fmt_q(row.floor)),
    );
    x.record("low_frequency", sm);
    Ok(())
}
