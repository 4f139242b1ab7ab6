//! Per-mode Cauchy problems: the data map to the frequency side, a leapfrog evolution on
//! a uniform radial grid, synthesis from resolvent samples split into `u_L + u_H`, the
//! high-frequency iteration, and decay-rate fits.

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::grid::{cumulative, GridFunction};
use crate::mellin::cutoff;
use crate::model::{psi_coeffs, ReducedOperator};
use crate::resolvent::{resolve_mode_with, SolverOptions};
use crate::stats;
use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const ZERO: C = C::new(0.0, 0.0);

/// Initial data `(u, ∂_t u)` at `t = 0` for one angular mode.
#[derive(Clone, Debug, PartialEq)]
pub struct CauchyData {
    pub u0: GridFunction,
    pub u1: GridFunction,
}

impl CauchyData {
    pub fn new(u0: GridFunction, u1: GridFunction) -> Result<Self> {
        if u0.grid != u1.grid || u0.ell != u1.ell {
            return Err(Error::InvalidProfile("u0 and u1 must share grid and mode".into()));
        }
        if !(u0.is_finite() && u1.is_finite()) {
            return Err(Error::InvalidProfile("non-finite Cauchy data".into()));
        }
        Ok(CauchyData { u0, u1 })
    }

    pub fn ell(&self) -> usize {
        self.u0.ell
    }

    /// Largest radius carrying data above `1e-14` of the peak.
    pub fn support_radius(&self) -> f64 {
        self.u0.support_radius(1e-14).max(self.u1.support_radius(1e-14))
    }

    pub fn is_real(&self) -> bool {
        self.u0.values.iter().chain(&self.u1.values).all(|z| z.im == 0.0)
    }
}

/// `∂_r u` from `ψ = r u`.
fn radial_derivative(u: &GridFunction) -> Vec<C> {
    let (_, d1, _) = u.psi_derivatives();
    (0..u.values.len()).map(|i| (d1[i] - u.values[i]) / u.r(i)).collect()
}

/// `P¹u = a₁∂_r u + b₁u`, the coefficient of `∂_t` in P.
pub fn apply_p1(op: &ReducedOperator, u: &GridFunction) -> GridFunction {
    if !op.has_first_order_time() {
        return GridFunction::zeros(u.grid.clone(), u.ell);
    }
    let du = radial_derivative(u);
    let values = (0..u.values.len())
        .map(|i| {
            let c = op.coeffs(u.r(i));
            du[i] * c.a1 + u.values[i] * c.b1
        })
        .collect();
    GridFunction { grid: u.grid.clone(), values, ell: u.ell }
}

/// `P₀u = P_σ u` at `σ = 0`, the spatial part of P on mode ℓ.
pub fn apply_p0(op: &ReducedOperator, u: &GridFunction) -> GridFunction {
    let (psi, d1, d2) = u.psi_derivatives();
    let l = (u.ell * (u.ell + 1)) as f64;
    let values = (0..u.values.len())
        .map(|i| {
            let r = u.r(i);
            let m = psi_coeffs(&op.coeffs(r), l, ZERO, r);
            (m.alpha * d2[i] + m.beta * d1[i] + m.gamma * psi[i]) / r
        })
        .collect();
    GridFunction { grid: u.grid.clone(), values, ell: u.ell }
}

/// `(f₀, g₀)` with `f₀ = −i u₀`, `g₀ = P¹u₀ + u₁`, so that the transform
/// `û(σ) = ∫₀^∞ e^{iσt} u dt` solves `P_σ û = σf₀ + g₀`.
pub fn data_transform(data: &CauchyData, op: &ReducedOperator) -> (GridFunction, GridFunction) {
    let f0 = data.u0.scale(-C::i());
    let g0 = apply_p1(op, &data.u0).add(&data.u1);
    (f0, g0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceMethod {
    Evolved,
    SynthesizedLow,
    SynthesizedHigh,
    Synthesized,
}

impl TraceMethod {
    pub fn tag(self) -> &'static str {
        match self {
            TraceMethod::Evolved => "evolved",
            TraceMethod::SynthesizedLow => "synthesized-low",
            TraceMethod::SynthesizedHigh => "synthesized-high",
            TraceMethod::Synthesized => "synthesized",
        }
    }
}

/// Samples `u(t_k, r₀)` on a uniform time grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeTrace {
    pub r0: f64,
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<C>,
    pub method: TraceMethod,
}

impl TimeTrace {
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.values.len()).map(|k| self.time(k)).collect()
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.values.len().saturating_sub(1))
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Samples with `t₁ ≤ t ≤ t₂`.
    pub fn window(&self, t1: f64, t2: f64) -> (Vec<f64>, Vec<C>) {
        let eps = 1e-9 * self.dt;
        (0..self.values.len())
            .filter(|&k| self.time(k) >= t1 - eps && self.time(k) <= t2 + eps)
            .map(|k| (self.time(k), self.values[k]))
            .unzip()
    }

    /// Linear interpolation at time t.
    pub fn at(&self, t: f64) -> C {
        let q = ((t - self.t0) / self.dt).clamp(0.0, (self.values.len() - 1) as f64);
        let k = (q.floor() as usize).min(self.values.len() - 2);
        let s = q - k as f64;
        self.values[k] * (1.0 - s) + self.values[k + 1] * s
    }

    pub fn add(&self, o: &TimeTrace, method: TraceMethod) -> TimeTrace {
        let values = self.values.iter().zip(&o.values).map(|(a, b)| a + b).collect();
        TimeTrace { values, method, ..self.clone() }
    }
}

/// `sup |a − b| / sup |b|` over `[t₁, t₂]`, sampling `a` at the times of `b`.
pub fn trace_gap(a: &TimeTrace, b: &TimeTrace, t1: f64, t2: f64) -> f64 {
    let (ts, vs) = b.window(t1, t2);
    let num = ts.iter().zip(&vs).map(|(t, v)| (a.at(*t) - v).norm()).fold(0.0, f64::max);
    num / b.sup().max(a.sup()).max(f64::MIN_POSITIVE)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub dr: f64,
    /// `Δt/Δr`.
    pub courant: f64,
    /// Extra radius beyond the causal minimum.
    pub pad: f64,
    /// Spacing of the recorded trace; rounded to a whole number of steps.
    pub sample_dt: f64,
    pub max_energy_growth: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions { dr: 0.01, courant: 0.35, pad: 5.0, sample_dt: 0.1, max_energy_growth: 10.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evolution {
    pub trace: TimeTrace,
    /// `∫ (ψ_t² + ψ_r² + (ℓ(ℓ+1)/r² + e₂) ψ²) dr` at the trace times.
    pub energy: Vec<f64>,
    pub dt: f64,
    pub outer_radius: f64,
}

impl Evolution {
    /// `max |E(t) − E(0)| / E(0)`.
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.energy[0];
        self.energy.iter().map(|e| (e - e0).abs() / e0).fold(0.0, f64::max)
    }
}

/// Leapfrog state for `ψ_tt + ∂_t Mψ + Kψ = 0` on `r_j = j·Δr`, with `ψ = r u`,
/// `Mψ = a₁ψ_r + (b₁ − a₁/r)ψ` and `K` the spatial operator in ψ form.
pub struct Evolver {
    dr: f64,
    dt: f64,
    l: f64,
    /// `ψ^{n+1} = (I + Δt M/2)⁻¹ (kl ψ_{j−1} + kc ψ_j + kr ψ_{j+1} − ψ^{n−1} + Δt M ψ^{n−1}/2)`.
    kl: Vec<f64>,
    kc: Vec<f64>,
    kr: Vec<f64>,
    ml: Vec<f64>,
    mc: Vec<f64>,
    mr: Vec<f64>,
    e2: Vec<f64>,
    implicit: bool,
    pub prev: Vec<f64>,
    pub cur: Vec<f64>,
    pub steps: usize,
}

impl Evolver {
    /// Nodes `0..=n`; ψ vanishes at both ends.
    pub fn new(op: &ReducedOperator, ell: usize, dr: f64, dt: f64, n: usize) -> Result<Self> {
        let l = (ell * (ell + 1)) as f64;
        let mut kl = vec![0.0; n + 1];
        let mut kc = vec![0.0; n + 1];
        let mut kr = vec![0.0; n + 1];
        let mut ml = vec![0.0; n + 1];
        let mut mc = vec![0.0; n + 1];
        let mut mr = vec![0.0; n + 1];
        let mut e2 = vec![0.0; n + 1];
        let mut lambda = 0.0f64;
        let implicit = op.has_first_order_time();
        for j in 1..n {
            let r = j as f64 * dr;
            let c = op.coeffs(r);
            let m = psi_coeffs(&c, l, ZERO, r);
            let (a, b, g) = (m.alpha.re, m.beta.re, m.gamma.re);
            let lo = a / (dr * dr) - b / (2.0 * dr);
            let hi = a / (dr * dr) + b / (2.0 * dr);
            let mid = -2.0 * a / (dr * dr) + g;
            lambda = lambda.max(lo.abs() + mid.abs() + hi.abs());
            kl[j] = -dt * dt * lo;
            kc[j] = 2.0 - dt * dt * mid;
            kr[j] = -dt * dt * hi;
            e2[j] = c.e2;
            if implicit {
                ml[j] = -0.5 * dt * c.a1 / (2.0 * dr);
                mr[j] = 0.5 * dt * c.a1 / (2.0 * dr);
                mc[j] = 0.5 * dt * (c.b1 - c.a1 / r);
            }
        }
        if dt * lambda.sqrt() > 2.0 {
            return Err(Error::Cfl(dt / dr));
        }
        Ok(Evolver {
            dr,
            dt,
            l,
            kl,
            kc,
            kr,
            ml,
            mc,
            mr,
            e2,
            implicit,
            prev: vec![0.0; n + 1],
            cur: vec![0.0; n + 1],
            steps: 0,
        })
    }

    fn n(&self) -> usize {
        self.cur.len() - 1
    }

    /// `Kψ` (the discrete spatial operator) without the time-step scaling.
    fn k_apply(&self, p: &[f64]) -> Vec<f64> {
        let s = -1.0 / (self.dt * self.dt);
        let mut out = vec![0.0; p.len()];
        for j in 1..self.n() {
            out[j] = s * (self.kl[j] * p[j - 1] + (self.kc[j] - 2.0) * p[j] + self.kr[j] * p[j + 1]);
        }
        out
    }

    fn m_apply(&self, p: &[f64]) -> Vec<f64> {
        let s = 2.0 / self.dt;
        let mut out = vec![0.0; p.len()];
        for j in 1..self.n() {
            out[j] = s * (self.ml[j] * p[j - 1] + self.mc[j] * p[j] + self.mr[j] * p[j + 1]);
        }
        out
    }

    /// Start from `(ψ, ψ_t)` with a third-order Taylor step.
    pub fn start(&mut self, psi0: Vec<f64>, psi1: Vec<f64>) {
        let dt = self.dt;
        let k0 = self.k_apply(&psi0);
        let m1 = self.m_apply(&psi1);
        let acc: Vec<f64> = (0..psi0.len()).map(|j| -k0[j] - m1[j]).collect();
        let k1 = self.k_apply(&psi1);
        let ma = self.m_apply(&acc);
        let next = (0..psi0.len())
            .map(|j| {
                let jerk = -k1[j] - ma[j];
                psi0[j] + dt * psi1[j] + dt * dt / 2.0 * acc[j] + dt * dt * dt / 6.0 * jerk
            })
            .collect::<Vec<_>>();
        self.prev = psi0;
        self.cur = next;
        self.cur[0] = 0.0;
        let n = self.n();
        self.cur[n] = 0.0;
        self.steps = 1;
    }

    /// The next time level, without advancing.
    pub fn advance(&self) -> Vec<f64> {
        let n = self.n();
        let mut next = vec![0.0; n + 1];
        let (p, c) = (&self.prev, &self.cur);
        for j in 1..n {
            next[j] = self.kl[j] * c[j - 1] + self.kc[j] * c[j] + self.kr[j] * c[j + 1] - p[j];
        }
        if !self.implicit {
            return next;
        }
        for j in 1..n {
            next[j] += self.ml[j] * p[j - 1] + self.mc[j] * p[j] + self.mr[j] * p[j + 1];
        }
        // (I + Δt M/2) ψ^{n+1} = rhs, tridiagonal
        let mut diag: Vec<f64> = (0..=n).map(|j| 1.0 + self.mc[j]).collect();
        let mut rhs = next;
        for j in 2..n {
            let w = self.ml[j] / diag[j - 1];
            diag[j] -= w * self.mr[j - 1];
            rhs[j] -= w * rhs[j - 1];
        }
        let mut sol = vec![0.0; n + 1];
        for j in (1..n).rev() {
            let upper = if j + 1 < n { self.mr[j] * sol[j + 1] } else { 0.0 };
            sol[j] = (rhs[j] - upper) / diag[j];
        }
        sol
    }

    pub fn step(&mut self) {
        let next = self.advance();
        self.commit(next);
    }

    fn commit(&mut self, next: Vec<f64>) {
        self.prev = std::mem::replace(&mut self.cur, next);
        self.steps += 1;
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    /// `∫ (ψ_t² + ψ_r² + (ℓ(ℓ+1)/r² + e₂) ψ²) dr` for a level `psi` with velocity `vel`.
    pub fn energy(&self, psi: &[f64], vel: &[f64]) -> f64 {
        let n = self.n();
        let dr = self.dr;
        // trapezoid end term at the origin, where only ψ_r survives
        let mut e = 0.5 * (psi[1] / dr).powi(2);
        for j in 1..n {
            let pr = (psi[j + 1] - psi[j - 1]) / (2.0 * dr);
            let r = j as f64 * dr;
            e += vel[j] * vel[j] + pr * pr + (self.l / (r * r) + self.e2[j]) * psi[j] * psi[j];
        }
        e * dr
    }

    /// Energy of the current level with the centred velocity.
    fn current_energy(&self, next: &[f64]) -> f64 {
        let vel: Vec<f64> = (0..next.len()).map(|j| (next[j] - self.prev[j]) / (2.0 * self.dt)).collect();
        self.energy(&self.cur, &vel)
    }
}

/// `ψ(r)/r` by four-point Lagrange interpolation on `r_j = j·Δr`.
fn sample_psi(psi: &[f64], dr: f64, r: f64) -> f64 {
    let q = r / dr;
    let k = (q.floor() as usize).clamp(1, psi.len() - 3) - 1;
    let mut v = 0.0;
    for a in 0..4 {
        let mut w = 1.0;
        for b in 0..4 {
            if a != b {
                w *= (q - (k + b) as f64) / ((a as f64) - (b as f64));
            }
        }
        v += w * psi[k + a];
    }
    v / r
}

/// Outer radius beyond the reach of the data by time T, so the wall at R is never felt.
pub fn causal_radius(data_radius: f64, r0: f64, t_end: f64, pad: f64) -> f64 {
    data_radius.max(r0) + t_end + pad
}

fn uniform_samples(u: &GridFunction, dr: f64, n: usize) -> Vec<C> {
    let rmax = u.grid.rmax();
    (0..=n)
        .map(|j| {
            let r = j as f64 * dr;
            if j == 0 || r > rmax {
                ZERO
            } else {
                u.interpolate(r) * r
            }
        })
        .collect()
}

/// Evolve mode ℓ of `P u = 0` from the Cauchy data up to `t_end`, recording `u(t, r₀)`.
pub fn evolve_mode(
    op: &ReducedOperator,
    data: &CauchyData,
    t_end: f64,
    r0: f64,
    opts: &EvolveOptions,
) -> Result<Evolution> {
    let ell = data.ell();
    let radius = causal_radius(data.support_radius(), r0, t_end, opts.pad);
    let n = (radius / opts.dr).ceil() as usize;
    let stride = (opts.sample_dt / (opts.courant * opts.dr)).ceil().max(1.0) as usize;
    let dt = opts.sample_dt / stride as f64;
    let samples = (t_end / opts.sample_dt).round() as usize;
    let psi0 = uniform_samples(&data.u0, opts.dr, n);
    let psi1 = uniform_samples(&data.u1, opts.dr, n);
    let run = |part: fn(&C) -> f64| -> Result<(Vec<f64>, Vec<f64>)> {
        let p0: Vec<f64> = psi0.iter().map(part).collect();
        let p1: Vec<f64> = psi1.iter().map(part).collect();
        let mut ev = Evolver::new(op, ell, opts.dr, dt, n)?;
        let mut trace = vec![sample_psi(&p0, opts.dr, r0)];
        let e0 = ev.energy(&p0, &p1);
        let mut energy = vec![e0];
        ev.start(p0, p1);
        for k in 1..=samples {
            while ev.steps < k * stride {
                ev.step();
            }
            let next = ev.advance();
            let e = ev.current_energy(&next);
            trace.push(sample_psi(&ev.cur, opts.dr, r0));
            energy.push(e);
            if e0 > 0.0 && e > opts.max_energy_growth * e0 {
                return Err(Error::Instability(e / e0));
            }
            ev.commit(next);
        }
        Ok((trace, energy))
    };
    let (re, e_re) = run(|z| z.re)?;
    let real = psi0.iter().chain(&psi1).all(|z| z.im == 0.0);
    let (values, energy): (Vec<C>, Vec<f64>) = if real {
        (re.iter().map(|v| C::new(*v, 0.0)).collect(), e_re)
    } else {
        let (im, e_im) = run(|z| z.im)?;
        (
            re.iter().zip(&im).map(|(a, b)| C::new(*a, *b)).collect(),
            e_re.iter().zip(&e_im).map(|(a, b)| a + b).collect(),
        )
    };
    Ok(Evolution {
        trace: TimeTrace { r0, t0: 0.0, dt: opts.sample_dt, values, method: TraceMethod::Evolved },
        energy,
        dt,
        outer_radius: n as f64 * opts.dr,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisOptions {
    pub d_sigma: f64,
    pub sigma_max: f64,
    /// χ = 1 on `|σ| ≤ chi_inner`, 0 on `|σ| ≥ chi_outer`.
    pub chi_inner: f64,
    pub chi_outer: f64,
    /// Use `v(−σ) = conj v(σ)` for real data instead of solving at negative σ.
    pub use_symmetry: bool,
    /// Allowed error estimate, relative to sup|u|. The estimate is the change under dropping
    /// every other σ sample divided by `2⁴ − 1`.
    pub tol: f64,
    pub solver: SolverOptions,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            d_sigma: 0.01,
            sigma_max: 20.0,
            chi_inner: 0.5,
            chi_outer: 1.0,
            use_symmetry: true,
            tol: 1e-3,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Synthesis {
    pub low: TimeTrace,
    pub high: TimeTrace,
    pub sigmas: Vec<f64>,
    /// `û(σ, r₀)`.
    pub samples: Vec<C>,
    /// Richardson error estimate from halving the σ resolution, relative to sup|u|.
    pub refinement: f64,
}

impl Synthesis {
    pub fn total(&self) -> TimeTrace {
        self.low.add(&self.high, TraceMethod::Synthesized)
    }
}

/// Uniform sample times `t₀ + k·Δt`, `k < n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub n: usize,
}

impl TimeGrid {
    pub fn span(t0: f64, t1: f64, dt: f64) -> Self {
        TimeGrid { t0, dt, n: ((t1 - t0) / dt).round() as usize + 1 }
    }
}

/// `û(σ, r₀) = (P_σ⁻¹(σf₀ + g₀))(r₀)` at each σ.
pub fn transform_samples(
    op: &ReducedOperator,
    f0: &GridFunction,
    g0: &GridFunction,
    r0: f64,
    sigmas: &[f64],
    solver: &SolverOptions,
    exec: Exec,
) -> Result<Vec<C>> {
    let rmax = f0.grid.rmax();
    let ell = f0.ell;
    let out = exec.map(sigmas, |&s| -> Result<C> {
        let sigma = C::new(s, 0.0);
        let grid = solver.grid(sigma);
        let src = GridFunction::from_fn(grid, ell, |r| {
            if r > rmax {
                ZERO
            } else {
                f0.interpolate(r) * sigma + g0.interpolate(r)
            }
        });
        let v = resolve_mode_with(op, sigma, ell, &src, solver)?;
        Ok(v.interpolate(r0))
    });
    out.into_iter().collect()
}

/// `(2π)⁻¹ ∫ e^{−iσt} w(σ) v(σ) dσ` from samples on `σ_k = k·Δσ` (and their mirror images).
fn fourier_trace(
    pos: &[C],
    neg: Option<&[C]>,
    weight: &dyn Fn(f64) -> f64,
    d_sigma: f64,
    stride: usize,
    times: &TimeGrid,
) -> Vec<C> {
    let idx: Vec<usize> = (0..pos.len()).step_by(stride).collect();
    let h = d_sigma * stride as f64;
    (0..times.n)
        .map(|k| {
            let t = times.t0 + k as f64 * times.dt;
            let a: Vec<C> = idx
                .iter()
                .map(|&i| {
                    let s = i as f64 * d_sigma;
                    pos[i] * weight(s) * C::new(0.0, -s * t).exp()
                })
                .collect();
            let ia = *cumulative(&a, h).last().expect("σ samples");
            match neg {
                None => C::new(ia.re / PI, 0.0),
                Some(neg) => {
                    let b: Vec<C> = idx
                        .iter()
                        .map(|&i| {
                            let s = i as f64 * d_sigma;
                            neg[i] * weight(s) * C::new(0.0, s * t).exp()
                        })
                        .collect();
                    (ia + *cumulative(&b, h).last().expect("σ samples")) / (2.0 * PI)
                }
            }
        })
        .collect()
}

/// `u = u_L + u_H` at r₀ with `u_L = (2π)⁻¹ ∫ χ e^{−iσt} û dσ` and `u_H` the `1 − χ` part.
pub fn synthesize(
    op: &ReducedOperator,
    f0: &GridFunction,
    g0: &GridFunction,
    r0: f64,
    times: &TimeGrid,
    opts: &SynthesisOptions,
    exec: Exec,
) -> Result<Synthesis> {
    let mut k = (opts.sigma_max / opts.d_sigma).ceil() as usize;
    k += k % 2;
    let sigmas: Vec<f64> = (0..=k).map(|i| i as f64 * opts.d_sigma).collect();
    let pos = transform_samples(op, f0, g0, r0, &sigmas, &opts.solver, exec)?;
    let real = f0.values.iter().all(|z| z.re == 0.0) && g0.values.iter().all(|z| z.im == 0.0);
    let neg = if real && opts.use_symmetry {
        None
    } else {
        let minus: Vec<f64> = sigmas.iter().map(|s| -s).collect();
        Some(transform_samples(op, f0, g0, r0, &minus, &opts.solver, exec)?)
    };
    let chi = cutoff(opts.chi_inner, opts.chi_outer);
    let low_w = |s: f64| chi(s);
    let high_w = |s: f64| 1.0 - chi(s);
    let all_w = |_: f64| 1.0;
    let low = fourier_trace(&pos, neg.as_deref(), &low_w, opts.d_sigma, 1, times);
    let high = fourier_trace(&pos, neg.as_deref(), &high_w, opts.d_sigma, 1, times);
    let coarse = fourier_trace(&pos, neg.as_deref(), &all_w, opts.d_sigma, 2, times);
    let fine: Vec<C> = low.iter().zip(&high).map(|(a, b)| a + b).collect();
    let sup = fine.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let change = fine.iter().zip(&coarse).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / sup;
    let refinement = change / 15.0;
    if refinement > opts.tol {
        return Err(Error::Quadrature(format!(
            "halving the σ resolution changes the trace by {change:.2e} of its peak (Δσ = {})",
            opts.d_sigma
        )));
    }
    let trace = |values: Vec<C>, method| TimeTrace { r0, t0: times.t0, dt: times.dt, values, method };
    Ok(Synthesis {
        low: trace(low, TraceMethod::SynthesizedLow),
        high: trace(high, TraceMethod::SynthesizedHigh),
        sigmas,
        samples: pos,
        refinement,
    })
}

/// Two steps of `(f, g) ↦ (g − iP¹f, P₀f)`, which satisfies
/// `P_σ⁻¹(σf + g) = −σ⁻¹f + σ⁻¹P_σ⁻¹(σf' + g')`.
#[derive(Clone, Debug, PartialEq)]
pub struct HighFreqIterates {
    pub f1: GridFunction,
    pub g1: GridFunction,
    pub f2: GridFunction,
    pub g2: GridFunction,
    /// Measured decay rates `a` in `|v| ≲ r^{−a}` of `f0, g0, f1, g1, f2, g2`
    /// (infinite for data vanishing in the outer shells).
    pub decay_rates: [f64; 6],
}

fn iterate_once(op: &ReducedOperator, f: &GridFunction, g: &GridFunction) -> (GridFunction, GridFunction) {
    let f1 = g.sub(&apply_p1(op, f).scale(C::i()));
    let g1 = apply_p0(op, f);
    (f1, g1)
}

/// Decay rate from dyadic-shell maxima on `r ∈ [4, R/4]`.
pub fn decay_rate(u: &GridFunction) -> f64 {
    let rmax = u.grid.rmax() / 4.0;
    let peak = u.values.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut lo = 4.0;
    while 2.0 * lo <= rmax {
        let m = (0..u.values.len())
            .filter(|&i| u.r(i) >= lo && u.r(i) < 2.0 * lo)
            .map(|i| u.values[i].norm())
            .fold(0.0, f64::max);
        if m <= 1e-13 * peak {
            return f64::INFINITY;
        }
        xs.push(lo.ln());
        ys.push(m.ln());
        lo *= 2.0;
    }
    if xs.len() < 2 {
        return f64::NAN;
    }
    -stats::slope(&xs, &ys)
}

pub fn high_freq_iterate(op: &ReducedOperator, f0: &GridFunction, g0: &GridFunction) -> Result<HighFreqIterates> {
    if f0.grid.n < 16 {
        return Err(Error::Regularity("grid too short for the derivative stencils".into()));
    }
    let (f1, g1) = iterate_once(op, f0, g0);
    let (f2, g2) = iterate_once(op, &f1, &g1);
    for (name, v) in [("f1", &f1), ("g1", &g1), ("f2", &f2), ("g2", &g2)] {
        if !v.is_finite() {
            return Err(Error::Regularity(format!("{name} is not finite; data lack derivatives")));
        }
    }
    let decay_rates = [f0, g0, &f1, &g1, &f2, &g2].map(decay_rate);
    Ok(HighFreqIterates { f1, g1, f2, g2, decay_rates })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Slope of `log|u|` against `log t`.
    pub exponent: f64,
    /// 95% residual-bootstrap band for the exponent.
    pub band: [f64; 2],
    pub window: [f64; 2],
    /// RMS residual of the log-log fit.
    pub residual: f64,
    pub amplitude: f64,
    pub points: usize,
}

pub const NOISE_FLOOR: f64 = 1e-12;

/// Least-squares decay exponent on `[t₁, t₂]`, with a seeded residual bootstrap.
pub fn fit_decay(trace: &TimeTrace, t1: f64, t2: f64, seed: u64) -> Result<DecayFit> {
    if t1 <= 0.0 || t2 <= t1 || t1 < trace.t0 || t2 > trace.t_end() + 1e-9 {
        return Err(Error::ExcludedParameter(format!(
            "window [{t1}, {t2}] is not inside the trace [{}, {}]",
            trace.t0,
            trace.t_end()
        )));
    }
    let (ts, vs) = trace.window(t1, t2);
    let peak = trace.sup();
    let low = vs.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    if !(low > NOISE_FLOOR * peak) {
        return Err(Error::Underflow(low / peak));
    }
    let x: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let y: Vec<f64> = vs.iter().map(|z| z.norm().ln()).collect();
    let (a, b) = stats::line(&x, &y);
    let res = stats::residuals(&x, &y);
    let rms = (res.iter().map(|e| e * e).sum::<f64>() / res.len() as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slopes: Vec<f64> = (0..1000)
        .map(|_| {
            let yb: Vec<f64> = x.iter().map(|xi| a + b * xi + res[rng.random_range(0..res.len())]).collect();
            stats::slope(&x, &yb)
        })
        .collect();
    slopes.sort_by(f64::total_cmp);
    Ok(DecayFit {
        exponent: b,
        band: [slopes[25], slopes[974]],
        window: [t1, t2],
        residual: rms,
        amplitude: a.exp(),
        points: ts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use std::sync::Arc;

    fn data_grid() -> Arc<Grid> {
        Arc::new(Grid::new(1.0, 0.005, 10.0))
    }

    fn bump(r: f64) -> f64 {
        if r < 1.0 {
            (-1.0 / (1.0 - r * r)).exp() * std::f64::consts::E
        } else {
            0.0
        }
    }

    #[test]
    fn data_map_examples() {
        let g = data_grid();
        let u1 = GridFunction::from_real(g.clone(), 0, bump);
        let d = CauchyData::new(GridFunction::zeros(g.clone(), 0), u1.clone()).unwrap();
        let (f0, g0) = data_transform(&d, &ReducedOperator::flat());
        assert!(f0.values.iter().all(|z| z.norm() == 0.0));
        assert_eq!(g0.values, u1.values);
        let u0 = GridFunction::from_real(g.clone(), 0, |r| (-r * r).exp());
        let d = CauchyData::new(u0.clone(), GridFunction::zeros(g, 0)).unwrap();
        let (f0, g0) = data_transform(&d, &ReducedOperator::flat());
        assert!(f0.values.iter().zip(&u0.values).all(|(a, b)| *a == -C::i() * b));
        assert!(g0.values.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn flat_iteration_is_minus_laplacian() {
        let g = data_grid();
        let f0 = GridFunction::from_fn(g.clone(), 0, |r| -C::i() * (-r * r).exp());
        let g0 = GridFunction::from_real(g, 0, |r| (-2.0 * r * r).exp());
        let it = high_freq_iterate(&ReducedOperator::flat(), &f0, &g0).unwrap();
        assert_eq!(it.f1.values, g0.values);
        for i in [0usize, 40, 200, 400] {
            let r = f0.r(i);
            // −Δ(−i e^{−r²}) = i (4r² − 6) e^{−r²}
            let exact = C::i() * (4.0 * r * r - 6.0) * (-r * r).exp();
            assert!((it.g1.values[i] - exact).norm() < 1e-7, "r={r}");
        }
    }

    #[test]
    fn iteration_gains_two_orders_of_decay() {
        let g = Arc::new(Grid::new(1.0, 0.01, 4000.0));
        let f0 = GridFunction::from_real(g.clone(), 0, |r| (1.0 + r * r).powf(-1.25));
        let g0 = GridFunction::zeros(g, 0);
        let it = high_freq_iterate(&ReducedOperator::flat(), &f0, &g0).unwrap();
        assert!((it.decay_rates[0] - 2.5).abs() < 0.05);
        assert!((it.decay_rates[3] - 4.5).abs() < 0.1, "{:?}", it.decay_rates);
    }

    #[test]
    fn exact_power_law_fit() {
        let values = (0..=5000).map(|k| C::new(2.0 * (1.0 + k as f64 * 0.1).powf(-3.5), 0.0)).collect();
        let tr = TimeTrace { r0: 1.0, t0: 1.0, dt: 0.1, values, method: TraceMethod::Evolved };
        let f = fit_decay(&tr, 50.0, 500.0, 1).unwrap();
        assert!((f.exponent + 3.5).abs() < 0.01);
        assert!(f.band[1] - f.band[0] < 1e-9);
        assert!(matches!(fit_decay(&tr, 50.0, 900.0, 1), Err(Error::ExcludedParameter(_))));
        let tiny = TimeTrace { values: tr.values.iter().map(|v| v * 1e-9).collect(), ..tr.clone() };
        let mut spiked = tiny.clone();
        spiked.values[0] = C::new(1.0, 0.0);
        assert!(matches!(fit_decay(&spiked, 50.0, 500.0, 1), Err(Error::Underflow(_))));
    }

    #[test]
    fn huygens_and_energy_in_flat_space() {
        let g = data_grid();
        let d = CauchyData::new(GridFunction::from_real(g.clone(), 0, bump), GridFunction::zeros(g, 0)).unwrap();
        let opts = EvolveOptions { dr: 0.005, ..Default::default() };
        let ev = evolve_mode(&ReducedOperator::flat(), &d, 30.0, 0.5, &opts).unwrap();
        let (_, late) = ev.trace.window(2.5, 30.0);
        let tail = late.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(tail < 1e-3 * ev.trace.sup(), "{tail}");
        assert!(ev.energy_drift() < 1e-3, "{}", ev.energy_drift());
    }

    #[test]
    fn restart_from_state_shifts_trace() {
        let op = ReducedOperator::potential(1.5, 1.0).unwrap();
        let (dr, dt, n) = (0.02, 0.005, 3000);
        let psi0: Vec<f64> = (0..=n).map(|j| j as f64 * dr * bump(j as f64 * dr)).collect();
        let mut a = Evolver::new(&op, 0, dr, dt, n).unwrap();
        a.start(psi0.clone(), vec![0.0; n + 1]);
        for _ in 0..400 {
            a.step();
        }
        let mut b = Evolver::new(&op, 0, dr, dt, n).unwrap();
        b.prev = a.prev.clone();
        b.cur = a.cur.clone();
        let mut c = Evolver::new(&op, 0, dr, dt, n).unwrap();
        c.start(psi0, vec![0.0; n + 1]);
        for _ in 0..400 {
            c.step();
        }
        for _ in 0..1000 {
            b.step();
            c.step();
        }
        assert_eq!(b.cur, c.cur);
    }

    #[test]
    fn cfl_violation_is_reported() {
        let op = ReducedOperator::flat();
        assert!(matches!(Evolver::new(&op, 0, 0.01, 0.011, 100), Err(Error::Cfl(_))));
    }

    #[test]
    fn synthesis_is_real_and_matches_evolution() {
        let op = ReducedOperator::potential(2.5, 1.0).unwrap();
        let g = data_grid();
        let d = CauchyData::new(
            GridFunction::zeros(g.clone(), 0),
            GridFunction::from_real(g, 0, |r| (-4.0 * r * r).exp()),
        )
        .unwrap();
        let (f0, g0) = data_transform(&d, &op);
        let times = TimeGrid::span(5.0, 20.0, 0.5);
        let opts = SynthesisOptions { d_sigma: 0.02, use_symmetry: false, ..Default::default() };
        let syn = synthesize(&op, &f0, &g0, 2.0, &times, &opts, Exec::Parallel).unwrap();
        let total = syn.total();
        let sup = total.sup();
        assert!(total.values.iter().all(|z| z.im.abs() < 1e-8 * sup.max(1e-300) + 1e-14));
        let ev = evolve_mode(&op, &d, 20.0, 2.0, &EvolveOptions { dr: 0.01, ..Default::default() }).unwrap();
        assert!(trace_gap(&total, &ev.trace, 5.0, 20.0) * total.sup().max(ev.trace.sup()) < 1e-3 * ev.trace.sup());
    }
}
