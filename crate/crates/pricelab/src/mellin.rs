//! Mellin transform on the half-line, the model operator `L₀ = −(ρ∂_ρ)² + ρ∂_ρ + ℓ(ℓ+1)`
//! and zero-energy expansions `u = Σ ρ^j Y_{j−1} + q` by contour shifting.
//!
//! Functions live on a uniform grid in `x = log ρ`. With `ξ = ν + iμ` the transform
//! `Mu(ξ) = ∫ ρ^{−iξ} u dρ/ρ` is the Fourier transform of `e^{μx} u` in x.

use crate::error::{Error, Result};
use crate::grid::{cumulative, fd_weights};
use crate::jet::Jet;
use crate::model::ReducedOperator;
use num_complex::Complex64 as C;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Ends of a log grid closer than this to `ρ = 1` mark the edge of the data support
/// rather than an end of the contour.
const FAR_END: f64 = 30.0;

const NORM_DEPTH: f64 = 6.0;

/// Contour margin δ_w used for "minus" orders.
pub const MINUS_MARGIN: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogGrid {
    pub x0: f64,
    pub dx: f64,
    pub n: usize,
}

impl LogGrid {
    /// `x ∈ [−64, 64)` with 2¹⁴ points.
    pub fn standard() -> Self {
        LogGrid::symmetric(64.0, 1 << 14)
    }

    pub fn symmetric(half_width: f64, n: usize) -> Self {
        LogGrid { x0: -half_width, dx: 2.0 * half_width / n as f64, n }
    }

    pub fn x(&self, k: usize) -> f64 {
        self.x0 + k as f64 * self.dx
    }

    pub fn rho(&self, k: usize) -> f64 {
        self.x(k).exp()
    }

    /// Frequency of FFT bin k.
    pub fn nu(&self, k: usize) -> f64 {
        let kk = if k < self.n / 2 { k as f64 } else { k as f64 - self.n as f64 };
        2.0 * PI * kk / (self.n as f64 * self.dx)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogSamples {
    pub grid: LogGrid,
    pub values: Vec<C>,
    pub ell: usize,
}

impl LogSamples {
    pub fn from_fn(grid: LogGrid, ell: usize, f: impl Fn(f64) -> C) -> Self {
        let values = (0..grid.n).map(|k| f(grid.rho(k))).collect();
        LogSamples { grid, values, ell }
    }

    pub fn from_real(grid: LogGrid, ell: usize, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, ell, |r| C::new(f(r), 0.0))
    }

    pub fn map(&self, f: impl Fn(f64, C) -> C) -> Self {
        let values = self.values.iter().enumerate().map(|(k, v)| f(self.grid.rho(k), *v)).collect();
        LogSamples { grid: self.grid, values, ell: self.ell }
    }

    pub fn sub(&self, o: &LogSamples) -> Self {
        let values = self.values.iter().zip(&o.values).map(|(a, b)| a - b).collect();
        LogSamples { grid: self.grid, values, ell: self.ell }
    }

    /// Six-point Lagrange interpolation in `log ρ`.
    pub fn interpolate(&self, rho: f64) -> C {
        let g = &self.grid;
        let q = (rho.ln() - g.x0) / g.dx;
        let m = (q.floor() as isize - 2).clamp(0, g.n as isize - 6) as usize;
        let xs: Vec<f64> = (m..m + 6).map(|k| k as f64).collect();
        let w = fd_weights(q, &xs, 0);
        (0..6).map(|k| self.values[m + k] * w[0][k]).sum()
    }

    /// `(∫ |ρ^{−w} u|² dρ/ρ)^{1/2}` over `e^{−6} ≤ ρ ≤ 1`. The lower cut keeps FFT roundoff
    /// from being amplified by the weight.
    pub fn weighted_norm(&self, w: f64) -> f64 {
        let g = &self.grid;
        let s: f64 = (0..g.n)
            .filter(|&k| (-NORM_DEPTH..=0.0).contains(&g.x(k)))
            .map(|k| (-w * g.x(k)).exp().powi(2) * self.values[k].norm_sqr())
            .sum();
        (s * g.dx).sqrt()
    }
}

/// Transform values on the contour `Im ξ = μ`, at the FFT frequencies of `grid`.
#[derive(Clone, Debug, PartialEq)]
pub struct MellinSamples {
    pub mu: f64,
    pub grid: LogGrid,
    pub values: Vec<C>,
    pub ell: usize,
}

impl MellinSamples {
    pub fn xi(&self, k: usize) -> C {
        C::new(self.grid.nu(k), self.mu)
    }

    /// Samples of a closed-form symbol on the contour.
    pub fn from_symbol(grid: LogGrid, mu: f64, ell: usize, f: impl Fn(C) -> C) -> Self {
        let values = (0..grid.n).map(|k| f(C::new(grid.nu(k), mu))).collect();
        MellinSamples { mu, grid, values, ell }
    }
}

fn fft(data: &mut [C], inverse: bool) {
    let mut planner = FftPlanner::new();
    let plan = if inverse { planner.plan_fft_inverse(data.len()) } else { planner.plan_fft_forward(data.len()) };
    plan.process(data);
}

fn check_tails(w: &[C], grid: &LogGrid, tol: f64) -> Result<()> {
    let m = w.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if m == 0.0 {
        return Ok(());
    }
    let edge = 4.min(w.len());
    let head = w[..edge].iter().map(|z| z.norm()).fold(0.0, f64::max);
    let tail = w[w.len() - edge..].iter().map(|z| z.norm()).fold(0.0, f64::max);
    if grid.x0 <= -FAR_END && head > tol * m {
        return Err(Error::ContourInvalid("ρ → 0"));
    }
    if grid.x(grid.n - 1) >= FAR_END && tail > tol * m {
        return Err(Error::ContourInvalid("ρ → ∞"));
    }
    Ok(())
}

/// FFT quadrature of `Mu` on `Im ξ = μ`.
pub fn mellin_transform(u: &LogSamples, mu: f64) -> Result<MellinSamples> {
    let g = u.grid;
    let mut w: Vec<C> = u.values.iter().enumerate().map(|(k, v)| v * (mu * g.x(k)).exp()).collect();
    check_tails(&w, &g, 1e-8)?;
    fft(&mut w, false);
    let values = w
        .iter()
        .enumerate()
        .map(|(k, v)| v * g.dx * C::new(0.0, -g.nu(k) * g.x0).exp())
        .collect();
    Ok(MellinSamples { mu, grid: g, values, ell: u.ell })
}

/// Inverse transform `u(ρ) = (2π)⁻¹ ∫_{Im ξ = μ} ρ^{iξ} Mu(ξ) dξ` on the source grid.
pub fn inverse_mellin(w: &MellinSamples) -> Result<LogSamples> {
    if w.values.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::PoleOnContour(w.mu));
    }
    let g = w.grid;
    let mut v: Vec<C> = w
        .values
        .iter()
        .enumerate()
        .map(|(k, z)| z * C::new(0.0, g.nu(k) * g.x0).exp())
        .collect();
    fft(&mut v, true);
    let scale = 1.0 / (g.n as f64 * g.dx);
    let values = v.iter().enumerate().map(|(k, z)| z * scale * (-w.mu * g.x(k)).exp()).collect();
    Ok(LogSamples { grid: g, values, ell: w.ell })
}

/// `Mu(ξ)` at one point by sixth-order quadrature over the sample range.
pub fn mellin_at(u: &LogSamples, xi: C) -> Result<C> {
    let g = u.grid;
    let f: Vec<C> = u
        .values
        .iter()
        .enumerate()
        .map(|(k, v)| v * (-C::i() * xi * g.x(k)).exp())
        .collect();
    check_tails(&f, &g, 1e-10)?;
    Ok(*cumulative(&f, g.dx).last().expect("non-empty grid"))
}

/// `A^{2μ} ∫ |Mu(ν + iμ)|² dν`, non-increasing in μ for data supported in `ρ ≤ A`.
pub fn contour_energy(u: &LogSamples, mu: f64, a: f64) -> f64 {
    let g = u.grid;
    let s: f64 = (0..g.n).map(|k| (2.0 * mu * g.x(k)).exp() * u.values[k].norm_sqr()).sum();
    a.powf(2.0 * mu) * 2.0 * PI * s * g.dx
}

/// `L̂₀(ξ) = ξ² + iξ + ℓ(ℓ+1)`.
pub fn l0_symbol(xi: C, ell: usize) -> C {
    xi * xi + C::i() * xi + (ell * (ell + 1)) as f64
}

/// Poles of `1/L̂₀`: `iℓ` and `−i(ℓ+1)`.
pub fn l0_poles(ell: usize) -> [C; 2] {
    [C::new(0.0, ell as f64), C::new(0.0, -(ell as f64) - 1.0)]
}

/// `L₀ f` at `x = log ρ` for a closed-form real profile given as a function of x.
pub fn l0_apply_jet(f: &dyn Fn(Jet) -> Jet, x: f64, ell: usize) -> f64 {
    let j = f(Jet::var(x));
    -j.deriv(2) + j.deriv(1) + (ell * (ell + 1)) as f64 * j.value()
}

/// Contour used for spectral calculus on samples: between the two poles of `1/L̂₀`.
const CALC_MU: f64 = -0.5;

/// `L₀ u` by Mellin multiplication on `Im ξ = −1/2`.
pub fn l0_apply(u: &LogSamples) -> Result<LogSamples> {
    let m = mellin_transform(u, CALC_MU)?;
    let ell = u.ell;
    let values = (0..m.values.len()).map(|k| m.values[k] * l0_symbol(m.xi(k), ell)).collect();
    inverse_mellin(&MellinSamples { values, ..m })
}

/// `(u, ∂_x u, ∂²_x u)` by spectral differentiation of `e^{μx} u` on `μ = −1/2`.
fn x_derivatives(u: &LogSamples) -> Result<(Vec<C>, Vec<C>)> {
    let m = mellin_transform(u, CALC_MU)?;
    let d1: Vec<C> = (0..m.values.len()).map(|k| m.values[k] * C::i() * m.xi(k)).collect();
    let d2: Vec<C> = (0..m.values.len()).map(|k| -m.values[k] * m.xi(k) * m.xi(k)).collect();
    let u1 = inverse_mellin(&MellinSamples { values: d1, ..m.clone() })?;
    let u2 = inverse_mellin(&MellinSamples { values: d2, ..m })?;
    Ok((u1.values, u2.values))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZeroEnergyExpansion {
    pub ell: usize,
    pub gamma: f64,
    /// `(j, Y_{j−1})` for the harmonic terms `ρ^j Y_{j−1}`.
    pub terms: Vec<(usize, C)>,
    pub remainder: LogSamples,
    pub solution: LogSamples,
    /// Claimed weight of the remainder, already reduced by the minus margin.
    pub remainder_order: f64,
    /// `(Σ|Y| + ‖q‖)/‖f‖` in the weighted norms.
    pub stability: f64,
    /// Relative residual of the equation.
    pub residual: f64,
    pub iterations: usize,
}

fn check_weight(gamma: f64) -> Result<()> {
    let s = gamma + 1.5;
    if (s - s.round()).abs() < 1e-9 {
        return Err(Error::ExcludedWeight(gamma));
    }
    Ok(())
}

/// Inverting on `Im ξ = −1/2` multiplies roundoff by `e^{x/2}`; sup norms skip the far ends.
const TRUSTED: f64 = 20.0;

fn trusted_max(u: &LogSamples) -> f64 {
    let g = &u.grid;
    (0..g.n)
        .filter(|&k| g.x(k).abs() <= TRUSTED)
        .map(|k| u.values[k].norm())
        .fold(0.0, f64::max)
}

/// Relative sup distance of two sample sets on `ρ ≤ 1`.
fn rel_gap(a: &LogSamples, b: &[C]) -> f64 {
    let g = a.grid;
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for k in 0..g.n {
        if g.x(k) <= 0.0 && g.x(k) >= -FAR_END {
            num = num.max((a.values[k] - b[k]).norm());
            den = den.max(b[k].norm());
        }
    }
    num / den.max(f64::MIN_POSITIVE)
}

/// Residue terms of `L₀⁻¹g` below `Im ξ = −1/2` down to the weight `top` (exclusive).
fn residues(g: &LogSamples, top: f64) -> Result<Vec<(usize, C)>> {
    let k = g.ell + 1;
    if (k as f64) < top {
        let m = mellin_at(g, C::new(0.0, -(k as f64)))?;
        Ok(vec![(k, m / (2 * k - 1) as f64)])
    } else {
        Ok(Vec::new())
    }
}

fn assemble(
    f_norm: f64,
    gamma: f64,
    order: f64,
    u: LogSamples,
    terms: Vec<(usize, C)>,
    residual: f64,
    iterations: usize,
) -> ZeroEnergyExpansion {
    let q = u.map(|rho, v| v - terms.iter().map(|(j, y)| y * rho.powi(*j as i32)).sum::<C>());
    let ysum: f64 = terms.iter().map(|(_, y)| y.norm()).sum();
    let qn = q.weighted_norm(order + 1.5);
    ZeroEnergyExpansion {
        ell: u.ell,
        gamma,
        terms,
        remainder: q,
        solution: u,
        remainder_order: order,
        stability: (ysum + qn) / f_norm,
        residual,
        iterations,
    }
}

/// `L₀⁻¹ f` for mode ℓ with `f` of weight γ: the solution on `Im ξ = −1/2` split into the
/// residue at `ξ = −i(ℓ+1)` (when `ℓ+1 < γ+3/2`) and the remainder.
pub fn l0_solve_mode(f: &LogSamples, gamma: f64) -> Result<ZeroEnergyExpansion> {
    if gamma <= -0.5 {
        return Err(Error::ExcludedWeight(gamma));
    }
    check_weight(gamma)?;
    let ell = f.ell;
    let m = mellin_transform(f, CALC_MU)?;
    let values = (0..m.values.len()).map(|k| m.values[k] / l0_symbol(m.xi(k), ell)).collect();
    let u = inverse_mellin(&MellinSamples { values, ..m })?;
    let check = l0_apply(&u)?;
    let residual = rel_gap(&check, &f.values);
    let terms = residues(f, gamma + 1.5)?;
    let order = gamma - MINUS_MARGIN;
    Ok(assemble(f.weighted_norm(gamma + 1.5), gamma, order, u, terms, residual, 1))
}

/// The remainder computed directly on the shifted contour `Im ξ = μ'`.
pub fn shifted_contour_remainder(f: &LogSamples, mu: f64) -> Result<LogSamples> {
    let ell = f.ell;
    for p in l0_poles(ell) {
        if (p.im - mu).abs() < 1e-9 {
            return Err(Error::PoleOnContour(mu));
        }
    }
    let m = mellin_transform(f, mu)?;
    let values = (0..m.values.len()).map(|k| m.values[k] / l0_symbol(m.xi(k), ell)).collect();
    inverse_mellin(&MellinSamples { values, ..m })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FixedPoint {
    fn default() -> Self {
        FixedPoint { tol: 1e-8, max_iter: 200 }
    }
}

/// `P̃(0)⁻¹ f` by the iteration `u ↦ L₀⁻¹(ρ⁻²f − ρ^κL₁u)` with `P̃(0) = ρ²(L₀ + ρ^κL₁)`.
/// In `x = log ρ`: `ρ^κL₁ = c₂(∂²_x + ∂_x) − d₂r ∂_x + e₂r² − ℓ(ℓ+1)f₂`.
pub fn p0_solve(op: &ReducedOperator, f: &LogSamples, gamma: f64) -> Result<ZeroEnergyExpansion> {
    p0_solve_with(op, f, gamma, &FixedPoint::default())
}

pub fn p0_solve_with(
    op: &ReducedOperator,
    f: &LogSamples,
    gamma: f64,
    fp: &FixedPoint,
) -> Result<ZeroEnergyExpansion> {
    if gamma <= 0.5 || gamma > op.kappa + 1.5 + 1e-12 {
        return Err(Error::ExcludedWeight(gamma));
    }
    check_weight(gamma)?;
    let g = f.grid;
    let ell = f.ell;
    let l = (ell * (ell + 1)) as f64;
    let rhs = f.map(|rho, v| v / (rho * rho));
    let coeffs: Vec<[f64; 4]> = (0..g.n)
        .map(|k| {
            let r = 1.0 / g.rho(k);
            let c = op.coeffs(r);
            [c.c2, c.d2 * r, c.e2 * r * r - l * c.f2, 0.0]
        })
        .collect();
    let solve = |src: &LogSamples| -> Result<LogSamples> {
        let m = mellin_transform(src, CALC_MU)?;
        let values = (0..m.values.len()).map(|k| m.values[k] / l0_symbol(m.xi(k), ell)).collect();
        inverse_mellin(&MellinSamples { values, ..m })
    };
    let perturb = |u: &LogSamples| -> Result<Vec<C>> {
        let (u1, u2) = x_derivatives(u)?;
        Ok((0..g.n)
            .map(|k| {
                let [c2, d2r, e, _] = coeffs[k];
                c2 * (u2[k] + u1[k]) - d2r * u1[k] + e * u.values[k]
            })
            .collect())
    };
    let mut u = solve(&rhs)?;
    let mut prev_step = f64::INFINITY;
    let mut iterations = 1;
    let scale = trusted_max(&u).max(f64::MIN_POSITIVE);
    loop {
        let k = perturb(&u)?;
        let src = LogSamples { grid: g, values: rhs.values.iter().zip(&k).map(|(a, b)| a - b).collect(), ell };
        let next = solve(&src)?;
        let step = trusted_max(&next.sub(&u)) / scale;
        iterations += 1;
        u = next;
        if step < fp.tol {
            break;
        }
        if iterations > 4 && step > 0.9 * prev_step {
            return Err(Error::AmplitudeTooLarge(step / prev_step));
        }
        if iterations >= fp.max_iter {
            return Err(Error::AmplitudeTooLarge(step / prev_step));
        }
        prev_step = step;
    }
    let k = perturb(&u)?;
    let src = LogSamples { grid: g, values: rhs.values.iter().zip(&k).map(|(a, b)| a - b).collect(), ell };
    let check = l0_apply(&u)?;
    let residual = rel_gap(&check, &src.values);
    let terms = residues(&src, gamma - 0.5)?;
    let order = gamma - 2.0 - MINUS_MARGIN;
    Ok(assemble(f.weighted_norm(gamma + 1.5), gamma, order, u, terms, residual, iterations))
}

/// Smooth cutoff: 1 on `[0, a]`, 0 on `[b, ∞)`.
pub fn cutoff(a: f64, b: f64) -> impl Fn(f64) -> f64 {
    move |t: f64| {
        if t <= a {
            1.0
        } else if t >= b {
            0.0
        } else {
            let s = (t - a) / (b - a);
            let p = |y: f64| if y <= 0.0 { 0.0 } else { (-1.0 / y).exp() };
            p(1.0 - s) / (p(1.0 - s) + p(s))
        }
    }
}
