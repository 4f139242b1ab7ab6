//! Mode resolvents `P_σ⁻¹`, the twisted resolvent `P̃(σ)⁻¹ = e^{−iσr} P_σ⁻¹ e^{iσr}`,
//! the Neumann expansion of `P̃(σ) = P̃(0) − σR`, and frequency scans.
//!
//! Solves work with `ψ̃ = r e^{−iσr} u` on a sinh-graded grid, sixth-order stencils in the
//! grid variable, odd/even ghost nodes at the origin and a radiation condition at the
//! outer node taken from the outgoing Hankel function plus a WKB phase correction.

use crate::banded::Banded;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::grid::{cumulative, fd_weights, Grid, GridFunction};
use crate::model::{psi_coeffs, CoeffValues, ReducedOperator};
use crate::special::{bessel_j, hankel1, hankel_series};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

const ZERO: C = C::new(0.0, 0.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Grid scale s in `r = s·sinh(x)`.
    pub scale: f64,
    /// Step in x for |σ| ≲ 1; refined for larger |σ|.
    pub dx: f64,
    /// Outer radius is `r_factor / min(1, |σ|)`.
    pub r_factor: f64,
    /// Outer radius for σ = 0.
    pub r_static: f64,
    /// Radius inside which oscillations must stay resolved.
    pub osc_radius: f64,
    pub min_ppw: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { scale: 1.0, dx: 0.005, r_factor: 200.0, r_static: 2e4, osc_radius: 4.0, min_ppw: 10.0 }
    }
}

impl SolverOptions {
    pub fn outer_radius(&self, sigma: C) -> f64 {
        let s = sigma.norm();
        if s < 1e-14 {
            self.r_static
        } else {
            self.r_factor / s.min(1.0)
        }
    }

    pub fn step(&self, sigma: C) -> f64 {
        let w = sigma.norm() * (1.0 + self.osc_radius * self.osc_radius).sqrt();
        if w == 0.0 {
            self.dx
        } else {
            self.dx.min(PI / (20.0 * w))
        }
    }

    pub fn grid(&self, sigma: C) -> Arc<Grid> {
        Arc::new(Grid::new(self.scale, self.step(sigma), self.outer_radius(sigma)))
    }

    /// One grid good enough for every σ with `lo ≤ |σ| ≤ hi`.
    pub fn grid_spanning(&self, lo: f64, hi: f64) -> Arc<Grid> {
        let dx = self.step(C::new(hi, 0.0));
        Arc::new(Grid::new(self.scale, dx, self.outer_radius(C::new(lo, 0.0))))
    }
}

/// Pointwise `e^{−iσr} v`.
pub fn twist(v: &GridFunction, sigma: C) -> GridFunction {
    v.map(|r, x| x * (-C::i() * sigma * r).exp())
}

/// Pointwise `e^{iσr} v`.
pub fn untwist(v: &GridFunction, sigma: C) -> GridFunction {
    v.map(|r, x| x * (C::i() * sigma * r).exp())
}

/// Derivative stencils in the grid variable, scaled by dx.
struct Stencils {
    /// Central 7-point weights for d/dx and d²/dx² (offsets −3..3).
    c1: [f64; 7],
    c2: [f64; 7],
    /// 8-point right-end weights at offsets −7..0 from the last node, for the last three nodes.
    right: Vec<(Vec<f64>, Vec<f64>)>,
    /// 8-point left-end weights on nodes 1..8, for nodes 1..3.
    left: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Stencils {
    fn new(dx: f64) -> Self {
        let xs: Vec<f64> = (-3..=3).map(|k| k as f64).collect();
        let w = fd_weights(0.0, &xs, 2);
        let mut c1 = [0.0; 7];
        let mut c2 = [0.0; 7];
        for k in 0..7 {
            c1[k] = w[1][k] / dx;
            c2[k] = w[2][k] / (dx * dx);
        }
        let xr: Vec<f64> = (-7..=0).map(|k| k as f64).collect();
        let right = (0..3)
            .map(|m| {
                let w = fd_weights(-(2 - m) as f64, &xr, 2);
                (w[1].iter().map(|v| v / dx).collect(), w[2].iter().map(|v| v / (dx * dx)).collect())
            })
            .collect();
        let xl: Vec<f64> = (0..8).map(|k| k as f64).collect();
        let left = (0..3)
            .map(|m| {
                let w = fd_weights(m as f64, &xl, 2);
                (w[1].iter().map(|v| v / dx).collect(), w[2].iter().map(|v| v / (dx * dx)).collect())
            })
            .collect();
        Stencils { c1, c2, right, left }
    }

    /// `(node, d1, d2)` entries for node j; nodes may be ≤ 0 (ghosts) when `ghosts`.
    fn row(&self, j: usize, n: usize, ghosts: bool) -> Vec<(isize, f64, f64)> {
        if j + 3 <= n && (ghosts || j >= 4) {
            (0..7).map(|k| (j as isize + k as isize - 3, self.c1[k], self.c2[k])).collect()
        } else if j + 3 > n {
            let m = j + 2 - n;
            let (w1, w2) = &self.right[m];
            (0..8).map(|k| ((n - 7 + k) as isize, w1[k], w2[k])).collect()
        } else {
            let (w1, w2) = &self.left[j - 1];
            (0..8).map(|k| (1 + k as isize, w1[k], w2[k])).collect()
        }
    }
}

fn twisted_coeffs(c: &CoeffValues, l: f64, s: C, r: f64) -> (C, C, C) {
    let m = psi_coeffs(c, l, s, r);
    let i = C::i();
    (m.alpha, m.beta + 2.0 * i * s * m.alpha, m.gamma + i * s * m.beta - s * s * m.alpha)
}

/// Log-derivative `ψ̃'/ψ̃` of the outgoing twisted solution at radius r.
pub fn radiation_condition(op: &ReducedOperator, sigma: C, ell: usize, r: f64) -> C {
    if sigma.norm() < 1e-14 {
        return C::new(-(ell as f64) / r, 0.0);
    }
    let cs = hankel_series(ell);
    let z = sigma * r;
    let w: C = cs.iter().enumerate().map(|(k, c)| c / z.powu(k as u32)).sum();
    let dw: C = cs
        .iter()
        .enumerate()
        .map(|(k, c)| -(k as f64) * c / (z.powu(k as u32) * r))
        .sum();
    let c = op.coeffs(r);
    let l = (ell * (ell + 1)) as f64;
    let delta = sigma * (c.c2 - c.a1) / 2.0 - (c.e2 - c.f2 * l / (r * r)) / (2.0 * sigma);
    dw / w + C::i() * delta
}

/// Discrete `r P̃(σ) r⁻¹` on ψ̃ at the nodes of `grid`. The last row carries the radiation
/// condition.
pub fn twisted_matrix(op: &ReducedOperator, sigma: C, ell: usize, grid: &Grid) -> Banded {
    let n = grid.n;
    let st = Stencils::new(grid.dx);
    let l = (ell * (ell + 1)) as f64;
    let parity = if ell.is_multiple_of(2) { -1.0 } else { 1.0 };
    let mut a = Banded::new(n, 7, 3);
    for j in 1..n {
        let r = grid.r(j);
        let (rx, rxx) = (grid.r_x(j), grid.r_xx(j));
        let c = op.coeffs(r);
        let (al, bt, ga) = twisted_coeffs(&c, l, sigma, r);
        let k2 = al / (rx * rx);
        let k1 = bt / rx - al * rxx / (rx * rx * rx);
        for (node, w1, w2) in st.row(j, n, true) {
            let w = k2 * w2 + k1 * w1;
            if node > 0 {
                a.add(j - 1, node as usize - 1, w);
            } else if node < 0 {
                let m = (-node) as usize;
                let f = parity * (2.0 * C::i() * sigma * grid.r(m)).exp();
                a.add(j - 1, m - 1, w * f);
            }
        }
        a.add(j - 1, j - 1, ga);
    }
    let lam = radiation_condition(op, sigma, ell, grid.r(n));
    let rx = grid.r_x(n);
    for (node, w1, _) in st.row(n, n, true) {
        a.add(n - 1, node as usize - 1, C::new(w1 / rx, 0.0));
    }
    a.add(n - 1, n - 1, -lam);
    a
}

fn check_sigma(sigma: C) -> Result<()> {
    if sigma.im < 0.0 {
        return Err(Error::LowerHalfPlane(sigma.im));
    }
    Ok(())
}

fn check_data(g: &GridFunction, sigma: C, min_ppw: f64) -> Result<()> {
    if !g.is_finite() {
        return Err(Error::InvalidProfile("non-finite right-hand side".into()));
    }
    let rg = g.support_radius(1e-12);
    let rmax = g.grid.rmax();
    if rg > rmax / 2.0 {
        return Err(Error::StepSize(format!(
            "data extends to r = {rg:.3}, beyond half the outer radius {rmax:.3}"
        )));
    }
    if sigma.re != 0.0 {
        let ppw = 2.0 * PI / (sigma.re.abs() * g.grid.spacing(rg.max(1.0)));
        if ppw < min_ppw {
            return Err(Error::Resolution { ppw });
        }
    }
    Ok(())
}

fn solve_banded(a: Banded, rhs: &[C], sigma: C) -> Result<Vec<C>> {
    let lu = a.factor();
    if lu.min_pivot < 1e-14 {
        return Err(Error::ResonanceSuspected { re: sigma.re, im: sigma.im, pivot: lu.min_pivot });
    }
    Ok(lu.solve(rhs))
}

fn psi_rhs(f: &GridFunction) -> Vec<C> {
    let mut b: Vec<C> = f.values.iter().enumerate().map(|(i, v)| v * f.r(i)).collect();
    let n = b.len();
    b[n - 1] = ZERO;
    b
}

fn from_psi(grid: &Arc<Grid>, ell: usize, psi: Vec<C>) -> GridFunction {
    let values = psi.iter().enumerate().map(|(i, v)| v / grid.r(i + 1)).collect();
    GridFunction { grid: grid.clone(), values, ell }
}

/// `P̃(σ)⁻¹ f` on the grid of `f`.
pub fn twisted_solve(op: &ReducedOperator, sigma: C, ell: usize, f: &GridFunction) -> Result<GridFunction> {
    check_sigma(sigma)?;
    let a = twisted_matrix(op, sigma, ell, &f.grid);
    let psi = solve_banded(a, &psi_rhs(f), sigma)?;
    Ok(from_psi(&f.grid, ell, psi))
}

/// `P_σ⁻¹ g` for mode ℓ on the grid of `g`, regular at the origin and outgoing at infinity.
/// Sources should behave like `r^ℓ` times an even function near the origin.
pub fn resolve_mode(op: &ReducedOperator, sigma: C, ell: usize, g: &GridFunction) -> Result<GridFunction> {
    resolve_mode_with(op, sigma, ell, g, &SolverOptions::default())
}

pub fn resolve_mode_with(
    op: &ReducedOperator,
    sigma: C,
    ell: usize,
    g: &GridFunction,
    opts: &SolverOptions,
) -> Result<GridFunction> {
    check_sigma(sigma)?;
    check_data(g, sigma, opts.min_ppw)?;
    let v = twisted_solve(op, sigma, ell, &twist(g, sigma))?;
    Ok(untwist(&v, sigma))
}

/// Flat outgoing resolvent by quadrature of the exact kernel `iσ j_ℓ(σr_<) h_ℓ(σr_>)`
/// (static kernel `r_<^ℓ / ((2ℓ+1) r_>^(ℓ+1))` at σ = 0).
pub fn free_resolvent(sigma: C, ell: usize, g: &GridFunction) -> Result<GridFunction> {
    check_sigma(sigma)?;
    let grid = &g.grid;
    let n = grid.n;
    let gv = |j: usize| if j == 0 { ZERO } else { g.values[j - 1] };
    let jac = |j: usize| grid.r(j).powi(2) * grid.r_x(j);
    let (inner, outer): (Vec<C>, Vec<C>) = if sigma.norm() < 1e-14 {
        let tail = g.values[n - 1].norm() * grid.r(n).powi(3);
        let head = g.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if tail > 1e-10 * head {
            let q = g.values[n / 2].norm();
            let p = (g.values[n - 1].norm() / q).ln() / (grid.r(n) / grid.r(n / 2)).ln();
            if q == 0.0 || p >= ell as f64 - 2.0 {
                return Err(Error::DivergentIntegral(format!(
                    "source decays like r^{p:.2}, need faster than r^{}",
                    ell as f64 - 2.0
                )));
            }
        }
        let l = ell as i32;
        (
            (0..=n).map(|j| gv(j) * grid.r(j).powi(l) * jac(j)).collect(),
            (0..=n)
                .map(|j| if j == 0 { ZERO } else { gv(j) * grid.r(j).powi(-l - 1) * jac(j) })
                .collect(),
        )
    } else {
        (
            (0..=n).map(|j| gv(j) * bessel_j(ell, sigma * grid.r(j)) * jac(j)).collect(),
            (0..=n)
                .map(|j| if j == 0 { ZERO } else { gv(j) * hankel1(ell, sigma * grid.r(j)) * jac(j) })
                .collect(),
        )
    };
    let ci = cumulative(&inner, grid.dx);
    let co = cumulative(&outer, grid.dx);
    let total = co[n];
    let values = (1..=n)
        .map(|j| {
            let r = grid.r(j);
            if sigma.norm() < 1e-14 {
                let l = ell as i32;
                (ci[j] * r.powi(-l - 1) + (total - co[j]) * r.powi(l)) / (2 * ell + 1) as f64
            } else {
                let z = sigma * r;
                C::i() * sigma * (hankel1(ell, z) * ci[j] + bessel_j(ell, z) * (total - co[j]))
            }
        })
        .collect();
    Ok(GridFunction { grid: grid.clone(), values, ell })
}

/// Rows of `r R r⁻¹` with `R = σ⁻¹(P̃(0) − P̃(σ))` acting on ψ̃. One-sided stencils at both ends
/// when `ghosts` is false; otherwise the same stencils and ghost nodes as `twisted_matrix`
/// (with σ = 0 parity) except for the last row.
fn r_matrix(op: &ReducedOperator, sigma: C, ell: usize, grid: &Grid, ghosts: bool) -> Banded {
    let n = grid.n;
    let st = Stencils::new(grid.dx);
    let i = C::i();
    let parity = if ell.is_multiple_of(2) { -1.0 } else { 1.0 };
    let mut a = Banded::new(n, 7, 7);
    for j in 1..=n {
        let r = grid.r(j);
        let c = op.coeffs(r);
        let alpha = -1.0 + c.c2;
        let b0 = c.d2 - 2.0 * c.c2 / r;
        let k1 = -(2.0 * i * alpha - i * c.a1) / grid.r_x(j);
        let k0 = -(i * (b0 - c.b1 + c.a1 / r) + sigma * (c.a1 - c.c2));
        for (node, w1, _) in st.row(j, n, ghosts) {
            if node > 0 {
                a.add(j - 1, node as usize - 1, k1 * w1);
            } else if node < 0 {
                a.add(j - 1, (-node) as usize - 1, k1 * w1 * parity);
            }
        }
        a.add(j - 1, j - 1, k0);
    }
    a
}

/// `R v` for a twisted mode function v, from the coefficients of `op`.
pub fn apply_r(v: &GridFunction, sigma: C, op: &ReducedOperator) -> GridFunction {
    let a = r_matrix(op, sigma, v.ell, &v.grid, false);
    let psi: Vec<C> = v.values.iter().enumerate().map(|(i, x)| x * v.r(i)).collect();
    from_psi(&v.grid, v.ell, a.matvec(&psi))
}

/// `P̃(σ) v` for a twisted mode function v (last node carries the radiation-condition residual).
pub fn apply_twisted(v: &GridFunction, sigma: C, op: &ReducedOperator) -> GridFunction {
    let a = twisted_matrix(op, sigma, v.ell, &v.grid);
    let psi: Vec<C> = v.values.iter().enumerate().map(|(i, x)| x * v.r(i)).collect();
    from_psi(&v.grid, v.ell, a.matvec(&psi))
}

#[derive(Clone, Debug)]
pub struct NeumannExpansion {
    pub sigma: f64,
    pub order: usize,
    /// `u_n = P̃(0)⁻¹ f_n`, n = 0..=N.
    pub terms: Vec<GridFunction>,
    /// `f_0 = f`, `f_{n+1} = R u_n`; the last node holds the radiation-condition datum.
    pub forcing: Vec<GridFunction>,
    /// `P̃(σ)⁻¹ f_{N+1}`.
    pub remainder: GridFunction,
    /// `P̃(σ)⁻¹ f`.
    pub full: GridFunction,
    /// Relative reassembly residual on `r ≤ R/4`.
    pub residual: f64,
}

/// `P̃(σ)⁻¹f = Σ_{n≤N} σⁿ P̃(0)⁻¹ f_n + σ^(N+1) P̃(σ)⁻¹ f_{N+1}` with `f_{n+1} = R P̃(0)⁻¹ f_n`.
/// All operators act on one common grid, so the identity is exact up to rounding.
pub fn neumann_expand(
    op: &ReducedOperator,
    sigma: f64,
    f: &GridFunction,
    n_max: usize,
    ell: usize,
) -> Result<NeumannExpansion> {
    let limit = op.kappa.floor() as usize + 1;
    if n_max > limit {
        return Err(Error::ExpansionExhausted { n: n_max, max: limit });
    }
    if !(sigma.abs() < 1.0) || sigma == 0.0 {
        return Err(Error::StepSize(format!("Neumann expansion needs 0 < |σ| < 1, got {sigma}")));
    }
    check_data(f, C::new(sigma, 0.0), 0.0)?;
    let s = C::new(sigma, 0.0);
    let grid = f.grid.clone();
    let n = grid.n;
    let a0 = twisted_matrix(op, ZERO, ell, &grid);
    let asg = twisted_matrix(op, s, ell, &grid);
    let rh = a0.lin_comb(C::new(1.0 / sigma, 0.0), &asg, C::new(-1.0 / sigma, 0.0));
    let lu0 = a0.factor();
    let lus = asg.factor();
    for (lu, sg) in [(&lu0, ZERO), (&lus, s)] {
        if lu.min_pivot < 1e-14 {
            return Err(Error::ResonanceSuspected { re: sg.re, im: sg.im, pivot: lu.min_pivot });
        }
    }
    let f0 = psi_rhs(f);
    let full = lus.solve(&f0);
    let mut fk = f0.clone();
    let mut terms = Vec::new();
    let mut forcing = vec![fk.clone()];
    let mut acc = vec![ZERO; n];
    let mut pw = C::new(1.0, 0.0);
    for _ in 0..=n_max {
        let u = lu0.solve(&fk);
        for (a, x) in acc.iter_mut().zip(&u) {
            *a += pw * x;
        }
        fk = rh.matvec(&u);
        forcing.push(fk.clone());
        terms.push(u);
        pw *= s;
    }
    let rem = lus.solve(&fk);
    for (a, x) in acc.iter_mut().zip(&rem) {
        *a += pw * x;
    }
    let cut = grid.rmax() / 4.0;
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for j in 1..=n {
        if grid.r(j) <= cut {
            num = num.max((acc[j - 1] - full[j - 1]).norm() / grid.r(j));
            den = den.max(full[j - 1].norm() / grid.r(j));
        }
    }
    let to_gf = |v: Vec<C>| from_psi(&grid, ell, v);
    Ok(NeumannExpansion {
        sigma,
        order: n_max,
        terms: terms.into_iter().map(to_gf).collect(),
        forcing: forcing.into_iter().map(to_gf).collect(),
        remainder: to_gf(rem),
        full: to_gf(full),
        residual: num / den,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularFit {
    /// Polynomial degree J.
    pub degree: usize,
    /// `a_0..a_J`.
    pub poly: Vec<C>,
    pub amplitude: C,
    pub nu: f64,
    /// Relative residual of the ν-free fit.
    pub residual: f64,
    /// Relative residual of the pure polynomial fit of degree J.
    pub poly_residual: f64,
    /// Fit with ν pinned to the target exponent.
    pub pinned_nu: f64,
    pub pinned_amplitude: C,
    pub pinned_residual: f64,
    pub condition: f64,
}

impl SingularFit {
    pub fn residual_drop(&self) -> f64 {
        self.poly_residual / self.residual
    }
}

struct Lsq {
    coef: Vec<C>,
    residual: f64,
    condition: f64,
}

fn lsq(cols: &[Vec<C>], y: &[C]) -> Lsq {
    let m = y.len();
    let k = cols.len();
    let norms: Vec<f64> = cols.iter().map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()).collect();
    let a = DMatrix::from_fn(m, k, |i, j| cols[j][i] / norms[j]);
    let b = DVector::from_column_slice(y);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let x = svd.solve(&b, 1e-15 * smax).expect("svd factors requested");
    let res = (&a * &x - &b).norm() / b.norm();
    Lsq { coef: x.iter().zip(&norms).map(|(c, s)| c / *s).collect(), residual: res, condition: smax / smin }
}

/// Fit `a_0 + … + a_J σ^J + b σ^ν` to samples; ν is searched on `(0, J+2]` and also pinned
/// at `nu_target`.
pub fn fit_singular(sigmas: &[f64], values: &[C], j: usize, nu_target: f64) -> Result<SingularFit> {
    let poly_cols: Vec<Vec<C>> =
        (0..=j).map(|k| sigmas.iter().map(|s| C::new(s.powi(k as i32), 0.0)).collect()).collect();
    let with_nu = |nu: f64| {
        let mut cols = poly_cols.clone();
        cols.push(sigmas.iter().map(|s| C::new(s.powf(nu), 0.0)).collect());
        lsq(&cols, values)
    };
    let poly = lsq(&poly_cols, values);
    let admissible = |nu: f64| (0..=j).all(|k| (nu - k as f64).abs() > 0.03);
    let mut best = (f64::INFINITY, 0.0);
    let mut nu = 0.05;
    while nu <= j as f64 + 2.0 {
        if admissible(nu) {
            let r = with_nu(nu).residual;
            if r < best.0 {
                best = (r, nu);
            }
        }
        nu += 0.01;
    }
    // golden-section refinement around the best grid point
    let (mut lo, mut hi) = (best.1 - 0.01, best.1 + 0.01);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..40 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if with_nu(a).residual < with_nu(b).residual {
            hi = b;
        } else {
            lo = a;
        }
    }
    let nu = 0.5 * (lo + hi);
    let fit = with_nu(nu);
    if !fit.condition.is_finite() || fit.condition > 1e13 {
        return Err(Error::FitDegenerate(fit.condition));
    }
    let pinned = with_nu(nu_target);
    Ok(SingularFit {
        degree: j,
        poly: fit.coef[..=j].to_vec(),
        amplitude: fit.coef[j + 1],
        nu,
        residual: fit.residual,
        poly_residual: poly.residual,
        pinned_nu: nu_target,
        pinned_amplitude: pinned.coef[j + 1],
        pinned_residual: pinned.residual,
        condition: fit.condition,
    })
}

/// Geometric σ grid.
pub fn geometric(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64)).collect()
}

/// Samples `P_σ⁻¹ f (x₀)` over real σ in parallel.
pub fn sample_resolvent(
    op: &ReducedOperator,
    f: &(dyn Fn(f64) -> C + Sync),
    ell: usize,
    sigmas: &[f64],
    x0: f64,
    opts: &SolverOptions,
    exec: Exec,
) -> Result<Vec<C>> {
    exec.map(sigmas, |&s| {
        let sigma = C::new(s, 0.0);
        let g = GridFunction::from_fn(opts.grid(sigma), ell, f);
        Ok(resolve_mode_with(op, sigma, ell, &g, opts)?.interpolate(x0))
    })
    .into_iter()
    .collect()
}

/// Default low-frequency window: 40 geometric points on `[10⁻³, 0.02]`.
pub fn low_freq_window() -> Vec<f64> {
    geometric(1e-3, 0.02, 40)
}

/// Least-squares split of `σ ↦ P_σ⁻¹f(x₀)` into a polynomial plus `bσ^ν`.
///
/// The polynomial runs to degree `⌊κ⌋+2`: the analytic `σ^(⌊κ⌋+2)` term sits less than one
/// power above `σ^(1+κ)` and biases ν when left out.
pub fn low_freq_fit(
    op: &ReducedOperator,
    f: &(dyn Fn(f64) -> C + Sync),
    ell: usize,
    sigmas: &[f64],
    x0: f64,
    opts: &SolverOptions,
    exec: Exec,
) -> Result<SingularFit> {
    let vals = sample_resolvent(op, f, ell, sigmas, x0, opts, exec)?;
    let j = op.kappa.floor() as usize + 2;
    fit_singular(sigmas, &vals, j, 1.0 + op.kappa)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub sigma: f64,
    /// `sup_r ⟨r⟩^(1−p(1−ε)) |(σ∂_σ)^p (e^{−iσr} P_σ⁻¹ g)| / σ^(p−1)`.
    pub value: f64,
    /// Relative change of the derivative between the two finite-difference steps.
    pub fd_change: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConormalScan {
    pub p: usize,
    pub epsilon: f64,
    pub rows: Vec<ScanRow>,
    /// Least-squares growth factor per octave minus one.
    pub octave_growth: f64,
    /// Growth over the top octave of the grid.
    pub last_octave_growth: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    /// Step in log σ, capped at `h_sigma/σ` so the phase `σr` stays resolved.
    pub h: f64,
    pub h_sigma: f64,
    pub epsilon: f64,
    /// Supremum taken over `r ≤ r_obs`.
    pub r_obs: f64,
    pub max_growth: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions { h: 0.05, h_sigma: 0.2, epsilon: 1.0, r_obs: 40.0, max_growth: 0.2 }
    }
}

/// Bounded-ness scan of `(σ∂_σ)^p` of the twisted resolvent over `σ ≥ 1`.
#[allow(clippy::too_many_arguments)]
pub fn high_freq_conormal_scan(
    op: &ReducedOperator,
    g: &(dyn Fn(f64) -> C + Sync),
    ell: usize,
    p: usize,
    sigmas: &[f64],
    scan: &ScanOptions,
    opts: &SolverOptions,
    exec: Exec,
) -> Result<ConormalScan> {
    if p > 3 {
        return Err(Error::StepSize(format!("p = {p} exceeds the supported order 3")));
    }
    let offsets: Vec<f64> = (-2..=2).map(|k| k as f64).collect();
    let w = fd_weights(0.0, &offsets, p);
    let weights: Vec<f64> = w[p].clone();
    let order = if p == 3 { 2 } else { 4 };
    let rows: Vec<Result<ScanRow>> = exec.map(sigmas, |&s| {
        let h = scan.h.min(scan.h_sigma / s);
        let grid = opts.grid_spanning(s * (-2.0 * h).exp(), s * (2.0 * h).exp());
        let wv = |sig: f64| -> Result<Vec<C>> {
            let sigma = C::new(sig, 0.0);
            let gf = GridFunction::from_fn(grid.clone(), ell, g);
            Ok(twist(&resolve_mode_with(op, sigma, ell, &gf, opts)?, sigma).values)
        };
        let deriv = |step: f64| -> Result<Vec<C>> {
            if p == 0 {
                return wv(s);
            }
            let mut acc = vec![ZERO; grid.n];
            for (k, wk) in weights.iter().enumerate() {
                if *wk == 0.0 {
                    continue;
                }
                let v = wv(s * (offsets[k] * step).exp())?;
                for (a, x) in acc.iter_mut().zip(&v) {
                    *a += x * (*wk / step.powi(p as i32));
                }
            }
            Ok(acc)
        };
        let d1 = deriv(h)?;
        let (d, change) = if p == 0 {
            (d1, 0.0)
        } else {
            let d2 = deriv(h / 2.0)?;
            let q = 2f64.powi(order) - 1.0;
            let d: Vec<C> = d1.iter().zip(&d2).map(|(a, b)| b + (b - a) / q).collect();
            let diff = d1.iter().zip(&d2).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            let size = d.iter().map(|z| z.norm()).fold(0.0, f64::max);
            (d, diff / size)
        };
        if change > 0.1 {
            return Err(Error::StepSize(format!(
                "(σ∂σ)^{p} at σ = {s}: finite differences moved by {:.1}%; halve h = {h}",
                100.0 * change
            )));
        }
        let wexp = 1.0 - p as f64 * (1.0 - scan.epsilon);
        let mut sup = 0.0f64;
        for (i, z) in d.iter().enumerate() {
            let r = grid.r(i + 1);
            if r <= scan.r_obs {
                sup = sup.max((1.0 + r * r).powf(wexp / 2.0) * z.norm());
            }
        }
        Ok(ScanRow { sigma: s, value: sup / s.powi(p as i32 - 1), fd_change: change })
    });
    let rows: Vec<ScanRow> = rows.into_iter().collect::<Result<_>>()?;
    let xs: Vec<f64> = rows.iter().map(|r| r.sigma.log2()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.value.log2()).collect();
    let slope = crate::stats::slope(&xs, &ys);
    let growth = 2f64.powf(slope) - 1.0;
    let last = rows.last().expect("non-empty σ grid");
    let half = rows
        .iter()
        .min_by(|a, b| {
            let da = (a.sigma - last.sigma / 2.0).abs();
            let db = (b.sigma - last.sigma / 2.0).abs();
            da.total_cmp(&db)
        })
        .expect("non-empty σ grid");
    let last_octave = (last.value / half.value).powf(1.0 / (last.sigma / half.sigma).log2()) - 1.0;
    let pass = growth <= scan.max_growth && last_octave <= scan.max_growth;
    Ok(ConormalScan { p, epsilon: scan.epsilon, rows, octave_growth: growth, last_octave_growth: last_octave, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RadialProfile;

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

    fn rel_err(a: &GridFunction, b: &GridFunction) -> f64 {
        a.sub(b).weighted_sup(1.0, f64::INFINITY) / b.weighted_sup(1.0, f64::INFINITY)
    }

    #[test]
    fn static_free_kernel_on_indicator_shape() {
        // Smoothed indicator: compare the exterior value with total charge / (r).
        let grid = Arc::new(Grid::new(1.0, 0.005, 200.0));
        let g = GridFunction::from_fn(grid, 0, bump_source(0));
        let v = free_resolvent(ZERO, 0, &g).unwrap();
        let q: f64 = {
            let f: Vec<f64> = (0..=g.grid.n)
                .map(|j| if j == 0 { 0.0 } else { g.values[j - 1].re * g.grid.r(j).powi(2) * g.grid.r_x(j) })
                .collect();
            *cumulative(&f, g.grid.dx).last().unwrap()
        };
        let r = 10.0;
        assert!((v.interpolate(r).re - q / r).abs() < 1e-10);
    }

    #[test]
    fn matches_free_resolvent() {
        let opts = SolverOptions::default();
        let flat = ReducedOperator::flat();
        for (ell, s) in [(0, 0.0), (1, 0.3), (2, 1.0), (0, 3.0)] {
            let sigma = C::new(s, 0.0);
            let g = GridFunction::from_fn(opts.grid(sigma), ell, bump_source(ell));
            let v = resolve_mode(&flat, sigma, ell, &g).unwrap();
            let w = free_resolvent(sigma, ell, &g).unwrap();
            assert!(rel_err(&v, &w) < 1e-6, "ℓ={ell} σ={s}: {}", rel_err(&v, &w));
        }
    }

    #[test]
    fn yukawa_is_real_and_decays() {
        let sigma = C::new(0.0, 1.0);
        let opts = SolverOptions::default();
        let g = GridFunction::from_fn(opts.grid(sigma), 0, bump_source(0));
        let v = resolve_mode(&ReducedOperator::flat(), sigma, 0, &g).unwrap();
        let im = v.values.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        let re = v.values.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
        assert!(im < 1e-10 * re);
        let a = v.interpolate(10.0).re * 10.0;
        let b = v.interpolate(11.0).re * 11.0;
        assert!((b / a - (-1.0f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn r_on_powers_of_rho() {
        let grid = Arc::new(Grid::new(1.0, 0.005, 100.0));
        let flat = ReducedOperator::flat();
        let s = C::new(0.4, 0.0);
        let rho = GridFunction::from_real(grid.clone(), 0, |r| 1.0 / r);
        let r1 = apply_r(&rho, s, &flat);
        assert!(r1.values.iter().enumerate().all(|(i, z)| r1.r(i) < 0.5 || z.norm() < 1e-9));
        let rho2 = GridFunction::from_real(grid, 0, |r| 1.0 / (r * r));
        let r2 = apply_r(&rho2, s, &flat);
        for (i, z) in r2.values.iter().enumerate() {
            let r = r2.r(i);
            if r >= 0.5 {
                assert!((z - C::new(0.0, -2.0 / r.powi(3))).norm() < 1e-8 / r.powi(3), "r = {r}");
            }
        }
    }

    #[test]
    fn twisted_split_identity() {
        let mut op = ReducedOperator::potential(2.5, 0.7).unwrap();
        if let crate::model::OperatorSource::Direct(c) = &mut op.source {
            c.a1 = RadialProfile::power_law(0.2, 2.5);
            c.c2 = RadialProfile::power_law(0.1, 2.5);
        }
        let grid = Arc::new(Grid::new(1.0, 0.01, 50.0));
        let v = GridFunction::from_real(grid, 0, |r| r * (-r * r / 9.0).exp());
        let s = C::new(0.3, 0.0);
        let lhs = apply_twisted(&v, ZERO, &op).sub(&apply_r(&v, s, &op).scale(s));
        let rhs = apply_twisted(&v, s, &op);
        let n = v.values.len();
        let scale = rhs.values.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for i in 3..n - 3 {
            assert!((lhs.values[i] - rhs.values[i]).norm() < 1e-10 * scale);
        }
    }

    #[test]
    fn singular_fit_on_synthetic_data() {
        let s = geometric(1e-3, 0.5, 60);
        let v: Vec<C> = s
            .iter()
            .map(|x| C::new(1.0 + 0.3 * x - 0.2 * x * x, 0.1 * x) + C::new(0.5, -0.4) * x.powf(2.5))
            .collect();
        let fit = fit_singular(&s, &v, 2, 2.5).unwrap();
        assert!((fit.nu - 2.5).abs() < 1e-3, "{}", fit.nu);
        assert!(fit.residual_drop() > 10.0);
    }
}
