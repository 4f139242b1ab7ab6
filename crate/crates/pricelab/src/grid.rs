//! Graded radial grids and complex samples on them.
//!
//! Nodes sit at `r_j = s·sinh(j·dx)`: uniform spacing `s·dx` near the origin and
//! logarithmic spacing `r·dx` toward large r. Stencils work in the uniform x variable.

use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub scale: f64,
    pub dx: f64,
    /// Index of the outermost node; nodes are `j = 1..=n`, `j = 0` is the origin.
    pub n: usize,
}

impl Grid {
    pub fn new(scale: f64, dx: f64, rmax: f64) -> Self {
        let n = ((rmax / scale).asinh() / dx).ceil() as usize;
        Grid { scale, dx, n: n.max(8) }
    }

    pub fn x(&self, j: usize) -> f64 {
        j as f64 * self.dx
    }

    pub fn r(&self, j: usize) -> f64 {
        self.scale * (j as f64 * self.dx).sinh()
    }

    pub fn r_x(&self, j: usize) -> f64 {
        self.scale * (j as f64 * self.dx).cosh()
    }

    pub fn r_xx(&self, j: usize) -> f64 {
        self.r(j)
    }

    pub fn rmax(&self) -> f64 {
        self.r(self.n)
    }

    /// Continuous index of radius `r`.
    pub fn x_of(&self, r: f64) -> f64 {
        (r / self.scale).asinh()
    }

    /// Radii of the nodes `1..=n`.
    pub fn nodes(&self) -> Vec<f64> {
        (1..=self.n).map(|j| self.r(j)).collect()
    }

    /// Local spacing `dr` at radius r.
    pub fn spacing(&self, r: f64) -> f64 {
        self.scale * self.x_of(r).cosh() * self.dx
    }
}

/// Complex samples at the nodes `1..=n` of a grid, tagged with the angular mode.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    pub grid: Arc<Grid>,
    pub values: Vec<C>,
    pub ell: usize,
}

impl GridFunction {
    pub fn from_fn(grid: Arc<Grid>, ell: usize, f: impl Fn(f64) -> C) -> Self {
        let values = (1..=grid.n).map(|j| f(grid.r(j))).collect();
        GridFunction { grid, values, ell }
    }

    pub fn from_real(grid: Arc<Grid>, ell: usize, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, ell, |r| C::new(f(r), 0.0))
    }

    pub fn zeros(grid: Arc<Grid>, ell: usize) -> Self {
        let values = vec![C::new(0.0, 0.0); grid.n];
        GridFunction { grid, values, ell }
    }

    pub fn nodes(&self) -> Vec<f64> {
        self.grid.nodes()
    }

    pub fn r(&self, i: usize) -> f64 {
        self.grid.r(i + 1)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64, C) -> C) -> Self {
        let values = self.values.iter().enumerate().map(|(i, v)| f(self.r(i), *v)).collect();
        GridFunction { grid: self.grid.clone(), values, ell: self.ell }
    }

    pub fn scale(&self, s: C) -> Self {
        self.map(|_, v| v * s)
    }

    pub fn add(&self, o: &GridFunction) -> Self {
        assert_eq!(self.values.len(), o.values.len());
        let values = self.values.iter().zip(&o.values).map(|(a, b)| a + b).collect();
        GridFunction { grid: self.grid.clone(), values, ell: self.ell }
    }

    pub fn sub(&self, o: &GridFunction) -> Self {
        self.add(&o.scale(C::new(-1.0, 0.0)))
    }

    pub fn conj(&self) -> Self {
        self.map(|_, v| v.conj())
    }

    /// `sup ⟨r⟩^w |v|` over nodes with `r ≤ rmax`.
    pub fn weighted_sup(&self, w: f64, rmax: f64) -> f64 {
        self.values
            .iter()
            .enumerate()
            .filter(|(i, _)| self.r(*i) <= rmax)
            .map(|(i, v)| (1.0 + self.r(i).powi(2)).powf(w / 2.0) * v.norm())
            .fold(0.0, f64::max)
    }

    /// Largest radius where `|v|` exceeds `tol·max|v|`.
    pub fn support_radius(&self, tol: f64) -> f64 {
        let m = self.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.norm() > tol * m)
            .map(|(i, _)| self.r(i))
            .fold(0.0, f64::max)
    }

    /// Six-point Lagrange interpolation in x.
    pub fn interpolate(&self, r: f64) -> C {
        let g = &self.grid;
        let xq = g.x_of(r) / g.dx;
        let n = g.n;
        let m = (xq.floor() as isize - 2).clamp(1, n as isize - 5) as usize;
        let xs: Vec<f64> = (m..m + 6).map(|j| j as f64).collect();
        let w = fd_weights(xq, &xs, 0);
        (0..6).map(|k| self.values[m + k - 1] * w[0][k]).sum()
    }
}

impl GridFunction {
    /// `(ψ, ψ_r, ψ_rr)` for `ψ = r·u`: central seven-point stencils in x, odd/even ghost
    /// values `ψ(−r) = (−1)^(ℓ+1) ψ(r)` at the origin, one-sided eight-point stencils at
    /// the outer end.
    pub fn psi_derivatives(&self) -> (Vec<C>, Vec<C>, Vec<C>) {
        let g = &self.grid;
        let n = g.n;
        let psi: Vec<C> = (0..n).map(|i| self.values[i] * self.r(i)).collect();
        let parity = if self.ell.is_multiple_of(2) { -1.0 } else { 1.0 };
        // node j ∈ [−3, n]; node 0 is the origin
        let at = |j: isize| -> C {
            if j == 0 {
                C::new(0.0, 0.0)
            } else if j < 0 {
                psi[(-j) as usize - 1] * parity
            } else {
                psi[j as usize - 1]
            }
        };
        let xs: Vec<f64> = (-3..=3).map(|k| k as f64).collect();
        let central = fd_weights(0.0, &xs, 2);
        let xr: Vec<f64> = (-7..=0).map(|k| k as f64).collect();
        let h = g.dx;
        let mut d1 = vec![C::new(0.0, 0.0); n];
        let mut d2 = vec![C::new(0.0, 0.0); n];
        for j in 1..=n {
            let (w, offs): (Vec<Vec<f64>>, Vec<isize>) = if j + 3 <= n {
                (central.clone(), (-3..=3).collect())
            } else {
                let z = -((n - j) as f64);
                (fd_weights(z, &xr, 2), (-7..=0).map(|k| k + (n - j) as isize).collect())
            };
            let mut a = C::new(0.0, 0.0);
            let mut b = C::new(0.0, 0.0);
            for (k, o) in offs.iter().enumerate() {
                let v = at(j as isize + o);
                a += v * w[1][k];
                b += v * w[2][k];
            }
            let (px, pxx) = (a / h, b / (h * h));
            let rx = g.r_x(j);
            d1[j - 1] = px / rx;
            d2[j - 1] = (pxx - g.r_xx(j) * px / rx) / (rx * rx);
        }
        (psi, d1, d2)
    }
}

/// Fornberg's finite-difference weights: `w[d][k]` approximates the d-th derivative at
/// `z` from values at `x[k]`, for `d ≤ m`.
pub fn fd_weights(z: f64, x: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] *= c4 / c3;
        }
        c1 = c2;
    }
    c
}

/// Weights for `∫_{x_o}^{x_{o+1}}` of the degree-5 interpolant through unit-spaced
/// nodes `0..6`.
fn cell_weights(o: usize) -> [f64; 6] {
    // 4-point Gauss–Legendre is exact for degree 7.
    const GL: [(f64, f64); 4] = [
        (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
        (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
        (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
        (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    ];
    let xs = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
    let mut w = [0.0; 6];
    for (t, gw) in GL {
        let z = o as f64 + 0.5 + 0.5 * t;
        let l = fd_weights(z, &xs, 0);
        for k in 0..6 {
            w[k] += 0.5 * gw * l[0][k];
        }
    }
    w
}

/// Cumulative integral `F_j = ∫_{x_0}^{x_j} f dx` of samples on a uniform grid with
/// spacing `h`, sixth-order accurate for smooth f. Needs at least six samples.
pub fn cumulative<T>(f: &[T], h: f64) -> Vec<T>
where
    T: Copy + Default + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let n = f.len();
    assert!(n >= 6, "cumulative quadrature needs six samples");
    let weights: Vec<[f64; 6]> = (0..5).map(cell_weights).collect();
    let mut out = vec![T::default(); n];
    for j in 0..n - 1 {
        let m = j.saturating_sub(2).min(n - 6);
        let w = &weights[j - m];
        let mut cell = T::default();
        for k in 0..6 {
            cell = cell + f[m + k] * (w[k] * h);
        }
        out[j + 1] = out[j] + cell;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fornberg_central_second_derivative() {
        let xs: Vec<f64> = (-3..=3).map(|k| k as f64).collect();
        let w = fd_weights(0.0, &xs, 2);
        let expect = [1.0 / 90.0, -3.0 / 20.0, 1.5, -49.0 / 18.0, 1.5, -3.0 / 20.0, 1.0 / 90.0];
        for (a, b) in w[2].iter().zip(expect) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn cumulative_integrates_exponential() {
        let h = 0.01;
        let f: Vec<f64> = (0..=300).map(|j| (j as f64 * h).exp()).collect();
        let c = cumulative(&f, h);
        for (j, v) in c.iter().enumerate() {
            let x = j as f64 * h;
            assert!((v - (x.exp() - 1.0)).abs() < 1e-12 * x.exp(), "{j}");
        }
    }

    #[test]
    fn psi_derivatives_of_gaussian_modes() {
        let g = Arc::new(Grid::new(1.0, 0.01, 30.0));
        for ell in [0usize, 1] {
            let p = ell as i32;
            let u = GridFunction::from_real(g.clone(), ell, |r| r.powi(p) * (-r * r).exp());
            let (_, d1, d2) = u.psi_derivatives();
            for i in [0usize, 3, 50, 200] {
                let r = u.r(i);
                // ψ = r^(ℓ+1) e^{−r²}
                let q = r.powi(p + 1) * (-r * r).exp();
                let e1 = q * ((p + 1) as f64 / r - 2.0 * r);
                let e2 = q * (((p + 1) as f64 / r - 2.0 * r).powi(2) - (p + 1) as f64 / (r * r) - 2.0);
                assert!((d1[i].re - e1).abs() < 1e-9, "ℓ={ell} r={r}");
                assert!((d2[i].re - e2).abs() < 1e-7, "ℓ={ell} r={r}: {} vs {e2}", d2[i].re);
            }
        }
    }

    #[test]
    fn interpolation_is_sixth_order() {
        let g = Arc::new(Grid::new(1.0, 0.01, 50.0));
        let u = GridFunction::from_real(g, 0, |r| (-r * r / 4.0).exp() * r);
        for r in [0.137f64, 1.31, 4.77] {
            let exact = (-r * r / 4.0).exp() * r;
            assert!((u.interpolate(r).re - exact).abs() < 1e-11, "{r}");
        }
    }
}
