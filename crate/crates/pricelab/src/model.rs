//! Symbol-class radial profiles, spherically symmetric model metrics, the stationary
//! operator `P = ∂t² − Δ + ∂t P¹ + P²` and its reduction to one angular mode.

use crate::error::{Error, Result};
use crate::jet::Jet;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileKind {
    Zero,
    /// `amp · (1 + r²)^(−mu/2)`
    PowerLaw { amp: f64, mu: f64 },
    /// `amp · exp(−r²/width²)`
    Gaussian { amp: f64, width: f64 },
    /// `amp · exp(1 − 1/(1 − z²))`, `z = (r − center)/width`, zero for `|z| ≥ 1`.
    CompactBump { amp: f64, center: f64, width: f64 },
    Sum { terms: Vec<RadialProfile> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    /// Declared decay order μ: `|∂^k a| ≲ ⟨r⟩^(−μ−k)`.
    pub order: f64,
    #[serde(flatten)]
    pub kind: ProfileKind,
}

impl RadialProfile {
    pub fn zero() -> Self {
        RadialProfile { order: f64::INFINITY, kind: ProfileKind::Zero }
    }

    pub fn power_law(amp: f64, mu: f64) -> Self {
        RadialProfile { order: mu, kind: ProfileKind::PowerLaw { amp, mu } }
    }

    pub fn gaussian(amp: f64, width: f64) -> Self {
        RadialProfile { order: f64::INFINITY, kind: ProfileKind::Gaussian { amp, width } }
    }

    /// Compactly supported bump. Centers off the origin must clear it (`center ≥ width`),
    /// so the profile is a function of r² near r = 0.
    pub fn bump(amp: f64, center: f64, width: f64) -> Result<Self> {
        if !(width > 0.0) || (center != 0.0 && center < width) {
            return Err(Error::InvalidProfile(format!(
                "bump center {center} must be 0 or at least the width {width}"
            )));
        }
        Ok(RadialProfile { order: f64::INFINITY, kind: ProfileKind::CompactBump { amp, center, width } })
    }

    pub fn sum(terms: Vec<RadialProfile>) -> Self {
        let order = terms.iter().map(|t| t.order).fold(f64::INFINITY, f64::min);
        RadialProfile { order, kind: ProfileKind::Sum { terms } }
    }

    pub fn with_order(mut self, mu: f64) -> Self {
        self.order = mu;
        self
    }

    pub fn is_zero(&self) -> bool {
        match &self.kind {
            ProfileKind::Zero => true,
            ProfileKind::PowerLaw { amp, .. }
            | ProfileKind::Gaussian { amp, .. }
            | ProfileKind::CompactBump { amp, .. } => *amp == 0.0,
            ProfileKind::Sum { terms } => terms.iter().all(|t| t.is_zero()),
        }
    }

    pub fn jet(&self, r: f64) -> Jet {
        let x = Jet::var(r);
        match &self.kind {
            ProfileKind::Zero => Jet::constant(0.0),
            ProfileKind::PowerLaw { amp, mu } => (x * x + 1.0).powf(-mu / 2.0) * *amp,
            ProfileKind::Gaussian { amp, width } => (x * x * (-1.0 / (width * width))).exp() * *amp,
            ProfileKind::CompactBump { amp, center, width } => {
                let z = (r - center) / width;
                if z.abs() >= 1.0 {
                    return Jet::constant(0.0);
                }
                let zj = (x + (-center)) * (1.0 / width);
                let d = (zj * zj * -1.0 + 1.0).recip() * -1.0 + 1.0;
                d.exp() * *amp
            }
            ProfileKind::Sum { terms } => {
                terms.iter().fold(Jet::constant(0.0), |acc, t| acc + t.jet(r))
            }
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        match &self.kind {
            ProfileKind::Zero => 0.0,
            ProfileKind::PowerLaw { amp, mu } => amp * (1.0 + r * r).powf(-mu / 2.0),
            ProfileKind::Gaussian { amp, width } => amp * (-r * r / (width * width)).exp(),
            ProfileKind::CompactBump { amp, center, width } => {
                let z = (r - center) / width;
                if z.abs() >= 1.0 {
                    0.0
                } else {
                    amp * (1.0 - 1.0 / (1.0 - z * z)).exp()
                }
            }
            ProfileKind::Sum { terms } => terms.iter().map(|t| t.value(r)).sum(),
        }
    }
}

/// Anything with analytic radial derivatives.
pub trait Symbol {
    fn symbol_jet(&self, r: f64) -> Jet;
}

impl Symbol for RadialProfile {
    fn symbol_jet(&self, r: f64) -> Jet {
        self.jet(r)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymbolReport {
    /// `max ⟨r⟩^(μ+k) |∂^k a|` over the whole grid, per k.
    pub max_ratio: Vec<f64>,
    /// Location of the maximum, per k.
    pub argmax: Vec<f64>,
    /// Relative growth of the maximum between `[0, R/2]` and `[0, R]`.
    pub growth: Vec<f64>,
    pub pass: bool,
}

pub fn symbol_order_check<S: Symbol + ?Sized>(
    profile: &S,
    mu: f64,
    kmax: usize,
    grid: &[f64],
) -> Result<SymbolReport> {
    let kmax = kmax.min(4);
    let rmax = grid.iter().cloned().fold(0.0, f64::max);
    let mut full = vec![0.0f64; kmax + 1];
    let mut half = vec![0.0f64; kmax + 1];
    let mut argmax = vec![0.0; kmax + 1];
    for &r in grid {
        let j = profile.symbol_jet(r);
        if !j.is_finite() {
            return Err(Error::InvalidProfile(format!("non-finite value at r = {r}")));
        }
        let w = (1.0 + r * r).sqrt();
        for k in 0..=kmax {
            let v = w.powf(mu + k as f64) * j.deriv(k).abs();
            if v > full[k] * (1.0 + 1e-12) {
                full[k] = v;
                argmax[k] = r;
            }
            if r <= rmax / 2.0 && v > half[k] {
                half[k] = v;
            }
        }
    }
    let growth: Vec<f64> = full
        .iter()
        .zip(&half)
        .map(|(f, h)| if *f == 0.0 { 0.0 } else if *h == 0.0 { f64::INFINITY } else { f / h - 1.0 })
        .collect();
    let pass = growth.iter().all(|g| *g < 0.05) && full.iter().all(|v| v.is_finite());
    Ok(SymbolReport { max_ratio: full, argmax, growth, pass })
}

/// Geometric test grid on `[0, rmax]` with 32 points per decade beyond r = 1e-3.
pub fn symbol_grid(rmax: f64) -> Vec<f64> {
    let mut g = vec![0.0];
    let n = (32.0 * (rmax / 1e-3).log10()).ceil() as usize;
    for i in 0..=n {
        g.push(1e-3 * (rmax / 1e-3).powf(i as f64 / n as f64));
    }
    g
}

pub fn check_kappa(kappa: f64) -> Result<()> {
    if !(kappa > 1.0) || !kappa.is_finite() || kappa.fract() == 0.0 {
        return Err(Error::ExcludedKappa(kappa));
    }
    Ok(())
}

/// `g = −(1 − h00) dt² + 2 h0r dt dr + (1 + hrr) dr² + r²(1 + hww) dΩ²`, with the equation
/// `(□_g + V) u = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphericalMetric {
    pub kappa: f64,
    pub h00: RadialProfile,
    pub h0r: RadialProfile,
    pub hrr: RadialProfile,
    pub hww: RadialProfile,
    pub v: RadialProfile,
}

impl SphericalMetric {
    pub fn flat(kappa: f64) -> Self {
        SphericalMetric {
            kappa,
            h00: RadialProfile::zero(),
            h0r: RadialProfile::zero(),
            hrr: RadialProfile::zero(),
            hww: RadialProfile::zero(),
            v: RadialProfile::zero(),
        }
    }

    pub fn validate(&self, grid: &[f64]) -> Result<()> {
        check_kappa(self.kappa)?;
        for &r in grid {
            let grr = 1.0 + self.hrr.value(r);
            let gww = 1.0 + self.hww.value(r);
            if !(grr > 0.0 && gww > 0.0) {
                return Err(Error::InvalidProfile(format!("spatial metric not positive at r = {r}")));
            }
            let gtt = -1.0 + self.h00.value(r);
            let gtr = self.h0r.value(r);
            let det = gtt * grr - gtr * gtr;
            // g^00 = grr/det
            if !(det < -1e-8) {
                return Err(Error::DegenerateMetric(r));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub a1: RadialProfile,
    pub b1: RadialProfile,
    pub c2: RadialProfile,
    pub d2: RadialProfile,
    pub e2: RadialProfile,
    pub f2: RadialProfile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum OperatorSource {
    Direct(Coefficients),
    Metric(SphericalMetric),
}

/// `P = ∂t² − Δ + ∂t(a₁∂_r + b₁) + c₂∂_r² + d₂∂_r + e₂ + f₂ r⁻² Δ_θ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedOperator {
    pub kappa: f64,
    pub source: OperatorSource,
}

pub const COEFF_NAMES: [&str; 6] = ["a1", "b1", "c2", "d2", "e2", "f2"];

/// Coefficient values at one radius.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CoeffValues {
    pub a1: f64,
    pub b1: f64,
    pub c2: f64,
    pub d2: f64,
    pub e2: f64,
    pub f2: f64,
}

impl ReducedOperator {
    pub fn flat() -> Self {
        ReducedOperator {
            kappa: 2.5,
            source: OperatorSource::Direct(Coefficients {
                a1: RadialProfile::zero(),
                b1: RadialProfile::zero(),
                c2: RadialProfile::zero(),
                d2: RadialProfile::zero(),
                e2: RadialProfile::zero(),
                f2: RadialProfile::zero(),
            }),
        }
    }

    pub fn direct(kappa: f64, c: Coefficients) -> Result<Self> {
        check_kappa(kappa)?;
        Ok(ReducedOperator { kappa, source: OperatorSource::Direct(c) })
    }

    /// Potential-only model `P = ∂t² − Δ + amp·⟨r⟩^(−κ−2)`.
    pub fn potential(kappa: f64, amp: f64) -> Result<Self> {
        let mut c = match ReducedOperator::flat().source {
            OperatorSource::Direct(c) => c,
            _ => unreachable!(),
        };
        c.e2 = RadialProfile::power_law(amp, kappa + 2.0);
        Self::direct(kappa, c)
    }

    pub fn is_flat(&self) -> bool {
        match &self.source {
            OperatorSource::Direct(c) => {
                [&c.a1, &c.b1, &c.c2, &c.d2, &c.e2, &c.f2].iter().all(|p| p.is_zero())
            }
            OperatorSource::Metric(m) => {
                [&m.h00, &m.h0r, &m.hrr, &m.hww, &m.v].iter().all(|p| p.is_zero())
            }
        }
    }

    pub fn has_first_order_time(&self) -> bool {
        match &self.source {
            OperatorSource::Direct(c) => !(c.a1.is_zero() && c.b1.is_zero()),
            OperatorSource::Metric(m) => !m.h0r.is_zero(),
        }
    }

    /// Declared orders of `[a1, b1, c2, d2, e2, f2]`.
    pub fn declared_orders(&self) -> [f64; 6] {
        let k = self.kappa;
        [k, k + 1.0, k, k + 1.0, k + 2.0, k]
    }

    /// Jets of `[a1, b1, c2, d2, e2, f2]` at `r`.
    pub fn coeff_jets(&self, r: f64) -> [Jet; 6] {
        match &self.source {
            OperatorSource::Direct(c) => [
                c.a1.jet(r),
                c.b1.jet(r),
                c.c2.jet(r),
                c.d2.jet(r),
                c.e2.jet(r),
                c.f2.jet(r),
            ],
            OperatorSource::Metric(m) => metric_coeffs(m, r),
        }
    }

    pub fn coeffs(&self, r: f64) -> CoeffValues {
        if self.is_flat() {
            return CoeffValues::default();
        }
        if let OperatorSource::Direct(c) = &self.source {
            return CoeffValues {
                a1: c.a1.value(r),
                b1: c.b1.value(r),
                c2: c.c2.value(r),
                d2: c.d2.value(r),
                e2: c.e2.value(r),
                f2: c.f2.value(r),
            };
        }
        let j = self.coeff_jets(r);
        CoeffValues {
            a1: j[0].value(),
            b1: j[1].value(),
            c2: j[2].value(),
            d2: j[3].value(),
            e2: j[4].value(),
            f2: j[5].value(),
        }
    }

    /// Symbol checks of every coefficient at its declared order, on `[1, rmax]`.
    /// Polar coefficients such as `2c₂/r` are singular at the origin even for smooth
    /// metrics, so the scan starts at r = 1.
    pub fn check_orders(&self, rmax: f64) -> Result<Vec<(String, SymbolReport)>> {
        let grid: Vec<f64> = symbol_grid(rmax).into_iter().filter(|r| *r >= 1.0).collect();
        let orders = self.declared_orders();
        let mut out = Vec::new();
        for (i, name) in COEFF_NAMES.iter().enumerate() {
            let view = CoefficientView { op: self, index: i };
            let rep = symbol_order_check(&view, orders[i], 4, &grid)?;
            out.push((name.to_string(), rep));
        }
        Ok(out)
    }
}

pub struct CoefficientView<'a> {
    pub op: &'a ReducedOperator,
    pub index: usize,
}

impl Symbol for CoefficientView<'_> {
    fn symbol_jet(&self, r: f64) -> Jet {
        self.op.coeff_jets(r)[self.index]
    }
}

fn metric_coeffs(m: &SphericalMetric, r: f64) -> [Jet; 6] {
    let x = Jet::var(r);
    let gtt = m.h00.jet(r) + -1.0;
    let gtr = m.h0r.jet(r);
    let grr = m.hrr.jet(r) + 1.0;
    let gww = m.hww.jet(r) + 1.0;
    let det = gtt * grr - gtr * gtr;
    let up_tt = grr / det;
    let up_tr = -gtr / det;
    let up_rr = gtt / det;
    // √|g| = s r², so (√|g| q)'/√|g| = q' + q (s'/s + 2/r)
    let s = (-det).sqrt() * gww;
    let ls = s.differentiate() / s;
    let two_r = x.recip() * 2.0;
    let a1 = up_tr * 2.0 / up_tt;
    let b1 = (up_tr.differentiate() + up_tr * (ls + two_r)) / up_tt;
    let c2 = up_rr / up_tt + 1.0;
    let d2 = (up_rr.differentiate() + up_rr * ls) / up_tt + c2 * two_r;
    let e2 = m.v.jet(r) / up_tt;
    let f2 = (gww * up_tt).recip() + 1.0;
    [a1, b1, c2, d2, e2, f2]
}

/// Expand the d'Alembertian of `metric`, divide by g^00 and collect into P¹/P².
pub fn build_operator(metric: &SphericalMetric) -> Result<ReducedOperator> {
    let grid = symbol_grid(2e3);
    metric.validate(&grid)?;
    let op = ReducedOperator { kappa: metric.kappa, source: OperatorSource::Metric(metric.clone()) };
    for (name, rep) in op.check_orders(2e3)? {
        if !rep.pass {
            let i = COEFF_NAMES.iter().position(|n| *n == name).unwrap();
            let growth = rep.growth.iter().cloned().fold(0.0, f64::max);
            return Err(Error::OrderViolation { name, order: op.declared_orders()[i], growth });
        }
    }
    Ok(op)
}

/// `P_σ` restricted to angular mode ℓ: `α ∂_r² + β ∂_r + γ` acting on `u(r)`.
#[derive(Clone, Debug)]
pub struct RadialModeOperator<'a> {
    pub op: &'a ReducedOperator,
    pub ell: usize,
    pub sigma: Complex64,
}

/// ODE coefficients at one radius.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeCoeffs {
    pub alpha: Complex64,
    pub beta: Complex64,
    pub gamma: Complex64,
}

pub fn mode_reduce(op: &ReducedOperator, ell: usize, sigma: Complex64) -> Result<RadialModeOperator<'_>> {
    if sigma.im < 0.0 {
        return Err(Error::LowerHalfPlane(sigma.im));
    }
    Ok(RadialModeOperator { op, ell, sigma })
}

impl RadialModeOperator<'_> {
    fn l(&self) -> f64 {
        (self.ell * (self.ell + 1)) as f64
    }

    pub fn coeffs(&self, r: f64) -> ModeCoeffs {
        let c = self.op.coeffs(r);
        let s = self.sigma;
        let i = Complex64::i();
        ModeCoeffs {
            alpha: Complex64::new(-1.0 + c.c2, 0.0),
            beta: Complex64::new(-2.0 / r + c.d2, 0.0) - i * s * c.a1,
            gamma: Complex64::new(self.l() * (1.0 - c.f2) / (r * r) + c.e2, 0.0) - i * s * c.b1 - s * s,
        }
    }

    /// Coefficients of `r P_σ (ψ/r)` acting on `ψ = r u`.
    pub fn psi_coeffs(&self, r: f64) -> ModeCoeffs {
        psi_coeffs(&self.op.coeffs(r), self.l(), self.sigma, r)
    }

    pub fn apply_at(&self, r: f64, u: Complex64, du: Complex64, d2u: Complex64) -> Complex64 {
        let m = self.coeffs(r);
        m.alpha * d2u + m.beta * du + m.gamma * u
    }
}

pub(crate) fn psi_coeffs(c: &CoeffValues, l: f64, s: Complex64, r: f64) -> ModeCoeffs {
    let i = Complex64::i();
    let alpha = Complex64::new(-1.0 + c.c2, 0.0);
    let beta = Complex64::new(c.d2 - 2.0 * c.c2 / r, 0.0) - i * s * c.a1;
    let g0 = l * (1.0 - c.f2) / (r * r) + c.e2 - c.d2 / r + 2.0 * c.c2 / (r * r);
    let gamma = Complex64::new(g0, 0.0) - i * s * (c.b1 - c.a1 / r) - s * s;
    ModeCoeffs { alpha, beta, gamma }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn symbol_check_power_law_examples() {
        let grid = symbol_grid(1e3);
        let a = RadialProfile::power_law(1.0, 1.5);
        let rep = symbol_order_check(&a, 1.5, 0, &grid).unwrap();
        assert!((rep.max_ratio[0] - 1.0).abs() < 1e-12);
        assert_eq!(rep.argmax[0], 0.0);
        assert!(rep.pass);
        let bad = symbol_order_check(&a, 2.5, 0, &grid).unwrap();
        assert!(!bad.pass);
        let g = RadialProfile::gaussian(1.0, 1.0);
        for mu in [0.0, 1.0, 2.5, 4.0] {
            assert!(symbol_order_check(&g, mu, 4, &grid).unwrap().pass);
        }
    }

    #[test]
    fn symbol_check_rejects_nan() {
        let a = RadialProfile::power_law(f64::NAN, 1.0);
        assert!(matches!(
            symbol_order_check(&a, 1.0, 2, &symbol_grid(1e3)),
            Err(Error::InvalidProfile(_))
        ));
    }

    #[test]
    fn flat_metric_gives_zero_perturbation() {
        let op = build_operator(&SphericalMetric::flat(2.5)).unwrap();
        for r in [0.3, 1.0, 7.0, 300.0] {
            let j = op.coeff_jets(r);
            for (k, jet) in j.iter().enumerate() {
                assert!(jet.value().abs() < 1e-14, "{} at {r}: {}", COEFF_NAMES[k], jet.value());
            }
        }
    }

    #[test]
    fn h00_only_matches_hand_expansion() {
        // g_tt = −1 + h, g_rr = 1: g^tt = −1/(1−h), g^rr = 1, √|g| = √(1−h) r²
        // P = ∂t² − (1−h)(∂r² + (2/r)∂r) − (1−h)(√(1−h))'/√(1−h) ∂r − (1−h) r⁻² Δθ − (1−h)V
        let kappa = 1.5;
        let mut m = SphericalMetric::flat(kappa);
        m.h00 = RadialProfile::power_law(0.2, kappa);
        m.v = RadialProfile::power_law(0.1, kappa + 2.0);
        let op = build_operator(&m).unwrap();
        for r in [0.5, 2.0, 40.0] {
            let h = m.h00.value(r);
            let hp = m.h00.jet(r).deriv(1);
            let v = m.v.value(r);
            let cv = op.coeffs(r);
            assert_eq!(cv.a1, 0.0);
            assert_eq!(cv.b1, 0.0);
            assert!((cv.c2 - h).abs() < 1e-14);
            let s_log = -0.5 * hp / (1.0 - h);
            let d2 = 2.0 * h / r - (1.0 - h) * s_log;
            assert!((cv.d2 - d2).abs() < 1e-13);
            assert!((cv.e2 + (1.0 - h) * v).abs() < 1e-14);
            assert!((cv.f2 - h).abs() < 1e-14);
        }
    }

    #[test]
    fn mixed_term_appears_with_h0r() {
        let mut m = SphericalMetric::flat(2.5);
        m.h0r = RadialProfile::bump(0.1, 3.0, 1.0).unwrap();
        let op = ReducedOperator { kappa: 2.5, source: OperatorSource::Metric(m) };
        assert!(op.coeffs(3.0).a1.abs() > 1e-3);
        assert!(op.has_first_order_time());
    }

    #[test]
    fn kappa_gate() {
        assert!(check_kappa(2.0).is_err());
        assert!(check_kappa(1.0).is_err());
        assert!(check_kappa(2.5).is_ok());
    }

    #[test]
    fn mode_reduce_examples() {
        let flat = ReducedOperator::flat();
        let m = mode_reduce(&flat, 0, c(0.0)).unwrap();
        let k = m.coeffs(2.0);
        assert_eq!((k.alpha, k.beta, k.gamma), (c(-1.0), c(-1.0), c(0.0)));
        let m = mode_reduce(&flat, 1, c(2.0)).unwrap();
        let k = m.coeffs(2.0);
        assert_eq!(k.gamma, c(2.0 / 4.0 - 4.0));
        assert!(mode_reduce(&flat, 0, Complex64::new(1.0, -0.1)).is_err());

        let mut co = match flat.source.clone() {
            OperatorSource::Direct(c) => c,
            _ => unreachable!(),
        };
        co.a1 = RadialProfile::power_law(0.3, 2.5);
        let op = ReducedOperator::direct(2.5, co).unwrap();
        let m = mode_reduce(&op, 0, c(1.0)).unwrap();
        let r = 1.7;
        let beta = m.coeffs(r).beta;
        let a1 = 0.3 * (1.0f64 + r * r).powf(-1.25);
        assert!((beta - Complex64::new(-2.0 / r, -a1)).norm() < 1e-14);
    }

    #[test]
    fn bump_is_compact_and_smooth() {
        let b = RadialProfile::bump(1.0, 0.0, 1.0).unwrap();
        assert_eq!(b.value(1.0), 0.0);
        assert!((b.value(0.0) - 1.0).abs() < 1e-15);
        assert!(b.jet(0.0).deriv(1).abs() < 1e-15);
        assert!(RadialProfile::bump(1.0, 0.5, 1.0).is_err());
    }
}
