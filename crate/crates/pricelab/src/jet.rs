//! Truncated Taylor arithmetic in one real variable.
//!
//! A `Jet` stores `f(r0), f'(r0), f''(r0)/2!, ...` up to order `ORDER`. Arithmetic on jets
//! propagates derivatives exactly (up to rounding), which is how profiles and operator
//! coefficients get their derivatives without finite differences.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub const ORDER: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub c: [f64; ORDER + 1],
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        let mut c = [0.0; ORDER + 1];
        c[0] = v;
        Jet { c }
    }

    /// The independent variable evaluated at `r`.
    pub fn var(r: f64) -> Self {
        let mut c = [0.0; ORDER + 1];
        c[0] = r;
        c[1] = 1.0;
        Jet { c }
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// k-th derivative (not the Taylor coefficient).
    pub fn deriv(&self, k: usize) -> f64 {
        let mut f = 1.0;
        for i in 2..=k {
            f *= i as f64;
        }
        self.c[k] * f
    }

    /// Jet of the derivative; the top coefficient is lost.
    pub fn differentiate(&self) -> Self {
        let mut c = [0.0; ORDER + 1];
        for k in 0..ORDER {
            c[k] = self.c[k + 1] * (k + 1) as f64;
        }
        Jet { c }
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|x| x.is_finite())
    }

    /// Compose an outer function given by its derivatives `g^(k)(self.value())`.
    fn compose(&self, g: &[f64; ORDER + 1]) -> Self {
        // h = self - value; result = sum g^(k)/k! h^k
        let mut h = *self;
        h.c[0] = 0.0;
        let mut out = Jet::constant(g[0]);
        let mut hp = Jet::constant(1.0);
        let mut fact = 1.0;
        for (k, gk) in g.iter().enumerate().skip(1) {
            hp = hp * h;
            fact *= k as f64;
            for i in 0..=ORDER {
                out.c[i] += gk / fact * hp.c[i];
            }
        }
        out
    }

    pub fn exp(&self) -> Self {
        let e = self.c[0].exp();
        self.compose(&[e; ORDER + 1])
    }

    pub fn ln(&self) -> Self {
        let x = self.c[0];
        let mut g = [0.0; ORDER + 1];
        g[0] = x.ln();
        let mut d = 1.0 / x;
        for (k, gk) in g.iter_mut().enumerate().skip(1) {
            *gk = d;
            d *= -(k as f64) / x;
        }
        self.compose(&g)
    }

    pub fn powf(&self, p: f64) -> Self {
        let x = self.c[0];
        let mut g = [0.0; ORDER + 1];
        let mut coef = 1.0;
        for (k, gk) in g.iter_mut().enumerate() {
            *gk = coef * x.powf(p - k as f64);
            coef *= p - k as f64;
        }
        self.compose(&g)
    }

    pub fn sin(&self) -> Self {
        let (s, c) = self.c[0].sin_cos();
        let cycle = [s, c, -s, -c];
        let g = std::array::from_fn(|k| cycle[k % 4]);
        self.compose(&g)
    }

    pub fn sqrt(&self) -> Self {
        self.powf(0.5)
    }

    pub fn recip(&self) -> Self {
        self.powf(-1.0)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut c = self.c;
        c.iter_mut().for_each(|x| *x *= s);
        Jet { c }
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, o: Jet) -> Jet {
        for i in 0..=ORDER {
            self.c[i] += o.c[i];
        }
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(mut self, o: Jet) -> Jet {
        for i in 0..=ORDER {
            self.c[i] -= o.c[i];
        }
        self
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let mut c = [0.0; ORDER + 1];
        for i in 0..=ORDER {
            for j in 0..=ORDER - i {
                c[i + j] += self.c[i] * o.c[j];
            }
        }
        Jet { c }
    }
}

impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, o: f64) -> Jet {
        self.c[0] += o;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, o: f64) -> Jet {
        self.scale(o)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_of_square() {
        // d/dr exp(r^2) = 2r exp(r^2); second derivative (2 + 4r^2) exp(r^2)
        let r = 0.7;
        let x = Jet::var(r);
        let f = (x * x).exp();
        let e = (r * r).exp();
        assert!((f.deriv(1) - 2.0 * r * e).abs() < 1e-12);
        assert!((f.deriv(2) - (2.0 + 4.0 * r * r) * e).abs() < 1e-12);
    }

    #[test]
    fn power_matches_closed_form() {
        let r = 1.3;
        let f = (Jet::var(r) * Jet::var(r) + 1.0).powf(-0.75);
        let q: f64 = 1.0 + r * r;
        let d1 = -1.5 * r * q.powf(-1.75);
        let d2 = -1.5 * q.powf(-1.75) + 1.5 * 1.75 * 2.0 * r * r * q.powf(-2.75);
        assert!((f.deriv(1) - d1).abs() < 1e-12);
        assert!((f.deriv(2) - d2).abs() < 1e-12);
    }

    #[test]
    fn quotient_rule() {
        let r = 2.0;
        let f = Jet::var(r).recip() * Jet::var(r).ln();
        // (ln r / r)' = (1 - ln r)/r^2
        assert!((f.deriv(1) - (1.0 - r.ln()) / (r * r)).abs() < 1e-12);
        let g = Jet::var(r).ln() / Jet::var(r);
        assert!((g.deriv(3) - f.deriv(3)).abs() < 1e-12);
    }
}
