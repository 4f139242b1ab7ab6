//! Spherical Bessel and Hankel functions of complex argument.

use num_complex::Complex64 as C;

fn binom_coef(l: usize, k: usize) -> f64 {
    // (l+k)! / (k! (l−k)!)
    let mut v = 1.0;
    for i in (l - k + 1)..=(l + k) {
        v *= i as f64;
    }
    for i in 2..=k {
        v /= i as f64;
    }
    v
}

/// Coefficients `c_k` with `z h_ℓ(z) = (−i)^(ℓ+1) e^{iz} Σ_k c_k z^(−k)`.
pub fn hankel_series(l: usize) -> Vec<C> {
    let i = C::i();
    (0..=l).map(|k| i.powu(k as u32) * binom_coef(l, k) / 2f64.powi(k as i32)).collect()
}

/// Outgoing spherical Hankel function `h_ℓ^(1)(z)`.
pub fn hankel1(l: usize, z: C) -> C {
    let i = C::i();
    let s: C = hankel_series(l).iter().enumerate().map(|(k, c)| c / z.powu(k as u32)).sum();
    (-i).powu(l as u32 + 1) * (i * z).exp() / z * s
}

fn hankel2(l: usize, z: C) -> C {
    let i = C::i();
    let s: C = hankel_series(l)
        .iter()
        .enumerate()
        .map(|(k, c)| c.conj() / z.powu(k as u32))
        .sum();
    i.powu(l as u32 + 1) * (-i * z).exp() / z * s
}

/// Regular spherical Bessel function `j_ℓ(z)`.
pub fn bessel_j(l: usize, z: C) -> C {
    if z.norm() < l as f64 + 4.0 {
        // z^ℓ Σ (−z²/2)^k / (k! (2ℓ+2k+1)!!)
        let mut df = 1.0;
        for m in (1..=2 * l + 1).step_by(2) {
            df *= m as f64;
        }
        let q = -z * z / 2.0;
        let mut term = C::new(1.0 / df, 0.0);
        let mut sum = term;
        for k in 1..200 {
            term *= q / (k as f64 * (2 * l + 2 * k + 1) as f64);
            sum += term;
            if term.norm() < 1e-17 * sum.norm() {
                break;
            }
        }
        z.powu(l as u32) * sum
    } else {
        (hankel1(l, z) + hankel2(l, z)) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> C {
        C::new(x, 0.0)
    }

    #[test]
    fn closed_forms_at_low_order() {
        for x in [0.3f64, 2.0, 7.5, 12.0] {
            let j0 = x.sin() / x;
            let j1 = x.sin() / (x * x) - x.cos() / x;
            assert!((bessel_j(0, c(x)) - c(j0)).norm() < 1e-14);
            assert!((bessel_j(1, c(x)) - c(j1)).norm() < 1e-14);
            let h0 = C::new(x.sin(), -x.cos()) / x;
            assert!((hankel1(0, c(x)) - h0).norm() < 1e-14);
        }
    }

    #[test]
    fn series_and_hankel_branches_agree() {
        for l in 0..5 {
            let z = C::new(l as f64 + 3.9, 0.4);
            let a = bessel_j(l, z);
            let b = (hankel1(l, z) + hankel2(l, z)) / 2.0;
            assert!((a - b).norm() < 1e-12 * a.norm(), "l = {l}");
        }
    }

    #[test]
    fn wronskian() {
        // j_ℓ h_ℓ' − j_ℓ' h_ℓ = i/z²
        for l in 0..5 {
            let z = C::new(1.7, 0.2);
            let e = 1e-5;
            let dj = (bessel_j(l, z + e) - bessel_j(l, z - e)) / (2.0 * e);
            let dh = (hankel1(l, z + e) - hankel1(l, z - e)) / (2.0 * e);
            let w = bessel_j(l, z) * dh - dj * hankel1(l, z);
            assert!((w - C::i() / (z * z)).norm() < 1e-8, "l = {l}: {w}");
        }
    }
}
