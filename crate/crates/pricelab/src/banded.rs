//! Complex banded LU with partial pivoting.

use num_complex::Complex64 as C;

#[derive(Clone, Debug)]
struct Row {
    start: usize,
    v: Vec<C>,
}

impl Row {
    fn get(&self, j: usize) -> C {
        if j < self.start || j >= self.start + self.v.len() {
            C::new(0.0, 0.0)
        } else {
            self.v[j - self.start]
        }
    }
}

/// Square band matrix with `kl` sub- and `ku` super-diagonals.
#[derive(Clone, Debug)]
pub struct Banded {
    n: usize,
    kl: usize,
    ku: usize,
    rows: Vec<Row>,
}

impl Banded {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        let rows = (0..n)
            .map(|i| {
                let start = i.saturating_sub(kl);
                let end = (i + ku + 2 * kl + 1).min(n);
                Row { start, v: vec![C::new(0.0, 0.0); end - start] }
            })
            .collect();
        Banded { n, kl, ku, rows }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn add(&mut self, i: usize, j: usize, x: C) {
        let r = &mut self.rows[i];
        assert!(j >= r.start && j < r.start + r.v.len(), "entry ({i},{j}) outside band");
        r.v[j - r.start] += x;
    }

    pub fn get(&self, i: usize, j: usize) -> C {
        self.rows[i].get(j)
    }

    /// `a·self + b·other` for matrices built with the same shape.
    pub fn lin_comb(&self, a: C, other: &Banded, b: C) -> Banded {
        assert_eq!((self.n, self.kl, self.ku), (other.n, other.kl, other.ku));
        let mut out = self.clone();
        for (i, row) in out.rows.iter_mut().enumerate() {
            for (k, v) in row.v.iter_mut().enumerate() {
                *v = a * *v + b * other.rows[i].get(row.start + k);
            }
        }
        out
    }

    /// y = A x
    pub fn matvec(&self, x: &[C]) -> Vec<C> {
        self.rows
            .iter()
            .map(|r| r.v.iter().enumerate().map(|(k, a)| a * x[r.start + k]).sum())
            .collect()
    }

    /// Factor in place. Returns the smallest pivot magnitude relative to the largest entry.
    pub fn factor(mut self) -> Lu {
        let n = self.n;
        let span = self.kl + self.ku;
        let mut piv = vec![0usize; n];
        let mut mult = vec![vec![C::new(0.0, 0.0); self.kl]; n];
        let scale = self
            .rows
            .iter()
            .flat_map(|r| r.v.iter())
            .map(|z| z.norm())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let mut min_pivot = f64::INFINITY;
        for k in 0..n {
            let last = (k + self.kl).min(n - 1);
            let mut p = k;
            let mut best = self.rows[k].get(k).norm();
            for i in k + 1..=last {
                let m = self.rows[i].get(k).norm();
                if m > best {
                    best = m;
                    p = i;
                }
            }
            min_pivot = min_pivot.min(best / scale);
            piv[k] = p;
            if p != k {
                self.rows.swap(p, k);
            }
            let piv = self.rows[k].get(k);
            if best == 0.0 {
                continue;
            }
            let jmax = (k + span).min(n - 1);
            let pivot_row: Vec<(usize, C)> = (k + 1..=jmax).map(|j| (j, self.rows[k].get(j))).collect();
            for i in k + 1..=last {
                let a = self.rows[i].get(k);
                if a == C::new(0.0, 0.0) {
                    continue;
                }
                let m = a / piv;
                mult[k][i - k - 1] = m;
                let row = &mut self.rows[i];
                let off = k - row.start;
                row.v[off] = C::new(0.0, 0.0);
                for &(j, u) in &pivot_row {
                    if u != C::new(0.0, 0.0) {
                        let idx = j - row.start;
                        if idx >= row.v.len() {
                            // widen: fill-in never exceeds k + kl + ku
                            row.v.resize(idx + 1, C::new(0.0, 0.0));
                        }
                        row.v[idx] -= m * u;
                    }
                }
            }
        }
        Lu { a: self, piv, mult, min_pivot }
    }
}

#[derive(Clone, Debug)]
pub struct Lu {
    a: Banded,
    piv: Vec<usize>,
    mult: Vec<Vec<C>>,
    pub min_pivot: f64,
}

impl Lu {
    pub fn solve(&self, b: &[C]) -> Vec<C> {
        let n = self.a.n;
        let span = self.a.kl + self.a.ku;
        let mut y: Vec<C> = b.to_vec();
        for k in 0..n {
            y.swap(k, self.piv[k]);
            let yk = y[k];
            for (d, m) in self.mult[k].iter().enumerate() {
                let i = k + 1 + d;
                if i < n && *m != C::new(0.0, 0.0) {
                    y[i] -= m * yk;
                }
            }
        }
        for k in (0..n).rev() {
            let row = &self.a.rows[k];
            let mut s = y[k];
            let jmax = (k + span).min(n - 1);
            for j in k + 1..=jmax {
                s -= row.get(j) * y[j];
            }
            y[k] = s / row.get(k);
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn solves_random_band_system() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 60;
        let (kl, ku) = (3, 3);
        let mut a = Banded::new(n, kl, ku);
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                a.add(i, j, C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            }
        }
        let x: Vec<C> = (0..n).map(|i| C::new(i as f64, 1.0 - i as f64 * 0.1)).collect();
        let b = a.matvec(&x);
        let lu = a.clone().factor();
        let y = lu.solve(&b);
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).norm() < 1e-9 * (1.0 + u.norm()), "{u} vs {v}");
        }
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        let mut a = Banded::new(3, 1, 1);
        a.add(0, 1, C::new(1.0, 0.0));
        a.add(1, 0, C::new(1.0, 0.0));
        a.add(1, 2, C::new(2.0, 0.0));
        a.add(2, 1, C::new(1.0, 0.0));
        a.add(2, 2, C::new(1.0, 0.0));
        let x = vec![C::new(1.0, 0.0), C::new(2.0, 0.0), C::new(3.0, 0.0)];
        let b = a.matvec(&x);
        let y = a.factor().solve(&b);
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).norm() < 1e-12);
        }
    }
}
