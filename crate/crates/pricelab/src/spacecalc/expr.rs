use num_rational::Rational64;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use std::fmt;

pub type Q = Rational64;

pub fn q(n: i64, d: i64) -> Q {
    Q::new(n, d)
}

pub fn qi(n: i64) -> Q {
    Q::from_integer(n)
}

/// A function-space term. Weights and orders are exact; `minus` means "every strictly
/// smaller weight".
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpaceExpr {
    /// `H_b^{s,weight}`, or `H_b^{s,weight−}`.
    Hb { s: Q, weight: Q, minus: bool },
    /// `𝒜^γ`.
    Conormal { gamma: Q, minus: bool },
    /// `Σ_{j=j_lo}^{j_hi} ρ^j (Y_{j+ell_lo} + … + Y_{j+ell_hi})`; `j_hi = None` is ∞.
    HarmonicSum { j_lo: i64, j_hi: Option<i64>, ell_lo: i64, ell_hi: i64 },
    /// `ℂ[σ]·inner`.
    SigmaPoly(Box<SpaceExpr>),
    /// `σ^exponent·inner`.
    SigmaPower { exponent: Q, minus: bool, inner: Box<SpaceExpr> },
    Sum(Vec<SpaceExpr>),
    SmoothInSigma,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub(crate) struct SigmaFactor {
    pub power: Q,
    pub minus: bool,
    pub poly: bool,
}

impl SigmaFactor {
    pub const ONE: SigmaFactor = SigmaFactor { power: Q::ZERO, minus: false, poly: false };

    pub fn times(self, o: SigmaFactor) -> SigmaFactor {
        SigmaFactor { power: self.power + o.power, minus: self.minus || o.minus, poly: self.poly || o.poly }
    }

    /// `σ^a X ⊂ σ^b Y` whenever `X ⊂ Y`, for `|σ| < 1`.
    fn within(self, b: SigmaFactor) -> bool {
        let d = self.power - b.power;
        if !d.is_integer() || d.is_negative() || (self.minus && !b.minus) {
            return false;
        }
        if d.is_zero() {
            !self.poly || b.poly
        } else {
            b.poly
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub(crate) enum Base {
    Harmonic { j_lo: i64, j_hi: Option<i64>, lo: i64, hi: i64 },
    Hb { s: Q, w: Q, minus: bool },
    Conormal { g: Q, minus: bool },
    Smooth,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub(crate) struct Atom {
    pub sigma: SigmaFactor,
    pub base: Base,
}

fn rank(b: &Base) -> u8 {
    match b {
        Base::Harmonic { .. } => 0,
        Base::Hb { .. } => 1,
        Base::Conormal { .. } => 2,
        Base::Smooth => 3,
    }
}

/// Weight with the infinitesimal loss folded in, for lexicographic comparison.
fn wkey(v: Q, minus: bool) -> (Q, i8) {
    (v, if minus { -1 } else { 0 })
}

fn hi_le(a: Option<i64>, b: Option<i64>) -> bool {
    match (a, b) {
        (_, None) => true,
        (None, Some(_)) => false,
        (Some(x), Some(y)) => x <= y,
    }
}

impl Base {
    /// Set inclusion, ignoring σ.
    fn within(&self, o: &Base) -> bool {
        let three_halves = q(3, 2);
        match (self, o) {
            (Base::Hb { s, w, minus }, Base::Hb { s: s2, w: w2, minus: m2 }) => {
                s >= s2 && wkey(*w, *minus) >= wkey(*w2, *m2)
            }
            (Base::Conormal { g, .. }, Base::Hb { w, minus, .. }) => wkey(g - three_halves, true) >= wkey(*w, *minus),
            (Base::Conormal { g, minus }, Base::Conormal { g: g2, minus: m2 }) => wkey(*g, *minus) >= wkey(*g2, *m2),
            (Base::Harmonic { j_lo, .. }, Base::Hb { w, minus, .. }) => {
                wkey(qi(*j_lo) - three_halves, true) >= wkey(*w, *minus)
            }
            (Base::Harmonic { j_lo, .. }, Base::Conormal { g, minus }) => wkey(qi(*j_lo), false) >= wkey(*g, *minus),
            (
                Base::Harmonic { j_lo, j_hi, lo, hi },
                Base::Harmonic { j_lo: j2, j_hi: h2, lo: lo2, hi: hi2 },
            ) => j_lo >= j2 && hi_le(*j_hi, *h2) && lo >= lo2 && hi <= hi2,
            (Base::Smooth, Base::Smooth) => true,
            _ => false,
        }
    }

    fn is_empty(&self) -> bool {
        matches!(self, Base::Harmonic { j_lo, j_hi: Some(h), lo, hi } if h < j_lo || hi < lo)
    }

    fn to_expr(&self) -> SpaceExpr {
        match *self {
            Base::Harmonic { j_lo, j_hi, lo, hi } => SpaceExpr::HarmonicSum { j_lo, j_hi, ell_lo: lo, ell_hi: hi },
            Base::Hb { s, w, minus } => SpaceExpr::Hb { s, weight: w, minus },
            Base::Conormal { g, minus } => SpaceExpr::Conormal { gamma: g, minus },
            Base::Smooth => SpaceExpr::SmoothInSigma,
        }
    }
}

impl Atom {
    pub fn new(sigma: SigmaFactor, base: Base) -> Self {
        Atom { sigma, base }
    }

    fn key(&self) -> (u8, SigmaFactor, Base) {
        (rank(&self.base), self.sigma, self.base.clone())
    }

    pub fn to_expr(&self) -> SpaceExpr {
        let mut e = self.base.to_expr();
        if self.sigma.poly {
            e = SpaceExpr::SigmaPoly(Box::new(e));
        }
        if !self.sigma.power.is_zero() || self.sigma.minus {
            e = SpaceExpr::SigmaPower { exponent: self.sigma.power, minus: self.sigma.minus, inner: Box::new(e) };
        }
        e
    }
}

fn covered(a: &Atom, others: &[&Atom]) -> bool {
    if others.iter().any(|b| a.sigma.within(b.sigma) && a.base.within(&b.base)) {
        return true;
    }
    if let Base::Harmonic { j_lo, j_hi, lo, hi } = a.base {
        // peel the longest head `j_lo..=h` held by one harmonic atom, then cover the rest
        let head = others
            .iter()
            .filter_map(|b| match b.base {
                Base::Harmonic { j_lo: j2, j_hi: h2, lo: lo2, hi: hi2 }
                    if a.sigma.within(b.sigma) && j2 <= j_lo && hi_le(Some(j_lo), h2) && lo2 <= lo && hi <= hi2 =>
                {
                    Some(h2)
                }
                _ => None,
            })
            .max_by(|x, y| if hi_le(*x, *y) { std::cmp::Ordering::Less } else { std::cmp::Ordering::Greater });
        if let Some(Some(h)) = head {
            if j_hi.is_some_and(|t| t <= h) {
                return true;
            }
            let rest = Atom::new(a.sigma, Base::Harmonic { j_lo: h + 1, j_hi, lo, hi });
            return covered(&rest, others);
        }
    }
    if a.sigma.poly {
        // ℂ[σ]X = X + σℂ[σ]X
        let top = others.iter().map(|b| b.sigma.power).max().unwrap_or(Q::ZERO);
        if a.sigma.power > top {
            return false;
        }
        let plain = Atom::new(SigmaFactor { poly: false, ..a.sigma }, a.base.clone());
        let next = Atom::new(SigmaFactor { power: a.sigma.power + 1, ..a.sigma }, a.base.clone());
        return covered(&plain, others) && covered(&next, others);
    }
    false
}

impl SpaceExpr {
    pub fn sum(parts: Vec<SpaceExpr>) -> SpaceExpr {
        SpaceExpr::Sum(parts)
    }

    pub fn hb(s: Q, weight: Q, minus: bool) -> SpaceExpr {
        SpaceExpr::Hb { s, weight, minus }
    }

    pub fn sigma(exponent: Q, minus: bool, inner: SpaceExpr) -> SpaceExpr {
        SpaceExpr::SigmaPower { exponent, minus, inner: Box::new(inner) }
    }

    pub fn poly(inner: SpaceExpr) -> SpaceExpr {
        SpaceExpr::SigmaPoly(Box::new(inner))
    }

    pub(crate) fn atoms(&self) -> Vec<Atom> {
        let mut out = Vec::new();
        self.collect(SigmaFactor::ONE, &mut out);
        out
    }

    fn collect(&self, f: SigmaFactor, out: &mut Vec<Atom>) {
        match self {
            SpaceExpr::Sum(parts) => parts.iter().for_each(|p| p.collect(f, out)),
            SpaceExpr::SigmaPoly(inner) => inner.collect(SigmaFactor { poly: true, ..f }, out),
            SpaceExpr::SigmaPower { exponent, minus, inner } => {
                inner.collect(f.times(SigmaFactor { power: *exponent, minus: *minus, poly: false }), out)
            }
            SpaceExpr::Hb { s, weight, minus } => out.push(Atom::new(f, Base::Hb { s: *s, w: *weight, minus: *minus })),
            SpaceExpr::Conormal { gamma, minus } => out.push(Atom::new(f, Base::Conormal { g: *gamma, minus: *minus })),
            SpaceExpr::HarmonicSum { j_lo, j_hi, ell_lo, ell_hi } => {
                out.push(Atom::new(f, Base::Harmonic { j_lo: *j_lo, j_hi: *j_hi, lo: *ell_lo, hi: *ell_hi }))
            }
            SpaceExpr::SmoothInSigma => out.push(Atom::new(f, Base::Smooth)),
        }
    }

    pub(crate) fn from_atoms(atoms: &[Atom]) -> SpaceExpr {
        if atoms.len() == 1 {
            atoms[0].to_expr()
        } else {
            SpaceExpr::Sum(atoms.iter().map(Atom::to_expr).collect())
        }
    }

    /// Canonical form: flattened, absorbed terms removed, harmonic sums truncated where
    /// the remaining terms already contain them, and sorted.
    pub fn canonical(&self) -> SpaceExpr {
        SpaceExpr::from_atoms(&canonical_atoms(self.atoms()))
    }

    /// `self ⊂ other`, term by term.
    pub fn within(&self, other: &SpaceExpr) -> bool {
        let b = other.atoms();
        let refs: Vec<&Atom> = b.iter().collect();
        self.atoms().iter().all(|a| covered(a, &refs))
    }

    /// Smallest σ exponent over the terms, with its loss flag.
    pub fn sigma_order(&self) -> Option<(Q, bool)> {
        self.atoms().iter().map(|a| (a.sigma.power, a.sigma.minus)).min_by_key(|(p, m)| wkey(*p, *m))
    }
}

pub(crate) fn canonical_atoms(mut atoms: Vec<Atom>) -> Vec<Atom> {
    atoms.retain(|a| !a.base.is_empty());
    loop {
        let before = atoms.clone();
        atoms.sort_by_key(Atom::key);
        atoms.dedup();
        drop_covered(&mut atoms);
        fold_powers(&mut atoms);
        truncate_harmonics(&mut atoms);
        merge_harmonics(&mut atoms);
        atoms.retain(|a| !a.base.is_empty());
        atoms.sort_by_key(Atom::key);
        if atoms == before {
            return atoms;
        }
    }
}

fn drop_covered(atoms: &mut Vec<Atom>) {
    let mut keep = vec![true; atoms.len()];
    for i in 0..atoms.len() {
        let others: Vec<&Atom> = (0..atoms.len()).filter(|&k| k != i && keep[k]).map(|k| &atoms[k]).collect();
        if covered(&atoms[i], &others) {
            keep[i] = false;
        }
    }
    let mut k = 0;
    atoms.retain(|_| {
        k += 1;
        keep[k - 1]
    });
}

/// `σ^a X + σ^b Y ⊂ σ^a ℂ[σ] X` when `b − a ∈ ℕ₊`, `a ≥ 1` and `Y ⊂ X`; the nearest
/// such `a` is used. σ-free terms are never widened.
fn fold_powers(atoms: &mut Vec<Atom>) {
    let mut i = 0;
    while i < atoms.len() {
        let target = (0..atoms.len())
            .filter(|&k| {
                let (a, b) = (&atoms[k], &atoms[i]);
                let d = b.sigma.power - a.sigma.power;
                k != i
                    && d.is_integer()
                    && d.is_positive()
                    && a.sigma.power >= qi(1)
                    && a.sigma.minus == b.sigma.minus
                    && !matches!(a.base, Base::Harmonic { .. })
                    && b.base.within(&a.base)
            })
            .max_by_key(|&k| atoms[k].sigma.power);
        match target {
            Some(k) => {
                atoms[k].sigma.poly = true;
                atoms.remove(i);
                i = 0;
            }
            None => i += 1,
        }
    }
}

/// Drops the tail `j ≥ j*` of a harmonic sum once the other terms contain `ρ^{j*}`.
fn truncate_harmonics(atoms: &mut [Atom]) {
    for i in 0..atoms.len() {
        let Base::Harmonic { j_lo, j_hi, lo, hi } = atoms[i].base else { continue };
        let last = j_hi.unwrap_or(j_lo + 64);
        let others: Vec<&Atom> = (0..atoms.len()).filter(|&k| k != i).map(|k| &atoms[k]).collect();
        let cut = (j_lo + 1..=last).find(|&j| {
            let tail = Atom::new(atoms[i].sigma, Base::Harmonic { j_lo: j, j_hi, lo, hi });
            covered(&tail, &others)
        });
        if let Some(j) = cut {
            atoms[i].base = Base::Harmonic { j_lo, j_hi: Some(j - 1), lo, hi };
        }
    }
}

fn merge_harmonics(atoms: &mut Vec<Atom>) {
    let mut i = 0;
    'outer: while i < atoms.len() {
        for k in i + 1..atoms.len() {
            if let Some(m) = merge_pair(&atoms[i], &atoms[k]) {
                atoms[i] = m;
                atoms.remove(k);
                continue 'outer;
            }
        }
        i += 1;
    }
}

fn merge_pair(a: &Atom, b: &Atom) -> Option<Atom> {
    let (
        Base::Harmonic { j_lo, j_hi, lo, hi },
        Base::Harmonic { j_lo: j2, j_hi: h2, lo: lo2, hi: hi2 },
    ) = (&a.base, &b.base)
    else {
        return None;
    };
    let d = a.sigma.power - b.sigma.power;
    if !d.is_integer() || a.sigma.minus != b.sigma.minus {
        return None;
    }
    let sigma = SigmaFactor {
        power: a.sigma.power.min(b.sigma.power),
        minus: a.sigma.minus,
        poly: a.sigma.poly || b.sigma.poly || !d.is_zero(),
    };
    let touching = |x: i64, y: i64, u: i64, v: i64| u <= y + 1 && x <= v + 1;
    if j_lo == j2 && j_hi == h2 && touching(*lo, *hi, *lo2, *hi2) {
        return Some(Atom::new(sigma, Base::Harmonic { j_lo: *j_lo, j_hi: *j_hi, lo: *lo.min(lo2), hi: *hi.max(hi2) }));
    }
    if lo == lo2 && hi == hi2 && sigma == a.sigma && a.sigma == b.sigma {
        let far = |h: Option<i64>| h.unwrap_or(i64::MAX);
        let (first, second) = if j_lo <= j2 { ((j_lo, j_hi), (j2, h2)) } else { ((j2, h2), (j_lo, j_hi)) };
        if *second.0 <= far(*first.1).saturating_add(1) {
            let top = if far(*first.1) >= far(*second.1) { *first.1 } else { *second.1 };
            return Some(Atom::new(sigma, Base::Harmonic { j_lo: *first.0, j_hi: top, lo: *lo, hi: *hi }));
        }
    }
    None
}

pub fn fmt_q(v: Q) -> String {
    if v.is_integer() {
        v.to_integer().to_string()
    } else {
        format!("{}/{}", v.numer(), v.denom())
    }
}

fn fmt_w(v: Q, minus: bool) -> String {
    format!("{}{}", fmt_q(v), if minus { "-" } else { "" })
}

fn fmt_offset(o: i64) -> String {
    match o {
        0 => "j".into(),
        o if o < 0 => format!("j{o}"),
        o => format!("j+{o}"),
    }
}

fn fmt_harmonic(j_lo: i64, j_hi: Option<i64>, lo: i64, hi: i64) -> String {
    if j_hi == Some(j_lo) {
        let (a, b) = ((j_lo + lo).max(0), j_lo + hi);
        let ys = if a == b { format!("Y_{a}") } else { format!("Y_{{{a}..{b}}}") };
        return format!("ρ^{j_lo} {ys}");
    }
    let top = j_hi.map_or("∞".to_string(), |h| h.to_string());
    let ys = if lo == hi {
        format!("Y_{{{}}}", fmt_offset(lo))
    } else {
        format!("Y_{{{}..{}}}", fmt_offset(lo), fmt_offset(hi))
    };
    format!("Σ_{{j={j_lo}}}^{{{top}}} ρ^j {ys}")
}

impl fmt::Display for SpaceExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpaceExpr::Hb { s, weight, minus } => write!(f, "H_b^{{{},{}}}", fmt_q(*s), fmt_w(*weight, *minus)),
            SpaceExpr::Conormal { gamma, minus } => write!(f, "A^{{{}}}", fmt_w(*gamma, *minus)),
            SpaceExpr::HarmonicSum { j_lo, j_hi, ell_lo, ell_hi } => {
                write!(f, "{}", fmt_harmonic(*j_lo, *j_hi, *ell_lo, *ell_hi))
            }
            SpaceExpr::SigmaPoly(inner) => write!(f, "C[σ]·{inner}"),
            SpaceExpr::SigmaPower { exponent, minus, inner } => {
                if *exponent == qi(1) && !minus {
                    write!(f, "σ·{inner}")
                } else {
                    write!(f, "σ^{{{}}}·{inner}", fmt_w(*exponent, *minus))
                }
            }
            SpaceExpr::Sum(parts) if parts.is_empty() => write!(f, "0"),
            SpaceExpr::Sum(parts) => {
                for (k, p) in parts.iter().enumerate() {
                    if k > 0 {
                        write!(f, " + ")?;
                    }
                    write!(f, "{p}")?;
                }
                Ok(())
            }
            SpaceExpr::SmoothInSigma => write!(f, "C^∞(σ)"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_absorbs_into_smaller_weight() {
        let a = SpaceExpr::hb(qi(3), qi(2), true);
        let b = SpaceExpr::hb(qi(2), qi(1), false);
        let c = SpaceExpr::hb(qi(3), qi(2), false);
        assert!(a.within(&b));
        assert!(!a.within(&c));
        assert!(c.within(&a));
        assert_eq!(SpaceExpr::sum(vec![a.clone(), b.clone()]).canonical(), b);
    }

    #[test]
    fn higher_powers_fold_into_polynomial_prefactor() {
        let e = SpaceExpr::sum(vec![
            SpaceExpr::sigma(qi(1), false, SpaceExpr::hb(qi(5), qi(1), true)),
            SpaceExpr::sigma(qi(2), false, SpaceExpr::hb(qi(6), qi(2), true)),
        ]);
        assert_eq!(e.canonical(), SpaceExpr::sigma(qi(1), false, SpaceExpr::poly(SpaceExpr::hb(qi(5), qi(1), true))));
    }

    #[test]
    fn harmonic_tail_is_absorbed() {
        let e = SpaceExpr::sum(vec![
            SpaceExpr::HarmonicSum { j_lo: 3, j_hi: None, ell_lo: -2, ell_hi: -2 },
            SpaceExpr::hb(qi(3), qi(3), true),
        ]);
        let c = e.canonical();
        assert_eq!(c.to_string(), "Σ_{j=3}^{4} ρ^j Y_{j-2} + H_b^{3,3-}");
        assert_eq!(c.canonical(), c);
    }

    #[test]
    fn display() {
        let e = SpaceExpr::sigma(q(7, 2), true, SpaceExpr::poly(SpaceExpr::hb(qi(6), q(-3, 2), true)));
        assert_eq!(e.to_string(), "σ^{7/2-}·C[σ]·H_b^{6,-3/2-}");
        let h = SpaceExpr::HarmonicSum { j_lo: 3, j_hi: Some(3), ell_lo: -2, ell_hi: -1 };
        assert_eq!(h.to_string(), "ρ^3 Y_{1..2}");
    }
}
