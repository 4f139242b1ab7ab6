use super::expr::{fmt_q, q, qi, Atom, Base, SigmaFactor, SpaceExpr, Q};
use super::rules::{apply_group, Bindings, RuleSet};
use crate::error::{Error, Result};
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum StepOp {
    /// The input class `f_0`.
    Start,
    /// A rule group on every term.
    Apply(String),
    /// `f = F + σG` with `F` the terms of weight above the cut: `R P(0)^{-1} F + G`.
    SplitApply { group: String, above: Q },
    /// Multiplication by `σ^k`.
    Sigma(Q),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub label: String,
    pub op: StepOp,
    pub rules: Vec<String>,
    pub expr: SpaceExpr,
}

/// A rule group applied off the main chain, to the output of step `from` (or to its
/// `F` part when `split` is set).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideStep {
    pub label: String,
    pub from: usize,
    pub split: Option<Q>,
    pub group: String,
    pub rules: Vec<String>,
    pub expr: SpaceExpr,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowFreqSummary {
    pub j: i64,
    /// Singular exponent, with its loss flag.
    pub exponent: Q,
    pub exponent_minus: bool,
    /// Largest admissible number of `σ∂_σ` derivatives.
    pub m: i64,
    /// b-regularity left after `m` derivatives, at weight `−3/2−`.
    pub regularity: Q,
    /// `f_{⌊κ⌋}` lies in the closed-form class, and equals it when `exact`.
    pub matches_closed_form: bool,
    pub exact_closed_form: bool,
    /// Smooth-in-σ part plus the singular remainder.
    pub decomposition: SpaceExpr,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Derivation {
    pub s: Q,
    pub kappa: Q,
    pub steps: Vec<Step>,
    pub side: Vec<SideStep>,
    pub summary: LowFreqSummary,
}

/// First step at which a replay disagrees with the record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Divergence {
    pub step: usize,
    pub label: String,
    pub expected: String,
    pub found: String,
}

impl std::fmt::Display for Divergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "step {} ({}): replay gives `{}`, record has `{}`", self.step, self.label, self.expected, self.found)
    }
}

fn check_params(s: Q, kappa: Q) -> Result<()> {
    if kappa.is_integer() || kappa <= qi(1) {
        return Err(Error::ExcludedParameter(format!("κ = {} must lie in (1,∞)\\ℕ", fmt_q(kappa))));
    }
    if !s.is_positive() {
        return Err(Error::ExcludedParameter(format!("s = {} must be positive", fmt_q(s))));
    }
    Ok(())
}

fn split(expr: &SpaceExpr, above: Q) -> Result<(SpaceExpr, SpaceExpr)> {
    let (mut f, mut g) = (Vec::new(), Vec::new());
    for a in expr.atoms() {
        let Base::Hb { w, .. } = a.base else {
            return Err(Error::RuleInapplicable { rule: "split".into(), reason: format!("`{}` is not a b-Sobolev term", a.to_expr()) });
        };
        if w > above {
            f.push(a);
        } else if a.sigma.power >= qi(1) {
            g.push(Atom::new(SigmaFactor { power: a.sigma.power - 1, ..a.sigma }, a.base));
        } else {
            return Err(Error::RuleInapplicable {
                rule: "split".into(),
                reason: format!("`{}` has weight ≤ {} and no σ factor", a.to_expr(), fmt_q(above)),
            });
        }
    }
    Ok((SpaceExpr::from_atoms(&f), SpaceExpr::from_atoms(&g)))
}

fn run_op(op: &StepOp, prev: &SpaceExpr, rules: &RuleSet, b: Bindings) -> Result<(SpaceExpr, Vec<String>)> {
    match op {
        StepOp::Start => Err(Error::Config("start step has no input".into())),
        StepOp::Apply(group) => apply_group(prev, rules, group, b),
        StepOp::SplitApply { group, above } => {
            let (f, g) = split(prev, *above)?;
            let (rf, used) = apply_group(&f, rules, group, b)?;
            Ok((SpaceExpr::sum(vec![rf, g]).canonical(), used))
        }
        StepOp::Sigma(k) => {
            let atoms: Vec<Atom> = prev
                .atoms()
                .into_iter()
                .map(|a| Atom::new(SigmaFactor { power: a.sigma.power + k, ..a.sigma }, a.base))
                .collect();
            Ok((SpaceExpr::from_atoms(&atoms).canonical(), Vec::new()))
        }
    }
}

fn side_input(steps: &[Step], from: usize, split_at: Option<Q>) -> Result<SpaceExpr> {
    let e = &steps.get(from).ok_or_else(|| Error::Config(format!("side step refers to missing step {from}")))?.expr;
    match split_at {
        Some(c) => Ok(split(e, c)?.0),
        None => Ok(e.clone()),
    }
}

/// The closed form of `f_{⌊κ⌋}`: `ρ^3 ℂ[σ](Y_1..Y_{⌊κ⌋}) + H_b^{s+⌊κ⌋,{κ}+3/2−} + σℂ[σ]H_b^{s+⌊κ⌋+1,{κ}+1/2−}`.
pub fn closed_form_floor_iterate(s: Q, kappa: Q) -> SpaceExpr {
    let fl = kappa.floor();
    let fr = kappa - fl;
    let n = fl.to_integer();
    SpaceExpr::sum(vec![
        SpaceExpr::poly(SpaceExpr::HarmonicSum { j_lo: 3, j_hi: Some(3), ell_lo: -2, ell_hi: n - 3 }),
        SpaceExpr::hb(s + fl, fr + q(3, 2), true),
        SpaceExpr::sigma(qi(1), false, SpaceExpr::poly(SpaceExpr::hb(s + fl + 1, fr + q(1, 2), true))),
    ])
    .canonical()
}

fn summarize(steps: &[Step], s: Q, kappa: Q, m: i64, singular: &SpaceExpr) -> Result<LowFreqSummary> {
    let j = kappa.floor().to_integer() + 1;
    let last = &steps.last().expect("non-empty derivation").expr;
    let (exponent, exponent_minus) = last.sigma_order().ok_or_else(|| Error::Config("empty remainder".into()))?;
    let regularity = last
        .atoms()
        .iter()
        .filter_map(|a| match a.base {
            Base::Hb { s, .. } => Some(s),
            _ => None,
        })
        .min()
        .unwrap_or(Q::zero());
    let floor_iterate = &steps[j as usize - 1].expr;
    let closed = closed_form_floor_iterate(s, kappa);
    Ok(LowFreqSummary {
        j,
        exponent,
        exponent_minus,
        m,
        regularity,
        matches_closed_form: floor_iterate.within(&closed),
        exact_closed_form: *floor_iterate == closed,
        decomposition: SpaceExpr::sum(vec![SpaceExpr::SmoothInSigma, singular.clone()]).canonical(),
    })
}

/// Replays the low-frequency Neumann iteration for `f ∈ H_b^{s,κ+3/2}`: the iterates
/// `f_n = (R P(0)^{-1})^n f` up to `J = ⌊κ⌋+1`, the split `f_J = F_J + σG_J`, the remainder
/// `σ^{J+1} P(σ)^{-1} W`, and as many `σ∂_σ` derivatives as the regularity allows.
pub fn run_low_freq_iteration(s: Q, kappa: Q) -> Result<Derivation> {
    run_low_freq_iteration_with(s, kappa, &RuleSet::builtin())
}

pub fn run_low_freq_iteration_with(s: Q, kappa: Q, rules: &RuleSet) -> Result<Derivation> {
    check_params(s, kappa)?;
    let b = Bindings { kappa };
    let j = kappa.floor().to_integer() + 1;
    let mut steps = vec![Step {
        label: "f_0".into(),
        op: StepOp::Start,
        rules: Vec::new(),
        expr: SpaceExpr::hb(s, kappa + q(3, 2), false),
    }];
    let push = |steps: &mut Vec<Step>, label: String, op: StepOp| -> Result<()> {
        let (expr, used) = run_op(&op, &steps.last().expect("started").expr, rules, b)?;
        steps.push(Step { label, op, rules: used, expr });
        Ok(())
    };
    for n in 1..=j {
        push(&mut steps, format!("f_{n}"), StepOp::Apply("t".into()))?;
    }
    let cut = q(1, 2);
    push(&mut steps, "W = R P(0)^{-1} F_J + G_J".into(), StepOp::SplitApply { group: "t".into(), above: cut })?;
    push(&mut steps, "P(σ)^{-1} W".into(), StepOp::Apply("psig".into()))?;
    push(&mut steps, format!("σ^{} P(σ)^{{-1}} W", j + 1), StepOp::Sigma(qi(j + 1)))?;
    let singular = steps.last().expect("started").expr.clone();
    let mut m = 0;
    loop {
        match push(&mut steps, format!("(σ∂_σ)^{} σ^{} P(σ)^{{-1}} W", m + 1, j + 1), StepOp::Apply("dsigma".into())) {
            Ok(()) => m += 1,
            Err(Error::RuleInapplicable { .. }) => break,
            Err(e) => return Err(e),
        }
    }
    let mut side = Vec::new();
    for n in 0..j as usize {
        let input = side_input(&steps, n, None)?;
        let (expr, used) = apply_group(&input, rules, "p0inv", b)?;
        side.push(SideStep { label: format!("P(0)^{{-1}} f_{n}"), from: n, split: None, group: "p0inv".into(), rules: used, expr });
    }
    let input = side_input(&steps, j as usize, Some(cut))?;
    let (expr, used) = apply_group(&input, rules, "p0inv", b)?;
    side.push(SideStep { label: "P(0)^{-1} F_J".into(), from: j as usize, split: Some(cut), group: "p0inv".into(), rules: used, expr });
    let summary = summarize(&steps, s, kappa, m, &singular)?;
    Ok(Derivation { s, kappa, steps, side, summary })
}

/// Replays every step and side step from the recorded operations.
pub fn check_derivation(d: &Derivation, rules: &RuleSet) -> std::result::Result<(), Divergence> {
    let b = Bindings { kappa: d.kappa };
    let diverge = |step: usize, label: &str, expected: String, found: String| Divergence { step, label: label.to_string(), expected, found };
    let first = d.steps.first().ok_or_else(|| diverge(0, "f_0", "a start step".into(), "nothing".into()))?;
    let start = SpaceExpr::hb(d.s, d.kappa + q(3, 2), false);
    if first.op != StepOp::Start || first.expr != start {
        return Err(diverge(0, &first.label, start.to_string(), first.expr.to_string()));
    }
    for k in 1..d.steps.len() {
        let st = &d.steps[k];
        match run_op(&st.op, &d.steps[k - 1].expr, rules, b) {
            Ok((expr, used)) => {
                if expr != st.expr {
                    return Err(diverge(k, &st.label, expr.to_string(), st.expr.to_string()));
                }
                if used != st.rules {
                    return Err(diverge(k, &st.label, used.join(", "), st.rules.join(", ")));
                }
            }
            Err(e) => return Err(diverge(k, &st.label, e.to_string(), st.expr.to_string())),
        }
    }
    for (i, sd) in d.side.iter().enumerate() {
        let at = d.steps.len() + i;
        let replay = side_input(&d.steps, sd.from, sd.split).and_then(|x| apply_group(&x, rules, &sd.group, b));
        match replay {
            Ok((expr, used)) if expr == sd.expr && used == sd.rules => {}
            Ok((expr, _)) => return Err(diverge(at, &sd.label, expr.to_string(), sd.expr.to_string())),
            Err(e) => return Err(diverge(at, &sd.label, e.to_string(), sd.expr.to_string())),
        }
    }
    let singular_at = d.steps.iter().position(|s| matches!(s.op, StepOp::Sigma(_)));
    let m = d.steps.iter().filter(|s| s.op == StepOp::Apply("dsigma".into())).count() as i64;
    let recomputed = singular_at
        .ok_or_else(|| diverge(d.steps.len(), "summary", "a σ-power step".into(), "none".into()))
        .and_then(|k| {
            summarize(&d.steps, d.s, d.kappa, m, &d.steps[k].expr)
                .map_err(|e| diverge(d.steps.len(), "summary", e.to_string(), String::new()))
        })?;
    if recomputed != d.summary {
        return Err(diverge(d.steps.len(), "summary", format!("{recomputed:?}"), format!("{:?}", d.summary)));
    }
    Ok(())
}

fn fmt_exp(v: Q, minus: bool) -> String {
    format!("{}{}", fmt_q(v), if minus { "-" } else { "" })
}

impl Derivation {
    /// Plain-text transcript; deterministic for fixed inputs and rules.
    pub fn transcript(&self) -> String {
        let mut t = String::new();
        let fl = self.kappa.floor();
        let _ = writeln!(t, "low-frequency iteration");
        let _ = writeln!(t, "s = {}, κ = {}, ⌊κ⌋ = {}, J = {}", fmt_q(self.s), fmt_q(self.kappa), fmt_q(fl), self.summary.j);
        let _ = writeln!(t);
        for (k, st) in self.steps.iter().enumerate() {
            let how = match &st.op {
                StepOp::Start => "start".to_string(),
                StepOp::Apply(g) => format!("{g}: {}", st.rules.join(", ")),
                StepOp::SplitApply { group, above } => {
                    format!("split at weight {}, {group}: {}", fmt_q(*above), st.rules.join(", "))
                }
                StepOp::Sigma(p) => format!("times σ^{}", fmt_q(*p)),
            };
            let _ = writeln!(t, "[{k}] {}  ({how})", st.label);
            let _ = writeln!(t, "    {}", st.expr);
            if let StepOp::SplitApply { above, .. } = st.op {
                if let Ok((f, g)) = split(&self.steps[k - 1].expr, above) {
                    let _ = writeln!(t, "    F_J = {f}");
                    let _ = writeln!(t, "    G_J = {g}");
                }
            }
        }
        let _ = writeln!(t);
        let _ = writeln!(t, "smooth in σ:");
        for sd in &self.side {
            let _ = writeln!(t, "  {}  ({}: {})", sd.label, sd.group, sd.rules.join(", "));
            let _ = writeln!(t, "    {}", sd.expr);
        }
        let sm = &self.summary;
        let _ = writeln!(t);
        let _ = writeln!(t, "f_{} within closed form: {} (exact: {})", fl, sm.matches_closed_form, sm.exact_closed_form);
        let _ = writeln!(t, "decomposition: {}", sm.decomposition);
        let _ = writeln!(t, "singular exponent: {}", fmt_exp(sm.exponent, sm.exponent_minus));
        let _ = writeln!(t, "σ∂_σ derivatives: M = {} (bound s + ⌊κ⌋ = {})", sm.m, fmt_q(self.s + fl));
        let _ = writeln!(t, "values in H_b^{{{},-3/2-}}", fmt_q(sm.regularity));
        t
    }
}

/// Regularity bookkeeping at high frequency for loss `ϖ`, `p` conormal derivatives and decay `κ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HighFreqSummary {
    pub varpi: Q,
    pub p: i64,
    pub kappa: Q,
    /// `s ≥ (2p+5)(ϖ+1)`.
    pub floor: Q,
    /// `(name, budget)` lines of the vector-field constraint chain, with `M` the input budget.
    pub chain: Vec<(String, String)>,
    /// `s > (ϖ+1)(2κ+9)+2`.
    pub threshold: Q,
    /// `2 + (2M+5)(ϖ+1)` at `M = κ+2−`: equals `threshold` up to the loss.
    pub substituted: Q,
    pub consistent: bool,
}

pub fn run_high_freq_numerology(varpi: Q, p: i64, kappa: Q) -> Result<HighFreqSummary> {
    if varpi.is_negative() || p < 0 {
        return Err(Error::ExcludedParameter("ϖ and p must be non-negative".into()));
    }
    let w = varpi + 1;
    let floor = qi(2 * p + 5) * w;
    let threshold = w * (qi(2) * kappa + 9) + 2;
    let m = kappa + 2;
    let substituted = qi(2) + (qi(2) * m + 5) * w;
    let budget = |c: Q| {
        if c.is_zero() {
            "M".to_string()
        } else {
            format!("M - {}", fmt_q(c))
        }
    };
    let lhs = format!("i + {}(j + k)", fmt_q(w));
    let chain = vec![
        ("data".to_string(), format!("{lhs} ≤ {}", budget(Q::zero()))),
        ("resolvent in LE_σ".to_string(), format!("{lhs} ≤ {}", budget(w))),
        ("pointwise".to_string(), format!("{lhs} ≤ {}", budget(qi(5) * w))),
        ("(∂_r - iσ)^p".to_string(), format!("{lhs} ≤ s - {}", fmt_q(qi(5) * w + qi(2 * p) * w))),
    ];
    Ok(HighFreqSummary { varpi, p, kappa, floor, chain, threshold, substituted, consistent: substituted == threshold })
}

/// The fixed parameter table: ϖ ∈ {0, 1, 2, 3}, p ∈ {1, 2, 3}, κ cycling through 3/2, 5/2, 7/2.
pub fn high_freq_table() -> Result<Vec<HighFreqSummary>> {
    let kappas = [q(3, 2), q(5, 2), q(7, 2)];
    let mut rows = Vec::new();
    for (i, v) in (0..4).enumerate() {
        for (k, p) in (1..=3).enumerate() {
            rows.push(run_high_freq_numerology(qi(v), p, kappas[(i + k) % 3])?);
        }
    }
    Ok(rows)
}

pub fn high_freq_transcript(rows: &[HighFreqSummary]) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "high-frequency regularity");
    let _ = writeln!(t, "ϖ\tp\tκ\ts ≥ (2p+5)(ϖ+1)\ts > (ϖ+1)(2κ+9)+2\tat M = κ+2-\tconsistent");
    for r in rows {
        let _ = writeln!(
            t,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            fmt_q(r.varpi),
            r.p,
            fmt_q(r.kappa),
            fmt_q(r.floor),
            fmt_q(r.threshold),
            fmt_q(r.substituted),
            r.consistent
        );
    }
    for r in rows {
        let _ = writeln!(t);
        let _ = writeln!(t, "ϖ = {}, p = {}, κ = {}", fmt_q(r.varpi), r.p, fmt_q(r.kappa));
        for (name, line) in &r.chain {
            let _ = writeln!(t, "  {name}: {line}");
        }
    }
    t
}
