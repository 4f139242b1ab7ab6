use super::expr::{canonical_atoms, fmt_q, q, qi, Atom, Base, SigmaFactor, SpaceExpr, Q};
use crate::error::{Error, Result};
use num_traits::{Signed, Zero};
use std::collections::BTreeMap;
use std::fmt;

/// `a + e·ε` with ε an infinitesimal; the "−" on a weight is `−ε`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Val {
    pub a: Q,
    pub e: Q,
}

impl Val {
    fn num(a: Q) -> Self {
        Val { a, e: Q::zero() }
    }

    fn weight(w: Q, minus: bool) -> Self {
        Val { a: w, e: if minus { -qi(1) } else { Q::zero() } }
    }

    fn sign(self) -> i8 {
        if self.a.is_positive() || (self.a.is_zero() && self.e.is_positive()) {
            1
        } else if self.a.is_zero() && self.e.is_zero() {
            0
        } else {
            -1
        }
    }

    fn floor(self) -> Q {
        if self.a.is_integer() && self.e.is_negative() {
            self.a - 1
        } else {
            self.a.floor()
        }
    }
}

impl fmt::Display for Val {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", fmt_q(self.a))?;
        if self.e.is_negative() {
            write!(f, "-")?;
        } else if self.e.is_positive() {
            write!(f, "+")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Ex {
    Num(Q),
    Var(String),
    /// The trailing "−": an infinitesimal loss.
    Loss,
    Add(Box<Ex>, Box<Ex>),
    Sub(Box<Ex>, Box<Ex>),
    Scale(Q, Box<Ex>),
    Neg(Box<Ex>),
    Floor(Box<Ex>),
    Frac(Box<Ex>),
}

type Env = BTreeMap<String, Val>;

impl Ex {
    fn eval(&self, env: &Env) -> Result<Val> {
        Ok(match self {
            Ex::Num(v) => Val::num(*v),
            Ex::Var(name) => {
                *env.get(name).ok_or_else(|| Error::Config(format!("unbound variable `{name}`")))?
            }
            Ex::Loss => Val { a: Q::zero(), e: -qi(1) },
            Ex::Add(x, y) => {
                let (x, y) = (x.eval(env)?, y.eval(env)?);
                Val { a: x.a + y.a, e: x.e + y.e }
            }
            Ex::Sub(x, y) => {
                let (x, y) = (x.eval(env)?, y.eval(env)?);
                Val { a: x.a - y.a, e: x.e - y.e }
            }
            Ex::Scale(c, x) => {
                let x = x.eval(env)?;
                Val { a: *c * x.a, e: *c * x.e }
            }
            Ex::Neg(x) => {
                let x = x.eval(env)?;
                Val { a: -x.a, e: -x.e }
            }
            Ex::Floor(x) => Val::num(x.eval(env)?.floor()),
            Ex::Frac(x) => {
                let x = x.eval(env)?;
                Val { a: x.a - x.floor(), e: x.e }
            }
        })
    }

    fn vars(&self, out: &mut Vec<String>) {
        match self {
            Ex::Var(v) => out.push(v.clone()),
            Ex::Add(x, y) | Ex::Sub(x, y) => {
                x.vars(out);
                y.vars(out);
            }
            Ex::Scale(_, x) | Ex::Neg(x) | Ex::Floor(x) | Ex::Frac(x) => x.vars(out),
            _ => {}
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cmp {
    Gt,
    Ge,
    Lt,
    Le,
    Ne,
}

impl Cmp {
    fn holds(self, d: Val) -> bool {
        let s = d.sign();
        match self {
            Cmp::Gt => s > 0,
            Cmp::Ge => s >= 0,
            Cmp::Lt => s < 0,
            Cmp::Le => s <= 0,
            Cmp::Ne => s != 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Guard {
    pub lhs: Ex,
    pub cmp: Cmp,
    pub rhs: Ex,
    pub text: String,
}

impl Guard {
    fn margin(&self, env: &Env) -> Result<Val> {
        let (l, r) = (self.lhs.eval(env)?, self.rhs.eval(env)?);
        Ok(Val { a: l.a - r.a, e: l.e - r.e })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Pattern {
    Hb { s: String, w: String },
    Conormal { g: String },
    /// `ρ^n Y_l`, matched against whole harmonic families.
    Rho { n: String, l: String },
}

#[derive(Clone, Debug, PartialEq)]
pub enum OutBase {
    Hb(Ex, Ex),
    Conormal(Ex),
    Harm { j_lo: Ex, j_hi: Option<Ex>, lo: Ex, hi: Ex },
    Rho(Ex, Ex),
    Smooth,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutTerm {
    pub sigma: Option<Ex>,
    pub poly: bool,
    pub base: OutBase,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub name: String,
    pub group: String,
    pub pattern: Pattern,
    pub guards: Vec<Guard>,
    pub rewrite: Vec<OutTerm>,
    /// The mapping property the rule encodes, in words.
    pub statement: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RuleSet {
    pub rules: Vec<Rule>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bindings {
    pub kappa: Q,
}

const BUILTIN: &str = include_str!("../../rules/lowfreq.rules");

impl RuleSet {
    pub fn builtin() -> Self {
        RuleSet::parse(BUILTIN).expect("bundled rule file parses")
    }

    pub fn get(&self, name: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.name == name)
    }

    pub fn group(&self, group: &str) -> Vec<&Rule> {
        self.rules.iter().filter(|r| r.group == group).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut rules = Vec::new();
        let mut cur: Option<(usize, Rule)> = None;
        for (k, raw) in text.lines().enumerate() {
            let line_no = k + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, rest) = line.split_once(char::is_whitespace).map_or((line, ""), |(a, b)| (a, b.trim()));
            let err = |msg: String| Error::RuleSyntax { line: line_no, msg };
            match key {
                "rule" => {
                    if cur.is_some() {
                        return Err(err("`rule` inside an open stanza".into()));
                    }
                    if rest.is_empty() {
                        return Err(err("rule needs a name".into()));
                    }
                    cur = Some((
                        line_no,
                        Rule {
                            name: rest.to_string(),
                            group: String::new(),
                            pattern: Pattern::Hb { s: String::new(), w: String::new() },
                            guards: Vec::new(),
                            rewrite: Vec::new(),
                            statement: String::new(),
                        },
                    ));
                }
                "end" => {
                    let (start, rule) = cur.take().ok_or_else(|| err("`end` without `rule`".into()))?;
                    validate(&rule).map_err(|msg| Error::RuleSyntax { line: start, msg })?;
                    rules.push(rule);
                }
                _ => {
                    let (_, rule) = cur.as_mut().ok_or_else(|| err(format!("`{key}` outside a stanza")))?;
                    match key {
                        "group" => rule.group = rest.to_string(),
                        "on" => rule.pattern = parse_pattern(rest).map_err(err)?,
                        "when" => rule.guards.push(parse_guard(rest).map_err(err)?),
                        "gives" => rule.rewrite = parse_sum(rest).map_err(err)?,
                        "states" => rule.statement = rest.to_string(),
                        _ => return Err(err(format!("unknown key `{key}`"))),
                    }
                }
            }
        }
        if let Some((start, _)) = cur {
            return Err(Error::RuleSyntax { line: start, msg: "stanza not closed with `end`".into() });
        }
        Ok(RuleSet { rules })
    }
}

fn validate(rule: &Rule) -> std::result::Result<(), String> {
    if rule.group.is_empty() {
        return Err(format!("rule `{}` has no group", rule.name));
    }
    if rule.rewrite.is_empty() {
        return Err(format!("rule `{}` has no rewrite", rule.name));
    }
    let rho = matches!(rule.pattern, Pattern::Rho { .. });
    if let Pattern::Rho { n, l } = &rule.pattern {
        for t in &rule.rewrite {
            let mut vs = Vec::new();
            if let Some(e) = &t.sigma {
                e.vars(&mut vs);
            }
            match &t.base {
                OutBase::Rho(..) => continue,
                OutBase::Hb(a, b) => {
                    a.vars(&mut vs);
                    b.vars(&mut vs);
                }
                OutBase::Conormal(a) => a.vars(&mut vs),
                OutBase::Harm { j_lo, j_hi, lo, hi } => {
                    for e in [Some(j_lo), j_hi.as_ref(), Some(lo), Some(hi)].into_iter().flatten() {
                        e.vars(&mut vs);
                    }
                }
                OutBase::Smooth => {}
            }
            if vs.iter().any(|v| v == n || v == l) {
                return Err(format!("rule `{}`: only ρ-terms may depend on `{n}` or `{l}`", rule.name));
            }
        }
    } else if rule.rewrite.iter().any(|t| matches!(t.base, OutBase::Rho(..))) && !rho {
        return Err(format!("rule `{}`: ρ-terms need a ρ pattern", rule.name));
    }
    Ok(())
}

struct Lexer<'a> {
    s: &'a [u8],
    text: &'a str,
    i: usize,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Lexer { s: text.as_bytes(), text, i: 0 }
    }

    fn ws(&mut self) {
        while self.i < self.s.len() && self.s[self.i].is_ascii_whitespace() {
            self.i += 1;
        }
    }

    fn rest(&self) -> &'a str {
        &self.text[self.i..]
    }

    fn eat(&mut self, tok: &str) -> bool {
        self.ws();
        if self.rest().starts_with(tok) {
            self.i += tok.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &str) -> std::result::Result<(), String> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(format!("expected `{tok}` at `{}`", self.rest()))
        }
    }

    fn ident(&mut self) -> Option<String> {
        self.ws();
        let start = self.i;
        while self.i < self.s.len() && (self.s[self.i].is_ascii_alphanumeric() || self.s[self.i] == b'_') {
            if self.i == start && self.s[self.i].is_ascii_digit() {
                return None;
            }
            self.i += 1;
        }
        (self.i > start).then(|| self.text[start..self.i].to_string())
    }

    fn number(&mut self) -> Option<Q> {
        self.ws();
        let start = self.i;
        while self.i < self.s.len() && (self.s[self.i].is_ascii_digit() || self.s[self.i] == b'.') {
            self.i += 1;
        }
        if self.i == start {
            return None;
        }
        let lit = &self.text[start..self.i];
        let value = match lit.split_once('.') {
            Some((int, frac)) => {
                let den = 10i64.pow(frac.len() as u32);
                let int: i64 = if int.is_empty() { 0 } else { int.parse().ok()? };
                let frac: i64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
                q(int * den + frac, den)
            }
            None => qi(lit.parse().ok()?),
        };
        // a literal fraction binds tighter than `+`/`-`
        let save = self.i;
        if self.eat("/") {
            if let Some(d) = self.number() {
                return Some(value / d);
            }
            self.i = save;
        }
        Some(value)
    }

    fn done(&mut self) -> bool {
        self.ws();
        self.i >= self.s.len()
    }

    /// `-` that ends an expression marks a loss.
    fn loss_ahead(&self) -> bool {
        let mut k = self.i + 1;
        while k < self.s.len() && self.s[k].is_ascii_whitespace() {
            k += 1;
        }
        k >= self.s.len() || matches!(self.s[k], b')' | b',')
    }
}

fn parse_ex(lx: &mut Lexer) -> std::result::Result<Ex, String> {
    let mut acc = parse_product(lx)?;
    loop {
        lx.ws();
        if lx.rest().starts_with('+') && !lx.rest().starts_with("+ C[") {
            lx.i += 1;
            acc = Ex::Add(Box::new(acc), Box::new(parse_product(lx)?));
        } else if lx.rest().starts_with('-') {
            if lx.loss_ahead() {
                lx.i += 1;
                acc = Ex::Add(Box::new(acc), Box::new(Ex::Loss));
                return Ok(acc);
            }
            lx.i += 1;
            acc = Ex::Sub(Box::new(acc), Box::new(parse_product(lx)?));
        } else {
            return Ok(acc);
        }
    }
}

fn parse_product(lx: &mut Lexer) -> std::result::Result<Ex, String> {
    lx.ws();
    if lx.eat("-") {
        return Ok(Ex::Neg(Box::new(parse_product(lx)?)));
    }
    if let Some(c) = lx.number() {
        let save = lx.i;
        if lx.eat("*") {
            return Ok(Ex::Scale(c, Box::new(parse_atom(lx)?)));
        }
        lx.i = save;
        return Ok(Ex::Num(c));
    }
    parse_atom(lx)
}

fn parse_atom(lx: &mut Lexer) -> std::result::Result<Ex, String> {
    if lx.eat("(") {
        let e = parse_ex(lx)?;
        lx.expect(")")?;
        return Ok(e);
    }
    let name = lx.ident().ok_or_else(|| format!("expected a term at `{}`", lx.rest()))?;
    match name.as_str() {
        "floor" | "frac" => {
            lx.expect("(")?;
            let e = parse_ex(lx)?;
            lx.expect(")")?;
            Ok(if name == "floor" { Ex::Floor(Box::new(e)) } else { Ex::Frac(Box::new(e)) })
        }
        _ => Ok(Ex::Var(name)),
    }
}

fn parse_full(text: &str) -> std::result::Result<Ex, String> {
    let mut lx = Lexer::new(text);
    let e = parse_ex(&mut lx)?;
    if !lx.done() {
        return Err(format!("trailing input `{}`", lx.rest()));
    }
    Ok(e)
}

fn parse_guard(text: &str) -> std::result::Result<Guard, String> {
    for (sym, cmp) in [(">=", Cmp::Ge), ("<=", Cmp::Le), ("!=", Cmp::Ne), (">", Cmp::Gt), ("<", Cmp::Lt)] {
        if let Some((l, r)) = text.split_once(sym) {
            return Ok(Guard { lhs: parse_full(l)?, cmp, rhs: parse_full(r)?, text: text.to_string() });
        }
    }
    Err(format!("guard `{text}` has no comparison"))
}

fn args(lx: &mut Lexer, n: usize) -> std::result::Result<Vec<Option<Ex>>, String> {
    lx.expect("(")?;
    let mut out = Vec::new();
    for k in 0..n {
        if k > 0 {
            lx.expect(",")?;
        }
        if lx.eat("inf") {
            out.push(None);
        } else {
            out.push(Some(parse_ex(lx)?));
        }
    }
    lx.expect(")")?;
    Ok(out)
}

fn var_args(lx: &mut Lexer, n: usize) -> std::result::Result<Vec<String>, String> {
    let raw = args(lx, n)?;
    raw.into_iter()
        .map(|e| match e {
            Some(Ex::Var(v)) => Ok(v),
            _ => Err("pattern arguments must be variable names".to_string()),
        })
        .collect()
}

fn parse_pattern(text: &str) -> std::result::Result<Pattern, String> {
    let mut lx = Lexer::new(text);
    let p = if lx.eat("Hb") {
        let v = var_args(&mut lx, 2)?;
        Pattern::Hb { s: v[0].clone(), w: v[1].clone() }
    } else if lx.eat("Rho") {
        let v = var_args(&mut lx, 2)?;
        Pattern::Rho { n: v[0].clone(), l: v[1].clone() }
    } else if lx.eat("A") {
        let v = var_args(&mut lx, 1)?;
        Pattern::Conormal { g: v[0].clone() }
    } else {
        return Err(format!("unknown pattern `{text}`"));
    };
    if !lx.done() {
        return Err(format!("trailing input `{}`", lx.rest()));
    }
    Ok(p)
}

fn need(e: Option<Ex>) -> std::result::Result<Ex, String> {
    e.ok_or_else(|| "`inf` is only allowed as an upper summation limit".to_string())
}

fn parse_sum(text: &str) -> std::result::Result<Vec<OutTerm>, String> {
    let mut lx = Lexer::new(text);
    let mut out = Vec::new();
    loop {
        let mut sigma = None;
        let mut poly = false;
        loop {
            if lx.eat("C[σ]") || lx.eat("C[sigma]") {
                poly = true;
            } else if lx.eat("σ") || lx.eat("sigma") {
                sigma = Some(if lx.eat("^") {
                    lx.expect("(")?;
                    let e = parse_ex(&mut lx)?;
                    lx.expect(")")?;
                    e
                } else {
                    Ex::Num(qi(1))
                });
            } else {
                break;
            }
        }
        let base = if lx.eat("Hb") {
            let mut a = args(&mut lx, 2)?;
            let w = need(a.pop().flatten())?;
            OutBase::Hb(need(a.pop().flatten())?, w)
        } else if lx.eat("Harm") {
            let mut a = args(&mut lx, 4)?.into_iter();
            let j_lo = need(a.next().flatten())?;
            let j_hi = a.next().flatten();
            OutBase::Harm { j_lo, j_hi, lo: need(a.next().flatten())?, hi: need(a.next().flatten())? }
        } else if lx.eat("Rho") {
            let mut a = args(&mut lx, 2)?;
            let l = need(a.pop().flatten())?;
            OutBase::Rho(need(a.pop().flatten())?, l)
        } else if lx.eat("A") {
            OutBase::Conormal(need(args(&mut lx, 1)?.pop().flatten())?)
        } else if lx.eat("Smooth") {
            OutBase::Smooth
        } else {
            return Err(format!("expected a space term at `{}`", lx.rest()));
        };
        out.push(OutTerm { sigma, poly, base });
        if lx.done() {
            return Ok(out);
        }
        lx.expect("+")?;
    }
}

fn inapplicable(rule: &Rule, reason: String) -> Error {
    Error::RuleInapplicable { rule: rule.name.clone(), reason }
}

fn check_guards(rule: &Rule, env: &Env) -> Result<()> {
    for g in &rule.guards {
        let m = g.margin(env)?;
        if !g.cmp.holds(m) {
            let vals: Vec<String> = {
                let mut vs = Vec::new();
                g.lhs.vars(&mut vs);
                g.rhs.vars(&mut vs);
                vs.sort();
                vs.dedup();
                vs.iter().filter_map(|v| env.get(v).map(|x| format!("{v} = {x}"))).collect()
            };
            return Err(inapplicable(rule, format!("`{}` fails ({})", g.text, vals.join(", "))));
        }
    }
    Ok(())
}

fn int_of(v: Val, what: &str, rule: &Rule) -> Result<i64> {
    if !v.e.is_zero() || !v.a.is_integer() {
        return Err(inapplicable(rule, format!("{what} = {v} is not an integer")));
    }
    Ok(v.a.to_integer())
}

fn emit(rule: &Rule, env: &Env, outer: SigmaFactor, shift: Option<(i64, i64, i64, i64, i64, i64)>) -> Result<Vec<Atom>> {
    let mut out = Vec::new();
    for t in &rule.rewrite {
        let mut sigma = SigmaFactor { poly: t.poly, ..SigmaFactor::ONE };
        if let Some(e) = &t.sigma {
            let v = e.eval(env)?;
            sigma.power = v.a;
            sigma.minus = v.e.is_negative();
        }
        let base = match &t.base {
            OutBase::Hb(s, w) => {
                let (s, w) = (s.eval(env)?, w.eval(env)?);
                if !s.e.is_zero() {
                    return Err(inapplicable(rule, format!("regularity {s} carries a loss")));
                }
                Base::Hb { s: s.a, w: w.a, minus: w.e.is_negative() }
            }
            OutBase::Conormal(g) => {
                let g = g.eval(env)?;
                Base::Conormal { g: g.a, minus: g.e.is_negative() }
            }
            OutBase::Harm { j_lo, j_hi, lo, hi } => Base::Harmonic {
                j_lo: int_of(j_lo.eval(env)?, "lower index", rule)?,
                j_hi: match j_hi {
                    Some(e) => Some(int_of(e.eval(env)?, "upper index", rule)?),
                    None => None,
                },
                lo: int_of(lo.eval(env)?, "offset", rule)?,
                hi: int_of(hi.eval(env)?, "offset", rule)?,
            },
            OutBase::Rho(..) => {
                let (j_lo, j_hi, lo, hi, dn, dl) = shift.expect("ρ outputs come from ρ patterns");
                Base::Harmonic { j_lo: j_lo + dn, j_hi: j_hi.checked_add(dn).filter(|_| j_hi != i64::MAX), lo: lo + dl - dn, hi: hi + dl - dn }
            }
            OutBase::Smooth => Base::Smooth,
        };
        out.push(Atom::new(outer.times(sigma), base));
    }
    Ok(out)
}

fn base_env(b: Bindings) -> Env {
    let mut env = Env::new();
    env.insert("k".into(), Val::num(b.kappa));
    env
}

/// Applies a ρ-pattern rule to a whole harmonic family if every member passes.
fn family_guards(rule: &Rule, n: &str, l: &str, fam: (i64, Option<i64>, i64, i64), b: Bindings) -> Result<()> {
    let (j_lo, j_hi, lo, hi) = fam;
    let last = j_hi.unwrap_or(j_lo + 32).min(j_lo + 32);
    let at = |j: i64, o: i64| {
        let mut env = base_env(b);
        env.insert(n.into(), Val::num(qi(j)));
        env.insert(l.into(), Val::num(qi(j + o)));
        env
    };
    for j in j_lo..=last {
        for o in lo..=hi {
            if j + o < 0 {
                continue;
            }
            check_guards(rule, &at(j, o))?;
        }
    }
    if j_hi.is_none() || j_hi.unwrap() > last {
        // linear in j along the family: the margin must not turn over beyond the checked range
        for g in &rule.guards {
            for o in lo..=hi {
                let m1 = g.margin(&at(last, o))?;
                let m2 = g.margin(&at(last + 1, o))?;
                let slope = m2.a - m1.a;
                let ok = match g.cmp {
                    Cmp::Gt | Cmp::Ge => !slope.is_negative(),
                    Cmp::Lt | Cmp::Le => !slope.is_positive(),
                    Cmp::Ne => slope.is_zero() || (m1.sign() as i64) * slope.signum().to_integer() > 0,
                };
                if !ok {
                    return Err(inapplicable(rule, format!("`{}` fails far along the sum", g.text)));
                }
            }
        }
    }
    Ok(())
}

fn rho_shift(rule: &Rule, n: &str, l: &str, b: Bindings) -> Result<(i64, i64)> {
    let Some(OutTerm { base: OutBase::Rho(en, el), .. }) = rule.rewrite.iter().find(|t| matches!(t.base, OutBase::Rho(..)))
    else {
        return Ok((0, 0));
    };
    let at = |x: i64, y: i64| {
        let mut env = base_env(b);
        env.insert(n.into(), Val::num(qi(x)));
        env.insert(l.into(), Val::num(qi(y)));
        env
    };
    let d = |e: &Ex| -> Result<(Q, Q, Q)> {
        let v0 = e.eval(&at(0, 0))?.a;
        Ok((v0, e.eval(&at(1, 0))?.a - v0, e.eval(&at(0, 1))?.a - v0))
    };
    let (dn, an, bn) = d(en)?;
    let (dl, al, bl) = d(el)?;
    if an != qi(1) || !bn.is_zero() || !al.is_zero() || bl != qi(1) || !dn.is_integer() || !dl.is_integer() {
        return Err(inapplicable(rule, "ρ-term must be a shift of (n, l)".into()));
    }
    Ok((dn.to_integer(), dl.to_integer()))
}

fn apply_to_atom(atom: &Atom, rule: &Rule, b: Bindings) -> Result<Vec<Atom>> {
    let mut env = base_env(b);
    match (&atom.base, &rule.pattern) {
        (Base::Hb { s, w, minus }, Pattern::Hb { s: vs, w: vw }) => {
            env.insert(vs.clone(), Val::num(*s));
            env.insert(vw.clone(), Val::weight(*w, *minus));
            check_guards(rule, &env)?;
            emit(rule, &env, atom.sigma, None)
        }
        (Base::Conormal { g, minus }, Pattern::Conormal { g: vg }) => {
            env.insert(vg.clone(), Val::weight(*g, *minus));
            check_guards(rule, &env)?;
            emit(rule, &env, atom.sigma, None)
        }
        (Base::Harmonic { j_lo, j_hi, lo, hi }, Pattern::Rho { n, l }) => {
            family_guards(rule, n, l, (*j_lo, *j_hi, *lo, *hi), b)?;
            let (dn, dl) = rho_shift(rule, n, l, b)?;
            emit(rule, &env, atom.sigma, Some((*j_lo, j_hi.unwrap_or(i64::MAX), *lo, *hi, dn, dl)))
        }
        _ => Err(inapplicable(rule, "pattern does not match".into())),
    }
}

/// One rule on one term (a possibly σ-weighted `Hb`, `A` or harmonic family).
pub fn apply_rule(expr: &SpaceExpr, rule: &Rule, bindings: Bindings) -> Result<SpaceExpr> {
    let atoms = expr.atoms();
    let [atom] = atoms.as_slice() else {
        return Err(inapplicable(rule, format!("expected a single term, got `{expr}`")));
    };
    Ok(SpaceExpr::from_atoms(&canonical_atoms(apply_to_atom(atom, rule, bindings)?)))
}

/// Applies the first matching rule of a group to every term; harmonic families that no
/// single rule covers are split at their first index.
pub(crate) fn apply_group(expr: &SpaceExpr, rules: &RuleSet, group: &str, b: Bindings) -> Result<(SpaceExpr, Vec<String>)> {
    let candidates = rules.group(group);
    if candidates.is_empty() {
        return Err(Error::Config(format!("no rules in group `{group}`")));
    }
    let mut out = Vec::new();
    let mut used = Vec::new();
    let mut queue: Vec<Atom> = expr.atoms();
    queue.reverse();
    while let Some(atom) = queue.pop() {
        let mut reasons = Vec::new();
        let mut done = false;
        for rule in &candidates {
            match apply_to_atom(&atom, rule, b) {
                Ok(atoms) => {
                    out.extend(atoms);
                    if !used.contains(&rule.name) {
                        used.push(rule.name.clone());
                    }
                    done = true;
                    break;
                }
                Err(Error::RuleInapplicable { reason, .. }) => reasons.push(format!("{}: {reason}", rule.name)),
                Err(e) => return Err(e),
            }
        }
        if done {
            continue;
        }
        if let Base::Harmonic { j_lo, j_hi, lo, hi } = atom.base {
            if j_hi != Some(j_lo) {
                queue.push(Atom::new(atom.sigma, Base::Harmonic { j_lo: j_lo + 1, j_hi, lo, hi }));
                queue.push(Atom::new(atom.sigma, Base::Harmonic { j_lo, j_hi: Some(j_lo), lo, hi }));
                continue;
            }
            if lo < hi {
                queue.push(Atom::new(atom.sigma, Base::Harmonic { j_lo, j_hi, lo: lo + 1, hi }));
                queue.push(Atom::new(atom.sigma, Base::Harmonic { j_lo, j_hi, lo, hi: lo }));
                continue;
            }
        }
        return Err(Error::RuleInapplicable {
            rule: group.to_string(),
            reason: format!("no rule for `{}` ({})", atom.to_expr(), reasons.join("; ")),
        });
    }
    Ok((SpaceExpr::from_atoms(&canonical_atoms(out)), used))
}
