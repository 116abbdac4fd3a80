//! Sound, incomplete decision procedure for `Γ ⊨ lhs ≥ rhs`.
//!
//! Stages, in order:
//! 1. constant differences;
//! 2. interval bounds on variables, obtained by Fourier-Motzkin projection of
//!    Γ's atoms, followed by Fourier-Motzkin refutation of `Γ ∧ lhs < rhs`
//!    with nonlinear monomials treated as opaque columns (plus their interval
//!    facts), retried for nonlinear goals with pairwise products of the
//!    linear facts added;
//! 3. seeded random search for an exact rational counterexample.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::context::{Atom, LogicalContext, Rel};
use crate::poly::{Monomial, Poly};
use crate::surface::VarId;
use crate::Rational;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EntailVerdict {
    Proved,
    /// A valuation (indexed by variable) satisfying Γ and violating the query.
    Refuted(Vec<Rational>),
    Unknown,
}

impl EntailVerdict {
    pub fn is_proved(&self) -> bool {
        matches!(self, EntailVerdict::Proved)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EntailConfig {
    pub seed: u64,
    /// Candidate points tried by the falsifier.
    pub samples: usize,
    /// Half-width of the integer box the falsifier draws from.
    pub radius: i64,
    /// Fourier-Motzkin gives up once a round holds more constraints than this.
    pub fm_limit: usize,
}

impl Default for EntailConfig {
    fn default() -> Self {
        EntailConfig { seed: 0x5eed, samples: 2000, radius: 12, fm_limit: 4000 }
    }
}

/// `Γ ⊨ lhs ≥ rhs` with the default configuration.
pub fn entail(ctx: &LogicalContext, lhs: &Poly, rhs: &Poly) -> EntailVerdict {
    entail_with(ctx, lhs, rhs, &EntailConfig::default())
}

pub fn entail_with(ctx: &LogicalContext, lhs: &Poly, rhs: &Poly, cfg: &EntailConfig) -> EntailVerdict {
    prove(ctx, &lhs.sub(rhs), false, cfg)
}

/// `Γ ⊨ atom`.
pub fn entail_atom(ctx: &LogicalContext, atom: &Atom, cfg: &EntailConfig) -> EntailVerdict {
    let p = atom.poly();
    match atom.rel() {
        Rel::Ge => prove(ctx, p, false, cfg),
        Rel::Gt => prove(ctx, p, true, cfg),
        Rel::Eq => match prove(ctx, p, false, cfg) {
            EntailVerdict::Proved => prove(ctx, &p.neg(), false, cfg),
            other => other,
        },
    }
}

/// `Γ ⊨ Γ'`: the first atom that is not proved decides the verdict.
pub fn entail_ctx(ctx: &LogicalContext, target: &LogicalContext, cfg: &EntailConfig) -> EntailVerdict {
    for a in target.atoms() {
        let v = entail_atom(ctx, a, cfg);
        if !v.is_proved() {
            return v;
        }
    }
    EntailVerdict::Proved
}

/// `Γ ⊨ p ≥ 0`, or `p > 0` when `strict`.
fn prove(ctx: &LogicalContext, p: &Poly, strict: bool, cfg: &EntailConfig) -> EntailVerdict {
    if let Some(c) = p.as_constant() {
        if c.is_positive() || (!strict && c.is_zero()) {
            return EntailVerdict::Proved;
        }
    }
    let mut space = Space::default();
    let rows: Vec<Lin> = ctx.atoms().iter().flat_map(|a| space.rows_of_atom(a)).collect();

    let mut vars: BTreeSet<VarId> = ctx.vars().into_iter().collect();
    vars.extend(p.vars());
    let mut bounds: HashMap<VarId, Interval> = HashMap::new();
    for &v in &vars {
        let Some(col) = space.cols.get(&Monomial::var(v)).copied() else {
            bounds.insert(v, Interval::top());
            continue;
        };
        match project(&rows, col, cfg.fm_limit) {
            Projection::Infeasible => return EntailVerdict::Proved,
            Projection::Bounds(i) => {
                bounds.insert(v, i);
            }
            Projection::GaveUp => {
                bounds.insert(v, Interval::top());
            }
        }
    }

    let range = poly_interval(p, &bounds);
    if range.lo > Ext::Fin(Rational::zero()) || (!strict && range.lo >= Ext::Fin(Rational::zero())) {
        return EntailVerdict::Proved;
    }

    let mut refute = rows.clone();
    let goal = space.row(p, strict);
    refute.push(goal.negated());
    let opaque: Vec<(Monomial, usize)> =
        space.cols.iter().filter(|(m, _)| m.degree() > 1).map(|(m, c)| (m.clone(), *c)).collect();
    for (m, col) in opaque {
        let i = monomial_interval(&m, &bounds);
        if let Ext::Fin(lo) = &i.lo {
            refute.push(Lin::single(col, Rational::one(), -lo.clone()));
        }
        if let Ext::Fin(hi) = &i.hi {
            refute.push(Lin::single(col, -Rational::one(), hi.clone()));
        }
    }
    if fm_infeasible(refute.clone(), cfg.fm_limit) == Some(true) {
        return EntailVerdict::Proved;
    }
    if p.degree() >= 2 {
        // Products of nonnegative linear facts are nonnegative.
        let facts = linear_facts(ctx, &bounds);
        for (i, a) in facts.iter().enumerate() {
            for b in &facts[i..] {
                refute.push(space.row(&a.mul(b), false));
            }
        }
        if fm_infeasible(refute, cfg.fm_limit) == Some(true) {
            return EntailVerdict::Proved;
        }
    }

    match falsify(ctx, p, strict, &vars, &bounds, cfg) {
        Some(w) => EntailVerdict::Refuted(w),
        None => EntailVerdict::Unknown,
    }
}

// ------------------------------------------------------------------ intervals

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Ext {
    NegInf,
    Fin(Rational),
    PosInf,
}

impl Ext {
    fn mul(&self, other: &Ext) -> Ext {
        use Ext::*;
        match (self, other) {
            (Fin(a), Fin(b)) => Fin(a * b),
            (Fin(a), inf) | (inf, Fin(a)) => {
                if a.is_zero() {
                    Fin(Rational::zero())
                } else if a.is_positive() {
                    inf.clone()
                } else {
                    inf.neg()
                }
            }
            (a, b) => {
                if a == b {
                    PosInf
                } else {
                    NegInf
                }
            }
        }
    }

    fn neg(&self) -> Ext {
        match self {
            Ext::NegInf => Ext::PosInf,
            Ext::PosInf => Ext::NegInf,
            Ext::Fin(a) => Ext::Fin(-a),
        }
    }

    fn add(&self, other: &Ext) -> Ext {
        match (self, other) {
            (Ext::Fin(a), Ext::Fin(b)) => Ext::Fin(a + b),
            (Ext::Fin(_), inf) | (inf, _) => inf.clone(),
        }
    }

    fn pow(&self, k: u32) -> Ext {
        match self {
            Ext::Fin(a) => Ext::Fin(num_traits::pow(a.clone(), k as usize)),
            Ext::PosInf => Ext::PosInf,
            Ext::NegInf if k.is_multiple_of(2) => Ext::PosInf,
            Ext::NegInf => Ext::NegInf,
        }
    }
}

/// Closed interval with possibly infinite endpoints.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Interval {
    lo: Ext,
    hi: Ext,
}

impl Interval {
    fn top() -> Interval {
        Interval { lo: Ext::NegInf, hi: Ext::PosInf }
    }

    fn point(c: Rational) -> Interval {
        Interval { lo: Ext::Fin(c.clone()), hi: Ext::Fin(c) }
    }

    fn mul(&self, other: &Interval) -> Interval {
        let cands = [self.lo.mul(&other.lo), self.lo.mul(&other.hi), self.hi.mul(&other.lo), self.hi.mul(&other.hi)];
        Interval {
            lo: cands.iter().min().cloned().expect("four candidates"),
            hi: cands.iter().max().cloned().expect("four candidates"),
        }
    }

    fn pow(&self, k: u32) -> Interval {
        if k % 2 == 1 {
            return Interval { lo: self.lo.pow(k), hi: self.hi.pow(k) };
        }
        let zero = Ext::Fin(Rational::zero());
        if self.lo >= zero {
            Interval { lo: self.lo.pow(k), hi: self.hi.pow(k) }
        } else if self.hi <= zero {
            Interval { lo: self.hi.pow(k), hi: self.lo.pow(k) }
        } else {
            Interval { lo: zero, hi: self.lo.pow(k).max(self.hi.pow(k)) }
        }
    }

    fn scale(&self, c: &Rational) -> Interval {
        let k = Ext::Fin(c.clone());
        if c.is_negative() {
            Interval { lo: self.hi.mul(&k), hi: self.lo.mul(&k) }
        } else {
            Interval { lo: self.lo.mul(&k), hi: self.hi.mul(&k) }
        }
    }

    fn add(&self, other: &Interval) -> Interval {
        Interval { lo: self.lo.add(&other.lo), hi: self.hi.add(&other.hi) }
    }
}

fn monomial_interval(m: &Monomial, bounds: &HashMap<VarId, Interval>) -> Interval {
    m.powers().iter().fold(Interval::point(Rational::one()), |acc, &(v, e)| {
        acc.mul(&bounds.get(&v).cloned().unwrap_or_else(Interval::top).pow(e))
    })
}

fn poly_interval(p: &Poly, bounds: &HashMap<VarId, Interval>) -> Interval {
    p.terms().fold(Interval::point(Rational::zero()), |acc, (m, c)| acc.add(&monomial_interval(m, bounds).scale(c)))
}

/// Linear `f ≥ 0` facts: Γ's linear atoms and finite variable bounds.
fn linear_facts(ctx: &LogicalContext, bounds: &HashMap<VarId, Interval>) -> Vec<Poly> {
    const MAX_FACTS: usize = 16;
    let mut out: Vec<Poly> = Vec::new();
    for a in ctx.atoms().iter().filter(|a| a.poly().degree() == 1) {
        out.push(a.poly().clone());
        if a.rel() == Rel::Eq {
            out.push(a.poly().neg());
        }
    }
    let mut vars: Vec<&VarId> = bounds.keys().collect();
    vars.sort();
    for v in vars {
        let i = &bounds[v];
        if let Ext::Fin(lo) = &i.lo {
            out.push(Poly::var(*v).add_const(&-lo.clone()));
        }
        if let Ext::Fin(hi) = &i.hi {
            out.push(Poly::var(*v).neg().add_const(hi));
        }
    }
    let mut seen = Vec::new();
    out.retain(|f| {
        let fresh = !seen.contains(f);
        seen.push(f.clone());
        fresh
    });
    out.truncate(MAX_FACTS);
    out
}

// ----------------------------------------------------------- Fourier-Motzkin

/// `Σ coeffs[i]·y_i + constant ≥ 0`, or `> 0` when `strict`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Lin {
    coeffs: BTreeMap<usize, Rational>,
    constant: Rational,
    strict: bool,
}

impl Lin {
    fn single(col: usize, a: Rational, c: Rational) -> Lin {
        Lin { coeffs: BTreeMap::from([(col, a)]), constant: c, strict: false }
    }

    /// The complement: `¬(e ≥ 0)` is `-e > 0`, `¬(e > 0)` is `-e ≥ 0`.
    fn negated(&self) -> Lin {
        Lin {
            coeffs: self.coeffs.iter().map(|(k, v)| (*k, -v)).collect(),
            constant: -self.constant.clone(),
            strict: !self.strict,
        }
    }

    /// Scales so the first coefficient has magnitude one; positive scaling
    /// preserves the constraint.
    fn normalized(mut self) -> Lin {
        let s = match self.coeffs.values().next() {
            Some(c) => c.abs().recip(),
            None => return self,
        };
        for v in self.coeffs.values_mut() {
            *v *= &s;
        }
        self.constant *= &s;
        self
    }
}

/// Column assignment for monomials.
#[derive(Default)]
struct Space {
    cols: HashMap<Monomial, usize>,
}

impl Space {
    fn row(&mut self, p: &Poly, strict: bool) -> Lin {
        let mut coeffs = BTreeMap::new();
        let mut constant = Rational::zero();
        for (m, c) in p.terms() {
            if m.is_one() {
                constant = c.clone();
            } else {
                let n = self.cols.len();
                let col = *self.cols.entry(m.clone()).or_insert(n);
                coeffs.insert(col, c.clone());
            }
        }
        Lin { coeffs, constant, strict }
    }

    fn rows_of_atom(&mut self, a: &Atom) -> Vec<Lin> {
        match a.rel() {
            Rel::Ge => vec![self.row(a.poly(), false)],
            Rel::Gt => vec![self.row(a.poly(), true)],
            Rel::Eq => vec![self.row(a.poly(), false), self.row(&a.poly().neg(), false)],
        }
    }
}

/// Outcome of checking the constant rows of a system.
enum Constants {
    Contradiction,
    Rest(Vec<Lin>),
}

fn split_constants(rows: Vec<Lin>) -> Constants {
    let mut rest = Vec::with_capacity(rows.len());
    for r in rows {
        if r.coeffs.is_empty() {
            if r.constant.is_negative() || (r.strict && r.constant.is_zero()) {
                return Constants::Contradiction;
            }
        } else {
            rest.push(r);
        }
    }
    Constants::Rest(rest)
}

/// One elimination round for `col`.
fn eliminate(rows: Vec<Lin>, col: usize) -> Vec<Lin> {
    let (mut pos, mut neg, mut out) = (Vec::new(), Vec::new(), Vec::new());
    for r in rows {
        match r.coeffs.get(&col) {
            Some(c) if c.is_positive() => pos.push(r),
            Some(_) => neg.push(r),
            None => out.push(r),
        }
    }
    let mut seen: HashSet<Lin> = out.iter().cloned().collect();
    for p in &pos {
        let a = p.coeffs[&col].clone();
        for n in &neg {
            let b = -n.coeffs[&col].clone();
            // b·p + a·n cancels col with positive multipliers.
            let mut coeffs = BTreeMap::new();
            for (k, v) in p.coeffs.iter().filter(|(k, _)| **k != col) {
                coeffs.insert(*k, v * &b);
            }
            for (k, v) in n.coeffs.iter().filter(|(k, _)| **k != col) {
                let e = coeffs.entry(*k).or_insert_with(Rational::zero);
                *e += v * &a;
            }
            coeffs.retain(|_, v| !v.is_zero());
            let row = Lin { coeffs, constant: &p.constant * &b + &n.constant * &a, strict: p.strict || n.strict }
                .normalized();
            if seen.insert(row.clone()) {
                out.push(row);
            }
        }
    }
    out
}

fn pick_column(rows: &[Lin], keep: Option<usize>) -> Option<usize> {
    let mut counts: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for r in rows {
        for (k, v) in &r.coeffs {
            let e = counts.entry(*k).or_default();
            if v.is_positive() {
                e.0 += 1;
            } else {
                e.1 += 1;
            }
        }
    }
    counts.into_iter().filter(|(k, _)| Some(*k) != keep).min_by_key(|(k, (p, n))| (p * n, *k)).map(|(k, _)| k)
}

/// `Some(true)` when the system has no real solution, `Some(false)` when it
/// has one, `None` when the constraint budget ran out.
fn fm_infeasible(rows: Vec<Lin>, limit: usize) -> Option<bool> {
    let mut rows = rows;
    loop {
        rows = match split_constants(rows) {
            Constants::Contradiction => return Some(true),
            Constants::Rest(r) => r,
        };
        let Some(col) = pick_column(&rows, None) else {
            return Some(false);
        };
        rows = eliminate(rows, col);
        if rows.len() > limit {
            return None;
        }
    }
}

enum Projection {
    Infeasible,
    Bounds(Interval),
    GaveUp,
}

/// Tightest closed bounds on column `col` implied by `rows`.
fn project(rows: &[Lin], col: usize, limit: usize) -> Projection {
    let mut rows = rows.to_vec();
    loop {
        rows = match split_constants(rows) {
            Constants::Contradiction => return Projection::Infeasible,
            Constants::Rest(r) => r,
        };
        match pick_column(&rows, Some(col)) {
            Some(other) => {
                rows = eliminate(rows, other);
                if rows.len() > limit {
                    return Projection::GaveUp;
                }
            }
            None => break,
        }
    }
    let mut i = Interval::top();
    for r in &rows {
        let a = &r.coeffs[&col];
        let b = -&r.constant / a;
        if a.is_positive() {
            i.lo = i.lo.max(Ext::Fin(b));
        } else {
            i.hi = i.hi.min(Ext::Fin(b));
        }
    }
    if let (Ext::Fin(lo), Ext::Fin(hi)) = (&i.lo, &i.hi) {
        if lo > hi {
            return Projection::Infeasible;
        }
    }
    Projection::Bounds(i)
}

// ----------------------------------------------------------------- falsifier

fn falsify(
    ctx: &LogicalContext,
    p: &Poly,
    strict: bool,
    vars: &BTreeSet<VarId>,
    bounds: &HashMap<VarId, Interval>,
    cfg: &EntailConfig,
) -> Option<Vec<Rational>> {
    let n = vars.iter().map(|v| v.index() + 1).max().unwrap_or(0);
    let violates = |pt: &[Rational]| {
        let v = p.eval_exact(pt);
        if strict {
            !v.is_positive()
        } else {
            v.is_negative()
        }
    };
    let accept = |pt: &[Rational]| ctx.holds_exact(pt) && violates(pt);
    let mut pt = vec![Rational::zero(); n];
    if accept(&pt) {
        return Some(pt);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let r = cfg.radius;
    for _ in 0..cfg.samples {
        for &v in vars {
            let top = Interval::top();
            let i = bounds.get(&v).unwrap_or(&top);
            pt[v.index()] = draw(&mut rng, i, r);
        }
        if accept(&pt) {
            return Some(pt);
        }
    }
    None
}

fn draw(rng: &mut ChaCha8Rng, i: &Interval, r: i64) -> Rational {
    let small = |rng: &mut ChaCha8Rng| -> Rational {
        let den: i64 = if rng.gen_bool(0.6) { 1 } else { rng.gen_range(2..=4) };
        Rational::new(BigInt::from(rng.gen_range(-r * den..=r * den)), BigInt::from(den))
    };
    let offset = |rng: &mut ChaCha8Rng| -> Rational {
        let den: i64 = if rng.gen_bool(0.6) { 1 } else { rng.gen_range(2..=4) };
        Rational::new(BigInt::from(rng.gen_range(0..=r * den)), BigInt::from(den))
    };
    match (&i.lo, &i.hi) {
        (Ext::Fin(lo), Ext::Fin(hi)) => {
            let k = rng.gen_range(0..4);
            match k {
                0 => lo.clone(),
                1 => hi.clone(),
                _ => {
                    let t = Rational::new(BigInt::from(rng.gen_range(0..=12)), BigInt::from(12));
                    lo + (hi - lo) * t
                }
            }
        }
        (Ext::Fin(lo), _) => lo + offset(rng),
        (_, Ext::Fin(hi)) => hi - offset(rng),
        _ => small(rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::int;

    fn x() -> Poly {
        Poly::var(VarId(0))
    }

    fn d() -> Poly {
        Poly::var(VarId(1))
    }

    #[test]
    fn squares_are_nonnegative() {
        assert_eq!(entail(&LogicalContext::tt(), &x().pow(2), &Poly::zero()), EntailVerdict::Proved);
        let q = x().pow(2).add(&d().pow(4)).add_const(&int(1));
        assert_eq!(entail(&LogicalContext::tt(), &q, &Poly::int(1)), EntailVerdict::Proved);
    }

    #[test]
    fn interval_stage_uses_context() {
        let ctx = LogicalContext::from_atoms([Atom::gt(&d(), &Poly::zero())]);
        let lhs = d().scale(&int(2)).add_const(&int(4));
        assert_eq!(entail(&ctx, &lhs, &Poly::int(4)), EntailVerdict::Proved);
    }

    #[test]
    fn refutes_with_zero_witness() {
        match entail(&LogicalContext::tt(), &x(), &Poly::int(1)) {
            EntailVerdict::Refuted(w) => assert!(w.iter().all(|v| v.is_zero())),
            other => panic!("{other:?}"),
        }
        assert!(matches!(entail(&LogicalContext::tt(), &Poly::int(1), &Poly::int(2)), EntailVerdict::Refuted(_)));
    }

    #[test]
    fn relational_reasoning_needs_elimination() {
        // d - x + t > 0, t <= 2  ⊨  d + 2 - x >= 0
        let t = Poly::var(VarId(2));
        let ctx =
            LogicalContext::from_atoms([Atom::gt(&d().sub(&x()).add(&t), &Poly::zero()), Atom::ge(&Poly::int(2), &t)]);
        assert_eq!(entail(&ctx, &d().add_const(&int(2)), &x()), EntailVerdict::Proved);
    }

    #[test]
    fn infeasible_context_entails_anything() {
        let ctx = LogicalContext::from_atoms([Atom::gt(&x(), &Poly::int(1)), Atom::gt(&Poly::zero(), &x())]);
        assert_eq!(entail(&ctx, &Poly::zero(), &Poly::int(5)), EntailVerdict::Proved);
    }

    #[test]
    fn nonlinear_with_bounds() {
        // 0 <= x <= 3  ⊨  9 - x^2 >= 0
        let ctx = LogicalContext::from_atoms([Atom::ge(&x(), &Poly::zero()), Atom::ge(&Poly::int(3), &x())]);
        assert_eq!(entail(&ctx, &Poly::int(9), &x().pow(2)), EntailVerdict::Proved);
        // ... but not 8 - x^2 >= 0
        match entail(&ctx, &Poly::int(8), &x().pow(2)) {
            EntailVerdict::Refuted(w) => {
                assert!(ctx.holds_exact(&w));
                assert!(Poly::int(8).sub(&x().pow(2)).eval_exact(&w).is_negative());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn products_of_bounds() {
        // 0 <= x <= 4  ⊨  4x - x^2 >= 0
        let ctx = LogicalContext::from_atoms([Atom::ge(&x(), &Poly::zero()), Atom::ge(&Poly::int(4), &x())]);
        let q = x().scale(&int(4)).sub(&x().pow(2));
        assert_eq!(entail(&ctx, &q, &Poly::zero()), EntailVerdict::Proved);
        assert!(matches!(entail(&ctx, &q, &Poly::int(5)), EntailVerdict::Refuted(_)));
    }

    #[test]
    fn strict_atoms() {
        let ctx = LogicalContext::from_atoms([Atom::ge(&x(), &Poly::int(1))]);
        let cfg = EntailConfig::default();
        assert!(entail_atom(&ctx, &Atom::gt(&x(), &Poly::zero()), &cfg).is_proved());
        assert!(!entail_atom(&ctx, &Atom::gt(&x(), &Poly::int(1)), &cfg).is_proved());
        let eq = LogicalContext::from_atoms([Atom::eq(&x(), &Poly::int(2))]);
        assert!(entail_atom(&eq, &Atom::eq(&x().scale(&int(3)), &Poly::int(6)), &cfg).is_proved());
    }
}
