//! Side conditions that turn an accepted derivation into a sound bound.
//!
//! The ladder, strongest first:
//! * bounded time: no loops and no recursion, or a step bound confirmed by
//!   the exact oracle;
//! * nonnegative: every tick is `≥ 0`, every call frame is `≥ 0`, and every
//!   derived potential is `≥ 0` under its context;
//! * conditional: bounded updates, plus empirical tail evidence for
//!   `E[T^ℓ] < ∞` where `ℓ` is the potential degree (at least 1 when any
//!   tick is nonzero). This level is empirical and reported as such.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{Signed, Zero};
use serde::Serialize;

use crate::logic::{entail_with, AnnotationTable, CheckResult, EntailConfig};
use crate::num::fmt_rational;
use crate::poly::Poly;
use crate::simulate::{estimate_tail, TailHint, TailReport, TraceStats};
use crate::surface::{AnnotationSet, FuncId, Program, SiteId, Stmt, StmtKind, VarId};
use crate::Rational;

// ------------------------------------------------------------------ intervals

/// Closed interval; `None` ends are infinite.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Iv {
    pub lo: Option<Rational>,
    pub hi: Option<Rational>,
}

impl Iv {
    pub fn point(c: Rational) -> Iv {
        Iv { lo: Some(c.clone()), hi: Some(c) }
    }

    pub fn top() -> Iv {
        Iv { lo: None, hi: None }
    }

    fn join(&self, o: &Iv) -> Iv {
        let lo = match (&self.lo, &o.lo) {
            (Some(a), Some(b)) => Some(a.min(b).clone()),
            _ => None,
        };
        let hi = match (&self.hi, &o.hi) {
            (Some(a), Some(b)) => Some(a.max(b).clone()),
            _ => None,
        };
        Iv { lo, hi }
    }

    /// Drops any end that moved since `old`.
    fn widen(&self, old: &Iv) -> Iv {
        Iv {
            lo: if self.lo == old.lo { self.lo.clone() } else { None },
            hi: if self.hi == old.hi { self.hi.clone() } else { None },
        }
    }

    fn add(&self, o: &Iv) -> Iv {
        let add = |a: &Option<Rational>, b: &Option<Rational>| match (a, b) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        };
        Iv { lo: add(&self.lo, &o.lo), hi: add(&self.hi, &o.hi) }
    }

    fn scale(&self, c: &Rational) -> Iv {
        let s = |e: &Option<Rational>| e.as_ref().map(|v| v * c);
        if c.is_negative() {
            Iv { lo: s(&self.hi), hi: s(&self.lo) }
        } else if c.is_zero() {
            Iv::point(Rational::zero())
        } else {
            Iv { lo: s(&self.lo), hi: s(&self.hi) }
        }
    }

    fn mul(&self, o: &Iv) -> Iv {
        if self == &Iv::point(Rational::zero()) || o == &Iv::point(Rational::zero()) {
            return Iv::point(Rational::zero());
        }
        match (&self.lo, &self.hi, &o.lo, &o.hi) {
            (Some(a), Some(b), Some(c), Some(d)) => {
                let ps = [a * c, a * d, b * c, b * d];
                let lo = ps.iter().min().unwrap().clone();
                let hi = ps.iter().max().unwrap().clone();
                Iv { lo: Some(lo), hi: Some(hi) }
            }
            _ => Iv::top(),
        }
    }

    /// `max(|lo|, |hi|)`, or `None` when unbounded.
    pub fn magnitude(&self) -> Option<Rational> {
        match (&self.lo, &self.hi) {
            (Some(a), Some(b)) => Some(a.abs().max(b.abs())),
            _ => None,
        }
    }
}

fn poly_iv(p: &Poly, env: &[Iv]) -> Iv {
    let mut acc = Iv::point(Rational::zero());
    for (m, c) in p.terms() {
        let mut t = Iv::point(c.clone());
        for &(v, e) in m.powers() {
            let x = env.get(v.index()).cloned().unwrap_or_else(|| Iv::point(Rational::zero()));
            for _ in 0..e {
                t = t.mul(&x);
            }
        }
        acc = acc.add(&t);
    }
    acc
}

// ----------------------------------------------------------- bounded update

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SiteChange {
    pub site: SiteId,
    pub var: String,
    /// Bounds of `new − old`; `None` is unbounded.
    pub lo: Option<String>,
    pub hi: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum UpdateVerdict {
    Bounded { c0: String },
    Unbounded { site: SiteId },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BoundedUpdateReport {
    pub verdict: UpdateVerdict,
    #[serde(skip)]
    pub c0: Option<Rational>,
    pub changes: Vec<SiteChange>,
}

type Env = Option<Vec<Iv>>;

fn join_env(a: &Env, b: &Env) -> Env {
    match (a, b) {
        (None, x) | (x, None) => x.clone(),
        (Some(a), Some(b)) => Some(a.iter().zip(b).map(|(x, y)| x.join(y)).collect()),
    }
}

fn widen_env(new: &Env, old: &Env) -> Env {
    match (new, old) {
        (Some(n), Some(o)) => Some(n.iter().zip(o).map(|(x, y)| x.widen(y)).collect()),
        _ => new.clone(),
    }
}

const WIDEN_AFTER: usize = 3;

/// Context-insensitive forward interval analysis over global variables.
struct Intervals<'p> {
    program: &'p Program,
    entry: Vec<Env>,
    exit: Vec<Env>,
    changes: BTreeMap<(SiteId, VarId), Iv>,
    round: usize,
}

impl<'p> Intervals<'p> {
    fn record(&mut self, site: SiteId, x: VarId, iv: Iv) {
        let e = self.changes.entry((site, x)).or_insert_with(|| iv.clone());
        *e = e.join(&iv);
    }

    fn exec(&mut self, s: &'p Stmt, env: Env) -> Env {
        let vals = env.clone()?;
        match &s.kind {
            StmtKind::Skip | StmtKind::Tick(_) => env,
            StmtKind::Assign(x, e) => {
                let e = Poly::from_expr(e);
                self.record(s.site, *x, poly_iv(&e.sub(&Poly::var(*x)), &vals));
                let mut vals = vals;
                vals[x.index()] = poly_iv(&e, &vals);
                Some(vals)
            }
            StmtKind::Sample(x, d) => {
                let (lo, hi) = d.support_bounds();
                let support = Iv { lo: Some(lo), hi: Some(hi) };
                self.record(s.site, *x, support.add(&vals[x.index()].scale(&Rational::from_integer((-1).into()))));
                let mut vals = vals;
                vals[x.index()] = support;
                Some(vals)
            }
            StmtKind::Call(f) => {
                let i = f.index();
                self.entry[i] = join_env(&self.entry[i], &env);
                self.exit[i].clone()
            }
            StmtKind::Prob(_, a, b) | StmtKind::If(_, a, b) => {
                let x = self.exec(a, env.clone());
                let y = self.exec(b, env);
                join_env(&x, &y)
            }
            StmtKind::While(_, body) => {
                let mut inv = env;
                for k in 0.. {
                    let out = self.exec(body, inv.clone());
                    let mut next = join_env(&inv, &out);
                    if k >= WIDEN_AFTER {
                        next = widen_env(&next, &inv);
                    }
                    if next == inv {
                        break;
                    }
                    inv = next;
                }
                inv
            }
            StmtKind::Seq(a, b) => {
                let mid = self.exec(a, env);
                self.exec(b, mid)
            }
        }
    }
}

/// Initial abstract state: precondition variables are free (set externally),
/// all others start at 0.
fn initial_env(program: &Program) -> Vec<Iv> {
    let free: BTreeSet<VarId> = program.precondition.vars().into_iter().collect();
    (0..program.vars.len())
        .map(|i| if free.contains(&VarId(i as u32)) { Iv::top() } else { Iv::point(Rational::zero()) })
        .collect()
}

/// Per-site bounds on `|γ_{n+1}(x) − γ_n(x)|`; `C0` is their maximum.
pub fn bounded_update_check(program: &Program) -> BoundedUpdateReport {
    let n = program.funcs.len();
    let mut a = Intervals { program, entry: vec![None; n], exit: vec![None; n], changes: BTreeMap::new(), round: 0 };
    let init = Some(initial_env(program));
    loop {
        let before = (a.entry.clone(), a.exit.clone());
        a.exec(&program.main, init.clone());
        for i in 0..n {
            let body = &a.program.funcs[i].body;
            let out = a.exec(body, a.entry[i].clone());
            let mut next = join_env(&a.exit[i], &out);
            if a.round >= WIDEN_AFTER {
                next = widen_env(&next, &a.exit[i]);
            }
            a.exit[i] = next;
        }
        if a.round >= WIDEN_AFTER {
            for i in 0..n {
                a.entry[i] = widen_env(&a.entry[i], &before.0[i]);
            }
        }
        a.round += 1;
        if (a.entry.clone(), a.exit.clone()) == before {
            break;
        }
    }
    let mut c0 = Some(Rational::zero());
    let mut unbounded = None;
    let changes = a
        .changes
        .iter()
        .map(|((site, x), iv)| {
            match (iv.magnitude(), &mut c0) {
                (Some(m), Some(c)) => {
                    if m > *c {
                        *c = m;
                    }
                }
                (None, _) => {
                    unbounded.get_or_insert(*site);
                    c0 = None;
                }
                _ => {}
            }
            SiteChange {
                site: *site,
                var: program.vars[x.index()].clone(),
                lo: iv.lo.as_ref().map(fmt_rational),
                hi: iv.hi.as_ref().map(fmt_rational),
            }
        })
        .collect();
    let verdict = match (&c0, unbounded) {
        (Some(c), _) => UpdateVerdict::Bounded { c0: fmt_rational(c) },
        (None, Some(site)) => UpdateVerdict::Unbounded { site },
        (None, None) => unreachable!("C0 is only dropped at an unbounded site"),
    };
    BoundedUpdateReport { verdict, c0, changes }
}

// ------------------------------------------------------------------- costs

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CostSummary {
    pub nonnegative: bool,
    /// `max |c|` over tick sites.
    pub c1: String,
    #[serde(skip)]
    pub c1_exact: Rational,
    pub any_nonzero: bool,
}

pub fn classify_costs(program: &Program) -> CostSummary {
    let mut nonnegative = true;
    let mut c1 = Rational::zero();
    for (_, s) in program.statements() {
        if let StmtKind::Tick(c) = &s.kind {
            nonnegative &= !c.exact().is_negative();
            c1 = c1.max(c.exact().abs());
        }
    }
    CostSummary { nonnegative, c1: fmt_rational(&c1), any_nonzero: !c1.is_zero(), c1_exact: c1 }
}

// ------------------------------------------------------------------ ladder

/// Whether the call graph reachable from `main` has a cycle, or any loop is reachable.
pub fn has_loops_or_recursion(program: &Program) -> bool {
    fn calls(s: &Stmt, out: &mut Vec<FuncId>, looped: &mut bool) {
        s.visit(&mut |t| match &t.kind {
            StmtKind::Call(f) => out.push(*f),
            StmtKind::While(..) => *looped = true,
            _ => {}
        });
    }
    let mut looped = false;
    let mut edges: Vec<Vec<FuncId>> = Vec::new();
    for f in &program.funcs {
        let mut out = Vec::new();
        calls(&f.body, &mut out, &mut looped);
        edges.push(out);
    }
    let mut roots = Vec::new();
    calls(&program.main, &mut roots, &mut looped);
    if looped {
        return true;
    }
    // Depth-first search for a back edge.
    fn dfs(f: usize, edges: &[Vec<FuncId>], state: &mut [u8]) -> bool {
        match state[f] {
            1 => return true,
            2 => return false,
            _ => {}
        }
        state[f] = 1;
        for g in &edges[f] {
            if dfs(g.index(), edges, state) {
                return true;
            }
        }
        state[f] = 2;
        false
    }
    let mut state = vec![0u8; program.funcs.len()];
    roots.iter().any(|r| dfs(r.index(), &edges, &mut state))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "level", rename_all = "kebab-case")]
pub enum OstLevel {
    CertifiedBoundedTime {
        step_bound: Option<u64>,
    },
    CertifiedNonnegative,
    /// Empirical: tail evidence is not a proof of `E[T^ℓ] < ∞`.
    ConditionallyCertified {
        ell: u32,
        evidence: TailReport,
    },
    Rejected {
        reason: String,
    },
}

impl OstLevel {
    pub fn is_sound(&self) -> bool {
        matches!(self, OstLevel::CertifiedBoundedTime { .. } | OstLevel::CertifiedNonnegative)
    }

    pub fn name(&self) -> &'static str {
        match self {
            OstLevel::CertifiedBoundedTime { .. } => "certified-bounded-time",
            OstLevel::CertifiedNonnegative => "certified-nonnegative",
            OstLevel::ConditionallyCertified { .. } => "conditionally-certified",
            OstLevel::Rejected { .. } => "rejected",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OstVerdict {
    pub level: OstLevel,
    /// Largest potential degree in the derivation.
    pub degree: u32,
    pub costs: CostSummary,
    pub bounded_update: BoundedUpdateReport,
    pub tail: Option<TailReport>,
    /// Why each stronger level was not reached.
    pub notes: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct OstOptions {
    /// A step bound already confirmed by the exact oracle.
    pub verified_step_bound: Option<u64>,
    /// Required excess of the power-law exponent over `ℓ`.
    pub power_margin: f64,
    pub entail: EntailConfig,
}

impl Default for OstOptions {
    fn default() -> Self {
        OstOptions { verified_step_bound: None, power_margin: 0.5, entail: EntailConfig::default() }
    }
}

fn derivation_degree(check: &CheckResult, ann: &AnnotationSet) -> u32 {
    check
        .derivation
        .entries
        .values()
        .flat_map(|d| [d.pre.degree(), d.post.degree()])
        .chain([ann.max_degree()])
        .max()
        .unwrap_or(0)
}

/// First derived potential not proved nonnegative under its context.
fn first_negative(check: &CheckResult, cfg: &EntailConfig) -> Option<SiteId> {
    let zero = Poly::zero();
    check.derivation.entries.iter().find_map(|((_, site), d)| {
        let ok = entail_with(&d.pre_ctx, &d.pre, &zero, cfg).is_proved()
            && entail_with(&d.post_ctx, &d.post, &zero, cfg).is_proved();
        (!ok).then_some(*site)
    })
}

/// Strongest criterion whose premises hold. `check` must be accepted.
pub fn verify(
    program: &Program,
    ann: &AnnotationSet,
    check: &CheckResult,
    stats: Option<&TraceStats>,
    opts: &OstOptions,
) -> OstVerdict {
    let costs = classify_costs(program);
    let bounded_update = bounded_update_check(program);
    let degree = derivation_degree(check, ann);
    let tail = stats.and_then(|s| estimate_tail(s).ok());
    let mut notes = Vec::new();
    let done = |level, notes, tail| OstVerdict {
        level,
        degree,
        costs: costs.clone(),
        bounded_update: bounded_update.clone(),
        tail,
        notes,
    };

    if !check.is_accepted() {
        let reason = format!("derivation not accepted: {}", check.verdict);
        return done(OstLevel::Rejected { reason }, notes, tail);
    }

    // (a)
    if !has_loops_or_recursion(program) {
        return done(OstLevel::CertifiedBoundedTime { step_bound: None }, notes, tail);
    }
    if let Some(k) = opts.verified_step_bound {
        return done(OstLevel::CertifiedBoundedTime { step_bound: Some(k) }, notes, tail);
    }
    notes.push("bounded time: program has loops or recursion and no verified step bound".to_string());

    // (b)
    let table = AnnotationTable::new(&check.derivation);
    if !costs.nonnegative {
        notes.push("nonnegative: mixed-sign costs".to_string());
    } else if !table.frames_nonnegative() {
        notes.push("nonnegative: a call frame is negative".to_string());
    } else if let Some(site) = first_negative(check, &opts.entail) {
        notes.push(format!("nonnegative: potential at {site} not proved >= 0"));
    } else {
        return done(OstLevel::CertifiedNonnegative, notes, tail);
    }

    // (c)
    let ell = degree.max(u32::from(costs.any_nonzero));
    let reason = match (&bounded_update.verdict, &tail) {
        (UpdateVerdict::Unbounded { site }, _) => format!("unbounded update at {site}"),
        (_, None) => "no tail evidence (simulation missing or insufficient tail mass)".to_string(),
        (UpdateVerdict::Bounded { .. }, Some(t)) => match &t.hint {
            TailHint::GeometricDecay => {
                let level = OstLevel::ConditionallyCertified { ell, evidence: t.clone() };
                return done(level, notes, tail);
            }
            TailHint::PowerLaw { exponent } if *exponent >= ell as f64 + opts.power_margin => {
                let level = OstLevel::ConditionallyCertified { ell, evidence: t.clone() };
                return done(level, notes, tail);
            }
            TailHint::PowerLaw { exponent } => format!(
                "tail exponent {exponent:.3} < {} required for E[T^{ell}] < inf",
                ell as f64 + opts.power_margin
            ),
            TailHint::Inconclusive => "inconclusive tail evidence".to_string(),
        },
    };
    let mut summary = notes.iter().map(|n| n.split(": ").nth(1).unwrap_or(n)).collect::<Vec<_>>().join("; ");
    summary.push_str("; ");
    summary.push_str(&reason);
    done(OstLevel::Rejected { reason: summary }, notes, tail)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{check_program, CheckOptions};
    use crate::num::int;
    use crate::surface::parse;

    const RDWALK: &str = "
vars x, d, t;
pre d > 0;
{# spec rdwalk : {d > 0, x <= d + 2 ; 2*(d - x) + 4} -> {d > 0 ; 0} #}
func rdwalk() {
  if x < d { t ~ uniform(-1, 2); x := x + t; call rdwalk; tick(1) }
}
func main() { x := 0; call rdwalk }
";

    const WALK: &str = "
vars x, N;
pre N >= 1;
func main() {
  x := 0;
  {# x < N + 1, N >= 1 ; N - 1 #}
  while x < N { if prob(1/2) { x := x + 1; tick(1) } else { x := x - 1; tick(-1) } }
}";

    #[test]
    fn update_bounds() {
        let (p, _) = parse(RDWALK).unwrap();
        assert_eq!(bounded_update_check(&p).c0, Some(int(3)));
        let (p, _) = parse(WALK).unwrap();
        assert_eq!(bounded_update_check(&p).c0, Some(int(1)));
        let (p, _) = parse("vars x; func main() { x := 1; while x <= 100 { x := 2 * x } }").unwrap();
        let r = bounded_update_check(&p);
        assert_eq!(r.c0, None);
        assert!(matches!(r.verdict, UpdateVerdict::Unbounded { .. }));
    }

    #[test]
    fn cost_classes() {
        let (p, _) = parse(RDWALK).unwrap();
        let c = classify_costs(&p);
        assert!(c.nonnegative);
        assert_eq!(c.c1_exact, int(1));
        let (p, _) = parse(WALK).unwrap();
        let c = classify_costs(&p);
        assert!(!c.nonnegative);
        assert_eq!(c.c1_exact, int(1));
        let (p, _) = parse("func main() { skip }").unwrap();
        let c = classify_costs(&p);
        assert!(c.nonnegative && !c.any_nonzero);
        assert_eq!(c.c1_exact, int(0));
    }

    #[test]
    fn ladder_levels() {
        let (p, ann) = parse("func main() { tick(5) }").unwrap();
        let r = check_program(&p, &ann, &CheckOptions::default());
        let v = verify(&p, &ann, &r, None, &OstOptions::default());
        assert_eq!(v.level, OstLevel::CertifiedBoundedTime { step_bound: None });

        let (p, ann) = parse(RDWALK).unwrap();
        let r = check_program(&p, &ann, &CheckOptions::default());
        let v = verify(&p, &ann, &r, None, &OstOptions::default());
        assert_eq!(v.level, OstLevel::CertifiedNonnegative);

        let (p, ann) = parse(WALK).unwrap();
        let r = check_program(&p, &ann, &CheckOptions::default());
        let v = verify(&p, &ann, &r, None, &OstOptions::default());
        assert!(matches!(v.level, OstLevel::Rejected { .. }));
        assert_eq!(v.degree, 1);
    }

    #[test]
    fn recursion_is_detected() {
        let (p, _) = parse(RDWALK).unwrap();
        assert!(has_loops_or_recursion(&p));
        let (p, _) = parse("func f() { tick(1) } func main() { call f; call f }").unwrap();
        assert!(!has_loops_or_recursion(&p));
    }
}
