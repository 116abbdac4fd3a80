//! Rule-directed checking of potential annotations.
//!
//! Two passes per checked body:
//!
//! * forward, contexts: each statement's pre-context Γ is pushed through the
//!   statement to a post-context, with loop invariants, call specifications,
//!   and weakening points acting as cut points;
//! * backward, potentials: each statement's pre-potential is synthesised from
//!   its post-potential by the syntax-directed rule for that statement, with
//!   weakening (an entailment query) only at conditionals, loops, calls, and
//!   user marks.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_traits::Zero;
use serde::Serialize;

use super::context::{cond_atoms, Atom, LogicalContext};
use super::entail::{entail_atom, entail_with, EntailConfig, EntailVerdict};
use crate::num::fmt_rational;
use crate::poly::Poly;
use crate::surface::{AnnotationSet, Assertion, FuncId, FuncSpec, Program, SiteId, Stmt, StmtKind};
use crate::Rational;

/// Function specifications `Δ`.
pub type SpecContext = BTreeMap<FuncId, Vec<FuncSpec>>;

/// Which body a derivation entry belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum CtxKey {
    Main,
    /// Body of `func` checked against its `index`-th specification.
    Spec {
        func: FuncId,
        index: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CallFrame {
    pub spec: usize,
    /// `c` in `{Γ; Q + c} call f {Γ'; Q' + c}`.
    pub frame: Rational,
}

/// Pre/post assertions synthesised for one statement.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SiteDerivation {
    pub rule: &'static str,
    pub pre_ctx: LogicalContext,
    pub pre: Poly,
    pub post_ctx: LogicalContext,
    pub post: Poly,
    pub call: Option<CallFrame>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Derivation {
    pub entries: BTreeMap<(CtxKey, SiteId), SiteDerivation>,
}

impl Derivation {
    pub fn get(&self, ctx: CtxKey, site: SiteId) -> Option<&SiteDerivation> {
        self.entries.get(&(ctx, site))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict")]
pub enum Verdict {
    Accepted,
    Rejected { site: Option<SiteId>, reason: String },
    Unknown { site: Option<SiteId>, query: String },
}

impl Verdict {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Verdict::Accepted)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = |s: &Option<SiteId>| s.map(|s| format!(" at {s}")).unwrap_or_default();
        match self {
            Verdict::Accepted => write!(f, "accepted"),
            Verdict::Rejected { site, reason } => write!(f, "rejected{}: {reason}", at(site)),
            Verdict::Unknown { site, query } => write!(f, "unknown{}: could not decide {query}", at(site)),
        }
    }
}

/// One applied rule with its synthesised assertions, rendered for humans.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LogEntry {
    pub body: String,
    pub site: SiteId,
    pub rule: &'static str,
    pub pre_ctx: String,
    pub pre: String,
    pub post_ctx: String,
    pub post: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub verdict: Verdict,
    pub log: Vec<LogEntry>,
    /// Entailments left undecided and taken on trust under `assume_entailments`.
    pub assumed: Vec<String>,
    #[serde(skip)]
    pub derivation: Derivation,
    /// Synthesised (or user-weakened) pre-potential of the checked triple.
    #[serde(skip)]
    pub pre: Option<Poly>,
}

impl CheckResult {
    pub fn is_accepted(&self) -> bool {
        self.verdict.is_accepted()
    }
}

#[derive(Clone, Debug, Default)]
pub struct CheckOptions {
    pub entail: EntailConfig,
    /// Treat undecided entailments as valid (recorded in `assumed`).
    pub assume_entailments: bool,
}

/// `{pre_ctx; pre} stmt {post_ctx; post}`.
#[derive(Clone, Debug)]
pub struct Triple<'a> {
    pub pre_ctx: LogicalContext,
    pub pre: Poly,
    pub stmt: &'a Stmt,
    pub post_ctx: LogicalContext,
    pub post: Poly,
}

/// Checks one triple, assuming every specification in `ann.specs`.
pub fn check_triple(program: &Program, ann: &AnnotationSet, triple: &Triple<'_>, opts: &CheckOptions) -> CheckResult {
    let mut c = Checker::new(program, ann, opts);
    let key = body_key(program, triple.stmt);
    let out = c.triple(key, triple, true);
    c.finish(out.map(Some))
}

/// Checks every specification against its function body (`⊢ Δ`).
pub fn check_context(program: &Program, ann: &AnnotationSet, opts: &CheckOptions) -> CheckResult {
    let mut c = Checker::new(program, ann, opts);
    let out = c.context();
    c.finish(out.map(|_| None))
}

/// Checks the context and then `main` from the precondition with final
/// potential zero. The synthesised pre-potential of `main` is the bound.
pub fn check_program(program: &Program, ann: &AnnotationSet, opts: &CheckOptions) -> CheckResult {
    let mut c = Checker::new(program, ann, opts);
    let out = c.context().and_then(|_| {
        let t = Triple {
            pre_ctx: program.precondition.clone(),
            pre: Poly::zero(),
            stmt: &program.main,
            post_ctx: LogicalContext::tt(),
            post: Poly::zero(),
        };
        c.triple(CtxKey::Main, &t, false).map(Some)
    });
    c.finish(out)
}

/// `Main` for `main`'s body; a function body is keyed by its first spec.
fn body_key(program: &Program, stmt: &Stmt) -> CtxKey {
    program
        .funcs
        .iter()
        .position(|f| std::ptr::eq(&f.body, stmt))
        .map(|i| CtxKey::Spec { func: FuncId(i as u32), index: 0 })
        .unwrap_or(CtxKey::Main)
}

struct Failure(Verdict);

type Check<T> = Result<T, Failure>;

struct Checker<'a> {
    program: &'a Program,
    ann: &'a AnnotationSet,
    opts: &'a CheckOptions,
    join_cfg: EntailConfig,
    names: Vec<String>,
    gamma: HashMap<(CtxKey, SiteId), (LogicalContext, LogicalContext)>,
    applicable: HashMap<(CtxKey, SiteId), Vec<usize>>,
    derivation: Derivation,
    log: Vec<LogEntry>,
    assumed: Vec<String>,
}

impl<'a> Checker<'a> {
    fn new(program: &'a Program, ann: &'a AnnotationSet, opts: &'a CheckOptions) -> Checker<'a> {
        let mut names = program.vars.clone();
        names.extend(ann.unbound.iter().map(|(n, _)| n.clone()));
        Checker {
            program,
            ann,
            opts,
            join_cfg: EntailConfig { samples: 0, ..opts.entail.clone() },
            names,
            gamma: HashMap::new(),
            applicable: HashMap::new(),
            derivation: Derivation::default(),
            log: Vec::new(),
            assumed: Vec::new(),
        }
    }

    fn finish(self, out: Check<Option<Poly>>) -> CheckResult {
        let (verdict, pre) = match out {
            Ok(pre) => (Verdict::Accepted, pre),
            Err(Failure(v)) => (v, None),
        };
        CheckResult { verdict, log: self.log, assumed: self.assumed, derivation: self.derivation, pre }
    }

    fn body_name(&self, key: CtxKey) -> String {
        match key {
            CtxKey::Main => "main".to_string(),
            CtxKey::Spec { func, index } => format!("{}#{index}", self.program.funcs[func.index()].name),
        }
    }

    fn context(&mut self) -> Check<()> {
        for (f, specs) in &self.ann.specs {
            let Some(func) = self.program.funcs.get(f.index()) else { continue };
            for (j, spec) in specs.iter().enumerate() {
                let t = Triple {
                    pre_ctx: spec.pre_ctx.clone(),
                    pre: spec.pre.clone(),
                    stmt: &func.body,
                    post_ctx: spec.post_ctx.clone(),
                    post: spec.post.clone(),
                };
                self.triple(CtxKey::Spec { func: *f, index: j }, &t, true).map_err(|Failure(v)| {
                    Failure(match v {
                        Verdict::Rejected { site, reason } => Verdict::Rejected {
                            site,
                            reason: format!("specification #{j} of `{}`: {reason}", func.name),
                        },
                        Verdict::Unknown { site, query } => {
                            Verdict::Unknown { site, query: format!("{query} (specification #{j} of `{}`)", func.name) }
                        }
                        other => other,
                    })
                })?;
            }
        }
        Ok(())
    }

    /// Runs both passes; with `compare_pre`, also discharges `Γ ⊨ pre ≥ q`.
    fn triple(&mut self, key: CtxKey, t: &Triple<'_>, compare_pre: bool) -> Check<Poly> {
        let end = self.forward(key, t.stmt, t.pre_ctx.clone())?;
        self.require_ctx(Some(t.stmt.site), &end, &t.post_ctx, "post-context")?;
        let q = self.backward(key, t.stmt, t.post.clone())?;
        if compare_pre {
            self.require(Some(t.stmt.site), &t.pre_ctx, &t.pre, &q, "declared pre-potential")?;
            Ok(t.pre.clone())
        } else {
            Ok(q)
        }
    }

    // ----------------------------------------------------------- entailment

    fn show_query(&self, ctx: &LogicalContext, lhs: &Poly, rhs: &Poly) -> String {
        format!("{} ⊨ {} >= {}", ctx.display(&self.names), lhs.display(&self.names), rhs.display(&self.names))
    }

    fn show_witness(&self, w: &[Rational]) -> String {
        let parts: Vec<String> = w
            .iter()
            .enumerate()
            .map(|(i, v)| format!("{}={}", self.names.get(i).map(String::as_str).unwrap_or("?"), fmt_rational(v)))
            .collect();
        format!("{{{}}}", parts.join(", "))
    }

    fn verdict_to_result(&mut self, v: EntailVerdict, site: Option<SiteId>, query: String, what: &str) -> Check<()> {
        match v {
            EntailVerdict::Proved => Ok(()),
            EntailVerdict::Refuted(w) => Err(Failure(Verdict::Rejected {
                site,
                reason: format!("{what}: {query} fails at {}", self.show_witness(&w)),
            })),
            EntailVerdict::Unknown if self.opts.assume_entailments => {
                self.assumed.push(query);
                Ok(())
            }
            EntailVerdict::Unknown => Err(Failure(Verdict::Unknown { site, query })),
        }
    }

    fn require(&mut self, site: Option<SiteId>, ctx: &LogicalContext, lhs: &Poly, rhs: &Poly, what: &str) -> Check<()> {
        let v = entail_with(ctx, lhs, rhs, &self.opts.entail);
        let q = self.show_query(ctx, lhs, rhs);
        self.verdict_to_result(v, site, q, what)
    }

    fn require_ctx(
        &mut self,
        site: Option<SiteId>,
        ctx: &LogicalContext,
        target: &LogicalContext,
        what: &str,
    ) -> Check<()> {
        for a in target.atoms() {
            let v = entail_atom(ctx, a, &self.opts.entail);
            let q = format!("{} ⊨ {}", ctx.display(&self.names), a.display(&self.names));
            self.verdict_to_result(v, site, q, what)?;
        }
        Ok(())
    }

    fn entails_quietly(&self, ctx: &LogicalContext, atom: &Atom) -> bool {
        entail_atom(ctx, atom, &self.join_cfg).is_proved()
    }

    /// Atoms of either side that the other side entails.
    fn join(&self, a: &LogicalContext, b: &LogicalContext) -> LogicalContext {
        if a == b {
            return a.clone();
        }
        let mut out = LogicalContext::tt();
        for x in a.atoms() {
            if self.entails_quietly(b, x) {
                out.push(x.clone());
            }
        }
        for y in b.atoms() {
            if self.entails_quietly(a, y) {
                out.push(y.clone());
            }
        }
        out
    }

    // -------------------------------------------------------------- forward

    fn forward(&mut self, key: CtxKey, s: &Stmt, gin: LogicalContext) -> Check<LogicalContext> {
        let gin = match self.ann.weaken_sites.get(&s.site) {
            Some(w) if !matches!(s.kind, StmtKind::While(..)) => {
                self.require_ctx(Some(s.site), &gin, &w.ctx, "weakening context")?;
                w.ctx.clone()
            }
            _ => gin,
        };
        let out = match &s.kind {
            StmtKind::Skip | StmtKind::Tick(_) => gin.clone(),
            StmtKind::Assign(x, e) => {
                let e = Poly::from_expr(e);
                match e.as_affine_in(*x) {
                    Some((a, rest)) if !a.is_zero() => {
                        // x_new = a·x_old + rest, so x_old = (x_new - rest) / a.
                        let inverse = Poly::var(*x).sub(&rest).scale(&a.recip());
                        gin.substitute_poly(*x, &inverse)
                    }
                    _ if !e.mentions(*x) => {
                        let mut g = gin.without_var(*x);
                        g.push(Atom::eq(&Poly::var(*x), &e));
                        g
                    }
                    _ => gin.without_var(*x),
                }
            }
            StmtKind::Sample(x, d) => {
                let (lo, hi) = d.support_bounds();
                let mut g = gin.without_var(*x);
                g.push(Atom::ge(&Poly::var(*x), &Poly::constant(lo)));
                g.push(Atom::ge(&Poly::constant(hi), &Poly::var(*x)));
                g
            }
            StmtKind::Call(f) => {
                let specs = self.ann.specs_for(*f);
                let name = &self.program.funcs[f.index()].name;
                if specs.is_empty() {
                    return Err(Failure(Verdict::Rejected {
                        site: Some(s.site),
                        reason: format!("no specification for called function `{name}`"),
                    }));
                }
                let mut usable = Vec::new();
                let mut first_failure = None;
                for (j, spec) in specs.iter().enumerate() {
                    match self.require_ctx(Some(s.site), &gin, &spec.pre_ctx, "call pre-context") {
                        Ok(()) => usable.push(j),
                        Err(e) => {
                            first_failure.get_or_insert(e);
                        }
                    }
                }
                if usable.is_empty() {
                    return Err(first_failure.expect("at least one spec was tried"));
                }
                let mut out = specs[usable[0]].post_ctx.clone();
                for &j in &usable[1..] {
                    out = self.join(&out, &specs[j].post_ctx);
                }
                self.applicable.insert((key, s.site), usable);
                out
            }
            StmtKind::Prob(_, s1, s2) => {
                let g1 = self.forward(key, s1, gin.clone())?;
                let g2 = self.forward(key, s2, gin.clone())?;
                self.join(&g1, &g2)
            }
            StmtKind::If(c, s1, s2) => {
                let g1 = self.forward(key, s1, gin.and_cond(c, true))?;
                let g2 = self.forward(key, s2, gin.and_cond(c, false))?;
                self.join(&g1, &g2)
            }
            StmtKind::While(c, body) => {
                let inv = self.invariant(s)?;
                self.require_ctx(Some(s.site), &gin, &inv.ctx, "loop entry")?;
                let end = self.forward(key, body, inv.ctx.and_cond(c, true))?;
                self.require_ctx(Some(s.site), &end, &inv.ctx, "loop invariant preservation")?;
                inv.ctx.and_cond(c, false)
            }
            StmtKind::Seq(s1, s2) => {
                let mid = self.forward(key, s1, gin.clone())?;
                self.forward(key, s2, mid)?
            }
        };
        self.gamma.insert((key, s.site), (gin, out.clone()));
        Ok(out)
    }

    fn invariant(&self, s: &Stmt) -> Check<&'a Assertion> {
        self.ann.loop_invariants.get(&s.site).ok_or_else(|| {
            Failure(Verdict::Rejected { site: Some(s.site), reason: "missing loop invariant".to_string() })
        })
    }

    // ------------------------------------------------------------- backward

    fn backward(&mut self, key: CtxKey, s: &Stmt, post: Poly) -> Check<Poly> {
        let (gin, gout) = self.gamma.get(&(key, s.site)).cloned().expect("forward pass visited every statement");
        let mut call = None;
        let (rule, inner) = match &s.kind {
            StmtKind::Skip => ("Q-Skip", post.clone()),
            StmtKind::Tick(c) => ("Q-Tick", post.add_const(c.exact())),
            StmtKind::Assign(x, e) => ("Q-Assign", post.substitute(*x, e)),
            StmtKind::Sample(x, d) => ("Q-Sample", post.expect_over(*x, d)),
            StmtKind::Call(f) => {
                let (j, c) = self.match_spec(key, s, *f, &post)?;
                call = Some(CallFrame { spec: j, frame: c.clone() });
                ("Q-Call", self.ann.specs_for(*f)[j].pre.add_const(&c))
            }
            StmtKind::Prob(p, s1, s2) => {
                let q1 = self.backward(key, s1, post.clone())?;
                let q2 = self.backward(key, s2, post.clone())?;
                ("Q-Prob", Poly::affine(p.exact(), &q1, &q2))
            }
            StmtKind::If(c, s1, s2) => {
                let q1 = self.backward(key, s1, post.clone())?;
                let q2 = self.backward(key, s2, post.clone())?;
                ("Q-Cond", self.cond_join(s.site, &gin, c, q1, q2)?)
            }
            StmtKind::While(c, body) => {
                let inv = self.invariant(s)?;
                let qb = self.backward(key, body, inv.potential.clone())?;
                let g_in = inv.ctx.and_cond(c, true);
                self.require(Some(s.site), &g_in, &inv.potential, &qb, "loop body")?;
                let g_out = inv.ctx.and_cond(c, false);
                self.require(Some(s.site), &g_out, &inv.potential, &post, "loop exit")?;
                ("Q-Loop", inv.potential.clone())
            }
            StmtKind::Seq(s1, s2) => {
                let mid = self.backward(key, s2, post.clone())?;
                ("Q-Seq", self.backward(key, s1, mid)?)
            }
        };
        let (rule, pre) = match self.ann.weaken_sites.get(&s.site) {
            Some(w) if !matches!(s.kind, StmtKind::While(..)) => {
                self.require(Some(s.site), &w.ctx, &w.potential, &inner, "weakening point")?;
                ("Q-Weaken", w.potential.clone())
            }
            _ => (rule, inner),
        };
        self.log.push(LogEntry {
            body: self.body_name(key),
            site: s.site,
            rule,
            pre_ctx: gin.display(&self.names).to_string(),
            pre: pre.display(&self.names).to_string(),
            post_ctx: gout.display(&self.names).to_string(),
            post: post.display(&self.names).to_string(),
        });
        self.derivation
            .entries
            .insert((key, s.site), SiteDerivation { rule, pre_ctx: gin, pre: pre.clone(), post_ctx: gout, post, call });
        Ok(pre)
    }

    /// First applicable spec whose post differs from `post` by a constant;
    /// failing that, the first whose post plus that constant dominates `post`.
    fn match_spec(&mut self, key: CtxKey, s: &Stmt, f: FuncId, post: &Poly) -> Check<(usize, Rational)> {
        let usable = self.applicable.get(&(key, s.site)).cloned().unwrap_or_default();
        let specs = self.ann.specs_for(f);
        for &j in &usable {
            if let Some(c) = post.sub(&specs[j].post).as_constant() {
                return Ok((j, c));
            }
        }
        let mut last = None;
        for &j in &usable {
            let c = post.sub(&specs[j].post).constant_term();
            let lifted = specs[j].post.add_const(&c);
            match self.require(Some(s.site), &specs[j].post_ctx.clone(), &lifted, post, "call frame") {
                Ok(()) => return Ok((j, c)),
                Err(e) => last = Some(e),
            }
        }
        let name = &self.program.funcs[f.index()].name;
        Err(last.unwrap_or_else(|| {
            Failure(Verdict::Rejected {
                site: Some(s.site),
                reason: format!("no specification of `{name}` matches post-potential {}", post.display(&self.names)),
            })
        }))
    }

    /// A single pre-potential for both branches of a conditional.
    fn cond_join(
        &mut self,
        site: SiteId,
        gin: &LogicalContext,
        c: &crate::surface::Cond,
        q1: Poly,
        q2: Poly,
    ) -> Check<Poly> {
        if q1 == q2 {
            return Ok(q1);
        }
        let mut g_false = gin.clone();
        for a in cond_atoms(c, false) {
            g_false.push(a);
        }
        let first = self.require(Some(site), &g_false, &q1, &q2, "conditional join");
        if first.is_ok() {
            return Ok(q1);
        }
        let mut g_true = gin.clone();
        for a in cond_atoms(c, true) {
            g_true.push(a);
        }
        match self.require(Some(site), &g_true, &q2, &q1, "conditional join") {
            Ok(()) => Ok(q2),
            Err(_) => first.map(|_| q1),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::int;
    use crate::surface::{parse, parse_poly_with};

    const RDWALK: &str = "
vars x, d, t;
pre d > 0;
{# spec rdwalk : {d > 0, x <= d + 2 ; 2*(d - x) + 4} -> {d > 0 ; 0} #}
func rdwalk() {
  if x < d { t ~ uniform(-1, 2); x := x + t; call rdwalk; tick(1) }
}
func main() { x := 0; call rdwalk }
";

    fn poly(p: &Program, s: &str) -> Poly {
        parse_poly_with(s, &p.vars).unwrap()
    }

    #[test]
    fn rdwalk_is_accepted_with_the_expected_chain() {
        let (p, ann) = parse(RDWALK).unwrap();
        let r = check_program(&p, &ann, &CheckOptions::default());
        assert!(r.is_accepted(), "{}", r.verdict);
        assert_eq!(r.pre.clone().unwrap(), poly(&p, "2*d + 4"));
        let key = CtxKey::Spec { func: FuncId(0), index: 0 };
        let sites: Vec<&SiteDerivation> = ["sample", "assign", "call", "tick"]
            .iter()
            .map(|kind| {
                let s = p.funcs[0].body.clone();
                let mut found = None;
                s.visit(&mut |st| {
                    if st.kind_name() == *kind {
                        found = Some(st.site);
                    }
                });
                r.derivation.get(key, found.unwrap()).unwrap()
            })
            .collect();
        assert_eq!(sites[0].pre, poly(&p, "2*(d - x) + 4"));
        assert_eq!(sites[0].post, poly(&p, "2*(d - x - t) + 5"));
        assert_eq!(sites[1].post, poly(&p, "2*(d - x) + 5"));
        assert_eq!(sites[2].post, poly(&p, "1"));
        assert_eq!(sites[2].call, Some(CallFrame { spec: 0, frame: int(1) }));
        assert_eq!(sites[3].post, Poly::zero());
    }

    #[test]
    fn tick_rule_requires_exact_payment() {
        let (p, ann) = parse("func main() { tick(3) }").unwrap();
        let ok = Triple {
            pre_ctx: LogicalContext::tt(),
            pre: Poly::int(3),
            stmt: &p.main,
            post_ctx: LogicalContext::tt(),
            post: Poly::zero(),
        };
        assert!(check_triple(&p, &ann, &ok, &CheckOptions::default()).is_accepted());
        let bad = Triple { pre: Poly::int(2), ..ok };
        let r = check_triple(&p, &ann, &bad, &CheckOptions::default());
        assert!(matches!(r.verdict, Verdict::Rejected { site: Some(s), .. } if s == p.main.site));
    }

    #[test]
    fn missing_spec_is_rejected() {
        let (p, ann) = parse("func f() { tick(1) } func main() { call f }").unwrap();
        let r = check_program(&p, &ann, &CheckOptions::default());
        match r.verdict {
            Verdict::Rejected { reason, .. } => assert!(reason.contains("no specification"), "{reason}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bogus_second_spec_is_named() {
        let src = "
{# spec f : {true ; 1} -> {true ; 0} #}
{# spec f : {true ; 0} -> {true ; 0} #}
func f() { tick(1) }
func main() { call f }";
        let (p, ann) = parse(src).unwrap();
        let r = check_program(&p, &ann, &CheckOptions::default());
        match r.verdict {
            Verdict::Rejected { reason, .. } => assert!(reason.contains("specification #1 of `f`"), "{reason}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn weakening_point_is_discharged() {
        let (p, ann) = parse("func main() { {# true ; 1 #} tick(2) }").unwrap();
        let r = check_program(&p, &ann, &CheckOptions::default());
        assert!(matches!(r.verdict, Verdict::Rejected { .. }), "{}", r.verdict);
        let (p, ann) = parse("func main() { {# true ; 5 #} tick(2) }").unwrap();
        let r = check_program(&p, &ann, &CheckOptions::default());
        assert!(r.is_accepted());
        assert_eq!(r.pre, Some(Poly::int(5)));
    }

    #[test]
    fn undecided_entailments_can_be_assumed() {
        // x^2 + 1 >= 2x holds but needs a square the engine does not search for.
        let src = "vars x; pre x >= 0; func main() { {# x >= 0 ; x^2 + 1 #} skip; {# x >= 0 ; 2*x #} skip }";
        let (p, ann) = parse(src).unwrap();
        let strict = check_program(&p, &ann, &CheckOptions::default());
        assert!(matches!(strict.verdict, Verdict::Unknown { .. }), "{}", strict.verdict);
        let lax = check_program(&p, &ann, &CheckOptions { assume_entailments: true, ..Default::default() });
        assert!(lax.is_accepted());
        assert_eq!(lax.assumed.len(), 1);
    }
}
