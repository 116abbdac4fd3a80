//! Small-step semantics on configurations `⟨γ, S, K, α⟩`.
//!
//! The transition function is generic over the [`Scalar`] used for valuations
//! and costs: the simulator runs in `f64`, the exact oracle in [`Rational`].

use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use num_traits::{One, Zero};
use rand::Rng;

use crate::num::rational_to_f64;
use crate::poly::Poly;
use crate::surface::{Cond, Dist, Expr, FuncId, Program, SiteId, Span, Stmt, StmtKind, VarId};
use crate::{Constant, Rational};

/// Number type for valuations, costs, and branch weights.
pub trait Scalar: Clone + PartialEq + PartialOrd + fmt::Debug + Send + Sync {
    fn zero() -> Self;
    fn one() -> Self;
    fn from_const(c: &Constant) -> Self;
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn to_f64(&self) -> f64;
    fn eval_poly(p: &Poly, vals: &[Self]) -> Self;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_const(c: &Constant) -> Self {
        c.approx()
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn eval_poly(p: &Poly, vals: &[Self]) -> Self {
        p.compile().eval(vals)
    }
}

impl Scalar for Rational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn from_const(c: &Constant) -> Self {
        c.exact().clone()
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn to_f64(&self) -> f64 {
        rational_to_f64(self)
    }
    fn eval_poly(p: &Poly, vals: &[Self]) -> Self {
        p.eval_exact(vals)
    }
}

/// Total map from variables to values; reads past the end yield zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Valuation<V>(pub Vec<V>);

impl<V: Scalar> Valuation<V> {
    pub fn zeros(n: usize) -> Valuation<V> {
        Valuation(vec![V::zero(); n])
    }

    pub fn get(&self, v: VarId) -> V {
        self.0.get(v.index()).cloned().unwrap_or_else(V::zero)
    }

    pub fn set(&mut self, v: VarId, value: V) {
        if v.index() >= self.0.len() {
            self.0.resize(v.index() + 1, V::zero());
        }
        self.0[v.index()] = value;
    }

    pub fn values(&self) -> &[V] {
        &self.0
    }
}

impl Eq for Valuation<Rational> {}

impl Hash for Valuation<Rational> {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.hash(state)
    }
}

/// Continuation: `Kstop`, `Kloop(L, S, K)`, or `Kseq(S, K)`. Frames are
/// shared, so cloning is constant time.
#[derive(Clone, Default)]
pub struct Kont<'p>(Option<Arc<Frame<'p>>>);

pub enum Frame<'p> {
    /// `Kloop(L, S, K)`; `stmt` is the `while` node itself.
    Loop { stmt: &'p Stmt, next: Kont<'p> },
    /// `Kseq(S, K)`.
    Seq { stmt: &'p Stmt, next: Kont<'p> },
}

impl<'p> Kont<'p> {
    pub fn stop() -> Kont<'p> {
        Kont(None)
    }

    pub fn push_loop(&self, stmt: &'p Stmt) -> Kont<'p> {
        Kont(Some(Arc::new(Frame::Loop { stmt, next: self.clone() })))
    }

    pub fn push_seq(&self, stmt: &'p Stmt) -> Kont<'p> {
        Kont(Some(Arc::new(Frame::Seq { stmt, next: self.clone() })))
    }

    pub fn is_stop(&self) -> bool {
        self.0.is_none()
    }

    pub fn frame(&self) -> Option<&Frame<'p>> {
        self.0.as_deref()
    }

    pub fn depth(&self) -> usize {
        let mut n = 0;
        let mut k = self;
        while let Some(f) = k.frame() {
            n += 1;
            k = f.next();
        }
        n
    }

    /// `(is_loop, site)` per frame, innermost first.
    pub fn key(&self) -> Vec<(bool, SiteId)> {
        let mut out = Vec::new();
        let mut k = self;
        while let Some(f) = k.frame() {
            out.push((matches!(f, Frame::Loop { .. }), f.stmt().site));
            k = f.next();
        }
        out
    }
}

impl<'p> Frame<'p> {
    pub fn stmt(&self) -> &'p Stmt {
        match self {
            Frame::Loop { stmt, .. } | Frame::Seq { stmt, .. } => stmt,
        }
    }

    pub fn next(&self) -> &Kont<'p> {
        match self {
            Frame::Loop { next, .. } | Frame::Seq { next, .. } => next,
        }
    }
}

impl PartialEq for Kont<'_> {
    fn eq(&self, other: &Self) -> bool {
        match (&self.0, &other.0) {
            (None, None) => true,
            (Some(a), Some(b)) => {
                Arc::ptr_eq(a, b)
                    || (matches!(**a, Frame::Loop { .. }) == matches!(**b, Frame::Loop { .. })
                        && a.stmt().site == b.stmt().site
                        && a.next() == b.next())
            }
            _ => false,
        }
    }
}

impl Eq for Kont<'_> {}

impl Hash for Kont<'_> {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key().hash(state)
    }
}

impl fmt::Debug for Kont<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut k = self;
        while let Some(frame) = k.frame() {
            match frame {
                Frame::Loop { stmt, .. } => write!(f, "Kloop({}) :: ", stmt.site)?,
                Frame::Seq { stmt, .. } => write!(f, "Kseq({}) :: ", stmt.site)?,
            }
            k = frame.next();
        }
        write!(f, "Kstop")
    }
}

/// Placeholder statement for configurations whose control is `skip`.
pub static SKIP: Stmt = Stmt { site: SiteId(u32::MAX), span: Span { line: 0, col: 0 }, kind: StmtKind::Skip };

/// `⟨γ, S, K, α⟩`.
#[derive(Clone, Debug)]
pub struct Configuration<'p, V> {
    pub gamma: Valuation<V>,
    pub stmt: &'p Stmt,
    pub kont: Kont<'p>,
    pub alpha: V,
}

impl<'p, V: Scalar> Configuration<'p, V> {
    /// `⟨γ0, S_main, Kstop, 0⟩`.
    pub fn initial(program: &'p Program, gamma: Valuation<V>) -> Configuration<'p, V> {
        Configuration { gamma, stmt: &program.main, kont: Kont::stop(), alpha: V::zero() }
    }

    /// `⟨_, skip, Kstop, _⟩`.
    pub fn is_terminal(&self) -> bool {
        self.stmt.is_skip() && self.kont.is_stop()
    }

    fn with(&self, stmt: &'p Stmt, kont: Kont<'p>) -> Configuration<'p, V> {
        Configuration { gamma: self.gamma.clone(), stmt, kont, alpha: self.alpha.clone() }
    }
}

impl PartialEq for Configuration<'_, Rational> {
    fn eq(&self, other: &Self) -> bool {
        self.stmt.site == other.stmt.site
            && self.alpha == other.alpha
            && self.gamma == other.gamma
            && self.kont == other.kont
    }
}

impl Eq for Configuration<'_, Rational> {}

impl Hash for Configuration<'_, Rational> {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.stmt.site.hash(state);
        self.alpha.hash(state);
        self.gamma.hash(state);
        self.kont.hash(state);
    }
}

/// One-step successor distribution.
#[derive(Clone, Debug)]
pub enum StepDistribution<'p, V> {
    /// Weighted successors; weights sum to one.
    Finite(Vec<(V, Configuration<'p, V>)>),
    /// Image of `dist` under `r ↦ base[var ↦ r]`.
    Pushforward { var: VarId, dist: &'p Dist, base: Configuration<'p, V> },
}

impl<'p, V: Scalar> StepDistribution<'p, V> {
    fn dirac(c: Configuration<'p, V>) -> Self {
        StepDistribution::Finite(vec![(V::one(), c)])
    }

    pub fn is_dirac(&self) -> bool {
        matches!(self, StepDistribution::Finite(v) if v.len() == 1 && v[0].0 == V::one())
    }

    /// Successor for the drawn value `r` of a pushforward.
    pub fn build(&self, r: V) -> Option<Configuration<'p, V>> {
        match self {
            StepDistribution::Pushforward { var, base, .. } => {
                let mut c = base.clone();
                c.gamma.set(*var, r);
                Some(c)
            }
            StepDistribution::Finite(_) => None,
        }
    }

    /// Expands a finite-support pushforward into weighted successors.
    pub fn discrete_outcomes(&self) -> Option<Vec<(V, Configuration<'p, V>)>> {
        match self {
            StepDistribution::Finite(v) => Some(v.clone()),
            StepDistribution::Pushforward { dist: Dist::Discrete(items), .. } => Some(
                items
                    .iter()
                    .map(|(v, p)| (V::from_const(p), self.build(V::from_const(v)).expect("pushforward")))
                    .collect(),
            ),
            StepDistribution::Pushforward { .. } => None,
        }
    }
}

pub fn eval_expr<V: Scalar>(gamma: &Valuation<V>, e: &Expr) -> V {
    match e {
        Expr::Var(v) => gamma.get(*v),
        Expr::Const(c) => V::from_const(c),
        Expr::Add(a, b) => eval_expr(gamma, a).add(&eval_expr(gamma, b)),
        Expr::Mul(a, b) => eval_expr(gamma, a).mul(&eval_expr(gamma, b)),
    }
}

pub fn eval_cond<V: Scalar>(gamma: &Valuation<V>, c: &Cond) -> bool {
    match c {
        Cond::True => true,
        Cond::Not(c) => !eval_cond(gamma, c),
        Cond::And(a, b) => eval_cond(gamma, a) && eval_cond(gamma, b),
        Cond::Le(a, b) => eval_expr(gamma, a) <= eval_expr(gamma, b),
    }
}

fn body(program: &Program, f: FuncId) -> &Stmt {
    program.funcs.get(f.index()).map(|f| &f.body).unwrap_or_else(|| panic!("call to unknown function #{}", f.0))
}

/// The transition relation, one rule per statement/continuation shape.
pub fn step<'p, V: Scalar>(program: &'p Program, sigma: &Configuration<'p, V>) -> StepDistribution<'p, V> {
    use StepDistribution as D;
    match &sigma.stmt.kind {
        StmtKind::Skip => match sigma.kont.frame() {
            None => D::dirac(sigma.clone()),
            Some(Frame::Loop { stmt, next }) => {
                let StmtKind::While(cond, body) = &stmt.kind else { unreachable!("loop frame holds a while") };
                if eval_cond(&sigma.gamma, cond) {
                    D::dirac(sigma.with(body, sigma.kont.clone()))
                } else {
                    D::dirac(sigma.with(&SKIP, next.clone()))
                }
            }
            Some(Frame::Seq { stmt, next }) => D::dirac(sigma.with(stmt, next.clone())),
        },
        StmtKind::Tick(c) => {
            let mut next = sigma.with(&SKIP, sigma.kont.clone());
            next.alpha = next.alpha.add(&V::from_const(c));
            D::dirac(next)
        }
        StmtKind::Assign(x, e) => {
            let mut next = sigma.with(&SKIP, sigma.kont.clone());
            next.gamma.set(*x, eval_expr(&sigma.gamma, e));
            D::dirac(next)
        }
        StmtKind::Sample(x, dist) => D::Pushforward { var: *x, dist, base: sigma.with(&SKIP, sigma.kont.clone()) },
        StmtKind::Call(f) => D::dirac(sigma.with(body(program, *f), sigma.kont.clone())),
        StmtKind::Prob(p, s1, s2) => {
            let p = V::from_const(p);
            let q = V::one().sub(&p);
            D::Finite(vec![(p, sigma.with(s1, sigma.kont.clone())), (q, sigma.with(s2, sigma.kont.clone()))])
        }
        StmtKind::If(c, s1, s2) => {
            let s = if eval_cond(&sigma.gamma, c) { s1 } else { s2 };
            D::dirac(sigma.with(s, sigma.kont.clone()))
        }
        StmtKind::While(..) => D::dirac(sigma.with(&SKIP, sigma.kont.push_loop(sigma.stmt))),
        StmtKind::Seq(s1, s2) => D::dirac(sigma.with(s1, sigma.kont.push_seq(s2))),
    }
}

/// Draws a value from `dist`: inverse CDF for uniform, categorical otherwise.
pub fn sample_dist<R: Rng + ?Sized>(rng: &mut R, dist: &Dist) -> f64 {
    match dist {
        Dist::Uniform { lo, hi } => {
            let u: f64 = rng.gen();
            lo.approx() + u * (hi.approx() - lo.approx())
        }
        Dist::Discrete(items) => {
            let u: f64 = rng.gen();
            categorical(u, items.iter().map(|(_, p)| p.approx()))
                .map(|i| items[i].0.approx())
                .expect("discrete distribution with empty support")
        }
    }
}

/// Index of the first cumulative weight exceeding `u`, falling back to the
/// last positive weight to absorb rounding.
fn categorical(u: f64, weights: impl Iterator<Item = f64>) -> Option<usize> {
    let mut acc = 0.0;
    let mut last = None;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            acc += w;
            last = Some(i);
            if u < acc {
                return Some(i);
            }
        }
    }
    last
}

/// Draws one successor of `sigma`.
pub fn sample_step<'p, R: Rng + ?Sized>(
    rng: &mut R,
    program: &'p Program,
    sigma: &Configuration<'p, f64>,
) -> Configuration<'p, f64> {
    let mut next = sigma.clone();
    advance(rng, program, &mut next);
    next
}

/// In-place [`sample_step`]; consumes the generator exactly as
/// [`sample_step`] does.
pub fn advance<'p, R: Rng + ?Sized>(rng: &mut R, program: &'p Program, sigma: &mut Configuration<'p, f64>) {
    match &sigma.stmt.kind {
        StmtKind::Skip => match sigma.kont.frame() {
            None => {}
            Some(Frame::Loop { stmt, next }) => {
                let StmtKind::While(cond, body) = &stmt.kind else { unreachable!("loop frame holds a while") };
                if eval_cond(&sigma.gamma, cond) {
                    sigma.stmt = body;
                } else {
                    let next = next.clone();
                    sigma.stmt = &SKIP;
                    sigma.kont = next;
                }
            }
            Some(Frame::Seq { stmt, next }) => {
                let (stmt, next) = (*stmt, next.clone());
                sigma.stmt = stmt;
                sigma.kont = next;
            }
        },
        StmtKind::Tick(c) => {
            sigma.alpha += c.approx();
            sigma.stmt = &SKIP;
        }
        StmtKind::Assign(x, e) => {
            let v = eval_expr(&sigma.gamma, e);
            sigma.gamma.set(*x, v);
            sigma.stmt = &SKIP;
        }
        StmtKind::Sample(x, dist) => {
            let v = sample_dist(rng, dist);
            sigma.gamma.set(*x, v);
            sigma.stmt = &SKIP;
        }
        StmtKind::Call(f) => sigma.stmt = body(program, *f),
        StmtKind::Prob(p, s1, s2) => {
            let u: f64 = rng.gen();
            sigma.stmt = if u < p.approx() { s1 } else { s2 };
        }
        StmtKind::If(c, s1, s2) => {
            sigma.stmt = if eval_cond(&sigma.gamma, c) { s1 } else { s2 };
        }
        StmtKind::While(..) => {
            sigma.kont = sigma.kont.push_loop(sigma.stmt);
            sigma.stmt = &SKIP;
        }
        StmtKind::Seq(s1, s2) => {
            sigma.kont = sigma.kont.push_seq(s2);
            sigma.stmt = s1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{int, ratio};
    use crate::surface::parse;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn val(xs: &[f64]) -> Valuation<f64> {
        Valuation(xs.to_vec())
    }

    #[test]
    fn expression_evaluation() {
        let (x, t) = (VarId(0), VarId(1));
        let e = Expr::add(Expr::var(x), Expr::int(3));
        assert_eq!(eval_expr(&val(&[2.0]), &e), 5.0);
        assert_eq!(eval_expr(&val(&[2.0, -1.0]), &Expr::mul(Expr::var(x), Expr::var(t))), -2.0);
        let e1 = Expr::add(Expr::var(x), Expr::int(1));
        assert_eq!(eval_expr(&Valuation::<f64>(vec![]), &e1), 1.0);
    }

    #[test]
    fn condition_evaluation() {
        let (x, d) = (VarId(0), VarId(1));
        let lt = Cond::Not(Box::new(Cond::Le(Expr::var(d), Expr::var(x))));
        assert!(eval_cond(&val(&[0.0, 3.0]), &lt));
        assert!(eval_cond(&Valuation::<f64>(vec![]), &Cond::True));
        assert!(!eval_cond(&val(&[5.0, 3.0]), &lt));
    }

    #[test]
    fn tick_and_prob_rules() {
        let (p, _) = parse("func main() { if prob(1/4) { tick(1) } else { tick(-2) } }").unwrap();
        let init: Configuration<Rational> = Configuration::initial(&p, Valuation::zeros(0));
        let StepDistribution::Finite(succ) = step(&p, &init) else { panic!() };
        assert_eq!(succ.len(), 2);
        assert_eq!(succ[0].0, ratio(1, 4));
        assert_eq!(succ[1].0, ratio(3, 4));
        let after_tick = step(&p, &succ[1].1);
        assert!(after_tick.is_dirac());
        let StepDistribution::Finite(t) = after_tick else { panic!() };
        assert_eq!(t[0].1.alpha, int(-2));
        assert!(t[0].1.is_terminal());
        let again = step(&p, &t[0].1);
        let StepDistribution::Finite(a) = again else { panic!() };
        assert_eq!(a[0].1, t[0].1);
    }

    #[test]
    fn sample_rule_is_a_pushforward() {
        let (p, _) = parse("vars t; func main() { t ~ uniform(-1, 2) }").unwrap();
        let init: Configuration<f64> = Configuration::initial(&p, Valuation::zeros(1));
        let d = step(&p, &init);
        let StepDistribution::Pushforward { var, base, .. } = &d else { panic!() };
        assert_eq!(*var, VarId(0));
        assert!(base.is_terminal());
        let built = d.build(1.5).unwrap();
        assert_eq!(built.gamma.get(VarId(0)), 1.5);
    }

    #[test]
    fn loop_rules_follow_continuations() {
        let (p, _) = parse("vars x; func main() { while x < 2 { x := x + 1 }; tick(1) }").unwrap();
        let mut c: Configuration<Rational> = Configuration::initial(&p, Valuation::zeros(1));
        let mut steps = 0;
        while !c.is_terminal() {
            let StepDistribution::Finite(mut s) = step(&p, &c) else { panic!() };
            assert_eq!(s.len(), 1);
            c = s.pop().unwrap().1;
            steps += 1;
        }
        assert_eq!(c.gamma.get(VarId(0)), int(2));
        assert_eq!(c.alpha, int(1));
        // seq, while, 2 x (skip-loop, assign), skip-loop exit, skip-seq, tick
        assert_eq!(steps, 9);
    }

    #[test]
    fn in_place_advance_matches_step() {
        let (p, _) =
            parse("vars x, t; func main() { while x < 5 { t ~ discrete(1: 1/2, 2: 1/2); x := x + t; tick(1) } }")
                .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut c = Configuration::initial(&p, Valuation::zeros(2));
        for _ in 0..200 {
            let expected = step(&p, &c);
            let before = c.clone();
            advance(&mut rng, &p, &mut c);
            match expected {
                StepDistribution::Finite(v) => {
                    assert!(v.iter().any(|(_, s)| s.stmt.site == c.stmt.site && s.gamma == c.gamma));
                }
                StepDistribution::Pushforward { var, .. } => {
                    let r = c.gamma.get(var);
                    assert!(r == 1.0 || r == 2.0);
                    assert_eq!(before.kont.key(), c.kont.key());
                }
            }
        }
        assert!(c.is_terminal());
    }

    #[test]
    fn prob_branch_frequency() {
        let (p, _) = parse("func main() { if prob(1/2) { tick(1) } else { skip } }").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let init = Configuration::initial(&p, Valuation::zeros(0));
        let n = 100_000;
        let hits = (0..n).filter(|_| matches!(sample_step(&mut rng, &p, &init).stmt.kind, StmtKind::Tick(_))).count();
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.01, "{freq}");
    }

    #[test]
    fn uniform_sample_mean() {
        let dist = Dist::Uniform { lo: Constant::from_int(-1), hi: Constant::from_int(2) };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let mean = (0..n).map(|_| sample_dist(&mut rng, &dist)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.02, "{mean}");
    }
}
