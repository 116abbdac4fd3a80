use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::logic::LogicalContext;
use crate::poly::Poly;
use crate::Constant;

/// Index into [`Program::vars`] (or, for annotation-only names, past its end).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct VarId(pub u32);

/// Index into [`Program::funcs`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct FuncId(pub u32);

/// Preorder number of a statement node, unique across the whole program.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct SiteId(pub u32);

impl VarId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl FuncId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for SiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

/// 1-based source position.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Var(VarId),
    Const(Constant),
    Add(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(v: VarId) -> Expr {
        Expr::Var(v)
    }

    pub fn int(v: i64) -> Expr {
        Expr::Const(Constant::from_int(v))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::Add(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::Mul(Box::new(a), Box::new(b))
    }

    pub fn for_each_var(&self, f: &mut impl FnMut(VarId)) {
        match self {
            Expr::Var(v) => f(*v),
            Expr::Const(_) => {}
            Expr::Add(a, b) | Expr::Mul(a, b) => {
                a.for_each_var(f);
                b.for_each_var(f);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Cond {
    True,
    Not(Box<Cond>),
    And(Box<Cond>, Box<Cond>),
    /// `lhs <= rhs`
    Le(Expr, Expr),
}

impl Cond {
    pub fn for_each_var(&self, f: &mut impl FnMut(VarId)) {
        match self {
            Cond::True => {}
            Cond::Not(c) => c.for_each_var(f),
            Cond::And(a, b) => {
                a.for_each_var(f);
                b.for_each_var(f);
            }
            Cond::Le(a, b) => {
                a.for_each_var(f);
                b.for_each_var(f);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Dist {
    /// Continuous uniform on `[lo, hi]`, `lo < hi`.
    Uniform { lo: Constant, hi: Constant },
    /// Finite support: `(value, probability)` pairs, probabilities summing to one.
    Discrete(Vec<(Constant, Constant)>),
}

impl Dist {
    pub fn is_continuous(&self) -> bool {
        matches!(self, Dist::Uniform { .. })
    }

    /// Closed hull of the support.
    pub fn support_bounds(&self) -> (crate::Rational, crate::Rational) {
        match self {
            Dist::Uniform { lo, hi } => (lo.exact().clone(), hi.exact().clone()),
            Dist::Discrete(items) => {
                let mut it = items.iter().filter(|(_, p)| !p.is_zero()).map(|(v, _)| v.exact());
                let first = it.next().expect("discrete distribution with empty support").clone();
                it.fold((first.clone(), first), |(lo, hi), v| {
                    (if v < &lo { v.clone() } else { lo }, if v > &hi { v.clone() } else { hi })
                })
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Stmt {
    pub site: SiteId,
    pub span: Span,
    pub kind: StmtKind,
}

/// Structural equality: spans are ignored, site numbers are compared.
impl PartialEq for Stmt {
    fn eq(&self, other: &Self) -> bool {
        self.site == other.site && self.kind == other.kind
    }
}

impl Eq for Stmt {}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StmtKind {
    Skip,
    Tick(Constant),
    Assign(VarId, Expr),
    Sample(VarId, Dist),
    Call(FuncId),
    While(Cond, Box<Stmt>),
    Prob(Constant, Box<Stmt>, Box<Stmt>),
    If(Cond, Box<Stmt>, Box<Stmt>),
    Seq(Box<Stmt>, Box<Stmt>),
}

impl Stmt {
    pub fn new(kind: StmtKind) -> Stmt {
        Stmt { site: SiteId(0), span: Span::default(), kind }
    }

    pub fn at(kind: StmtKind, span: Span) -> Stmt {
        Stmt { site: SiteId(0), span, kind }
    }

    /// Preorder traversal.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Stmt)) {
        f(self);
        match &self.kind {
            StmtKind::While(_, body) => body.visit(f),
            StmtKind::Prob(_, a, b) | StmtKind::If(_, a, b) | StmtKind::Seq(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            _ => {}
        }
    }

    fn visit_mut(&mut self, f: &mut impl FnMut(&mut Stmt)) {
        f(self);
        match &mut self.kind {
            StmtKind::While(_, body) => body.visit_mut(f),
            StmtKind::Prob(_, a, b) | StmtKind::If(_, a, b) | StmtKind::Seq(a, b) => {
                a.visit_mut(f);
                b.visit_mut(f);
            }
            _ => {}
        }
    }

    pub fn is_skip(&self) -> bool {
        matches!(self.kind, StmtKind::Skip)
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            StmtKind::Skip => "skip",
            StmtKind::Tick(_) => "tick",
            StmtKind::Assign(..) => "assign",
            StmtKind::Sample(..) => "sample",
            StmtKind::Call(_) => "call",
            StmtKind::While(..) => "while",
            StmtKind::Prob(..) => "prob",
            StmtKind::If(..) => "if",
            StmtKind::Seq(..) => "seq",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    pub body: Stmt,
}

/// A parsed program: declared variables, a function table, `main`, and the
/// precondition over the initial valuation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub vars: Vec<String>,
    pub funcs: Vec<Function>,
    pub main: Stmt,
    pub precondition: LogicalContext,
}

impl Program {
    pub fn var_id(&self, name: &str) -> Option<VarId> {
        self.vars.iter().position(|v| v == name).map(|i| VarId(i as u32))
    }

    pub fn func_id(&self, name: &str) -> Option<FuncId> {
        self.funcs.iter().position(|f| f.name == name).map(|i| FuncId(i as u32))
    }

    pub fn var_name(&self, v: VarId) -> &str {
        self.vars.get(v.index()).map(String::as_str).unwrap_or("?")
    }

    pub fn body(&self, f: FuncId) -> &Stmt {
        &self.funcs[f.index()].body
    }

    /// Renumbers every statement in preorder: functions in table order, then
    /// `main`. Returns the old-to-new site map.
    pub fn number_sites(&mut self) -> std::collections::HashMap<SiteId, SiteId> {
        let mut next = 0u32;
        let mut map = std::collections::HashMap::new();
        let mut assign = |s: &mut Stmt| {
            map.insert(s.site, SiteId(next));
            s.site = SiteId(next);
            next += 1;
        };
        for f in &mut self.funcs {
            f.body.visit_mut(&mut assign);
        }
        self.main.visit_mut(&mut assign);
        map
    }

    /// Every statement with the function that owns it (`None` for `main`).
    pub fn statements(&self) -> Vec<(Option<FuncId>, &Stmt)> {
        let mut out = Vec::new();
        for (i, f) in self.funcs.iter().enumerate() {
            f.body.visit(&mut |s| out.push((Some(FuncId(i as u32)), s)));
        }
        self.main.visit(&mut |s| out.push((None, s)));
        out
    }

    pub fn find_site(&self, site: SiteId) -> Option<&Stmt> {
        self.statements().into_iter().map(|(_, s)| s).find(|s| s.site == site)
    }

    pub fn site_count(&self) -> usize {
        self.statements().len()
    }
}

/// A function specification `{pre_ctx; pre} f {post_ctx; post}`.
#[derive(Clone, Debug)]
pub struct FuncSpec {
    pub pre_ctx: LogicalContext,
    pub pre: Poly,
    pub post_ctx: LogicalContext,
    pub post: Poly,
    pub span: Span,
}

/// A `(context, potential)` pair attached to a program point.
#[derive(Clone, Debug)]
pub struct Assertion {
    pub ctx: LogicalContext,
    pub potential: Poly,
    pub span: Span,
}

/// Spans are ignored.
impl PartialEq for FuncSpec {
    fn eq(&self, other: &Self) -> bool {
        (&self.pre_ctx, &self.pre, &self.post_ctx, &self.post)
            == (&other.pre_ctx, &other.pre, &other.post_ctx, &other.post)
    }
}

impl Eq for FuncSpec {}

/// Spans are ignored.
impl PartialEq for Assertion {
    fn eq(&self, other: &Self) -> bool {
        self.ctx == other.ctx && self.potential == other.potential
    }
}

impl Eq for Assertion {}

/// Everything the checker needs beyond the program text.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AnnotationSet {
    pub specs: BTreeMap<FuncId, Vec<FuncSpec>>,
    pub loop_invariants: BTreeMap<SiteId, Assertion>,
    pub weaken_sites: BTreeMap<SiteId, Assertion>,
    /// Names used in annotations that are not declared program variables;
    /// they are given ids past the declared range.
    pub unbound: Vec<(String, Span)>,
}

impl AnnotationSet {
    /// Shifts every in-body annotation (loop invariants and weakening points)
    /// by `c`. Function specifications are left untouched.
    pub fn shifted(&self, c: &crate::Rational) -> AnnotationSet {
        let shift = |a: &Assertion| Assertion { ctx: a.ctx.clone(), potential: a.potential.add_const(c), span: a.span };
        AnnotationSet {
            specs: self.specs.clone(),
            loop_invariants: self.loop_invariants.iter().map(|(k, a)| (*k, shift(a))).collect(),
            weaken_sites: self.weaken_sites.iter().map(|(k, a)| (*k, shift(a))).collect(),
            unbound: self.unbound.clone(),
        }
    }

    pub fn specs_for(&self, f: FuncId) -> &[FuncSpec] {
        self.specs.get(&f).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Largest total degree over every potential in the set.
    pub fn max_degree(&self) -> u32 {
        let specs = self.specs.values().flatten().flat_map(|s| [s.pre.degree(), s.post.degree()]);
        let sites = self.loop_invariants.values().chain(self.weaken_sites.values()).map(|a| a.potential.degree());
        specs.chain(sites).max().unwrap_or(0)
    }
}
