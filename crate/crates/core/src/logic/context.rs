use std::fmt;

use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::poly::Poly;
use crate::surface::ast::{Cond, Expr, VarId};
use crate::Rational;

/// Relation of an atom's polynomial to zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Rel {
    Ge,
    Gt,
    Eq,
}

impl Rel {
    pub fn symbol(self) -> &'static str {
        match self {
            Rel::Ge => ">=",
            Rel::Gt => ">",
            Rel::Eq => "==",
        }
    }
}

/// `poly ⋈ 0`, stored with the leading coefficient scaled to `±1` (`+1` for
/// equalities) so that syntactically equal constraints compare equal.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Atom {
    poly: Poly,
    rel: Rel,
}

impl Atom {
    pub fn new(poly: Poly, rel: Rel) -> Atom {
        let scale = match poly.leading() {
            Some((m, c)) if !m.is_one() => match rel {
                Rel::Eq => c.recip(),
                _ => c.abs().recip(),
            },
            Some((_, c)) => c.abs().recip(),
            None => Rational::one(),
        };
        Atom { poly: poly.scale(&scale), rel }
    }

    pub fn ge(lhs: &Poly, rhs: &Poly) -> Atom {
        Atom::new(lhs.sub(rhs), Rel::Ge)
    }

    pub fn gt(lhs: &Poly, rhs: &Poly) -> Atom {
        Atom::new(lhs.sub(rhs), Rel::Gt)
    }

    pub fn eq(lhs: &Poly, rhs: &Poly) -> Atom {
        Atom::new(lhs.sub(rhs), Rel::Eq)
    }

    pub fn falsum() -> Atom {
        Atom { poly: Poly::int(-1), rel: Rel::Ge }
    }

    pub fn poly(&self) -> &Poly {
        &self.poly
    }

    pub fn rel(&self) -> Rel {
        self.rel
    }

    /// `Some(truth)` for atoms without variables.
    pub fn constant_truth(&self) -> Option<bool> {
        let c = self.poly.as_constant()?;
        Some(holds(&c, self.rel))
    }

    pub fn holds_exact(&self, vals: &[Rational]) -> bool {
        holds(&self.poly.eval_exact(vals), self.rel)
    }

    pub fn holds_f64(&self, vals: &[f64], tol: f64) -> bool {
        let v = self.poly.compile().eval(vals);
        match self.rel {
            Rel::Ge => v >= -tol,
            Rel::Gt => v > -tol,
            Rel::Eq => v.abs() <= tol,
        }
    }

    pub fn mentions(&self, v: VarId) -> bool {
        self.poly.mentions(v)
    }

    pub fn substitute_poly(&self, v: VarId, replacement: &Poly) -> Atom {
        Atom::new(self.poly.substitute_poly(v, replacement), self.rel)
    }

    pub fn display<'a>(&'a self, names: &'a [String]) -> impl fmt::Display + 'a {
        AtomDisplay { atom: self, names }
    }
}

fn holds(v: &Rational, rel: Rel) -> bool {
    match rel {
        Rel::Ge => !v.is_negative(),
        Rel::Gt => v.is_positive(),
        Rel::Eq => v.is_zero(),
    }
}

struct AtomDisplay<'a> {
    atom: &'a Atom,
    names: &'a [String],
}

impl fmt::Display for AtomDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} 0", self.atom.poly.display(self.names), self.atom.rel.symbol())
    }
}

/// Conjunction of polynomial atoms; the empty conjunction is `tt`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct LogicalContext {
    atoms: Vec<Atom>,
}

impl LogicalContext {
    pub fn tt() -> LogicalContext {
        LogicalContext::default()
    }

    pub fn from_atoms(atoms: impl IntoIterator<Item = Atom>) -> LogicalContext {
        let mut ctx = LogicalContext::tt();
        for a in atoms {
            ctx.push(a);
        }
        ctx
    }

    /// Adds an atom; trivially true atoms and duplicates are skipped.
    pub fn push(&mut self, atom: Atom) {
        if atom.constant_truth() == Some(true) || self.atoms.contains(&atom) {
            return;
        }
        self.atoms.push(atom);
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn is_tt(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn and(&self, other: &LogicalContext) -> LogicalContext {
        let mut out = self.clone();
        for a in &other.atoms {
            out.push(a.clone());
        }
        out
    }

    /// Conjoins the atoms implied by `cond` (or by its negation when
    /// `positive` is false). Disjunctive shapes contribute nothing.
    pub fn and_cond(&self, cond: &Cond, positive: bool) -> LogicalContext {
        let mut out = self.clone();
        for a in cond_atoms(cond, positive) {
            out.push(a);
        }
        out
    }

    pub fn holds_exact(&self, vals: &[Rational]) -> bool {
        self.atoms.iter().all(|a| a.holds_exact(vals))
    }

    pub fn holds_f64(&self, vals: &[f64], tol: f64) -> bool {
        self.atoms.iter().all(|a| a.holds_f64(vals, tol))
    }

    pub fn mentions(&self, v: VarId) -> bool {
        self.atoms.iter().any(|a| a.mentions(v))
    }

    pub fn without_var(&self, v: VarId) -> LogicalContext {
        LogicalContext { atoms: self.atoms.iter().filter(|a| !a.mentions(v)).cloned().collect() }
    }

    pub fn substitute_poly(&self, v: VarId, replacement: &Poly) -> LogicalContext {
        LogicalContext::from_atoms(self.atoms.iter().map(|a| a.substitute_poly(v, replacement)))
    }

    /// `[E/x]Γ`.
    pub fn substitute(&self, v: VarId, e: &Expr) -> LogicalContext {
        self.substitute_poly(v, &Poly::from_expr(e))
    }

    pub fn is_trivially_false(&self) -> bool {
        self.atoms.iter().any(|a| a.constant_truth() == Some(false))
    }

    pub fn vars(&self) -> Vec<VarId> {
        let mut vs: Vec<VarId> = self.atoms.iter().flat_map(|a| a.poly.vars()).collect();
        vs.sort();
        vs.dedup();
        vs
    }

    pub fn max_degree(&self) -> u32 {
        self.atoms.iter().map(|a| a.poly.degree()).max().unwrap_or(0)
    }

    pub fn display<'a>(&'a self, names: &'a [String]) -> impl fmt::Display + 'a {
        CtxDisplay { ctx: self, names }
    }
}

struct CtxDisplay<'a> {
    ctx: &'a LogicalContext,
    names: &'a [String],
}

impl fmt::Display for CtxDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ctx.atoms.is_empty() {
            return write!(f, "true");
        }
        for (i, a) in self.ctx.atoms.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}", a.display(self.names))?;
        }
        Ok(())
    }
}

/// Atoms implied by `cond` (or `¬cond`). Exact for conjunctions of
/// comparisons; disjunctions are dropped.
pub fn cond_atoms(cond: &Cond, positive: bool) -> Vec<Atom> {
    match (cond, positive) {
        (Cond::True, true) => vec![],
        (Cond::True, false) => vec![Atom::falsum()],
        (Cond::Le(a, b), true) => vec![Atom::ge(&Poly::from_expr(b), &Poly::from_expr(a))],
        (Cond::Le(a, b), false) => vec![Atom::gt(&Poly::from_expr(a), &Poly::from_expr(b))],
        (Cond::Not(c), p) => cond_atoms(c, !p),
        (Cond::And(a, b), true) => {
            let mut out = cond_atoms(a, true);
            out.extend(cond_atoms(b, true));
            out
        }
        (Cond::And(_, _), false) => vec![],
    }
}
