//! Exact-rational multivariate polynomials over program variables.
//!
//! A [`Poly`] is a sparse map from [`Monomial`] to nonzero rational
//! coefficient, kept in graded-lexicographic order. Two polynomials are equal
//! exactly when their maps are identical, so structural equality is semantic
//! equality.

mod moments;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Signed, Zero};

use crate::num::{f64_to_rational, fmt_rational, rational_to_f64};
use crate::surface::ast::{Expr, VarId};
use crate::Rational;

pub use moments::{expectation, moments, MomentError, MomentTable};

/// Product of variables with positive exponents, sorted by variable.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Monomial(Vec<(VarId, u32)>);

impl Monomial {
    pub fn one() -> Monomial {
        Monomial(Vec::new())
    }

    pub fn var(v: VarId) -> Monomial {
        Monomial(vec![(v, 1)])
    }

    pub fn from_powers(mut powers: Vec<(VarId, u32)>) -> Monomial {
        powers.retain(|&(_, e)| e > 0);
        powers.sort_by_key(|&(v, _)| v);
        let mut merged: Vec<(VarId, u32)> = Vec::with_capacity(powers.len());
        for (v, e) in powers {
            match merged.last_mut() {
                Some((lv, le)) if *lv == v => *le += e,
                _ => merged.push((v, e)),
            }
        }
        Monomial(merged)
    }

    pub fn powers(&self) -> &[(VarId, u32)] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&(_, e)| e).sum()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn exponent(&self, v: VarId) -> u32 {
        self.0.iter().find(|&&(w, _)| w == v).map_or(0, |&(_, e)| e)
    }

    /// The single variable of a degree-one monomial.
    pub fn as_var(&self) -> Option<VarId> {
        match self.0.as_slice() {
            [(v, 1)] => Some(*v),
            _ => None,
        }
    }

    /// Every exponent even (including the constant monomial).
    pub fn is_square(&self) -> bool {
        self.0.iter().all(|&(_, e)| e % 2 == 0)
    }

    pub fn without(&self, v: VarId) -> Monomial {
        Monomial(self.0.iter().copied().filter(|&(w, _)| w != v).collect())
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut all = self.0.clone();
        all.extend_from_slice(&other.0);
        Monomial::from_powers(all)
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree().cmp(&other.degree()).then_with(|| {
            for (a, b) in self.0.iter().zip(other.0.iter()) {
                if a.0 != b.0 {
                    // the monomial carrying the smaller variable is larger in lex order
                    return b.0.cmp(&a.0);
                }
                if a.1 != b.1 {
                    return a.1.cmp(&b.1);
                }
            }
            self.0.len().cmp(&other.0.len())
        })
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Poly {
    terms: BTreeMap<Monomial, Rational>,
}

impl Poly {
    pub fn zero() -> Poly {
        Poly::default()
    }

    pub fn constant(c: Rational) -> Poly {
        let mut p = Poly::zero();
        p.add_term(Monomial::one(), c);
        p
    }

    pub fn int(c: i64) -> Poly {
        Poly::constant(crate::num::int(c))
    }

    pub fn var(v: VarId) -> Poly {
        Poly::monomial(Monomial::var(v), Rational::one())
    }

    pub fn monomial(m: Monomial, c: Rational) -> Poly {
        let mut p = Poly::zero();
        p.add_term(m, c);
        p
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (Monomial, Rational)>) -> Poly {
        let mut p = Poly::zero();
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    pub fn from_expr(e: &Expr) -> Poly {
        match e {
            Expr::Var(v) => Poly::var(*v),
            Expr::Const(c) => Poly::constant(c.exact().clone()),
            Expr::Add(a, b) => Poly::from_expr(a).add(&Poly::from_expr(b)),
            Expr::Mul(a, b) => Poly::from_expr(a).mul(&Poly::from_expr(b)),
        }
    }

    fn add_term(&mut self, m: Monomial, c: Rational) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&m) {
            Some(existing) => {
                *existing += c;
                if existing.is_zero() {
                    self.terms.remove(&m);
                }
            }
            None => {
                self.terms.insert(m, c);
            }
        }
    }

    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&Monomial, &Rational)> + '_ {
        self.terms.iter()
    }

    /// Number of terms; `is_zero` is the emptiness test.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, m: &Monomial) -> Rational {
        self.terms.get(m).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn constant_term(&self) -> Rational {
        self.coeff(&Monomial::one())
    }

    /// `Some(c)` when the polynomial is the constant `c`.
    pub fn as_constant(&self) -> Option<Rational> {
        match self.terms.len() {
            0 => Some(Rational::zero()),
            1 => self.terms.get(&Monomial::one()).cloned(),
            _ => None,
        }
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn degree_in(&self, v: VarId) -> u32 {
        self.terms.keys().map(|m| m.exponent(v)).max().unwrap_or(0)
    }

    pub fn is_linear(&self) -> bool {
        self.degree() <= 1
    }

    pub fn mentions(&self, v: VarId) -> bool {
        self.terms.keys().any(|m| m.exponent(v) > 0)
    }

    pub fn vars(&self) -> Vec<VarId> {
        let mut vs: Vec<VarId> = self.terms.keys().flat_map(|m| m.0.iter().map(|&(v, _)| v)).collect();
        vs.sort();
        vs.dedup();
        vs
    }

    /// Leading (graded-lex largest) term.
    pub fn leading(&self) -> Option<(&Monomial, &Rational)> {
        self.terms.iter().next_back()
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), -c.clone());
        }
        out
    }

    pub fn neg(&self) -> Poly {
        self.scale(&-Rational::one())
    }

    pub fn scale(&self, k: &Rational) -> Poly {
        if k.is_zero() {
            return Poly::zero();
        }
        Poly { terms: self.terms.iter().map(|(m, c)| (m.clone(), c * k)).collect() }
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                out.add_term(m1.mul(m2), c1 * c2);
            }
        }
        out
    }

    pub fn pow(&self, k: u32) -> Poly {
        let mut acc = Poly::int(1);
        for _ in 0..k {
            acc = acc.mul(self);
        }
        acc
    }

    /// `self + c`.
    pub fn add_const(&self, c: &Rational) -> Poly {
        let mut out = self.clone();
        out.add_term(Monomial::one(), c.clone());
        out
    }

    /// `p * q1 + (1 - p) * q2`.
    pub fn affine(p: &Rational, q1: &Poly, q2: &Poly) -> Poly {
        q1.scale(p).add(&q2.scale(&(Rational::one() - p)))
    }

    /// Replaces every occurrence of `x` by `replacement`, expanding the result.
    pub fn substitute_poly(&self, x: VarId, replacement: &Poly) -> Poly {
        if !self.mentions(x) {
            return self.clone();
        }
        let mut powers: Vec<Poly> = vec![Poly::int(1)];
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            let e = m.exponent(x) as usize;
            while powers.len() <= e {
                let next = powers.last().unwrap().mul(replacement);
                powers.push(next);
            }
            let rest = Poly::monomial(m.without(x), c.clone());
            out = out.add(&rest.mul(&powers[e]));
        }
        out
    }

    /// `[E/x]Q`.
    pub fn substitute(&self, x: VarId, e: &Expr) -> Poly {
        self.substitute_poly(x, &Poly::from_expr(e))
    }

    /// Splits off the part linear in `x`: `self = a*x + rest` with `a`
    /// constant and `rest` free of `x`, when that shape holds.
    pub fn as_affine_in(&self, x: VarId) -> Option<(Rational, Poly)> {
        let mut a = Rational::zero();
        let mut rest = Poly::zero();
        for (m, c) in &self.terms {
            match m.exponent(x) {
                0 => rest.add_term(m.clone(), c.clone()),
                1 if m.degree() == 1 => a = c.clone(),
                _ => return None,
            }
        }
        Some((a, rest))
    }

    /// Exact evaluation; variables past the end of `vals` read as zero.
    pub fn eval_exact(&self, vals: &[Rational]) -> Rational {
        let mut acc = Rational::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for &(v, e) in &m.0 {
                match vals.get(v.index()) {
                    Some(x) => {
                        for _ in 0..e {
                            t *= x;
                        }
                    }
                    None => {
                        t = Rational::zero();
                        break;
                    }
                }
            }
            acc += t;
        }
        acc
    }

    /// Exact rational evaluation at a binary64 valuation, converted back to
    /// binary64 at the end.
    pub fn eval(&self, vals: &[f64]) -> f64 {
        let exact: Vec<Rational> = vals.iter().map(|&v| f64_to_rational(v)).collect();
        rational_to_f64(&self.eval_exact(&exact))
    }

    /// Binary64 form for hot loops.
    pub fn compile(&self) -> CompiledPoly {
        CompiledPoly {
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (rational_to_f64(c), m.0.iter().map(|&(v, e)| (v.index(), e)).collect()))
                .collect(),
        }
    }

    pub fn display<'a>(&'a self, names: &'a [String]) -> PolyDisplay<'a> {
        PolyDisplay { poly: self, names }
    }

    /// Largest absolute coefficient.
    pub fn max_abs_coeff(&self) -> Rational {
        self.terms.values().map(|c| c.abs()).max().unwrap_or_else(Rational::zero)
    }
}

/// A polynomial with binary64 coefficients for fast evaluation.
#[derive(Clone, Debug, Default)]
pub struct CompiledPoly {
    terms: Vec<(f64, Vec<(usize, u32)>)>,
}

impl CompiledPoly {
    pub fn eval(&self, vals: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (c, powers) in &self.terms {
            let mut t = *c;
            for &(v, e) in powers {
                let x = vals.get(v).copied().unwrap_or(0.0);
                t *= x.powi(e as i32);
            }
            acc += t;
        }
        acc
    }
}

pub struct PolyDisplay<'a> {
    poly: &'a Poly,
    names: &'a [String],
}

impl fmt::Display for PolyDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.poly.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in self.poly.terms.iter().rev() {
            let neg = c.is_negative();
            let mag = c.abs();
            if first {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { "-" } else { "+" })?;
            }
            first = false;
            let coeff_shown = !mag.is_one() || m.is_one();
            if coeff_shown {
                write!(f, "{}", fmt_rational(&mag))?;
            }
            for (i, &(v, e)) in m.0.iter().enumerate() {
                if coeff_shown || i > 0 {
                    write!(f, "*")?;
                }
                let name = self.names.get(v.index()).map(String::as_str).unwrap_or("?");
                if e == 1 {
                    write!(f, "{name}")?;
                } else {
                    write!(f, "{name}^{e}")?;
                }
            }
        }
        Ok(())
    }
}
