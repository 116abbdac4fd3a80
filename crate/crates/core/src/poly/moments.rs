use num_traits::{One, Zero};
use thiserror::Error;

use super::Poly;
use crate::surface::ast::{Dist, VarId};
use crate::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MomentError {
    #[error("moment table stops at order {available}, order {needed} requested")]
    MissingOrder { needed: u32, available: u32 },
}

/// Raw moments `m_0 ..= m_k` of a distribution, `m_i = E[x^i]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MomentTable {
    pub dist: Dist,
    pub moments: Vec<Rational>,
}

impl MomentTable {
    pub fn order(&self) -> u32 {
        self.moments.len() as u32 - 1
    }

    pub fn get(&self, i: u32) -> Option<&Rational> {
        self.moments.get(i as usize)
    }
}

/// Exact moments up to order `k`.
///
/// Uniform on `[a, b]`: `(b^{i+1} - a^{i+1}) / ((i+1)(b-a))`.
/// Finite support: `sum_j p_j v_j^i`.
pub fn moments(dist: &Dist, k: u32) -> MomentTable {
    let moments = (0..=k)
        .map(|i| match dist {
            Dist::Uniform { lo, hi } => {
                let (a, b) = (lo.exact(), hi.exact());
                let n = (i + 1) as usize;
                let num = num_traits::pow(b.clone(), n) - num_traits::pow(a.clone(), n);
                num / (Rational::from_integer((i + 1).into()) * (b - a))
            }
            Dist::Discrete(items) => items
                .iter()
                .fold(Rational::zero(), |acc, (v, p)| acc + p.exact() * num_traits::pow(v.exact().clone(), i as usize)),
        })
        .collect();
    MomentTable { dist: dist.clone(), moments }
}

/// `E_{x ~ D}[q]` by linearity: each `c * x^i * M` becomes `c * m_i * M`.
pub fn expectation(q: &Poly, x: VarId, table: &MomentTable) -> Result<Poly, MomentError> {
    let needed = q.degree_in(x);
    if needed > table.order() {
        return Err(MomentError::MissingOrder { needed, available: table.order() });
    }
    let mut out = Poly::zero();
    for (m, c) in q.terms() {
        let i = m.exponent(x);
        let mi = if i == 0 { Rational::one() } else { table.moments[i as usize].clone() };
        out = out.add(&Poly::monomial(m.without(x), c * mi));
    }
    Ok(out)
}

impl Poly {
    /// Expectation over `x ~ dist`, computing exactly as many moments as needed.
    pub fn expect_over(&self, x: VarId, dist: &Dist) -> Poly {
        let table = moments(dist, self.degree_in(x));
        expectation(self, x, &table).expect("table built to the required order")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::{int, ratio};
    use crate::Constant;

    fn uniform(a: i64, b: i64) -> Dist {
        Dist::Uniform { lo: Constant::from_int(a), hi: Constant::from_int(b) }
    }

    #[test]
    fn uniform_minus_one_two() {
        let t = moments(&uniform(-1, 2), 3);
        assert_eq!(t.moments, vec![int(1), ratio(1, 2), int(1), ratio(5, 4)]);
        let t4 = moments(&uniform(-1, 2), 4);
        assert_eq!(t4.moments[4], ratio(11, 5));
    }

    #[test]
    fn discrete_moments() {
        let d = Dist::Discrete(vec![
            (Constant::from_int(1), Constant::new(ratio(1, 2))),
            (Constant::from_int(3), Constant::new(ratio(1, 2))),
        ]);
        let t = moments(&d, 2);
        assert_eq!(t.moments, vec![int(1), int(2), int(5)]);
    }

    #[test]
    fn worked_expectation() {
        let (x, y) = (VarId(0), VarId(1));
        let q = Poly::var(x).mul(&Poly::var(y).pow(2)).add(&Poly::var(x).pow(3).mul(&Poly::var(y)));
        let e = expectation(&q, x, &moments(&uniform(-1, 2), 3)).unwrap();
        let expected = Poly::var(y).pow(2).scale(&ratio(1, 2)).add(&Poly::var(y).scale(&ratio(5, 4)));
        assert_eq!(e, expected);
    }

    #[test]
    fn rdwalk_sample_step() {
        // E_t[2(d - x - t) + 5] = 2(d - x) + 4
        let (x, d, t) = (VarId(0), VarId(1), VarId(2));
        let post = Poly::var(d).sub(&Poly::var(x)).sub(&Poly::var(t)).scale(&int(2)).add_const(&int(5));
        let pre = post.expect_over(t, &uniform(-1, 2));
        let expected = Poly::var(d).sub(&Poly::var(x)).scale(&int(2)).add_const(&int(4));
        assert_eq!(pre, expected);
    }

    #[test]
    fn expectation_without_the_variable_is_identity() {
        let (x, y) = (VarId(0), VarId(1));
        let q = Poly::var(y).pow(3).add_const(&int(7));
        assert_eq!(expectation(&q, x, &moments(&uniform(0, 1), 0)).unwrap(), q);
    }

    #[test]
    fn missing_order_is_an_error() {
        let x = VarId(0);
        let err = expectation(&Poly::var(x).pow(3), x, &moments(&uniform(0, 1), 2)).unwrap_err();
        assert_eq!(err, MomentError::MissingOrder { needed: 3, available: 2 });
    }
}
