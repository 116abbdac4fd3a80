//! Property tests. Each property is checked against an oracle that does not
//! share code with the implementation under test.

use appl::logic::{
    check_program, check_triple, entail, AnnotationTable, Atom, CheckOptions, EntailVerdict, LogicalContext, Triple,
};
use appl::oracle::{check_potential_inequality, exact_run, DEFAULT_NODE_BUDGET};
use appl::ost::{bounded_update_check, verify, OstLevel, OstOptions, UpdateVerdict};
use appl::poly::{Monomial, Poly};
use appl::runtime::{advance, Configuration, Valuation};
use appl::simulate::{run_traces, trace_rng, SimConfig};
use appl::surface::{parse, pretty, Dist, VarId};
use appl::{rational_to_f64, Constant, Rational};
use proptest::prelude::*;

fn r(n: i64, d: i64) -> Rational {
    Rational::new(n.into(), d.into())
}

fn rational() -> impl Strategy<Value = Rational> {
    (-40i64..=40, 1i64..=6).prop_map(|(n, d)| r(n, d))
}

/// Polynomials in three variables, degree at most 3 per variable.
fn poly() -> impl Strategy<Value = Poly> {
    prop::collection::vec(((0u32..=3, 0u32..=3, 0u32..=2), -9i64..=9), 0..6).prop_map(|terms| {
        Poly::from_terms(terms.into_iter().map(|((a, b, c), k)| {
            let m = Monomial::from_powers(vec![(VarId(0), a), (VarId(1), b), (VarId(2), c)]);
            (m, r(k, 1))
        }))
    })
}

fn point() -> impl Strategy<Value = Vec<Rational>> {
    prop::collection::vec(rational(), 3)
}

/// Direct evaluation, independent of `Poly::eval_exact`.
fn naive_eval(terms: &[((u32, u32, u32), i64)], v: &[Rational]) -> Rational {
    terms.iter().map(|&((a, b, c), k)| r(k, 1) * v[0].pow(a as i32) * v[1].pow(b as i32) * v[2].pow(c as i32)).sum()
}

fn rank(level: &OstLevel) -> u8 {
    match level {
        OstLevel::Rejected { .. } => 0,
        OstLevel::ConditionallyCertified { .. } => 1,
        OstLevel::CertifiedNonnegative => 2,
        OstLevel::CertifiedBoundedTime { .. } => 3,
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn evaluation_matches_naive_sum(
        terms in prop::collection::vec(((0u32..=3, 0u32..=3, 0u32..=2), -9i64..=9), 0..6),
        v in point(),
    ) {
        let p = Poly::from_terms(terms.iter().map(|&((a, b, c), k)| {
            (Monomial::from_powers(vec![(VarId(0), a), (VarId(1), b), (VarId(2), c)]), r(k, 1))
        }));
        prop_assert_eq!(p.eval_exact(&v), naive_eval(&terms, &v));
    }

    #[test]
    fn ring_operations_commute_with_evaluation(p in poly(), q in poly(), v in point(), k in rational()) {
        prop_assert_eq!(p.add(&q).eval_exact(&v), p.eval_exact(&v) + q.eval_exact(&v));
        prop_assert_eq!(p.mul(&q).eval_exact(&v), p.eval_exact(&v) * q.eval_exact(&v));
        prop_assert_eq!(p.scale(&k).eval_exact(&v), p.eval_exact(&v) * &k);
        prop_assert_eq!(p.sub(&p), Poly::zero());
    }

    #[test]
    fn substitution_commutes_with_evaluation(p in poly(), e in poly(), v in point()) {
        let mut w = v.clone();
        w[0] = e.eval_exact(&v);
        prop_assert_eq!(p.substitute_poly(VarId(0), &e).eval_exact(&v), p.eval_exact(&w));
    }

    /// Finite support: the expectation is the weighted sum of substitutions.
    #[test]
    fn discrete_expectation_is_weighted_sum(
        p in poly(),
        support in prop::collection::vec((-6i64..=6, 1i64..=5), 1..4),
        v in point(),
    ) {
        let total: i64 = support.iter().map(|s| s.1).sum();
        let items: Vec<(Constant, Constant)> =
            support.iter().map(|&(x, w)| (Constant::new(r(x, 1)), Constant::new(r(w, total)))).collect();
        let e = p.expect_over(VarId(0), &Dist::Discrete(items));
        let oracle: Rational = support
            .iter()
            .map(|&(x, w)| {
                let mut u = v.clone();
                u[0] = r(x, 1);
                r(w, total) * p.eval_exact(&u)
            })
            .sum();
        prop_assert!(!e.mentions(VarId(0)));
        prop_assert_eq!(e.eval_exact(&v), oracle);
    }

    /// Simpson's rule is exact for cubics, so it is an exact oracle here.
    #[test]
    fn uniform_expectation_matches_simpson(p in poly(), lo in -8i64..=8, width in 1i64..=6, v in point()) {
        let (a, b) = (r(lo, 2), r(lo + width, 2));
        let dist = Dist::Uniform { lo: Constant::new(a.clone()), hi: Constant::new(b.clone()) };
        let at = |x: Rational| {
            let mut u = v.clone();
            u[0] = x;
            p.eval_exact(&u)
        };
        let mid = (&a + &b) / r(2, 1);
        let simpson = (at(a.clone()) + r(4, 1) * at(mid) + at(b.clone())) / r(6, 1);
        prop_assert_eq!(p.expect_over(VarId(0), &dist).eval_exact(&v), simpson);
    }

    #[test]
    fn expectation_is_linear(p in poly(), q in poly(), k in rational(), v in point()) {
        let dist = Dist::Uniform { lo: Constant::from_int(-1), hi: Constant::from_int(2) };
        let lhs = p.scale(&k).add(&q).expect_over(VarId(1), &dist);
        let rhs = p.expect_over(VarId(1), &dist).scale(&k).add(&q.expect_over(VarId(1), &dist));
        prop_assert_eq!(lhs.eval_exact(&v), rhs.eval_exact(&v));
    }

    /// Proved entailments hold on every grid point of the context; refutations
    /// come with a genuine witness.
    #[test]
    fn entailment_is_sound(
        atoms in prop::collection::vec((-3i64..=3, -3i64..=3, -6i64..=6), 0..3),
        goal in (-3i64..=3, -3i64..=3, -1i64..=1, -8i64..=8),
    ) {
        let x = Poly::var(VarId(0));
        let y = Poly::var(VarId(1));
        let lin = |a: i64, b: i64, c: i64| x.scale(&r(a, 1)).add(&y.scale(&r(b, 1))).add_const(&r(c, 1));
        let mut ctx = LogicalContext::from_atoms([
            Atom::ge(&x, &Poly::zero()),
            Atom::ge(&Poly::int(4), &x),
            Atom::ge(&y, &Poly::zero()),
            Atom::ge(&Poly::int(4), &y),
        ]);
        for &(a, b, c) in &atoms {
            ctx.push(Atom::ge(&lin(a, b, c), &Poly::zero()));
        }
        let (ga, gb, gq, gc) = goal;
        let g = lin(ga, gb, gc).add(&x.mul(&y).scale(&r(gq, 1)));
        match entail(&ctx, &g, &Poly::zero()) {
            EntailVerdict::Proved => {
                for i in 0..=16 {
                    for j in 0..=16 {
                        let v = vec![r(i, 4), r(j, 4)];
                        if ctx.holds_exact(&v) {
                            prop_assert!(g.eval_exact(&v) >= r(0, 1), "counterexample at {:?}", v);
                        }
                    }
                }
            }
            EntailVerdict::Refuted(w) => {
                prop_assert!(ctx.holds_exact(&w));
                prop_assert!(g.eval_exact(&w) < r(0, 1));
            }
            EntailVerdict::Unknown => {}
        }
    }

    #[test]
    fn coin_oracle_matches_closed_form(p in 1i64..8, a in -5i64..=5, b in -5i64..=5) {
        let src = format!("func main() {{ if prob({p}/8) {{ tick({a}) }} else {{ tick({b}) }} }}");
        let (prog, _) = parse(&src).unwrap();
        let run = exact_run(&prog, &Valuation::zeros(0), 10, DEFAULT_NODE_BUDGET).unwrap();
        prop_assert_eq!(run.expected_cost, r(p * a + (8 - p) * b, 8));
    }

    /// Loops whose potential pays exactly `c ≥ 0` per round are accepted, satisfy
    /// the one-step inequality, and never lose OST strength when a verified
    /// step bound is added.
    #[test]
    fn counted_loops_and_ladder_monotonicity(k in 1i64..=5, c in 0i64..=3, shift in rational()) {
        let src = format!(
            "vars i; func main() {{ i := 0; {{# i >= 0, i <= {k} ; {c}*({k} - i) #}} while i <= {k} - 1 {{ i := i + 1; tick({c}) }} }}"
        );
        let (p, ann) = parse(&src).unwrap();
        let check = check_program(&p, &ann, &CheckOptions::default());
        prop_assert!(check.is_accepted(), "{}", check.verdict);
        prop_assert_eq!(check.pre.clone().unwrap(), Poly::int(c * k));
        let shifted = Triple {
            pre_ctx: LogicalContext::tt(),
            pre: Poly::int(c * k).add_const(&shift),
            stmt: &p.main,
            post_ctx: LogicalContext::tt(),
            post: Poly::constant(shift.clone()),
        };
        prop_assert!(check_triple(&p, &ann.shifted(&shift), &shifted, &CheckOptions::default()).is_accepted());

        let table = AnnotationTable::new(&check.derivation);
        let pc = check_potential_inequality(&p, &table, &Valuation::zeros(1), 50, DEFAULT_NODE_BUDGET).unwrap();
        prop_assert!(pc.violations.is_empty());

        let stats = run_traces(&p, &Valuation::zeros(1), &SimConfig { n_traces: 200, horizon: 100, seed: 1, max_moment: 1 });
        let plain = verify(&p, &ann, &check, Some(&stats), &OstOptions::default());
        let bounded = OstOptions { verified_step_bound: Some(4 * k as u64 + 4), ..OstOptions::default() };
        let with_bound = verify(&p, &ann, &check, Some(&stats), &bounded);
        prop_assert!(rank(&with_bound.level) >= rank(&plain.level));
        prop_assert!(with_bound.level.is_sound());
        prop_assert!(plain.level.is_sound());
    }

    /// The interval analysis bounds every update seen in simulation.
    #[test]
    fn bounded_update_covers_simulation(a in 0i64..=4, b in 0i64..=4, w in 1i64..=3, seed in 0u64..1000) {
        let src = format!(
            "vars x, y, t; func main() {{ while x < 6 {{ if prob(1/2) {{ x := x + {a} + 1 }} else {{ y := y - {b} }}; t ~ uniform(-{w}, {w}); x := x + t }} }}"
        );
        let (p, _) = parse(&src).unwrap();
        let report = bounded_update_check(&p);
        let bounded = matches!(report.verdict, UpdateVerdict::Bounded { .. });
        prop_assert!(bounded);
        let c0 = rational_to_f64(report.c0.as_ref().unwrap());
        let stats = run_traces(&p, &Valuation::zeros(3), &SimConfig { n_traces: 100, horizon: 500, seed, max_moment: 1 });
        prop_assert!(stats.max_update <= c0 + 1e-9, "{} > {}", stats.max_update, c0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    /// Uniform moments against Monte Carlo, within four standard errors.
    #[test]
    fn uniform_moments_match_monte_carlo(lo in -12i64..12, width in 1i64..12, k in 0u32..=6, seed in 0u64..1000) {
        let (a, b) = (r(lo, 2), r(lo + width, 2));
        let dist = Dist::Uniform { lo: Constant::new(a.clone()), hi: Constant::new(b) };
        let exact = rational_to_f64(&appl::poly::moments(&dist, k).moments[k as usize]);
        let mut rng = trace_rng(seed, 0);
        let n = 50_000;
        let xs: Vec<f64> = (0..n).map(|_| appl::runtime::sample_dist(&mut rng, &dist).powi(k as i32)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        prop_assert!((mean - exact).abs() <= 4.0 * sd / (n as f64).sqrt() + 1e-12, "{mean} vs {exact}");
    }

    /// The annotated kernel moves the base configuration exactly as the
    /// plain sampler does when both consume the same random stream.
    #[test]
    fn annotated_kernel_erases_to_the_sampler(seed in 0u64..10_000, d in 1i64..8) {
        let src = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../corpus/rdwalk.appl")).unwrap();
        let (p, ann) = parse(&src).unwrap();
        let check = check_program(&p, &ann, &CheckOptions::default());
        let table = AnnotationTable::new(&check.derivation);
        let mut gamma = Valuation::zeros(p.vars.len());
        gamma.set(p.var_id("d").unwrap(), d as f64);
        let mut plain = Configuration::initial(&p, gamma.clone());
        let mut annotated = Configuration::initial(&p, gamma);
        let mut ann_state = table.initial(&p);
        let (mut r1, mut r2) = (trace_rng(seed, 0), trace_rng(seed, 0));
        for _ in 0..2000 {
            if plain.is_terminal() {
                break;
            }
            advance(&mut r1, &p, &mut plain);
            table.advance(&mut r2, &p, &mut annotated, &mut ann_state);
            prop_assert_eq!(&plain.gamma.0, &annotated.gamma.0);
            prop_assert_eq!(plain.alpha, annotated.alpha);
            prop_assert_eq!(plain.stmt.site, annotated.stmt.site);
            prop_assert_eq!(plain.kont.depth(), annotated.kont.depth());
            prop_assert!(ann_state.value_f64(&annotated.gamma.0) >= -1e-9);
        }
        prop_assert!(annotated.is_terminal());
        prop_assert!(ann_state.value_f64(&annotated.gamma.0).abs() < 1e-9);
    }

    /// Pretty-printing is a fixed point of parse ∘ pretty.
    #[test]
    fn pretty_parse_round_trip(
        a in -9i64..=9, b in 1i64..=9, c in -9i64..=9, p in 1i64..=7,
    ) {
        let src = format!(
            "vars x, y; func f() {{ if x < {a} {{ x := x + {b}; call f }} else {{ skip }} }}
             func main() {{ y := {c} * x - y; if prob({p}/8) {{ tick({b}) }} else {{ x ~ discrete({a}: 1/2, {b}: 1/2) }}; call f }}"
        );
        let (prog, ann) = parse(&src).unwrap();
        let once = pretty(&prog, &ann);
        let (prog2, ann2) = parse(&once).unwrap();
        prop_assert_eq!(&pretty(&prog2, &ann2), &once);
        prop_assert_eq!(ann2, ann);
    }
}
