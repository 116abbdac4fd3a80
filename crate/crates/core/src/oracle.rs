//! Exact finite-horizon expectations for programs without continuous sampling.
//!
//! Breadth-first push of the initial Dirac through the kernel, merging equal
//! configurations (valuation, control site, continuation, cost) at each depth.

use std::collections::{HashMap, HashSet};

use num_traits::{One, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::logic::{Annotation, AnnotationTable, CtxKey};
use crate::num::fmt_rational;
use crate::runtime::{self, Configuration, Valuation};
use crate::surface::{Dist, Program, SiteId, StmtKind};
use crate::Rational;

pub const DEFAULT_NODE_BUDGET: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("continuous distribution at {0}; the exact oracle handles discrete programs only")]
    Continuous(SiteId),
    #[error("state space exceeded the node budget of {0}")]
    Budget(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExactRun {
    pub horizon: u64,
    /// `E[A_{min(T,H)}]`.
    pub expected_cost: Rational,
    /// `P[T ≤ H]`.
    pub terminated_mass: Rational,
    /// `E[T·1{T ≤ H}]`.
    pub expected_steps_terminated: Rational,
    /// Mass still running after `H` steps; `terminated_mass + censored_mass = 1`.
    pub censored_mass: Rational,
    /// Configurations expanded.
    pub nodes: usize,
}

/// Rationals rendered exactly, for reports.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExactRunReport {
    pub horizon: u64,
    pub expected_cost: String,
    pub terminated_mass: String,
    pub expected_steps_terminated: String,
    pub censored_mass: String,
    pub nodes: usize,
}

impl ExactRun {
    pub fn report(&self) -> ExactRunReport {
        ExactRunReport {
            horizon: self.horizon,
            expected_cost: fmt_rational(&self.expected_cost),
            terminated_mass: fmt_rational(&self.terminated_mass),
            expected_steps_terminated: fmt_rational(&self.expected_steps_terminated),
            censored_mass: fmt_rational(&self.censored_mass),
            nodes: self.nodes,
        }
    }
}

/// First site sampling from a continuous distribution.
pub fn continuous_site(program: &Program) -> Option<SiteId> {
    program.statements().into_iter().find_map(|(_, s)| match &s.kind {
        StmtKind::Sample(_, Dist::Uniform { .. }) => Some(s.site),
        _ => None,
    })
}

fn outcomes<'p>(
    program: &'p Program,
    sigma: &Configuration<'p, Rational>,
) -> Vec<(Rational, Configuration<'p, Rational>)> {
    runtime::step(program, sigma).discrete_outcomes().expect("discrete program has finite step distributions")
}

pub fn exact_run(
    program: &Program,
    init: &Valuation<Rational>,
    horizon: u64,
    budget: usize,
) -> Result<ExactRun, OracleError> {
    if let Some(site) = continuous_site(program) {
        return Err(OracleError::Continuous(site));
    }
    let mut layer: HashMap<Configuration<'_, Rational>, Rational> = HashMap::new();
    layer.insert(Configuration::initial(program, init.clone()), Rational::one());
    let (mut cost, mut term, mut steps) = (Rational::zero(), Rational::zero(), Rational::zero());
    let mut nodes = 0usize;
    for n in 0..=horizon {
        let depth = Rational::from_integer(n.into());
        let mut next: HashMap<Configuration<'_, Rational>, Rational> = HashMap::new();
        for (sigma, mass) in layer {
            if sigma.is_terminal() {
                cost += &mass * &sigma.alpha;
                steps += &mass * &depth;
                term += mass;
                continue;
            }
            if n == horizon {
                cost += &mass * &sigma.alpha;
                continue;
            }
            nodes += 1;
            if nodes > budget {
                return Err(OracleError::Budget(budget));
            }
            for (w, succ) in outcomes(program, &sigma) {
                if w.is_zero() {
                    continue;
                }
                *next.entry(succ).or_insert_with(Rational::zero) += &mass * &w;
            }
        }
        layer = next;
    }
    let censored = Rational::one() - &term;
    Ok(ExactRun {
        horizon,
        expected_cost: cost,
        terminated_mass: term,
        expected_steps_terminated: steps,
        censored_mass: censored,
        nodes,
    })
}

/// `E[(α'−α) + Q'(γ')]` over the exact successor distribution of `σ`.
pub fn exact_one_step_expectation(
    program: &Program,
    table: &AnnotationTable,
    sigma: &Configuration<'_, Rational>,
    ann: &Annotation,
) -> Result<Rational, OracleError> {
    let (dist, anns) = table.step(program, sigma, ann);
    let outs = dist.discrete_outcomes().ok_or(OracleError::Continuous(sigma.stmt.site))?;
    let shared = anns.len() == 1;
    Ok(outs
        .iter()
        .enumerate()
        .map(|(i, (w, next))| {
            let a = if shared { &anns[0] } else { &anns[i] };
            w * (&next.alpha - &sigma.alpha + a.value::<Rational>(&next.gamma.0))
        })
        .sum())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PotentialViolation {
    pub body: String,
    pub site: Option<SiteId>,
    pub depth: u64,
    pub potential: String,
    pub expected: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PotentialCheck {
    pub visited: usize,
    pub violations: Vec<PotentialViolation>,
}

/// Checks `exact_one_step_expectation ≤ Q(γ)` at every annotated
/// configuration reachable within `depth` steps.
pub fn check_potential_inequality(
    program: &Program,
    table: &AnnotationTable,
    init: &Valuation<Rational>,
    depth: u64,
    budget: usize,
) -> Result<PotentialCheck, OracleError> {
    if let Some(site) = continuous_site(program) {
        return Err(OracleError::Continuous(site));
    }
    type Key<'p> = (Configuration<'p, Rational>, CtxKey, Rational);
    let mut seen: HashSet<Key<'_>> = HashSet::new();
    let start = (Configuration::initial(program, init.clone()), table.initial(program));
    let mut layer = vec![start];
    let mut violations = Vec::new();
    for n in 0..=depth {
        let mut next = Vec::new();
        for (sigma, ann) in layer {
            if !seen.insert((sigma.clone(), ann.ctx, ann.shift.clone())) {
                continue;
            }
            if seen.len() > budget {
                return Err(OracleError::Budget(budget));
            }
            let q = ann.value::<Rational>(&sigma.gamma.0);
            let e = exact_one_step_expectation(program, table, &sigma, &ann)?;
            if e > q {
                violations.push(PotentialViolation {
                    body: crate::simulate::body_name(program, ann.ctx),
                    site: (!sigma.stmt.is_skip()).then_some(sigma.stmt.site),
                    depth: n,
                    potential: fmt_rational(&q),
                    expected: fmt_rational(&e),
                });
            }
            if n == depth || sigma.is_terminal() {
                continue;
            }
            let (dist, anns) = table.step(program, &sigma, &ann);
            let outs = dist.discrete_outcomes().expect("discrete program");
            let shared = anns.len() == 1;
            for (i, (w, succ)) in outs.into_iter().enumerate() {
                if !w.is_zero() {
                    next.push((succ, if shared { anns[0].clone() } else { anns[i].clone() }));
                }
            }
        }
        layer = next;
    }
    Ok(PotentialCheck { visited: seen.len(), violations })
}
