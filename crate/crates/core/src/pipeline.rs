//! End-to-end certification: validate, check, simulate, and apply the
//! optional-stopping ladder.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::logic::{check_program, CheckOptions, CheckResult, LogEntry, Verdict};
use crate::num::{fmt_rational, rational_to_f64};
use crate::oracle::{exact_run, DEFAULT_NODE_BUDGET};
use crate::ost::{verify, OstLevel, OstOptions, OstVerdict};
use crate::runtime::Valuation;
use crate::simulate::{run_traces, SimConfig, TraceStats};
use crate::surface::{validate, AnnotationSet, Diagnostic, Program};
use crate::Rational;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SetupError {
    #[error("`--set {0}`: no such variable")]
    UnknownVariable(String),
    #[error("initial valuation violates the precondition `{0}`")]
    Precondition(String),
}

/// Zero valuation with `sets` applied; it must satisfy the precondition.
pub fn initial_valuation(program: &Program, sets: &[(String, Rational)]) -> Result<Valuation<Rational>, SetupError> {
    let mut gamma = Valuation::zeros(program.vars.len());
    for (name, v) in sets {
        let id = program.var_id(name).ok_or_else(|| SetupError::UnknownVariable(name.clone()))?;
        gamma.set(id, v.clone());
    }
    if !program.precondition.holds_exact(&gamma.0) {
        return Err(SetupError::Precondition(program.precondition.display(&program.vars).to_string()));
    }
    Ok(gamma)
}

pub fn to_f64(gamma: &Valuation<Rational>) -> Valuation<f64> {
    Valuation(gamma.0.iter().map(rational_to_f64).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Status {
    #[serde(rename = "SOUND-BOUND")]
    SoundBound,
    #[serde(rename = "CONDITIONAL-BOUND")]
    ConditionalBound,
    #[serde(rename = "CHECK-FAILED")]
    CheckFailed,
    #[serde(rename = "OST-FAILED")]
    OstFailed,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::SoundBound => "SOUND-BOUND",
            Status::ConditionalBound => "CONDITIONAL-BOUND",
            Status::CheckFailed => "CHECK-FAILED",
            Status::OstFailed => "OST-FAILED",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckSummary {
    pub verdict: Verdict,
    pub assumed: Vec<String>,
    pub log: Vec<LogEntry>,
}

impl CheckSummary {
    pub fn of(r: &CheckResult) -> CheckSummary {
        CheckSummary { verdict: r.verdict.clone(), assumed: r.assumed.clone(), log: r.log.clone() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StepBoundCheck {
    pub bound: u64,
    pub verified: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct CertReport {
    pub status: Status,
    pub diagnostics: Vec<Diagnostic>,
    pub check: CheckSummary,
    pub initial_valuation: BTreeMap<String, String>,
    /// Synthesised pre-potential of `main`.
    pub bound_potential: Option<String>,
    /// That potential at the initial valuation, exactly.
    pub bound: Option<String>,
    #[serde(skip)]
    pub bound_exact: Option<Rational>,
    pub step_bound: Option<StepBoundCheck>,
    pub ost: Option<OstVerdict>,
    pub simulation: Option<TraceStats>,
}

#[derive(Clone, Debug)]
pub struct CertifyOptions {
    pub sim: SimConfig,
    pub check: CheckOptions,
    pub ost: OstOptions,
    /// User-declared bound on `T`, confirmed with the exact oracle.
    pub step_bound: Option<u64>,
}

pub fn certify(
    program: &Program,
    ann: &AnnotationSet,
    init: &Valuation<Rational>,
    opts: &CertifyOptions,
) -> CertReport {
    let initial_valuation =
        program.vars.iter().cloned().zip(init.0.iter().map(fmt_rational)).collect::<BTreeMap<_, _>>();
    let diagnostics = validate(program, ann, true);
    let check = check_program(program, ann, &opts.check);
    let mut report = CertReport {
        status: Status::CheckFailed,
        diagnostics,
        check: CheckSummary::of(&check),
        initial_valuation,
        bound_potential: None,
        bound: None,
        bound_exact: None,
        step_bound: None,
        ost: None,
        simulation: None,
    };
    if !report.diagnostics.is_empty() || !check.is_accepted() {
        return report;
    }
    let q = check.pre.clone().expect("accepted program check yields a pre-potential");
    let mut names = program.vars.clone();
    names.extend(ann.unbound.iter().map(|(n, _)| n.clone()));
    let bound = q.eval_exact(&init.0);
    report.bound_potential = Some(q.display(&names).to_string());
    report.bound = Some(fmt_rational(&bound));
    report.bound_exact = Some(bound);

    let mut ost_opts = opts.ost.clone();
    if let Some(k) = opts.step_bound {
        let check = match exact_run(program, init, k, DEFAULT_NODE_BUDGET) {
            Ok(r) if r.censored_mass == Rational::from_integer(0.into()) => {
                StepBoundCheck { bound: k, verified: true, detail: "all mass terminates within the bound".to_string() }
            }
            Ok(r) => StepBoundCheck {
                bound: k,
                verified: false,
                detail: format!("mass {} still running after {k} steps", fmt_rational(&r.censored_mass)),
            },
            Err(e) => StepBoundCheck { bound: k, verified: false, detail: e.to_string() },
        };
        if check.verified {
            ost_opts.verified_step_bound = Some(k);
        }
        report.step_bound = Some(check);
    }

    let mut sim = opts.sim.clone();
    sim.max_moment = sim.max_moment.max(ann.max_degree()).max(1);
    let stats = run_traces(program, &to_f64(init), &sim);
    let ost = verify(program, ann, &check, Some(&stats), &ost_opts);
    report.status = match &ost.level {
        OstLevel::Rejected { .. } => Status::OstFailed,
        level if level.is_sound() && check.assumed.is_empty() => Status::SoundBound,
        _ => Status::ConditionalBound,
    };
    report.ost = Some(ost);
    report.simulation = Some(stats);
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::int;
    use crate::surface::parse;

    fn opts() -> CertifyOptions {
        CertifyOptions {
            sim: SimConfig { n_traces: 2000, horizon: 2000, seed: 42, max_moment: 1 },
            check: CheckOptions::default(),
            ost: OstOptions::default(),
            step_bound: None,
        }
    }

    #[test]
    fn precondition_is_enforced() {
        let (p, _) = parse("vars d; pre d > 0; func main() { skip }").unwrap();
        assert!(matches!(initial_valuation(&p, &[]), Err(SetupError::Precondition(_))));
        assert!(matches!(initial_valuation(&p, &[("q".into(), int(1))]), Err(SetupError::UnknownVariable(_))));
        assert_eq!(initial_valuation(&p, &[("d".into(), int(3))]).unwrap().0, vec![int(3)]);
    }

    #[test]
    fn straight_line_is_sound() {
        let (p, ann) = parse("func main() { tick(5) }").unwrap();
        let r = certify(&p, &ann, &Valuation::zeros(0), &opts());
        assert_eq!(r.status, Status::SoundBound);
        assert_eq!(r.bound.as_deref(), Some("5"));
    }

    #[test]
    fn verified_step_bound_upgrades() {
        let (p, ann) =
            parse("vars i; func main() { i := 0; {# i >= 0, i <= 3 ; 3 - i #} while i <= 2 { i := i + 1; tick(1) } }")
                .unwrap();
        let mut o = opts();
        o.step_bound = Some(40);
        let r = certify(&p, &ann, &Valuation::zeros(1), &o);
        assert_eq!(r.status, Status::SoundBound, "{:?} {:?}", r.check.verdict, r.diagnostics);
        assert!(r.step_bound.as_ref().unwrap().verified);
        assert_eq!(r.ost.unwrap().level, OstLevel::CertifiedBoundedTime { step_bound: Some(40) });
        o.step_bound = Some(3);
        let r = certify(&p, &ann, &Valuation::zeros(1), &o);
        assert!(!r.step_bound.as_ref().unwrap().verified);
    }

    #[test]
    fn failed_check_stops_early() {
        let (p, ann) = parse("func main() { {# true ; 1 #} tick(2) }").unwrap();
        let r = certify(&p, &ann, &Valuation::zeros(0), &opts());
        assert_eq!(r.status, Status::CheckFailed);
        assert!(r.simulation.is_none());
    }
}
