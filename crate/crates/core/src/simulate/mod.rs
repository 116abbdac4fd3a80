//! Monte Carlo traces of the small-step semantics.
//!
//! Trace `i` draws from its own ChaCha8 stream (`seed`, stream `i`), and
//! per-trace outcomes are reduced in trace order, so results do not depend on
//! the thread count.

mod tail;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::logic::{Annotation, AnnotationTable, CtxKey};
use crate::runtime::{self, Configuration, Valuation};
use crate::surface::{Program, SiteId};

pub use tail::{estimate_tail, TailError, TailHint, TailReport};

/// Generator for trace `index` under `seed`.
pub fn trace_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub n_traces: u64,
    pub horizon: u64,
    pub seed: u64,
    /// Highest `k` for which `E[T^k]` is estimated.
    pub max_moment: u32,
}

/// Outcome of one trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceOutcome {
    /// `min(T, H)`.
    pub steps: u64,
    pub terminated: bool,
    /// `A_{min(T, H)}`.
    pub cost: f64,
    /// Largest single-step `|γ_{n+1}(x) − γ_n(x)|` over all variables.
    pub max_update: f64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct TraceStats {
    pub n_traces: u64,
    pub seed: u64,
    pub horizon: u64,
    /// Mean of `A_{min(T,H)}`.
    pub mean_cost: f64,
    pub cost_std: f64,
    /// Half-width `1.96·s/√n`.
    pub ci95: f64,
    pub termination_fraction: f64,
    pub censored_fraction: f64,
    /// `Ê[min(T,H)^k]` for `k = 1..=max_moment`.
    pub moment_estimates: Vec<f64>,
    /// `(n, P̂[T > n])` on a geometric grid up to the horizon.
    pub tail_curve: Vec<(u64, f64)>,
    pub max_update: f64,
}

/// Runs one trace from `init` until termination or `horizon` steps.
pub fn run_trace<R: Rng>(rng: &mut R, program: &Program, init: &Valuation<f64>, horizon: u64) -> TraceOutcome {
    let mut sigma = Configuration::initial(program, init.clone());
    let mut prev = init.0.clone();
    let mut max_update: f64 = 0.0;
    let mut n = 0;
    while n < horizon && !sigma.is_terminal() {
        runtime::advance(rng, program, &mut sigma);
        for (p, v) in prev.iter_mut().zip(&sigma.gamma.0) {
            max_update = max_update.max((v - *p).abs());
            *p = *v;
        }
        n += 1;
    }
    TraceOutcome { steps: n, terminated: sigma.is_terminal(), cost: sigma.alpha, max_update }
}

/// All trace outcomes, in trace order.
pub fn run_outcomes(program: &Program, init: &Valuation<f64>, cfg: &SimConfig) -> Vec<TraceOutcome> {
    (0..cfg.n_traces)
        .into_par_iter()
        .map(|i| run_trace(&mut trace_rng(cfg.seed, i), program, init, cfg.horizon))
        .collect()
}

pub fn run_traces(program: &Program, init: &Valuation<f64>, cfg: &SimConfig) -> TraceStats {
    summarize(&run_outcomes(program, init, cfg), cfg)
}

/// Geometric grid `0, 1, 2, …, ⌊2^{j/4}⌉, …, H`.
pub fn tail_grid(horizon: u64) -> Vec<u64> {
    let mut out = vec![0];
    let mut j = 0u32;
    loop {
        let n = 2f64.powf(j as f64 / 4.0).round() as u64;
        if n > horizon {
            break;
        }
        if out.last() != Some(&n) {
            out.push(n);
        }
        j += 1;
    }
    if out.last() != Some(&horizon) {
        out.push(horizon);
    }
    out
}

pub fn summarize(outcomes: &[TraceOutcome], cfg: &SimConfig) -> TraceStats {
    let n = outcomes.len().max(1) as f64;
    let mean_cost = outcomes.iter().map(|o| o.cost).sum::<f64>() / n;
    let var = if outcomes.len() > 1 {
        outcomes.iter().map(|o| (o.cost - mean_cost).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let cost_std = var.sqrt();
    let terminated = outcomes.iter().filter(|o| o.terminated).count() as f64;
    let moment_estimates = (1..=cfg.max_moment)
        .map(|k| outcomes.iter().map(|o| (o.steps as f64).powi(k as i32)).sum::<f64>() / n)
        .collect();
    // Censored traces have T > H.
    let mut stop: Vec<u64> = outcomes.iter().map(|o| if o.terminated { o.steps } else { u64::MAX }).collect();
    stop.sort_unstable();
    let tail_curve = tail_grid(cfg.horizon)
        .into_iter()
        .map(|g| {
            let at_most = stop.partition_point(|&t| t <= g);
            (g, (stop.len() - at_most) as f64 / n)
        })
        .collect();
    TraceStats {
        n_traces: outcomes.len() as u64,
        seed: cfg.seed,
        horizon: cfg.horizon,
        mean_cost,
        cost_std,
        ci95: 1.96 * cost_std / n.sqrt(),
        termination_fraction: terminated / n,
        censored_fraction: (n - terminated) / n,
        moment_estimates,
        tail_curve,
        max_update: outcomes.iter().map(|o| o.max_update).fold(0.0, f64::max),
    }
}

/// Powers of two up to `horizon`, starting at 0.
pub fn default_checkpoints(horizon: u64) -> Vec<u64> {
    let mut out = vec![0];
    let mut c = 1;
    while c <= horizon {
        out.push(c);
        c *= 2;
    }
    out
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct DiagnosticPoint {
    pub n: u64,
    /// `Ê[Y_n]`, `Y_n = A_n + Φ_n`.
    pub mean_y: f64,
    pub ci95_y: f64,
    pub mean_a: f64,
    pub mean_phi: f64,
    /// `P̂[T > n]`.
    pub survival: f64,
    /// `P̂[T>n] · Ê[|Σ_{i=n}^{T∧H−1} C_i − Φ_n| | T > n]`.
    pub gap: f64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct DiagnosticSeries {
    pub n_traces: u64,
    pub horizon: u64,
    pub seed: u64,
    pub points: Vec<DiagnosticPoint>,
    /// Traces on which `Φ` at a terminal configuration was nonzero; always 0
    /// for an accepted derivation.
    pub nonzero_terminal_potential: u64,
}

/// `(A_n, Φ_n, alive)` at each checkpoint, plus the final cost.
struct DiagTrace {
    samples: Vec<(f64, f64, bool)>,
    final_cost: f64,
    bad_terminal: bool,
}

fn diag_trace(
    program: &Program,
    table: &AnnotationTable,
    init: &Valuation<f64>,
    checkpoints: &[u64],
    horizon: u64,
    rng: &mut ChaCha8Rng,
) -> DiagTrace {
    let mut sigma = Configuration::initial(program, init.clone());
    let mut ann = table.initial(program);
    let mut samples = Vec::with_capacity(checkpoints.len());
    let mut n = 0;
    for &c in checkpoints {
        let c = c.min(horizon);
        while n < c && !sigma.is_terminal() {
            table.advance(rng, program, &mut sigma, &mut ann);
            n += 1;
        }
        let phi = ann.value_f64(&sigma.gamma.0);
        samples.push((sigma.alpha, phi, !sigma.is_terminal()));
    }
    while n < horizon && !sigma.is_terminal() {
        table.advance(rng, program, &mut sigma, &mut ann);
        n += 1;
    }
    let bad_terminal = sigma.is_terminal() && ann.value_f64(&sigma.gamma.0).abs() > 1e-9;
    DiagTrace { samples, final_cost: sigma.alpha, bad_terminal }
}

/// `Ê[Y_n]` and the gap statistic at each checkpoint.
pub fn diagnose(
    program: &Program,
    table: &AnnotationTable,
    init: &Valuation<f64>,
    checkpoints: &[u64],
    cfg: &SimConfig,
) -> DiagnosticSeries {
    let traces: Vec<DiagTrace> = (0..cfg.n_traces)
        .into_par_iter()
        .map(|i| diag_trace(program, table, init, checkpoints, cfg.horizon, &mut trace_rng(cfg.seed, i)))
        .collect();
    let n = traces.len().max(1) as f64;
    let points = checkpoints
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let ys: Vec<f64> = traces.iter().map(|t| t.samples[k].0 + t.samples[k].1).collect();
            let mean_y = ys.iter().sum::<f64>() / n;
            let var = if ys.len() > 1 { ys.iter().map(|y| (y - mean_y).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
            let alive: Vec<&DiagTrace> = traces.iter().filter(|t| t.samples[k].2).collect();
            let gap = alive.iter().map(|t| (t.final_cost - t.samples[k].0 - t.samples[k].1).abs()).sum::<f64>() / n;
            DiagnosticPoint {
                n: c,
                mean_y,
                ci95_y: 1.96 * var.sqrt() / n.sqrt(),
                mean_a: traces.iter().map(|t| t.samples[k].0).sum::<f64>() / n,
                mean_phi: traces.iter().map(|t| t.samples[k].1).sum::<f64>() / n,
                survival: alive.len() as f64 / n,
                gap,
            }
        })
        .collect();
    DiagnosticSeries {
        n_traces: cfg.n_traces,
        horizon: cfg.horizon,
        seed: cfg.seed,
        points,
        nonzero_terminal_potential: traces.iter().filter(|t| t.bad_terminal).count() as u64,
    }
}

#[derive(Clone, Debug)]
pub struct OneStepConfig {
    pub configurations: u64,
    pub draws: u64,
    pub seed: u64,
    /// Per-trace step cap while searching for configurations.
    pub horizon: u64,
    /// Probability of testing the configuration at each visited step.
    pub pick: f64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Violation {
    pub body: String,
    pub site: Option<SiteId>,
    /// Estimate of `E[(α'−α) + Q'(γ')]`.
    pub expected: f64,
    pub stderr: f64,
    /// `Q(γ)`.
    pub potential: f64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct OneStepReport {
    pub checked: u64,
    pub violations: Vec<Violation>,
    /// Smallest `Q(γ)` seen at a tested configuration.
    pub min_potential: f64,
}

/// Tests `E[(α'−α) + Q'(γ')] ≤ Q(γ) + 4·stderr` at configurations sampled
/// along simulated traces.
pub fn one_step_check(
    program: &Program,
    table: &AnnotationTable,
    init: &Valuation<f64>,
    cfg: &OneStepConfig,
) -> OneStepReport {
    let mut walk = trace_rng(cfg.seed, u64::MAX);
    let mut checked = 0;
    let mut violations = Vec::new();
    let mut min_potential = f64::INFINITY;
    let mut trace = 0u64;
    while checked < cfg.configurations {
        let mut sigma = Configuration::initial(program, init.clone());
        let mut ann = table.initial(program);
        let mut n = 0;
        while checked < cfg.configurations && n < cfg.horizon {
            if walk.gen::<f64>() < cfg.pick {
                let mut draws = trace_rng(cfg.seed ^ 0x9e37_79b9_7f4a_7c15, checked);
                let (mean, stderr) = one_step_estimate(program, table, &sigma, &ann, cfg.draws, &mut draws);
                let q = ann.value_f64(&sigma.gamma.0);
                min_potential = min_potential.min(q);
                let slack = 4.0 * stderr + 1e-9 * (1.0 + q.abs());
                if mean > q + slack {
                    violations.push(Violation {
                        body: body_name(program, ann.ctx),
                        site: (!sigma.stmt.is_skip()).then_some(sigma.stmt.site),
                        expected: mean,
                        stderr,
                        potential: q,
                    });
                }
                checked += 1;
            }
            if sigma.is_terminal() {
                break;
            }
            table.advance(&mut walk, program, &mut sigma, &mut ann);
            n += 1;
        }
        trace += 1;
        if trace > cfg.configurations.saturating_mul(1000) {
            break;
        }
    }
    OneStepReport { checked, violations, min_potential }
}

fn one_step_estimate(
    program: &Program,
    table: &AnnotationTable,
    sigma: &Configuration<'_, f64>,
    ann: &Annotation,
    draws: u64,
    rng: &mut ChaCha8Rng,
) -> (f64, f64) {
    let values: Vec<f64> = (0..draws.max(1))
        .map(|_| {
            let mut s = sigma.clone();
            let mut a = ann.clone();
            table.advance(rng, program, &mut s, &mut a);
            (s.alpha - sigma.alpha) + a.value_f64(&s.gamma.0)
        })
        .collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, (var / n).sqrt())
}

pub(crate) fn body_name(program: &Program, key: CtxKey) -> String {
    match key {
        CtxKey::Main => "main".to_string(),
        CtxKey::Spec { func, index } => format!("{}#{index}", program.funcs[func.index()].name),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{check_program, CheckOptions};
    use crate::surface::parse;

    fn cfg(n: u64, h: u64) -> SimConfig {
        SimConfig { n_traces: n, horizon: h, seed: 7, max_moment: 2 }
    }

    #[test]
    fn straight_line_cost_is_exact() {
        let (p, _) = parse("func main() { tick(1); tick(2) }").unwrap();
        let s = run_traces(&p, &Valuation::zeros(0), &cfg(100, 50));
        assert_eq!(s.mean_cost, 3.0);
        assert_eq!(s.termination_fraction, 1.0);
        assert_eq!(s.censored_fraction, 0.0);
        assert_eq!(s.ci95, 0.0);
    }

    #[test]
    fn censoring_is_reported() {
        let (p, _) = parse("vars x; func main() { while true { tick(1) } }").unwrap();
        let s = run_traces(&p, &Valuation::zeros(1), &cfg(10, 40));
        assert_eq!(s.termination_fraction, 0.0);
        assert_eq!(s.censored_fraction, 1.0);
        assert_eq!(s.tail_curve.last(), Some(&(40, 1.0)));
    }

    #[test]
    fn results_are_reproducible() {
        let (p, _) =
            parse("vars x; func main() { while x < 3 { if prob(1/2) { x := x + 1 } else { skip }; tick(1) } }")
                .unwrap();
        let a = run_traces(&p, &Valuation::zeros(1), &cfg(500, 1000));
        let b = run_traces(&p, &Valuation::zeros(1), &cfg(500, 1000));
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let c = pool.install(|| run_traces(&p, &Valuation::zeros(1), &cfg(500, 1000)));
        assert_eq!(a, c);
        for w in a.tail_curve.windows(2) {
            assert!(w[0].1 >= w[1].1);
        }
    }

    #[test]
    fn terminated_traces_have_zero_gap() {
        let src = "func main() { tick(2); tick(3) }";
        let (p, ann) = parse(src).unwrap();
        let r = check_program(&p, &ann, &CheckOptions::default());
        let table = AnnotationTable::new(&r.derivation);
        let d = diagnose(&p, &table, &Valuation::zeros(0), &[0, 1, 2, 8, 16], &cfg(20, 100));
        assert_eq!(d.points[0].mean_y, 5.0);
        for pt in &d.points {
            assert_eq!(pt.mean_y, 5.0);
        }
        for pt in &d.points[3..] {
            assert_eq!(pt.gap, 0.0);
            assert_eq!(pt.survival, 0.0);
        }
        assert_eq!(d.nonzero_terminal_potential, 0);
    }

    #[test]
    fn skip_program_has_no_violations() {
        let (p, ann) = parse("func main() { skip }").unwrap();
        let r = check_program(&p, &ann, &CheckOptions::default());
        let table = AnnotationTable::new(&r.derivation);
        let oc = OneStepConfig { configurations: 20, draws: 5, seed: 1, horizon: 10, pick: 0.5 };
        let rep = one_step_check(&p, &table, &Valuation::zeros(0), &oc);
        assert_eq!(rep.checked, 20);
        assert!(rep.violations.is_empty());
    }

    #[test]
    fn grids() {
        assert_eq!(default_checkpoints(10), vec![0, 1, 2, 4, 8]);
        let g = tail_grid(100);
        assert_eq!(&g[..4], &[0, 1, 2, 3]);
        assert_eq!(*g.last().unwrap(), 100);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }
}
