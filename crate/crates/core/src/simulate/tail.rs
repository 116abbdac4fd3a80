//! Shape of the empirical tail `P̂[T > n]`.

use serde::Serialize;
use thiserror::Error;

use super::TraceStats;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TailHint {
    GeometricDecay,
    PowerLaw { exponent: f64 },
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailReport {
    pub hint: TailHint,
    /// Slope and `r²` of `log P̂` against `log n`; `None` without a fit.
    pub power_slope: Option<f64>,
    pub power_r2: Option<f64>,
    /// Slope and `r²` of `log P̂` against `n`.
    pub geometric_slope: Option<f64>,
    pub geometric_r2: Option<f64>,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum TailError {
    #[error("insufficient tail mass: {0} usable points, need at least 5")]
    InsufficientTailMass(usize),
}

/// Fits region: `P̂ ≤ 1/2` with at least `MIN_COUNT` surviving traces.
const MIN_COUNT: f64 = 10.0;
pub const GEOMETRIC_R2: f64 = 0.98;
const POWER_R2: f64 = 0.95;

/// Least-squares slope and `r²`.
fn fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, r2)
}

pub fn estimate_tail(stats: &TraceStats) -> Result<TailReport, TailError> {
    let n_traces = stats.n_traces as f64;
    let pts: Vec<(f64, f64)> = stats
        .tail_curve
        .iter()
        .filter(|&&(n, p)| n >= 1 && p > 0.0 && p <= 0.5 && p * n_traces >= MIN_COUNT)
        .map(|&(n, p)| (n as f64, p))
        .collect();
    if pts.len() < 5 {
        // A tail that reaches zero inside the horizon is consistent with
        // bounded (hence geometric) decay.
        if stats.tail_curve.iter().any(|&(_, p)| p == 0.0) {
            return Ok(TailReport {
                hint: TailHint::GeometricDecay,
                power_slope: None,
                power_r2: None,
                geometric_slope: None,
                geometric_r2: None,
                points: pts.len(),
            });
        }
        return Err(TailError::InsufficientTailMass(pts.len()));
    }
    let ys: Vec<f64> = pts.iter().map(|(_, p)| p.ln()).collect();
    let log_n: Vec<f64> = pts.iter().map(|(n, _)| n.ln()).collect();
    let lin_n: Vec<f64> = pts.iter().map(|(n, _)| *n).collect();
    let (ps, pr2) = fit(&log_n, &ys);
    let (gs, gr2) = fit(&lin_n, &ys);
    let hint = if gr2 >= GEOMETRIC_R2 && gr2 >= pr2 {
        TailHint::GeometricDecay
    } else if pr2 >= POWER_R2 {
        TailHint::PowerLaw { exponent: -ps }
    } else {
        TailHint::Inconclusive
    };
    Ok(TailReport {
        hint,
        power_slope: Some(ps),
        power_r2: Some(pr2),
        geometric_slope: Some(gs),
        geometric_r2: Some(gr2),
        points: pts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::tail_grid;

    fn stats(curve: Vec<(u64, f64)>) -> TraceStats {
        TraceStats {
            n_traces: 1_000_000,
            seed: 0,
            horizon: curve.last().unwrap().0,
            mean_cost: 0.0,
            cost_std: 0.0,
            ci95: 0.0,
            termination_fraction: 1.0,
            censored_fraction: 0.0,
            moment_estimates: vec![],
            tail_curve: curve,
            max_update: 0.0,
        }
    }

    #[test]
    fn exact_shapes_are_recognized() {
        let geo = tail_grid(200).into_iter().map(|n| (n, 0.9f64.powi(n as i32))).collect();
        assert_eq!(estimate_tail(&stats(geo)).unwrap().hint, TailHint::GeometricDecay);
        let pl = tail_grid(10_000).into_iter().map(|n| (n, (1.0 / (n as f64 + 1.0)).powf(0.5))).collect();
        match estimate_tail(&stats(pl)).unwrap().hint {
            TailHint::PowerLaw { exponent } => assert!((exponent - 0.5).abs() < 0.02, "{exponent}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bounded_tail_is_geometric() {
        let curve = tail_grid(64).into_iter().map(|n| (n, if n < 10 { 1.0 } else { 0.0 })).collect();
        assert_eq!(estimate_tail(&stats(curve)).unwrap().hint, TailHint::GeometricDecay);
    }

    #[test]
    fn flat_tail_is_insufficient() {
        let curve = tail_grid(64).into_iter().map(|n| (n, 1.0)).collect();
        assert_eq!(estimate_tail(&stats(curve)), Err(TailError::InsufficientTailMass(0)));
    }
}
