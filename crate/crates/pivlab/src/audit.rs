//! Statistical hypothesis machinery shared by all modules: martingale
//! tests for (stopped) processes, paired expected-utility comparisons and
//! CLT-based confidence reporting.
//!
//! Every almost-sure statement downstream becomes a statistical null
//! here. The family-wise |z| threshold of 3.3 (roughly 0.1% per test)
//! trades power for a low false-alarm rate; failures are treated as red
//! flags by the experiment runner.

use crate::condexp::{project, FiltrationTag, RegressionSpec};
use crate::error::{Error, Result};
use crate::grid::Grid2;
use crate::model::UtilitySpec;
use crate::sim::{PathEnsemble, StoppingLayer, WealthPath};
use serde::{Deserialize, Serialize};

/// Default family-wise z threshold for all pass/fail verdicts.
pub const FAMILY_THRESHOLD: f64 = 3.3;

/// Cap applied to z-scores so degenerate (zero-variance, nonzero-mean)
/// cases serialize cleanly instead of producing infinities.
pub const Z_CAP: f64 = 1e9;

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Inverse standard normal CDF: Acklam's rational approximation refined
/// with one Halley step against the erfc-based CDF (relative error well
/// below 1e-12 across (0,1)).
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile needs p in (0,1), got {p}");
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    // Halley refinement
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}

pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// z-score with the degenerate case pinned: zero spread means pass when
/// the mean is zero too, and a capped hard failure otherwise.
pub fn safe_z(mean: f64, se: f64) -> f64 {
    if se > 0.0 {
        (mean / se).clamp(-Z_CAP, Z_CAP)
    } else if mean == 0.0 {
        0.0
    } else {
        Z_CAP.copysign(mean)
    }
}

/// Default checkpoints: eight equally spaced grid times plus the horizon.
/// Dense checks add multiplicity without power.
pub fn default_checkpoints(n_steps: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for k in 1..=8usize {
        let j = ((k * n_steps) as f64 / 9.0).round() as usize;
        if j >= 1 && j <= n_steps && out.last() != Some(&j) {
            out.push(j);
        }
    }
    if out.last() != Some(&n_steps) {
        out.push(n_steps);
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointStat {
    pub step: usize,
    pub t: f64,
    pub mean: f64,
    pub se: f64,
    pub zscore: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IncrementStat {
    pub step_from: usize,
    pub step_to: usize,
    /// z of the mean increment.
    pub mean_z: f64,
    /// Largest |z| among feature coefficients of the increment regression.
    pub max_coefficient_z: f64,
    pub coefficient_z: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub checkpoints: Vec<CheckpointStat>,
    pub increment_regressions: Vec<IncrementStat>,
    pub family_threshold: f64,
    pub degenerate: bool,
    pub verdict: bool,
}

impl MartingaleReport {
    pub fn max_abs_z(&self) -> f64 {
        let a = self.checkpoints.iter().map(|c| c.zscore.abs()).fold(0.0, f64::max);
        let b = self
            .increment_regressions
            .iter()
            .map(|r| r.mean_z.abs().max(r.max_coefficient_z))
            .fold(0.0, f64::max);
        a.max(b)
    }
}

/// Two-sided martingale audit of a per-path grid process:
/// (a) mean constancy `E[M(t_c)] = E[M(0)]` by paired CLT interval at each
/// checkpoint, and (b) conditional increment nullity, regressing
/// checkpoint-to-checkpoint increments on the filtration state.
pub fn martingale_test(
    values: &Grid2,
    ensemble: &PathEnsemble,
    tag: &FiltrationTag<'_>,
    checkpoints: &[usize],
    regression: &RegressionSpec,
) -> Result<MartingaleReport> {
    if checkpoints.len() < 2 {
        return Err(Error::Invalid("martingale test needs at least 2 checkpoints".into()));
    }
    if values.n_paths != ensemble.n_paths {
        return Err(Error::EnsembleMismatch("values do not match ensemble paths".into()));
    }
    if values.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("martingale test values must be finite".into()));
    }
    let n = values.n_paths;
    let grid = &ensemble.grid;

    let mut stats = Vec::with_capacity(checkpoints.len());
    let mut degenerate = true;
    for &c in checkpoints {
        let diffs: Vec<f64> = (0..n).map(|p| values.get(p, c) - values.get(p, 0)).collect();
        let (mean, se) = mean_se(&diffs);
        if se > 0.0 {
            degenerate = false;
        }
        stats.push(CheckpointStat { step: c, t: grid.t(c), mean, se, zscore: safe_z(mean, se) });
    }

    let mut increments = Vec::new();
    for w in checkpoints.windows(2) {
        let (c0, c1) = (w[0], w[1]);
        let diffs: Vec<f64> = (0..n).map(|p| values.get(p, c1) - values.get(p, c0)).collect();
        let (mean, se) = mean_se(&diffs);
        let mean_z = safe_z(mean, se);
        let (coefficient_z, max_coefficient_z) = if se > 0.0 {
            let fit = project(&diffs, ensemble, c0, tag, regression)?;
            let zs = fit.coefficient_z();
            let mx = zs.iter().map(|z| z.abs()).fold(0.0, f64::max);
            (zs, mx)
        } else {
            (Vec::new(), 0.0)
        };
        increments.push(IncrementStat { step_from: c0, step_to: c1, mean_z, max_coefficient_z, coefficient_z });
    }

    let mut report = MartingaleReport {
        checkpoints: stats,
        increment_regressions: increments,
        family_threshold: FAMILY_THRESHOLD,
        degenerate,
        verdict: true,
    };
    report.verdict = report.max_abs_z() < report.family_threshold;
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UtilityEntry {
    pub label: String,
    pub mean_utility: f64,
    pub se: f64,
    /// Paired difference top-minus-this with its standard error.
    pub gap_to_top: f64,
    pub gap_se: f64,
    pub domain_violations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UtilityRanking {
    pub top: String,
    /// Entries sorted best first; candidates with domain violations sort
    /// last and carry NaN-free placeholder means.
    pub entries: Vec<UtilityEntry>,
}

/// Rank candidate wealth processes by expected utility at `T /\ tau`,
/// with paired-difference confidence intervals against the top candidate.
/// Candidates must share one ensemble so differences use common random
/// numbers.
pub fn compare_expected_utility(
    candidates: &[&WealthPath],
    ensemble: &PathEnsemble,
    utility: &UtilitySpec,
    layer: Option<&StoppingLayer>,
) -> Result<UtilityRanking> {
    if candidates.is_empty() {
        return Err(Error::Invalid("no candidates to compare".into()));
    }
    let n = ensemble.n_paths;
    let n_steps = ensemble.grid.n_steps;

    // per-candidate terminal utilities; domain violations flag the candidate
    let mut utilities: Vec<Option<Vec<f64>>> = Vec::with_capacity(candidates.len());
    let mut violations = vec![0usize; candidates.len()];
    for (ci, w) in candidates.iter().enumerate() {
        if w.x.n_paths != n {
            return Err(Error::EnsembleMismatch(format!(
                "candidate '{}' has {} paths, ensemble {}",
                w.strategy.label(),
                w.x.n_paths,
                n
            )));
        }
        let mut vals = Vec::with_capacity(n);
        let mut bad = 0usize;
        for p in 0..n {
            let stop = layer.map(|l| l.tau_index[p] as usize).unwrap_or(n_steps);
            match utility.u(w.x.get(p, stop)) {
                Ok(v) => vals.push(v),
                Err(_) => bad += 1,
            }
        }
        violations[ci] = bad;
        utilities.push(if bad == 0 { Some(vals) } else { None });
    }

    let mut means: Vec<(usize, f64, f64)> = Vec::new();
    for (ci, vals) in utilities.iter().enumerate() {
        if let Some(v) = vals {
            let (m, se) = mean_se(v);
            means.push((ci, m, se));
        }
    }
    if means.is_empty() {
        return Err(Error::Invalid("all candidates violate the utility domain".into()));
    }
    means.sort_by(|a, b| b.1.total_cmp(&a.1));
    let top_idx = means[0].0;
    let top_vals = utilities[top_idx].as_ref().unwrap().clone();
    let top = candidates[top_idx].strategy.label();

    let mut entries = Vec::new();
    for &(ci, m, se) in &means {
        let vals = utilities[ci].as_ref().unwrap();
        let diffs: Vec<f64> = top_vals.iter().zip(vals).map(|(a, b)| a - b).collect();
        let (gap, gap_se) = mean_se(&diffs);
        entries.push(UtilityEntry {
            label: candidates[ci].strategy.label(),
            mean_utility: m,
            se,
            gap_to_top: gap,
            gap_se,
            domain_violations: 0,
        });
    }
    for (ci, vals) in utilities.iter().enumerate() {
        if vals.is_none() {
            entries.push(UtilityEntry {
                label: candidates[ci].strategy.label(),
                mean_utility: f64::MIN,
                se: 0.0,
                gap_to_top: f64::MAX,
                gap_se: 0.0,
                domain_violations: violations[ci],
            });
        }
    }

    Ok(UtilityRanking { top, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use crate::model::{DriftSpec, GammaSpec, MarketModel, SigmaSpec, Strategy};
    use crate::sim::{integrate_wealth, simulate};

    fn brownian(n: usize, steps: usize, seed: u64) -> PathEnsemble {
        let m = MarketModel {
            drift: DriftSpec::Const { value: 0.0 },
            sigma: SigmaSpec::Const { value: 1.0 },
            gamma: GammaSpec::Zero,
            jumps: None,
            s0: 1.0,
            coefficient_bound: None,
            hidden: None,
        };
        simulate(&m, TimeGrid::new(1.0, steps), n, seed).unwrap()
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-9, 1e-4, 0.02425, 0.3, 0.5, 0.84, 0.999, 1.0 - 1e-9] {
            let x = normal_quantile(p);
            assert!((normal_cdf(x) - p).abs() < 1e-12 * (1.0 + 1.0 / (p * (1.0 - p))).sqrt());
        }
        assert!((normal_quantile(0.5)).abs() < 1e-14);
        assert!((normal_cdf(1.0) - 0.8413447460685429).abs() < 1e-12);
    }

    #[test]
    fn brownian_motion_passes() {
        let e = brownian(20_000, 64, 31);
        let grids = [&e.s];
        let tag = FiltrationTag::observed(&grids, None);
        let cps = default_checkpoints(64);
        let rep = martingale_test(&e.s, &e, &tag, &cps, &RegressionSpec::audit()).unwrap();
        assert!(rep.verdict, "max |z| = {}", rep.max_abs_z());
    }

    #[test]
    fn drifting_process_fails() {
        let m = MarketModel {
            drift: DriftSpec::Const { value: 0.2 },
            sigma: SigmaSpec::Const { value: 0.3 },
            gamma: GammaSpec::Zero,
            jumps: None,
            s0: 1.0,
            coefficient_bound: None,
            hidden: None,
        };
        let e = simulate(&m, TimeGrid::new(1.0, 64), 20_000, 8).unwrap();
        let grids = [&e.s];
        let tag = FiltrationTag::observed(&grids, None);
        let cps = default_checkpoints(64);
        let rep = martingale_test(&e.s, &e, &tag, &cps, &RegressionSpec::audit()).unwrap();
        assert!(!rep.verdict);
    }

    #[test]
    fn constant_process_trivially_passes() {
        let e = brownian(500, 16, 4);
        let ones = Grid2::filled(500, 17, 1.0);
        let grids = [&e.s];
        let tag = FiltrationTag::observed(&grids, None);
        let rep =
            martingale_test(&ones, &e, &tag, &[4, 8, 16], &RegressionSpec::default()).unwrap();
        assert!(rep.verdict);
        assert!(rep.degenerate);
    }

    #[test]
    fn duplicate_candidates_have_zero_gap() {
        let e = brownian(2_000, 32, 77);
        let w1 = integrate_wealth(&e, &Strategy::ConstantUnits { units: 0.5 }, 2.0, None, None)
            .unwrap();
        let w2 = integrate_wealth(&e, &Strategy::ConstantUnits { units: 0.5 }, 2.0, None, None)
            .unwrap();
        let ranking =
            compare_expected_utility(&[&w1, &w2], &e, &UtilitySpec::Log, None).unwrap();
        assert_eq!(ranking.entries.len(), 2);
        for entry in &ranking.entries {
            assert_eq!(entry.gap_to_top, 0.0);
            assert_eq!(entry.gap_se, 0.0);
        }
    }

    #[test]
    fn domain_violating_candidate_is_flagged() {
        let e = brownian(2_000, 32, 78);
        let safe = integrate_wealth(&e, &Strategy::ConstantUnits { units: 0.0 }, 1.0, None, None)
            .unwrap();
        // huge position makes wealth go negative on some paths
        let wild = integrate_wealth(&e, &Strategy::ConstantUnits { units: 50.0 }, 1.0, None, None)
            .unwrap();
        let ranking =
            compare_expected_utility(&[&safe, &wild], &e, &UtilitySpec::Log, None).unwrap();
        let wild_entry =
            ranking.entries.iter().find(|en| en.label.contains("50")).unwrap();
        assert!(wild_entry.domain_violations > 0);
        assert_eq!(ranking.top, "const(0)");
    }
}
