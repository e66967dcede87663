//! Change-of-measure machinery: stochastic exponentials of Girsanov
//! pairs, the normalized-marginal-utility density, PIEMM audits and the
//! bounded-regime moment diagnostics.
//!
//! A candidate measure is audited two ways. The direct audit checks the
//! drift-removal identity `E_Q[b + sigma theta0 + \int gamma theta1 nu | F] = 0`
//! under the original measure via likelihood-ratio weighting, so nothing
//! is re-simulated. The structural audit needs no explicit Girsanov pair
//! at all: it tests that the density times the (stopped) price has
//! conditionally mean-zero increments, which is exactly the drift term
//! one collects when differentiating that product.

use crate::audit::{mean_se, safe_z, FAMILY_THRESHOLD};
use crate::condexp::{design_at, fit_design, fit_design_values, project_weighted, FiltrationTag, RegressionSpec};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::Grid2;
use crate::model::{moment_estimate, JumpSpec, MarketModel, MomentEstimate, UtilitySpec};
use crate::sim::{PathEnsemble, StoppingLayer, WealthPath};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Theta0 {
    Zero,
    Const { value: f64 },
    /// `theta0 = -1/S(t-)`, the drift-removing kernel of the running
    /// example.
    NegInverseS,
    Expr { expr: Expr },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Theta1 {
    Zero,
    Const { value: f64 },
    Expr { expr: Expr },
}

/// Girsanov pair `(theta0, theta1)`; `theta1 > -1` keeps the exponential
/// strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GirsanovSpec {
    pub theta0: Theta0,
    pub theta1: Theta1,
}

impl GirsanovSpec {
    pub fn brownian(value: f64) -> Self {
        GirsanovSpec { theta0: Theta0::Const { value }, theta1: Theta1::Zero }
    }

    pub fn theta0_at(&self, t: f64, s: f64) -> f64 {
        match &self.theta0 {
            Theta0::Zero => 0.0,
            Theta0::Const { value } => *value,
            Theta0::NegInverseS => -1.0 / s,
            Theta0::Expr { expr } => expr.eval(t, s, 0.0),
        }
    }

    pub fn theta1_at(&self, t: f64, s: f64, mark: f64) -> f64 {
        match &self.theta1 {
            Theta1::Zero => 0.0,
            Theta1::Const { value } => *value,
            Theta1::Expr { expr } => expr.eval(t, s, mark),
        }
    }

    pub fn has_jump_part(&self) -> bool {
        !matches!(self.theta1, Theta1::Zero)
    }
}

/// Strictly positive density process on the grid, `g[.][0] = 1`.
#[derive(Debug, Clone)]
pub struct DensityPath {
    pub g: Grid2,
}

impl DensityPath {
    pub fn terminal(&self) -> Vec<f64> {
        self.g.column(self.g.n_cols - 1)
    }
}

/// Pathwise stochastic exponential of the Girsanov pair:
/// `log G` accumulates `theta0 dB - theta0^2/2 dt`, `log(1 + theta1)`
/// over realized jumps, and the jump compensator `-\int theta1 nu(dz) dt`
/// by quadrature (the `log(1+theta1)` compensator of the compensated
/// form cancels against the realized-jump terms being counted under the
/// raw measure). With a layer the exponent freezes at `tau`.
pub fn doleans_exponential(
    spec: &GirsanovSpec,
    ensemble: &PathEnsemble,
    jump_spec: Option<&JumpSpec>,
    layer: Option<&StoppingLayer>,
) -> Result<DensityPath> {
    let n_steps = ensemble.grid.n_steps;
    let dt = ensemble.grid.dt();
    if spec.has_jump_part() && ensemble.jumps.iter().any(|j| !j.is_empty()) && jump_spec.is_none()
    {
        return Err(Error::MissingJumpSpec);
    }
    let mut g = Grid2::zeros(ensemble.n_paths, n_steps + 1);

    for path in 0..ensemble.n_paths {
        let stop = layer.map(|l| l.tau_index[path] as usize).unwrap_or(n_steps);
        let mut log_g = 0.0f64;
        g.set(path, 0, 1.0);
        let jumps = &ensemble.jumps[path];
        let mut jp = 0usize;
        for j in 0..n_steps {
            if j >= stop {
                g.set(path, j + 1, g.get(path, j));
                continue;
            }
            let t = ensemble.grid.t(j);
            let s_left = ensemble.s.get(path, j);
            let th0 = spec.theta0_at(t, s_left);
            log_g += th0 * ensemble.db.get(path, j) - 0.5 * th0 * th0 * dt;

            while jp < jumps.len() && (jumps[jp].0 as usize) < j {
                jp += 1;
            }
            let mut k = jp;
            while k < jumps.len() && jumps[k].0 as usize == j {
                let mark = jumps[k].1;
                let th1 = spec.theta1_at(t, s_left, mark);
                if th1 <= -1.0 {
                    return Err(Error::DensityKill { path, step: j, value: th1 });
                }
                log_g += (1.0 + th1).ln();
                k += 1;
            }

            if spec.has_jump_part() {
                if let Some(nu) = jump_spec {
                    // realized jumps above carry log(1 + theta1) under the
                    // raw counting measure, so the two compensator
                    // integrals collapse to -\int theta1 nu(dz)
                    let comp = nu.integrate(|z| -spec.theta1_at(t, s_left, z));
                    log_g += dt * comp;
                }
            }
            let val = log_g.exp();
            if !val.is_finite() {
                return Err(Error::CoefficientBlowUp { path, step: j });
            }
            g.set(path, j + 1, val);
        }
    }
    Ok(DensityPath { g })
}

/// Density of the normalized-marginal-utility measure: terminal weights
/// `U'(X(T /\ tau)) / mean`, with intermediate values recovered by
/// projection on the supplied filtration state. Stopped paths enter with
/// frozen features; their weight is already measurable there, so the
/// projection sees the stopped state, which is what a stopped density
/// must do.
pub fn marginal_utility_density(
    wealth: &WealthPath,
    utility: &UtilitySpec,
    layer: Option<&StoppingLayer>,
    ensemble: &PathEnsemble,
    tag: &FiltrationTag<'_>,
    spec: &RegressionSpec,
) -> Result<DensityPath> {
    let n = ensemble.n_paths;
    let n_steps = ensemble.grid.n_steps;
    if wealth.x.n_paths != n {
        return Err(Error::EnsembleMismatch("wealth does not match ensemble".into()));
    }
    let mut weights = Vec::with_capacity(n);
    let mut offenders = Vec::new();
    for path in 0..n {
        let stop = layer.map(|l| l.tau_index[path] as usize).unwrap_or(n_steps);
        match utility.u_prime(wealth.x.get(path, stop)) {
            Ok(v) => weights.push(v),
            Err(_) => {
                if offenders.len() < 16 {
                    offenders.push(path);
                }
                weights.push(f64::NAN);
            }
        }
    }
    if !offenders.is_empty() {
        return Err(Error::UtilityDomain {
            count: weights.iter().filter(|v| v.is_nan()).count(),
            first: offenders,
        });
    }
    let mean = weights.iter().sum::<f64>() / n as f64;
    for w in &mut weights {
        *w /= mean;
    }

    let mut g = Grid2::zeros(n, n_steps + 1);
    for path in 0..n {
        g.set(path, 0, 1.0);
        g.set(path, n_steps, weights[path]);
    }
    let all_paths: Vec<usize> = (0..n).collect();
    for j in 1..n_steps {
        let steps_vec = vec![j; n];
        let design = design_at(&all_paths, &steps_vec, tag, spec)?;
        let fit = fit_design_values(&design, &weights, spec.ridge, j)?;
        let mut nonpos = 0usize;
        for path in 0..n {
            if fit.fitted[path] <= 0.0 {
                nonpos += 1;
            }
            g.set(path, j, fit.fitted[path]);
        }
        if nonpos > 0 {
            return Err(Error::Invalid(format!(
                "projected density nonpositive on {nonpos} path(s) at step {j}; \
                 enrich the basis or reduce the horizon"
            )));
        }
    }
    Ok(DensityPath { g })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PiemmRow {
    pub step: usize,
    pub t: f64,
    pub residual: f64,
    pub se: f64,
    pub zscore: f64,
    pub max_coefficient_z: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PiemmReport {
    /// Drift-removal audit under the reweighted measure; present only
    /// when an explicit Girsanov pair was supplied.
    pub direct: Option<Vec<PiemmRow>>,
    /// Level test of the stopped price times density against its start.
    pub structural_levels: Vec<PiemmRow>,
    /// Conditional increment tests of the same product process.
    pub structural_increments: Vec<PiemmRow>,
    pub family_threshold: f64,
    pub direct_pass: Option<bool>,
    pub structural_pass: bool,
    pub verdict: bool,
}

fn rows_pass(rows: &[PiemmRow], threshold: f64) -> bool {
    rows.iter().all(|r| r.zscore.abs() < threshold && r.max_coefficient_z < threshold)
}

/// Audit a candidate density for the partial-information martingale
/// property of the (stopped) price. Verdict passes iff every applicable
/// audit passes.
#[allow(clippy::too_many_arguments)]
pub fn piemm_check(
    density: &DensityPath,
    spec: Option<&GirsanovSpec>,
    model: &MarketModel,
    ensemble: &PathEnsemble,
    layer: Option<&StoppingLayer>,
    ftag: &FiltrationTag<'_>,
    regression: &RegressionSpec,
    checkpoints: &[usize],
) -> Result<PiemmReport> {
    let n = ensemble.n_paths;
    if density.g.n_paths != n {
        return Err(Error::EnsembleMismatch("density does not match ensemble".into()));
    }
    let n_steps = ensemble.grid.n_steps;
    let terminal_weights = density.terminal();

    // (a) direct: likelihood-ratio-weighted drift-removal residual
    let direct = if let Some(gir) = spec {
        let mut rows = Vec::new();
        for &cp in checkpoints {
            let c = cp.min(n_steps - 1);
            if rows.iter().any(|r: &PiemmRow| r.step == c) {
                continue;
            }
            let alive: Vec<usize> = match layer {
                Some(l) => (0..n).filter(|&p| l.alive(p, c)).collect(),
                None => (0..n).collect(),
            };
            if alive.len() < 100 {
                continue;
            }
            let t = ensemble.grid.t(c);
            let targets: Vec<f64> = alive
                .iter()
                .map(|&p| {
                    let s_left = ensemble.s.get(p, c);
                    let hidden = ensemble.hidden.as_ref().map(|h| h.get(p, c));
                    let b = model.drift_at(t, s_left, hidden);
                    let sigma = model.sigma_at(t, s_left);
                    let jump_term = match (&model.jumps, gir.has_jump_part()) {
                        (Some(nu), true) => nu.integrate(|z| {
                            model.gamma_at(t, s_left, z) * gir.theta1_at(t, s_left, z)
                        }),
                        _ => 0.0,
                    };
                    b + sigma * gir.theta0_at(t, s_left) + jump_term
                })
                .collect();
            let w: Vec<f64> = alive.iter().map(|&p| terminal_weights[p]).collect();
            let wsum: f64 = w.iter().sum();
            let wmean = w.iter().zip(&targets).map(|(wi, yi)| wi * yi).sum::<f64>() / wsum;
            let var: f64 = w
                .iter()
                .zip(&targets)
                .map(|(wi, yi)| (wi * (yi - wmean)).powi(2))
                .sum::<f64>()
                / (wsum * wsum);
            let se = var.sqrt();
            let max_coef_z = if se > 0.0 {
                let fit = project_weighted(&targets, &w, &alive, ensemble, c, ftag, regression)?;
                fit.coefficient_z().iter().map(|z| z.abs()).fold(0.0, f64::max)
            } else {
                0.0
            };
            rows.push(PiemmRow {
                step: c,
                t,
                residual: wmean,
                se,
                zscore: safe_z(wmean, se),
                max_coefficient_z: max_coef_z,
            });
        }
        Some(rows)
    } else {
        None
    };

    // (b) structural: G * S(stopped) must have conditionally mean-zero
    // increments whatever generated G
    let stopped_s = |p: usize, c: usize| {
        let idx = layer.map(|l| l.stop(p, c)).unwrap_or(c);
        ensemble.s.get(p, idx)
    };
    let product = |p: usize, c: usize| density.g.get(p, c) * stopped_s(p, c);

    let mut levels = Vec::new();
    let mut incs = Vec::new();
    let mut prev: Option<usize> = Some(0);
    for &cp in checkpoints {
        let c = cp.min(n_steps);
        if levels.iter().any(|r: &PiemmRow| r.step == c) {
            continue;
        }
        let diffs: Vec<f64> = (0..n).map(|p| product(p, c) - product(p, 0)).collect();
        let (mean, se) = mean_se(&diffs);
        levels.push(PiemmRow {
            step: c,
            t: ensemble.grid.t(c),
            residual: mean,
            se,
            zscore: safe_z(mean, se),
            max_coefficient_z: 0.0,
        });

        if let Some(c0) = prev {
            if c0 < c {
                let incr: Vec<f64> = (0..n).map(|p| product(p, c) - product(p, c0)).collect();
                let (im, ise) = mean_se(&incr);
                let max_coef_z = if ise > 0.0 {
                    let paths: Vec<usize> = (0..n).collect();
                    let steps_vec = vec![c0; n];
                    let design = design_at(&paths, &steps_vec, ftag, regression)?;
                    let fit = fit_design(&design, &incr, None, regression.ridge, c0)?;
                    fit.coefficient_z().iter().map(|z| z.abs()).fold(0.0, f64::max)
                } else {
                    0.0
                };
                incs.push(PiemmRow {
                    step: c0,
                    t: ensemble.grid.t(c0),
                    residual: im,
                    se: ise,
                    zscore: safe_z(im, ise),
                    max_coefficient_z: max_coef_z,
                });
            }
        }
        prev = Some(c);
    }

    let direct_pass = direct.as_ref().map(|rows| rows_pass(rows, FAMILY_THRESHOLD));
    let structural_pass =
        rows_pass(&levels, FAMILY_THRESHOLD) && rows_pass(&incs, FAMILY_THRESHOLD);
    let verdict = structural_pass && direct_pass.unwrap_or(true);
    Ok(PiemmReport {
        direct,
        structural_levels: levels,
        structural_increments: incs,
        family_threshold: FAMILY_THRESHOLD,
        direct_pass,
        structural_pass,
        verdict,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentRow {
    pub order: u32,
    pub estimate: MomentEstimate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentReport {
    pub orders: Vec<MomentRow>,
    /// All coefficient evaluations stayed inside the declared bound.
    pub bound_checked: bool,
    pub verdict: bool,
}

/// Diagnostics for the uniformly-bounded regime: re-verifies the declared
/// coefficient bound on every realized point and estimates
/// `E[sup_t |S(t)|^r]` for each requested order with divergence flags.
pub fn bounded_regime_validate(
    model: &MarketModel,
    ensemble: &PathEnsemble,
    orders: &[u32],
) -> Result<MomentReport> {
    let bound = model
        .coefficient_bound
        .ok_or_else(|| Error::Invalid("bounded_regime_validate needs coefficient_bound".into()))?;

    let n_steps = ensemble.grid.n_steps;
    for path in 0..ensemble.n_paths {
        for j in 0..n_steps {
            let t = ensemble.grid.t(j);
            let s_left = ensemble.s.get(path, j);
            let hidden = ensemble.hidden.as_ref().map(|h| h.get(path, j));
            let b = model.drift_at(t, s_left, hidden);
            if b.abs() > bound + 1e-12 {
                return Err(Error::BoundViolated { path, step: j, which: "b", value: b, bound });
            }
            let sg = model.sigma_at(t, s_left);
            if sg.abs() > bound + 1e-12 {
                return Err(Error::BoundViolated { path, step: j, which: "sigma", value: sg, bound });
            }
        }
        for &(j, mark) in &ensemble.jumps[path] {
            let t = ensemble.grid.t(j as usize);
            let s_left = ensemble.s.get(path, j as usize);
            let gm = model.gamma_at(t, s_left, mark);
            if gm.abs() > bound + 1e-12 {
                return Err(Error::BoundViolated {
                    path,
                    step: j as usize,
                    which: "gamma",
                    value: gm,
                    bound,
                });
            }
        }
    }

    let sups: Vec<f64> = (0..ensemble.n_paths)
        .map(|p| ensemble.s.row(p).iter().fold(0.0f64, |a, v| a.max(v.abs())))
        .collect();
    let mut rows = Vec::new();
    for &r in orders {
        let powered: Vec<f64> = sups.iter().map(|v| v.powi(r as i32)).collect();
        rows.push(MomentRow { order: r, estimate: moment_estimate(&powered) });
    }
    let verdict = rows.iter().all(|r| !r.estimate.diverging);
    Ok(MomentReport { orders: rows, bound_checked: true, verdict })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audit::default_checkpoints;
    use crate::grid::TimeGrid;
    use crate::model::{DriftSpec, GammaSpec, MarkDistribution, SigmaSpec, Strategy};
    use crate::scenarios::build_merton;
    use crate::sim::{integrate_wealth, simulate};

    fn driftless(sigma: f64, n: usize, steps: usize, seed: u64) -> PathEnsemble {
        let m = MarketModel {
            drift: DriftSpec::Const { value: 0.0 },
            sigma: SigmaSpec::Const { value: sigma },
            gamma: GammaSpec::Zero,
            jumps: None,
            s0: 1.0,
            coefficient_bound: None,
            hidden: None,
        };
        simulate(&m, TimeGrid::new(1.0, steps), n, seed).unwrap()
    }

    #[test]
    fn zero_exponent_gives_unit_density() {
        let e = driftless(1.0, 200, 32, 3);
        let spec = GirsanovSpec { theta0: Theta0::Zero, theta1: Theta1::Zero };
        let d = doleans_exponential(&spec, &e, None, None).unwrap();
        for p in 0..e.n_paths {
            for j in 0..=32 {
                assert_eq!(d.g.get(p, j), 1.0);
            }
        }
    }

    #[test]
    fn brownian_exponential_moments() {
        // theta0 = 0.5: mean 1, variance e^{1/4} - 1
        let e = driftless(1.0, 100_000, 64, 19);
        let d = doleans_exponential(&GirsanovSpec::brownian(0.5), &e, None, None).unwrap();
        let g_t = d.terminal();
        let (mean, se) = mean_se(&g_t);
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean} se {se}");
        let m = g_t.iter().sum::<f64>() / g_t.len() as f64;
        let var = g_t.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (g_t.len() - 1) as f64;
        let expect = 0.25f64.exp() - 1.0;
        // delta-method SE of the sample variance
        let m4 = g_t.iter().map(|v| (v - m).powi(4)).sum::<f64>() / g_t.len() as f64;
        let se_var = ((m4 - var * var) / g_t.len() as f64).sqrt();
        assert!((var - expect).abs() < 3.0 * se_var, "var {var} expect {expect} se {se_var}");
    }

    #[test]
    fn compensated_jump_exponential_has_unit_mean() {
        // theta1 = 1, lambda = 2: G(T) = 2^{N(T)} e^{-2}
        let m = MarketModel {
            drift: DriftSpec::Const { value: 0.0 },
            sigma: SigmaSpec::Const { value: 0.0 },
            gamma: GammaSpec::Const { value: 1.0 },
            jumps: Some(JumpSpec::new(2.0, MarkDistribution::Point { value: 1.0 }).unwrap()),
            s0: 1.0,
            coefficient_bound: None,
            hidden: None,
        };
        let e = simulate(&m, TimeGrid::new(1.0, 64), 100_000, 23).unwrap();
        let spec = GirsanovSpec { theta0: Theta0::Zero, theta1: Theta1::Const { value: 1.0 } };
        let d = doleans_exponential(&spec, &e, m.jumps.as_ref(), None).unwrap();
        let g_t = d.terminal();
        // sanity: pathwise law 2^N e^{-2}
        for p in (0..e.n_paths).step_by(9973) {
            let n_jumps = e.jumps[p].len() as i32;
            let expect = 2f64.powi(n_jumps) * (-2.0f64).exp();
            assert!((g_t[p] - expect).abs() < 1e-9 * expect.max(1.0));
        }
        let (mean, se) = mean_se(&g_t);
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn theta1_at_minus_one_kills_the_density() {
        let m = MarketModel {
            drift: DriftSpec::Const { value: 0.0 },
            sigma: SigmaSpec::Const { value: 0.0 },
            gamma: GammaSpec::Const { value: 1.0 },
            jumps: Some(JumpSpec::new(5.0, MarkDistribution::Point { value: 1.0 }).unwrap()),
            s0: 1.0,
            coefficient_bound: None,
            hidden: None,
        };
        let e = simulate(&m, TimeGrid::new(1.0, 16), 200, 31).unwrap();
        let spec = GirsanovSpec { theta0: Theta0::Zero, theta1: Theta1::Const { value: -1.0 } };
        assert!(matches!(
            doleans_exponential(&spec, &e, m.jumps.as_ref(), None),
            Err(Error::DensityKill { .. })
        ));
    }

    #[test]
    fn linear_utility_density_is_unit() {
        let e = driftless(0.4, 1_000, 16, 37);
        let w = integrate_wealth(&e, &Strategy::ConstantUnits { units: 1.0 }, 2.0, None, None)
            .unwrap();
        let grids = [&e.s, &w.x];
        let tag = FiltrationTag::full(&grids, None);
        let d = marginal_utility_density(
            &w,
            &UtilitySpec::Linear,
            None,
            &e,
            &tag,
            &RegressionSpec::default(),
        )
        .unwrap();
        for p in 0..e.n_paths {
            for j in 0..=16 {
                assert!((d.g.get(p, j) - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn merton_drift_removal_passes_and_unremoved_drift_fails() {
        let model = build_merton(0.1, 0.2, None).unwrap();
        let e = simulate(&model, TimeGrid::new(1.0, 64), 40_000, 53).unwrap();
        let cps = default_checkpoints(64);
        let grids = [&e.s];
        let ftag = FiltrationTag::observed(&grids, None);
        let reg = RegressionSpec::audit();

        let good = GirsanovSpec::brownian(-0.5); // -b/sigma
        let d = doleans_exponential(&good, &e, None, None).unwrap();
        let rep =
            piemm_check(&d, Some(&good), &model, &e, None, &ftag, &reg, &cps).unwrap();
        assert!(rep.verdict, "drift-removing pair must pass");

        let bad = GirsanovSpec::brownian(0.0);
        let d = doleans_exponential(&bad, &e, None, None).unwrap();
        let rep = piemm_check(&d, Some(&bad), &model, &e, None, &ftag, &reg, &cps).unwrap();
        assert!(!rep.verdict);
        // unremoved drift shows up as residual ~ b = 0.1 in the direct audit
        for row in rep.direct.as_ref().unwrap() {
            assert!((row.residual - 0.1).abs() < 0.02, "residual {}", row.residual);
        }
    }

    #[test]
    fn bounded_regime_moments_are_finite_and_bound_is_enforced() {
        let model = build_merton(0.1, 0.2, Some((0.5, 2.0))).unwrap();
        let e = simulate(&model, TimeGrid::new(1.0, 64), 20_000, 61).unwrap();
        let rep = bounded_regime_validate(&model, &e, &[2, 4, 8]).unwrap();
        assert!(rep.verdict);
        assert!(rep.orders.iter().all(|r| !r.estimate.diverging));

        let unbounded = MarketModel { coefficient_bound: None, ..model };
        assert!(bounded_regime_validate(&unbounded, &e, &[2]).is_err());
    }

    #[test]
    fn constant_price_sup_moment_is_exact_power() {
        let m = MarketModel {
            drift: DriftSpec::Const { value: 0.0 },
            sigma: SigmaSpec::Const { value: 0.0 },
            gamma: GammaSpec::Zero,
            jumps: None,
            s0: 2.0,
            coefficient_bound: Some(0.1),
            hidden: None,
        };
        let e = simulate(&m, TimeGrid::new(1.0, 8), 100, 1).unwrap();
        let rep = bounded_regime_validate(&m, &e, &[2, 3]).unwrap();
        assert_eq!(rep.orders[0].estimate.mean, 4.0);
        assert_eq!(rep.orders[1].estimate.mean, 8.0);
        assert_eq!(rep.orders[0].estimate.se, 0.0);
    }
}
