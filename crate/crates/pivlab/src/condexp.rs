//! Conditional expectations by least-squares projection on basis
//! functions of the observed state (Longstaff-Schwartz style). One
//! ensemble serves every conditional expectation in the lab; nested
//! simulation would be quadratic in cost.
//!
//! The default basis is `{1, f, f^2, f^3}` per feature, augmented with
//! `1/f` and `log f` for features bounded away from zero on the sample.
//! Columns are standardized and the normal equations solved with a small
//! ridge, which keeps the design workable near stopping boundaries.

use crate::error::{Error, Result};
use crate::grid::Grid2;
use crate::sim::{PathEnsemble, StoppingLayer};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FiltrationKind {
    /// Full information: drives the adjoint equation.
    Full,
    /// Partial information actually available to the trader.
    Observed,
}

/// A filtration is realized as the list of state grids an estimator may
/// look at, with features frozen at the stopping time when a layer is
/// attached. Observed-filtration features must be a subset of the full
/// ones; `is_sub_of` checks that by identity.
#[derive(Clone, Copy)]
pub struct FiltrationTag<'a> {
    pub kind: FiltrationKind,
    grids: &'a [&'a Grid2],
    layer: Option<&'a StoppingLayer>,
}

impl<'a> FiltrationTag<'a> {
    pub fn new(
        kind: FiltrationKind,
        grids: &'a [&'a Grid2],
        layer: Option<&'a StoppingLayer>,
    ) -> Self {
        FiltrationTag { kind, grids, layer }
    }

    pub fn full(grids: &'a [&'a Grid2], layer: Option<&'a StoppingLayer>) -> Self {
        Self::new(FiltrationKind::Full, grids, layer)
    }

    pub fn observed(grids: &'a [&'a Grid2], layer: Option<&'a StoppingLayer>) -> Self {
        Self::new(FiltrationKind::Observed, grids, layer)
    }

    pub fn n_features(&self) -> usize {
        self.grids.len()
    }

    #[inline]
    pub fn feature(&self, grid_idx: usize, path: usize, step: usize) -> f64 {
        let stopped = self.layer.map(|l| l.stop(path, step)).unwrap_or(step);
        self.grids[grid_idx].get(path, stopped)
    }

    /// True when every state grid of `self` is one of `other`'s grids.
    pub fn is_sub_of(&self, other: &FiltrationTag<'_>) -> bool {
        self.grids.iter().all(|g| {
            other.grids.iter().any(|h| std::ptr::eq(*g as *const Grid2, *h as *const Grid2))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionSpec {
    /// Polynomial degree per feature.
    pub degree: usize,
    /// Add `1/f` and `log f` columns for features bounded away from zero.
    pub augment_reciprocal: bool,
    /// Ridge weight on the standardized normal equations.
    pub ridge: f64,
}

impl Default for RegressionSpec {
    fn default() -> Self {
        RegressionSpec { degree: 3, augment_reciprocal: true, ridge: 1e-8 }
    }
}

impl RegressionSpec {
    pub fn with_degree(degree: usize) -> Self {
        RegressionSpec { degree, ..Default::default() }
    }

    /// Lean basis for hypothesis-test regressions. The rich estimation
    /// basis is near-collinear on narrow state ranges, which makes the
    /// sandwich coefficient z-scores heavy-tailed under the null; a
    /// quadratic basis without reciprocal terms stays calibrated.
    pub fn audit() -> Self {
        RegressionSpec { degree: 2, augment_reciprocal: false, ridge: 1e-8 }
    }
}

/// Output of one projection: fitted conditional-expectation estimates for
/// the included paths plus coefficient diagnostics on the standardized
/// basis (heteroskedasticity-robust standard errors).
#[derive(Debug, Clone)]
pub struct ProjectionFit {
    pub fitted: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub coefficient_se: Vec<f64>,
    pub basis_labels: Vec<String>,
    pub residual_variance: f64,
    pub r_squared: f64,
}

impl ProjectionFit {
    /// z-scores of the non-intercept coefficients against zero.
    pub fn coefficient_z(&self) -> Vec<f64> {
        self.coefficients
            .iter()
            .zip(&self.coefficient_se)
            .skip(1)
            .map(|(c, se)| if *se > 0.0 { c / se } else { 0.0 })
            .collect()
    }
}

/// Project `targets` onto the filtration state at a fixed step, over all
/// paths.
pub fn project(
    targets: &[f64],
    ensemble: &PathEnsemble,
    step: usize,
    tag: &FiltrationTag<'_>,
    spec: &RegressionSpec,
) -> Result<ProjectionFit> {
    let paths: Vec<usize> = (0..ensemble.n_paths).collect();
    project_among(targets, &paths, ensemble, step, tag, spec)
}

/// Project over an explicit path subset (targets aligned with `paths`).
/// Restricting to an event known at the conditioning time is legitimate
/// conditioning; it is how per-layer statements stay per-layer.
pub fn project_among(
    targets: &[f64],
    paths: &[usize],
    ensemble: &PathEnsemble,
    step: usize,
    tag: &FiltrationTag<'_>,
    spec: &RegressionSpec,
) -> Result<ProjectionFit> {
    let steps: Vec<usize> = vec![step; paths.len()];
    project_inner(targets, None, paths, &steps, ensemble, tag, spec, step)
}

/// Project with features evaluated at a per-path step (a grid-valued
/// stopping time).
pub fn project_at_indices(
    targets: &[f64],
    indices: &[u32],
    ensemble: &PathEnsemble,
    tag: &FiltrationTag<'_>,
    spec: &RegressionSpec,
) -> Result<ProjectionFit> {
    let paths: Vec<usize> = (0..ensemble.n_paths).collect();
    let steps: Vec<usize> = indices.iter().map(|&i| i as usize).collect();
    project_inner(targets, None, &paths, &steps, ensemble, tag, spec, 0)
}

/// Likelihood-ratio-weighted projection: realizes conditional expectations
/// under the reweighted measure without re-simulating (weighted least
/// squares with the terminal density as weights).
pub fn project_weighted(
    targets: &[f64],
    weights: &[f64],
    paths: &[usize],
    ensemble: &PathEnsemble,
    step: usize,
    tag: &FiltrationTag<'_>,
    spec: &RegressionSpec,
) -> Result<ProjectionFit> {
    let steps: Vec<usize> = vec![step; paths.len()];
    project_inner(targets, Some(weights), paths, &steps, ensemble, tag, spec, step)
}

#[allow(clippy::too_many_arguments)]
fn project_inner(
    targets: &[f64],
    weights: Option<&[f64]>,
    paths: &[usize],
    steps: &[usize],
    ensemble: &PathEnsemble,
    tag: &FiltrationTag<'_>,
    spec: &RegressionSpec,
    step_for_error: usize,
) -> Result<ProjectionFit> {
    let _ = ensemble;
    let design = design_at(paths, steps, tag, spec)?;
    fit_design(&design, targets, weights, spec.ridge, step_for_error)
}

/// Assembled (standardized) design matrix; reusable across several
/// targets at the same step.
pub struct Design {
    pub n: usize,
    pub k: usize,
    pub x: Vec<f64>,
    pub labels: Vec<String>,
}

/// Build the design for the given paths with features evaluated at the
/// per-path steps.
pub fn design_at(
    paths: &[usize],
    steps: &[usize],
    tag: &FiltrationTag<'_>,
    spec: &RegressionSpec,
) -> Result<Design> {
    let n = paths.len();
    if steps.len() != n {
        return Err(Error::EnsembleMismatch("paths and steps disagree".into()));
    }
    let m = tag.n_features();
    let mut raw: Vec<Vec<f64>> = Vec::with_capacity(m);
    for g in 0..m {
        raw.push(paths.iter().zip(steps).map(|(&p, &j)| tag.feature(g, p, j)).collect());
    }
    let (x, labels) = build_design(&raw, spec, n)?;
    let k = labels.len();
    Ok(Design { n, k, x, labels })
}

/// Least-squares fit on a prebuilt design, skipping the sandwich
/// covariance; for inner solver loops that only consume fitted values.
pub fn fit_design_values(
    design: &Design,
    targets: &[f64],
    ridge: f64,
    step_for_error: usize,
) -> Result<ProjectionFit> {
    fit_design_inner(design, targets, None, ridge, step_for_error, false)
}

/// Least-squares fit on a prebuilt design.
pub fn fit_design(
    design: &Design,
    targets: &[f64],
    weights: Option<&[f64]>,
    ridge: f64,
    step_for_error: usize,
) -> Result<ProjectionFit> {
    fit_design_inner(design, targets, weights, ridge, step_for_error, true)
}

fn fit_design_inner(
    design: &Design,
    targets: &[f64],
    weights: Option<&[f64]>,
    ridge: f64,
    step_for_error: usize,
    want_se: bool,
) -> Result<ProjectionFit> {
    let n = design.n;
    if targets.len() != n {
        return Err(Error::EnsembleMismatch(format!(
            "targets ({}) and design rows ({}) disagree",
            targets.len(),
            n
        )));
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::EnsembleMismatch("weights length mismatch".into()));
        }
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Invalid("regression weights must be finite and >= 0".into()));
        }
    }
    if targets.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("regression targets must be finite".into()));
    }
    if n < 10 * design.k {
        return Err(Error::Underdetermined { n_paths: n, basis: design.k });
    }
    solve_least_squares(
        &design.x,
        design.labels.clone(),
        targets,
        weights,
        ridge,
        n,
        design.k,
        step_for_error,
        want_se,
    )
}

/// Standardized design matrix. Constant columns are dropped (the
/// intercept carries them); reciprocal/log augmentation only applies to
/// features bounded away from zero on this sample.
fn build_design(
    raw: &[Vec<f64>],
    spec: &RegressionSpec,
    n: usize,
) -> Result<(Vec<f64>, Vec<String>)> {
    use rayon::prelude::*;

    enum ColKind {
        Pow(usize, i32),
        Recip(usize),
        Log(usize),
    }
    let mut plan: Vec<(String, ColKind)> = Vec::new();
    for (fi, col) in raw.iter().enumerate() {
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("feature {fi} contains non-finite values")));
        }
        for d in 1..=spec.degree.max(1) {
            plan.push((format!("f{fi}^{d}"), ColKind::Pow(fi, d as i32)));
        }
        if spec.augment_reciprocal {
            let min = col.iter().cloned().fold(f64::INFINITY, f64::min);
            if min > 1e-6 {
                plan.push((format!("1/f{fi}"), ColKind::Recip(fi)));
                plan.push((format!("log f{fi}"), ColKind::Log(fi)));
            }
        }
    }

    // build and standardize each column; constant columns drop out (the
    // intercept carries them)
    let built: Vec<Option<(String, Vec<f64>)>> = plan
        .par_iter()
        .map(|(label, kind)| {
            let src = match kind {
                ColKind::Pow(fi, _) | ColKind::Recip(fi) | ColKind::Log(fi) => &raw[*fi],
            };
            let mut col: Vec<f64> = match kind {
                ColKind::Pow(_, 1) => src.clone(),
                ColKind::Pow(_, d) => src.iter().map(|v| v.powi(*d)).collect(),
                ColKind::Recip(_) => src.iter().map(|v| 1.0 / v).collect(),
                ColKind::Log(_) => src.iter().map(|v| v.ln()).collect(),
            };
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            if sd <= 1e-12 * (1.0 + mean.abs()) {
                return None;
            }
            for v in &mut col {
                *v = (*v - mean) / sd;
            }
            Some((label.clone(), col))
        })
        .collect();

    let mut labels = vec!["1".to_string()];
    let mut kept: Vec<Vec<f64>> = Vec::new();
    for item in built.into_iter().flatten() {
        labels.push(item.0);
        kept.push(item.1);
    }
    let k = kept.len() + 1;
    let mut x = vec![0.0f64; n * k];
    x.par_chunks_mut(k).enumerate().for_each(|(i, row)| {
        row[0] = 1.0;
        for (c, col) in kept.iter().enumerate() {
            row[c + 1] = col[i];
        }
    });
    Ok((x, labels))
}

#[allow(clippy::too_many_arguments)]
fn solve_least_squares(
    x: &[f64],
    labels: Vec<String>,
    y: &[f64],
    weights: Option<&[f64]>,
    ridge: f64,
    n: usize,
    k: usize,
    step: usize,
    want_se: bool,
) -> Result<ProjectionFit> {
    // Normal equations accumulated chunk-parallel: fixed chunk boundaries,
    // partials combined in chunk order, so the sum is bit-identical
    // regardless of worker count.
    use rayon::prelude::*;
    const CHUNK: usize = 8192;
    let ranges: Vec<(usize, usize)> =
        (0..n).step_by(CHUNK).map(|lo| (lo, (lo + CHUNK).min(n))).collect();
    let partials: Vec<(Vec<f64>, Vec<f64>)> = ranges
        .par_iter()
        .map(|&(lo, hi)| {
            let mut a = vec![0.0f64; k * k];
            let mut b = vec![0.0f64; k];
            for i in lo..hi {
                let w = weights.map(|w| w[i]).unwrap_or(1.0);
                let row = &x[i * k..(i + 1) * k];
                for r in 0..k {
                    let wr = w * row[r];
                    b[r] += wr * y[i];
                    for c in r..k {
                        a[r * k + c] += wr * row[c];
                    }
                }
            }
            (a, b)
        })
        .collect();
    let mut a = vec![0.0f64; k * k];
    let mut b = vec![0.0f64; k];
    for (pa, pb) in &partials {
        for (ai, pi) in a.iter_mut().zip(pa) {
            *ai += pi;
        }
        for (bi, pi) in b.iter_mut().zip(pb) {
            *bi += pi;
        }
    }
    for r in 0..k {
        for c in 0..r {
            a[r * k + c] = a[c * k + r];
        }
    }
    let scale = weights.map(|w| w.iter().sum::<f64>()).unwrap_or(n as f64);
    let mut jitter = ridge * scale.max(1.0);
    let mut chol = None;
    for _ in 0..7 {
        let mut trial = a.clone();
        for r in 1..k {
            trial[r * k + r] += jitter;
        }
        if let Some(l) = cholesky(&trial, k) {
            chol = Some(l);
            break;
        }
        jitter = (jitter * 100.0).max(1e-10 * scale);
    }
    let l = chol.ok_or(Error::DegenerateDesign { step })?;
    // iterative refinement against the unridged equations removes the
    // ridge's shrinkage bias while keeping its numerical rescue
    let mut coef = chol_solve(&l, &b, k);
    for _ in 0..2 {
        let mut resid = b.clone();
        for r in 0..k {
            let mut acc = 0.0;
            for c in 0..k {
                acc += a[r * k + c] * coef[c];
            }
            resid[r] -= acc;
        }
        let delta = chol_solve(&l, &resid, k);
        for (ci, di) in coef.iter_mut().zip(&delta) {
            *ci += di;
        }
    }

    let mut fitted = vec![0.0f64; n];
    fitted.par_chunks_mut(CHUNK).enumerate().for_each(|(ci, out)| {
        let lo = ci * CHUNK;
        for (off, slot) in out.iter_mut().enumerate() {
            let i = lo + off;
            let row = &x[i * k..(i + 1) * k];
            *slot = row.iter().zip(&coef).map(|(a, b)| a * b).sum();
        }
    });

    // diagnostics
    let wsum = scale;
    let ybar = (0..n)
        .map(|i| weights.map(|w| w[i]).unwrap_or(1.0) * y[i])
        .sum::<f64>()
        / wsum;
    let mut sse = 0.0;
    let mut sst = 0.0;
    for i in 0..n {
        let w = weights.map(|w| w[i]).unwrap_or(1.0);
        let e = y[i] - fitted[i];
        sse += w * e * e;
        sst += w * (y[i] - ybar) * (y[i] - ybar);
    }
    let residual_variance = sse / wsum;
    let r_squared = if sst > 0.0 { 1.0 - sse / sst } else { 1.0 };

    // robust (sandwich) covariance: A^-1 (sum w^2 e^2 x x') A^-1
    let se = if want_se {
        let meat_partials: Vec<Vec<f64>> = ranges
            .par_iter()
            .map(|&(lo, hi)| {
                let mut meat = vec![0.0f64; k * k];
                for i in lo..hi {
                    let w = weights.map(|w| w[i]).unwrap_or(1.0);
                    let e = y[i] - fitted[i];
                    let we2 = w * w * e * e;
                    let row = &x[i * k..(i + 1) * k];
                    for r in 0..k {
                        for c in r..k {
                            meat[r * k + c] += we2 * row[r] * row[c];
                        }
                    }
                }
                meat
            })
            .collect();
        let mut meat = vec![0.0f64; k * k];
        for pm in &meat_partials {
            for (mi, pi) in meat.iter_mut().zip(pm) {
                *mi += pi;
            }
        }
        for r in 0..k {
            for c in 0..r {
                meat[r * k + c] = meat[c * k + r];
            }
        }
        // columns of A^-1 via cholesky solves
        let mut ainv = vec![0.0f64; k * k];
        for c in 0..k {
            let mut unit = vec![0.0f64; k];
            unit[c] = 1.0;
            let col = chol_solve(&l, &unit, k);
            for r in 0..k {
                ainv[r * k + c] = col[r];
            }
        }
        let mut se = vec![0.0f64; k];
        for (j, slot) in se.iter_mut().enumerate() {
            // (A^-1 meat A^-1)_jj
            let mut acc = 0.0;
            for r in 0..k {
                let mut inner = 0.0;
                for c in 0..k {
                    inner += meat[r * k + c] * ainv[c * k + j];
                }
                acc += ainv[j * k + r] * inner;
            }
            *slot = acc.max(0.0).sqrt();
        }
        se
    } else {
        vec![0.0f64; k]
    };

    Ok(ProjectionFit {
        fitted,
        coefficients: coef,
        coefficient_se: se,
        basis_labels: labels,
        residual_variance,
        r_squared,
    })
}

/// Lower-triangular Cholesky factor, or None if not positive definite.
fn cholesky(a: &[f64], k: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0f64; k * k];
    for i in 0..k {
        for j in 0..=i {
            let mut sum = a[i * k + j];
            for p in 0..j {
                sum -= l[i * k + p] * l[j * k + p];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l[i * k + i] = sum.sqrt();
            } else {
                l[i * k + j] = sum / l[j * k + j];
            }
        }
    }
    Some(l)
}

fn chol_solve(l: &[f64], b: &[f64], k: usize) -> Vec<f64> {
    let mut y = vec![0.0f64; k];
    for i in 0..k {
        let mut sum = b[i];
        for j in 0..i {
            sum -= l[i * k + j] * y[j];
        }
        y[i] = sum / l[i * k + i];
    }
    let mut x = vec![0.0f64; k];
    for i in (0..k).rev() {
        let mut sum = y[i];
        for j in i + 1..k {
            sum -= l[j * k + i] * x[j];
        }
        x[i] = sum / l[i * k + i];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use crate::model::{DriftSpec, GammaSpec, MarketModel, SigmaSpec};
    use crate::sim::simulate;

    fn brownian_ensemble(n_paths: usize, seed: u64) -> PathEnsemble {
        let m = MarketModel {
            drift: DriftSpec::Const { value: 0.0 },
            sigma: SigmaSpec::Const { value: 1.0 },
            gamma: GammaSpec::Zero,
            jumps: None,
            s0: 1.0,
            coefficient_bound: None,
            hidden: None,
        };
        simulate(&m, TimeGrid::new(1.0, 16), n_paths, seed).unwrap()
    }

    #[test]
    fn reproduces_in_span_targets() {
        let e = brownian_ensemble(2_000, 42);
        let step = 8;
        let targets: Vec<f64> = (0..e.n_paths)
            .map(|p| {
                let s = e.s.get(p, step);
                2.0 - 3.0 * s + 0.5 * s * s
            })
            .collect();
        let grids = [&e.s];
        let tag = FiltrationTag::observed(&grids, None);
        let fit = project(&targets, &e, step, &tag, &RegressionSpec::default()).unwrap();
        for (f, t) in fit.fitted.iter().zip(&targets) {
            assert!((f - t).abs() <= 1e-8 * (1.0 + t.abs()), "fitted {f} target {t}");
        }
        assert!(fit.r_squared > 1.0 - 1e-10);
    }

    #[test]
    fn martingale_regression_recovers_identity() {
        let e = brownian_ensemble(20_000, 7);
        let step = 8;
        let terminal: Vec<f64> = e.s.column(16);
        let grids = [&e.s];
        let tag = FiltrationTag::observed(&grids, None);
        // degree-1 regression: conditional mean of S(T) given S(t) is S(t)
        let spec = RegressionSpec { degree: 1, augment_reciprocal: false, ridge: 1e-8 };
        let fit = project(&terminal, &e, step, &tag, &spec).unwrap();
        for p in (0..e.n_paths).step_by(997) {
            let s = e.s.get(p, step);
            assert!((fit.fitted[p] - s).abs() < 0.05, "fitted {} vs s {}", fit.fitted[p], s);
        }
    }

    #[test]
    fn conditional_second_moment_of_brownian() {
        // E[S(T)^2 | S(t)] = S(t)^2 + (T - t)
        let e = brownian_ensemble(50_000, 9);
        let step = 8; // t = 0.5
        let targets: Vec<f64> = (0..e.n_paths).map(|p| e.s.get(p, 16).powi(2)).collect();
        let grids = [&e.s];
        let tag = FiltrationTag::observed(&grids, None);
        let spec = RegressionSpec { degree: 2, augment_reciprocal: false, ridge: 1e-8 };
        let fit = project(&targets, &e, step, &tag, &spec).unwrap();
        let mut err_sum = 0.0;
        for p in 0..e.n_paths {
            let s = e.s.get(p, step);
            err_sum += fit.fitted[p] - (s * s + 0.5);
        }
        let bias = err_sum / e.n_paths as f64;
        assert!(bias.abs() < 0.02, "bias {bias}");
    }

    #[test]
    fn projection_is_idempotent() {
        let e = brownian_ensemble(2_000, 3);
        let step = 4;
        let targets: Vec<f64> = (0..e.n_paths).map(|p| e.s.get(p, 16).sin()).collect();
        let grids = [&e.s];
        let tag = FiltrationTag::observed(&grids, None);
        let spec = RegressionSpec::default();
        let once = project(&targets, &e, step, &tag, &spec).unwrap();
        let twice = project(&once.fitted, &e, step, &tag, &spec).unwrap();
        for (a, b) in once.fitted.iter().zip(&twice.fitted) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn tower_property_within_noise() {
        let e = brownian_ensemble(40_000, 15);
        let grids = [&e.s];
        let tag = FiltrationTag::observed(&grids, None);
        let spec = RegressionSpec { degree: 2, augment_reciprocal: false, ridge: 1e-8 };
        let raw: Vec<f64> = (0..e.n_paths).map(|p| e.s.get(p, 16).powi(2)).collect();
        let at_12 = project(&raw, &e, 12, &tag, &spec).unwrap();
        let towered = project(&at_12.fitted, &e, 6, &tag, &spec).unwrap();
        let direct = project(&raw, &e, 6, &tag, &spec).unwrap();
        let n = e.n_paths as f64;
        let mean_diff: f64 =
            towered.fitted.iter().zip(&direct.fitted).map(|(a, b)| a - b).sum::<f64>() / n;
        let sd: f64 = (towered
            .fitted
            .iter()
            .zip(&direct.fitted)
            .map(|(a, b)| (a - b - mean_diff).powi(2))
            .sum::<f64>()
            / n)
            .sqrt();
        let se = sd / n.sqrt() + 1e-12;
        assert!(mean_diff.abs() < 3.0 * se.max(1e-4), "mean diff {mean_diff}, se {se}");
    }

    #[test]
    fn nesting_of_filtrations() {
        let e = brownian_ensemble(5_000, 25);
        let xsq: Grid2 = {
            let mut g = Grid2::zeros(e.n_paths, e.grid.n_points());
            for p in 0..e.n_paths {
                for j in 0..e.grid.n_points() {
                    g.set(p, j, e.s.get(p, j) * e.s.get(p, j));
                }
            }
            g
        };
        let full_grids = [&e.s, &xsq];
        let obs_grids = [&e.s];
        let full = FiltrationTag::full(&full_grids, None);
        let obs = FiltrationTag::observed(&obs_grids, None);
        assert!(obs.is_sub_of(&full));
        assert!(!full.is_sub_of(&obs));
    }

    #[test]
    fn underdetermined_is_an_error() {
        let e = brownian_ensemble(30, 1);
        let targets = vec![1.0; 30];
        let grids = [&e.s];
        let tag = FiltrationTag::observed(&grids, None);
        match project(&targets, &e, 8, &tag, &RegressionSpec::default()) {
            Err(Error::Underdetermined { .. }) => {}
            other => panic!("expected underdetermined, got {other:?}"),
        }
    }

    #[test]
    fn degenerate_step_zero_falls_back_to_intercept() {
        let e = brownian_ensemble(500, 2);
        let targets: Vec<f64> = (0..e.n_paths).map(|p| e.s.get(p, 16)).collect();
        let grids = [&e.s];
        let tag = FiltrationTag::observed(&grids, None);
        let fit = project(&targets, &e, 0, &tag, &RegressionSpec::default()).unwrap();
        let mean = targets.iter().sum::<f64>() / targets.len() as f64;
        assert_eq!(fit.basis_labels, vec!["1".to_string()]);
        for f in &fit.fitted {
            assert!((f - mean).abs() < 1e-12);
        }
    }
}
