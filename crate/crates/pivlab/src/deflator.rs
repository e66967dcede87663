//! Deflator pasting: glue per-layer normalized marginal-utility densities
//! along the localizing sequence into one strictly positive process, test
//! the consistency condition that makes the glue seamless, and audit the
//! pasted process (and its product with the stopped price) for the local
//! martingale property layer by layer.

use crate::audit::{default_checkpoints, martingale_test, mean_se, safe_z, MartingaleReport, FAMILY_THRESHOLD};
use crate::condexp::{design_at, fit_design, FiltrationTag, RegressionSpec};
use crate::error::{Error, Result};
use crate::grid::Grid2;
use crate::measure::marginal_utility_density;
use crate::model::{Strategy, UtilitySpec};
use crate::sim::{PathEnsemble, StoppingLayer, WealthPath};
use serde::{Deserialize, Serialize};

/// How per-layer segment densities are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentEstimator {
    /// Projection of the normalized terminal marginal utility on the
    /// filtration state at every step (the generic route).
    Regression,
    /// `Z(t) = U'(X(t /\ tau)) / U'(x0)` pathwise. Exact whenever the
    /// stopped marginal utility of wealth is itself a martingale, which
    /// is the regime the pasting theory lives in; bypasses regression
    /// noise entirely.
    ExactStoppedMartingale,
}

/// Pasted deflator: `z` follows segment `k` on `(tau_{k-1}, tau_k]`, is 1
/// at `t = 0`, and freezes after the last layer. `segment_of` records
/// which layer produced each grid value.
#[derive(Debug, Clone)]
pub struct DeflatorPath {
    pub z: Grid2,
    pub segments: Vec<Grid2>,
    pub strategies: Vec<Strategy>,
    segment_idx: Vec<u8>,
    n_cols: usize,
}

impl DeflatorPath {
    pub fn segment_of(&self, path: usize, step: usize) -> u8 {
        self.segment_idx[path * self.n_cols + step]
    }
}

/// Normalized density of a single layer's marginal utility.
pub fn segment_density(
    wealth: &WealthPath,
    layer: &StoppingLayer,
    ensemble: &PathEnsemble,
    utility: &UtilitySpec,
    estimator: SegmentEstimator,
    tag: &FiltrationTag<'_>,
    spec: &RegressionSpec,
) -> Result<Grid2> {
    match estimator {
        SegmentEstimator::Regression => {
            let d = marginal_utility_density(wealth, utility, Some(layer), ensemble, tag, spec)?;
            Ok(d.g)
        }
        SegmentEstimator::ExactStoppedMartingale => {
            let n_steps = ensemble.grid.n_steps;
            let denom = utility.u_prime(wealth.x0)?;
            let mut g = Grid2::zeros(ensemble.n_paths, n_steps + 1);
            for p in 0..ensemble.n_paths {
                for j in 0..=n_steps {
                    let stop = layer.stop(p, j);
                    g.set(p, j, utility.u_prime(wealth.x.get(p, stop))? / denom);
                }
            }
            Ok(g)
        }
    }
}

fn check_layers(layers: &[&StoppingLayer]) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::Invalid("pasting needs at least one layer".into()));
    }
    for w in layers.windows(2) {
        if w[0].level >= w[1].level {
            return Err(Error::Invalid("layers must be strictly increasing in level".into()));
        }
        for p in 0..w[0].tau_index.len() {
            if w[0].tau_index[p] > w[1].tau_index[p] {
                return Err(Error::Invalid(format!(
                    "layers not nested on path {p}: tau({}) > tau({})",
                    w[0].level, w[1].level
                )));
            }
        }
    }
    Ok(())
}

/// Indicator-form pasting: one strategy (already integrated to a wealth
/// process at its layer) per level; `Z(t_j)` is the level-`k` segment
/// density on `(tau_{k-1}, tau_k]`, with `Z(0) = 1` and values frozen
/// beyond the last layer.
pub fn paste(
    wealths: &[WealthPath],
    layers: &[&StoppingLayer],
    ensemble: &PathEnsemble,
    utility: &UtilitySpec,
    estimator: SegmentEstimator,
    tag: &FiltrationTag<'_>,
    spec: &RegressionSpec,
) -> Result<DeflatorPath> {
    check_layers(layers)?;
    if wealths.len() != layers.len() {
        let missing = layers[wealths.len().min(layers.len().saturating_sub(1))].level;
        return Err(Error::MissingLayerStrategy { level: missing });
    }
    let n = ensemble.n_paths;
    let n_steps = ensemble.grid.n_steps;
    let n_cols = n_steps + 1;

    let mut segments = Vec::with_capacity(layers.len());
    for (w, l) in wealths.iter().zip(layers) {
        segments.push(segment_density(w, l, ensemble, utility, estimator, tag, spec)?);
    }

    let mut z = Grid2::zeros(n, n_cols);
    let mut segment_idx = vec![0u8; n * n_cols];
    for p in 0..n {
        z.set(p, 0, 1.0);
        for j in 1..=n_steps {
            // segment k covers (tau_{k-1}, tau_k]; tau_0 := 0
            let mut chosen: Option<usize> = None;
            for (k, l) in layers.iter().enumerate() {
                if j <= l.tau_index[p] as usize {
                    chosen = Some(k);
                    break;
                }
            }
            match chosen {
                Some(k) => {
                    z.set(p, j, segments[k].get(p, j));
                    segment_idx[p * n_cols + j] = (k + 1) as u8;
                }
                None => {
                    // beyond the last layer: frozen
                    let last = layers.len() - 1;
                    let tau = layers[last].tau_index[p] as usize;
                    z.set(p, j, segments[last].get(p, tau));
                    segment_idx[p * n_cols + j] = layers.len() as u8;
                }
            }
        }
        if !z.row(p).iter().all(|v| *v > 0.0) {
            return Err(Error::Invalid(format!("pasted deflator nonpositive on path {p}")));
        }
    }

    Ok(DeflatorPath {
        z,
        segments,
        strategies: wealths.iter().map(|w| w.strategy.clone()).collect(),
        segment_idx,
        n_cols,
    })
}

/// Product-form pasting `prod_k Z_k(t /\ tau_k) / Z_k(t /\ tau_{k-1})`.
/// Coincides with the indicator form exactly when the consistency
/// condition holds exactly; their gap is itself a consistency diagnostic.
pub fn paste_product_form(deflator: &DeflatorPath, layers: &[&StoppingLayer]) -> Grid2 {
    let n = deflator.z.n_paths;
    let n_cols = deflator.n_cols;
    let mut out = Grid2::zeros(n, n_cols);
    for p in 0..n {
        for j in 0..n_cols {
            let mut acc = 1.0f64;
            for (k, l) in layers.iter().enumerate() {
                let hi = j.min(l.tau_index[p] as usize);
                let lo = if k == 0 { 0 } else { j.min(layers[k - 1].tau_index[p] as usize) };
                acc *= deflator.segments[k].get(p, hi) / deflator.segments[k].get(p, lo);
            }
            out.set(p, j, acc);
        }
    }
    out
}

/// Largest pointwise gap between the two pasting forms.
pub fn pasting_gap(deflator: &DeflatorPath, layers: &[&StoppingLayer]) -> f64 {
    let product = paste_product_form(deflator, layers);
    let mut gap = 0.0f64;
    for p in 0..deflator.z.n_paths {
        for j in 0..deflator.n_cols {
            gap = gap.max((product.get(p, j) - deflator.z.get(p, j)).abs());
        }
    }
    gap
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsistencyPair {
    pub level_prev: u32,
    pub level_next: u32,
    /// Mean of the raw cross-layer difference of normalized marginal
    /// utilities (zero in expectation under consistency).
    pub mean: f64,
    pub se: f64,
    pub zscore: f64,
    /// RMS of the fitted conditional mean of that difference given the
    /// observed state at the earlier stopping time.
    pub residual_rms: f64,
    pub max_coefficient_z: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub pairs: Vec<ConsistencyPair>,
    pub family_threshold: f64,
    pub verdict: bool,
}

/// Test the pasting-compatibility condition between successive layers:
/// conditionally on the observed state at `T /\ tau_{n-1}`, the
/// normalized marginal utility of layer `n` must re-project onto that of
/// layer `n-1`. Equivalently, the raw difference of the two normalized
/// quantities has conditional mean zero; that raw form keeps honest
/// per-path randomness in the test statistics.
pub fn consistency_check(
    wealths: &[WealthPath],
    layers: &[&StoppingLayer],
    ensemble: &PathEnsemble,
    utility: &UtilitySpec,
    tag: &FiltrationTag<'_>,
    spec: &RegressionSpec,
) -> Result<ConsistencyReport> {
    check_layers(layers)?;
    if wealths.len() != layers.len() || wealths.len() < 2 {
        return Err(Error::Invalid("consistency check needs at least two layered strategies".into()));
    }
    let n = ensemble.n_paths;

    let normalized = |w: &WealthPath, l: &StoppingLayer| -> Result<Vec<f64>> {
        let mut vals = Vec::with_capacity(n);
        for p in 0..n {
            vals.push(utility.u_prime(w.x.get(p, l.tau_index[p] as usize))?);
        }
        let mean = vals.iter().sum::<f64>() / n as f64;
        for v in &mut vals {
            *v /= mean;
        }
        Ok(vals)
    };

    let mut pairs = Vec::new();
    for k in 1..wealths.len() {
        let prev_layer = layers[k - 1];
        let next = normalized(&wealths[k], layers[k])?;
        let prev = normalized(&wealths[k - 1], prev_layer)?;
        let diffs: Vec<f64> = next.iter().zip(&prev).map(|(a, b)| a - b).collect();

        let (mean, se) = mean_se(&diffs);
        let paths: Vec<usize> = (0..n).collect();
        let steps: Vec<usize> = prev_layer.tau_index.iter().map(|&i| i as usize).collect();
        let design = design_at(&paths, &steps, tag, spec)?;
        let fit = fit_design(&design, &diffs, None, spec.ridge, 0)?;
        let rms = (fit.fitted.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
        let max_coefficient_z =
            fit.coefficient_z().iter().map(|z| z.abs()).fold(0.0, f64::max);

        pairs.push(ConsistencyPair {
            level_prev: prev_layer.level,
            level_next: layers[k].level,
            mean,
            se,
            zscore: safe_z(mean, se),
            residual_rms: rms,
            max_coefficient_z,
        });
    }

    let verdict = pairs
        .iter()
        .all(|p| p.zscore.abs() < FAMILY_THRESHOLD && p.max_coefficient_z < FAMILY_THRESHOLD);
    Ok(ConsistencyReport { pairs, family_threshold: FAMILY_THRESHOLD, verdict })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PilmdLayerAudit {
    pub level: u32,
    pub z_martingale: MartingaleReport,
    pub zs_martingale: MartingaleReport,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PilmdReport {
    pub layers: Vec<PilmdLayerAudit>,
    pub verdict: bool,
}

/// Per layer, run martingale audits of the stopped deflator and of the
/// stopped deflator-times-price process; a deflator must pass both at
/// every layer.
pub fn pilmd_audit(
    deflator: &DeflatorPath,
    ensemble: &PathEnsemble,
    layers: &[&StoppingLayer],
    feature_grids: &[&Grid2],
    spec: &RegressionSpec,
) -> Result<PilmdReport> {
    if deflator.z.n_paths != ensemble.n_paths {
        return Err(Error::EnsembleMismatch("deflator does not match ensemble".into()));
    }
    let n_steps = ensemble.grid.n_steps;
    let checkpoints = default_checkpoints(n_steps);
    let mut out = Vec::new();
    for layer in layers {
        let mut z_stopped = Grid2::zeros(ensemble.n_paths, n_steps + 1);
        let mut zs_stopped = Grid2::zeros(ensemble.n_paths, n_steps + 1);
        for p in 0..ensemble.n_paths {
            for j in 0..=n_steps {
                let stop = layer.stop(p, j);
                let z = deflator.z.get(p, stop);
                z_stopped.set(p, j, z);
                zs_stopped.set(p, j, z * ensemble.s.get(p, stop));
            }
        }
        let tag = FiltrationTag::observed(feature_grids, Some(layer));
        let z_rep = martingale_test(&z_stopped, ensemble, &tag, &checkpoints, spec)?;
        let zs_rep = martingale_test(&zs_stopped, ensemble, &tag, &checkpoints, spec)?;
        let pass = z_rep.verdict && zs_rep.verdict;
        out.push(PilmdLayerAudit {
            level: layer.level,
            z_martingale: z_rep,
            zs_martingale: zs_rep,
            pass,
        });
    }
    let verdict = out.iter().all(|l| l.pass);
    Ok(PilmdReport { layers: out, verdict })
}

/// Each grid point carries its time; useful as a regression feature at
/// path-dependent (stopping-time) indices.
pub fn time_feature(ensemble: &PathEnsemble) -> Grid2 {
    let mut g = Grid2::zeros(ensemble.n_paths, ensemble.grid.n_points());
    for p in 0..ensemble.n_paths {
        for j in 0..ensemble.grid.n_points() {
            g.set(p, j, ensemble.grid.t(j));
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use crate::scenarios::build_merton;
    use crate::sim::{first_exit_layer, integrate_wealth, simulate};

    #[test]
    fn linear_utility_segments_are_unit_and_consistent() {
        let model = build_merton(0.05, 0.3, None).unwrap();
        let e = simulate(&model, TimeGrid::new(1.0, 64), 2_000, 91).unwrap();
        let l2 = first_exit_layer(&e, 2).unwrap();
        let l4 = first_exit_layer(&e, 4).unwrap();
        let w2 = integrate_wealth(&e, &Strategy::ConstantUnits { units: 1.0 }, 1.0, Some(&l2), None)
            .unwrap();
        let w4 = integrate_wealth(&e, &Strategy::ConstantUnits { units: 0.0 }, 1.0, Some(&l4), None)
            .unwrap();
        let grids = [&e.s];
        let tag = FiltrationTag::observed(&grids, None);
        let spec = RegressionSpec::default();
        let layers = [&l2, &l4];

        let pasted = paste(
            &[w2.clone(), w4.clone()],
            &layers,
            &e,
            &UtilitySpec::Linear,
            SegmentEstimator::ExactStoppedMartingale,
            &tag,
            &spec,
        )
        .unwrap();
        for p in 0..e.n_paths {
            for j in 0..=64 {
                assert_eq!(pasted.z.get(p, j), 1.0);
            }
        }
        assert_eq!(pasting_gap(&pasted, &layers), 0.0);

        // consistency residual is exactly zero for linear utility
        let time = time_feature(&e);
        let cgrids = [&time, &e.s];
        let ctag = FiltrationTag::observed(&cgrids, None);
        let rep = consistency_check(
            &[w2, w4],
            &layers,
            &e,
            &UtilitySpec::Linear,
            &ctag,
            &spec,
        )
        .unwrap();
        assert!(rep.verdict);
        assert!(rep.pairs[0].mean.abs() < 1e-14);
    }

    #[test]
    fn missing_layer_strategy_is_an_error() {
        let model = build_merton(0.0, 0.3, None).unwrap();
        let e = simulate(&model, TimeGrid::new(1.0, 32), 500, 17).unwrap();
        let l2 = first_exit_layer(&e, 2).unwrap();
        let l4 = first_exit_layer(&e, 4).unwrap();
        let w2 = integrate_wealth(&e, &Strategy::ConstantUnits { units: 1.0 }, 1.0, Some(&l2), None)
            .unwrap();
        let grids = [&e.s];
        let tag = FiltrationTag::observed(&grids, None);
        let layers = [&l2, &l4];
        assert!(matches!(
            paste(
                &[w2],
                &layers,
                &e,
                &UtilitySpec::Log,
                SegmentEstimator::ExactStoppedMartingale,
                &tag,
                &RegressionSpec::default(),
            ),
            Err(Error::MissingLayerStrategy { .. })
        ));
    }

    #[test]
    fn unit_deflator_passes_on_driftless_price_and_fails_with_drift() {
        let spec = RegressionSpec::audit();
        for (b, expect_pass) in [(0.0, true), (0.1, false)] {
            let model = build_merton(b, 0.3, None).unwrap();
            let e = simulate(&model, TimeGrid::new(1.0, 64), 30_000, 23).unwrap();
            let l4 = first_exit_layer(&e, 4).unwrap();
            let n_cols = e.grid.n_points();
            let deflator = DeflatorPath {
                z: Grid2::filled(e.n_paths, n_cols, 1.0),
                segments: vec![Grid2::filled(e.n_paths, n_cols, 1.0)],
                strategies: vec![Strategy::ConstantUnits { units: 0.0 }],
                segment_idx: vec![1u8; e.n_paths * n_cols],
                n_cols,
            };
            let grids = [&e.s];
            let layers = [&l4];
            let rep = pilmd_audit(&deflator, &e, &layers, &grids, &spec).unwrap();
            assert_eq!(rep.verdict, expect_pass, "b = {b}");
            if !expect_pass {
                // Z itself is fine; the product with the drifting price fails
                assert!(rep.layers[0].z_martingale.verdict);
                assert!(!rep.layers[0].zs_martingale.verdict);
            }
        }
    }

    #[test]
    fn inconsistent_pair_is_detected() {
        // buy-and-hold on layer 2 vs no-trading on layer 4 with drift:
        // normalized marginal utilities disagree conditionally
        let model = build_merton(0.1, 0.2, None).unwrap();
        let e = simulate(&model, TimeGrid::new(1.0, 64), 30_000, 29).unwrap();
        let l2 = first_exit_layer(&e, 2).unwrap();
        let l4 = first_exit_layer(&e, 4).unwrap();
        let w2 = integrate_wealth(&e, &Strategy::ConstantUnits { units: 1.0 }, 1.0, Some(&l2), None)
            .unwrap();
        let w4 = integrate_wealth(&e, &Strategy::ConstantUnits { units: 0.0 }, 1.0, Some(&l4), None)
            .unwrap();
        let time = time_feature(&e);
        let grids = [&time, &e.s];
        let tag = FiltrationTag::observed(&grids, None);
        let layers = [&l2, &l4];
        let rep = consistency_check(
            &[w2, w4],
            &layers,
            &e,
            &UtilitySpec::Log,
            &tag,
            &RegressionSpec::audit(),
        )
        .unwrap();
        assert!(!rep.verdict, "pairs: {:?}", rep.pairs);
    }
}
