//! Built-in experiments: the Bessel market, a bounded Merton
//! jump-diffusion, and a hidden two-state-drift scenario where the
//! observation filtration is genuinely smaller than the full one.

use crate::error::{Error, Result};
use crate::grid::Grid2;
use crate::model::{DriftSpec, GammaSpec, JumpSpec, MarkDistribution, MarketModel, SigmaSpec};
use crate::sim::PathEnsemble;
use serde::{Deserialize, Serialize};

/// Two-state drift chain: the minimal scenario in which observing the
/// price does not reveal the driving randomness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HiddenDriftSpec {
    pub mu_low: f64,
    pub mu_high: f64,
    /// Rate low -> high.
    pub lambda_up: f64,
    /// Rate high -> low.
    pub lambda_down: f64,
    pub sigma: f64,
    /// Initial probability of the high state.
    pub pi0: f64,
}

impl HiddenDriftSpec {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_up < 0.0 || self.lambda_down < 0.0 {
            return Err(Error::Invalid("transition rates must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.pi0) {
            return Err(Error::Invalid("pi0 must lie in [0, 1]".into()));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Invalid("sigma must be positive".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn drift(&self, high: bool) -> f64 {
        if high {
            self.mu_high
        } else {
            self.mu_low
        }
    }

    /// Probability of being high after `dt` given the current state
    /// (exact two-state transition, not an Euler step).
    pub fn high_prob_after(&self, high: bool, dt: f64) -> f64 {
        let r = self.lambda_up + self.lambda_down;
        if r == 0.0 {
            return if high { 1.0 } else { 0.0 };
        }
        let pinf = self.lambda_up / r;
        let decay = (-r * dt).exp();
        let start = if high { 1.0 } else { 0.0 };
        pinf + (start - pinf) * decay
    }

    /// Sample the next state from one uniform draw.
    pub fn transition(&self, high: bool, dt: f64, u: f64) -> bool {
        u < self.high_prob_after(high, dt)
    }

    /// Filter prediction step; linear in `pi`, so it matches
    /// `high_prob_after` averaged over the current belief.
    pub fn predict(&self, pi: f64, dt: f64) -> f64 {
        let r = self.lambda_up + self.lambda_down;
        if r == 0.0 {
            return pi;
        }
        let pinf = self.lambda_up / r;
        pinf + (pi - pinf) * (-r * dt).exp()
    }
}

/// The running example market: `b = 1/S`, `sigma = 1`, no jumps, `S(0) = 1`.
/// Pair it with exact Bessel path sampling rather than the Euler scheme;
/// inverse moments are the quantities of interest and the Euler form is
/// biased near zero.
pub fn build_bessel() -> MarketModel {
    MarketModel {
        drift: DriftSpec::InverseS,
        sigma: SigmaSpec::Const { value: 1.0 },
        gamma: GammaSpec::Zero,
        jumps: None,
        s0: 1.0,
        coefficient_bound: None,
        hidden: None,
    }
}

/// Constant-coefficient jump-diffusion with the uniform bound declared,
/// i.e. the globally bounded regime. `jump = (size, intensity)`.
pub fn build_merton(b: f64, sigma: f64, jump: Option<(f64, f64)>) -> Result<MarketModel> {
    let mut bound = b.abs().max(sigma.abs());
    let (gamma, jumps) = match jump {
        None => (GammaSpec::Zero, None),
        Some((size, intensity)) => {
            bound = bound.max(size.abs());
            (
                GammaSpec::Const { value: size },
                Some(JumpSpec::new(intensity, MarkDistribution::Point { value: size })?),
            )
        }
    };
    Ok(MarketModel {
        drift: DriftSpec::Const { value: b },
        sigma: SigmaSpec::Const { value: sigma },
        gamma,
        jumps,
        s0: 1.0,
        coefficient_bound: Some(bound),
        hidden: None,
    })
}

pub fn build_hidden_drift(spec: HiddenDriftSpec) -> Result<MarketModel> {
    spec.validate()?;
    Ok(MarketModel {
        drift: DriftSpec::Hidden,
        sigma: SigmaSpec::Const { value: spec.sigma },
        gamma: GammaSpec::Zero,
        jumps: None,
        s0: 1.0,
        coefficient_bound: Some(spec.mu_low.abs().max(spec.mu_high.abs()).max(spec.sigma)),
        hidden: Some(spec),
    })
}

/// Two-state filter driven by observed price increments.
///
/// `pi[p][j]` is the conditional probability of the high state at `t_j`
/// given increments strictly before `t_j`, which makes it usable as a
/// predictable feature at the left endpoint of step `j`. Because the
/// simulator evaluates the drift at left endpoints and transitions the
/// chain exactly, this recursion is the exact posterior for the
/// discretized model: update the belief about `Y(t_j)` with the Gaussian
/// likelihood of `dS_j`, then propagate one transition step.
pub fn wonham_filter(ensemble: &PathEnsemble, spec: &HiddenDriftSpec) -> Result<Grid2> {
    spec.validate()?;
    let dt = ensemble.grid.dt();
    let n_steps = ensemble.grid.n_steps;
    let mut pi = Grid2::zeros(ensemble.n_paths, n_steps + 1);
    let var = spec.sigma * spec.sigma * dt;

    use rayon::prelude::*;
    let s = &ensemble.s;
    pi.par_rows_mut().enumerate().for_each(|(p, row)| {
        row[0] = spec.pi0;
        for j in 0..n_steps {
            let d = s.get(p, j + 1) - s.get(p, j);
            let la = -(d - spec.mu_high * dt) * (d - spec.mu_high * dt) / (2.0 * var);
            let lb = -(d - spec.mu_low * dt) * (d - spec.mu_low * dt) / (2.0 * var);
            let m = la.max(lb);
            let wh = row[j] * (la - m).exp();
            let wl = (1.0 - row[j]) * (lb - m).exp();
            let posterior = wh / (wh + wl);
            row[j + 1] = spec.predict(posterior, dt);
        }
    });
    Ok(pi)
}

/// Conditional drift `E[b(t_j) | observations]` implied by the filter.
pub fn filtered_drift(pi: &Grid2, spec: &HiddenDriftSpec) -> Grid2 {
    let mut out = Grid2::zeros(pi.n_paths, pi.n_cols);
    for p in 0..pi.n_paths {
        for j in 0..pi.n_cols {
            let q = pi.get(p, j);
            out.set(p, j, q * spec.mu_high + (1.0 - q) * spec.mu_low);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use crate::sim::simulate;

    #[test]
    fn bessel_model_coefficients() {
        let m = build_bessel();
        assert_eq!(m.s0, 1.0);
        assert_eq!(m.drift_at(0.3, 2.0, None), 0.5);
        assert_eq!(m.sigma_at(0.0, 5.0), 1.0);
        assert_eq!(m.gamma_at(0.0, 1.0, 0.7), 0.0);
    }

    #[test]
    fn merton_bounds_and_jump_integral() {
        let m = build_merton(0.1, 0.2, None).unwrap();
        assert_eq!(m.coefficient_bound, Some(0.2));
        let m = build_merton(0.1, 0.2, Some((0.5, 2.0))).unwrap();
        assert_eq!(m.coefficient_bound, Some(0.5));
        assert!((m.gamma_nu_integral(0.0, 1.0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn uninformative_observations_leave_stationary_belief_fixed() {
        // equal drifts and a stationary prior: the filter has nothing to learn
        let spec = HiddenDriftSpec {
            mu_low: 0.2,
            mu_high: 0.2,
            lambda_up: 1.0,
            lambda_down: 1.0,
            sigma: 0.3,
            pi0: 0.5,
        };
        let model = build_hidden_drift(spec).unwrap();
        let e = simulate(&model, TimeGrid::new(1.0, 64), 64, 5).unwrap();
        let pi = wonham_filter(&e, &spec).unwrap();
        for p in 0..e.n_paths {
            for j in 0..=64 {
                assert!((pi.get(p, j) - 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn filter_stays_in_unit_interval() {
        let spec = HiddenDriftSpec {
            mu_low: -0.7,
            mu_high: 0.9,
            lambda_up: 0.4,
            lambda_down: 0.6,
            sigma: 0.25,
            pi0: 0.3,
        };
        let model = build_hidden_drift(spec).unwrap();
        let e = simulate(&model, TimeGrid::new(2.0, 128), 512, 17).unwrap();
        let pi = wonham_filter(&e, &spec).unwrap();
        for p in 0..e.n_paths {
            for j in 0..=128 {
                let v = pi.get(p, j);
                assert!((0.0..=1.0).contains(&v), "pi = {v}");
            }
        }
    }

    #[test]
    fn frozen_chain_belief_converges_to_truth_with_horizon() {
        // no switching: longer observation windows pin the state down
        let spec = HiddenDriftSpec {
            mu_low: -0.3,
            mu_high: 0.5,
            lambda_up: 0.0,
            lambda_down: 0.0,
            sigma: 0.4,
            pi0: 0.5,
        };
        let model = build_hidden_drift(spec).unwrap();
        let mut errs = Vec::new();
        for (i, horizon) in [0.5f64, 1.0, 2.0].iter().enumerate() {
            let steps = (128.0 * horizon) as usize;
            let e = simulate(&model, TimeGrid::new(*horizon, steps), 3_000, 70 + i as u64)
                .unwrap();
            let pi = wonham_filter(&e, &spec).unwrap();
            let hidden = e.hidden.as_ref().unwrap();
            let mut err = 0.0;
            for p in 0..e.n_paths {
                let truth = if hidden.get(p, steps) == spec.mu_high { 1.0 } else { 0.0 };
                err += (pi.get(p, steps) - truth).abs();
            }
            errs.push(err / e.n_paths as f64);
        }
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "errors {errs:?}");
    }
}
