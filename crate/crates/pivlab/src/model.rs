//! Market models, utility functions, trading strategies and admissibility
//! diagnostics.
//!
//! Coefficient evaluators are pure functions of `(t, S(t-), hidden(t-))`
//! and are only ever queried at left limits, which is what makes the
//! discretized integrands predictable. All types here are immutable after
//! construction and safe to share across simulation workers.

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::rng::StreamRng;
use crate::scenarios::HiddenDriftSpec;
use crate::sim::{PathEnsemble, StoppingLayer, WealthPath};
use serde::{Deserialize, Serialize};

/// Distribution of jump marks under the (finite) jump measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarkDistribution {
    /// All jumps carry the same mark.
    Point { value: f64 },
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, sd: f64 },
}

impl MarkDistribution {
    pub fn sample(&self, rng: &mut StreamRng) -> f64 {
        match self {
            MarkDistribution::Point { value } => *value,
            MarkDistribution::Uniform { lo, hi } => lo + (hi - lo) * rng.uniform(),
            MarkDistribution::Normal { mean, sd } => mean + sd * rng.normal(),
        }
    }

    /// Expectation of `f` under the mark distribution, by exact formula for
    /// point masses and fixed-node Gauss-Legendre quadrature otherwise.
    pub fn expect(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        match self {
            MarkDistribution::Point { value } => f(*value),
            MarkDistribution::Uniform { lo, hi } => {
                let (nodes, weights) = gauss_legendre_64();
                let mid = 0.5 * (lo + hi);
                let half = 0.5 * (hi - lo);
                let mut acc = 0.0;
                for (x, w) in nodes.iter().zip(weights.iter()) {
                    acc += w * f(mid + half * x);
                }
                acc * 0.5
            }
            MarkDistribution::Normal { mean, sd } => {
                // integrate the Gaussian density over mean +/- 8 sd
                let (nodes, weights) = gauss_legendre_64();
                let half = 8.0 * sd;
                let norm = 1.0 / (sd * (2.0 * std::f64::consts::PI).sqrt());
                let mut acc = 0.0;
                for (x, w) in nodes.iter().zip(weights.iter()) {
                    let z = mean + half * x;
                    let dens = norm * (-0.5 * ((z - mean) / sd).powi(2)).exp();
                    acc += w * f(z) * dens;
                }
                acc * half
            }
        }
    }
}

/// Finite-activity jump measure: intensity and mark law, `nu(R) = lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpSpec {
    pub intensity: f64,
    pub marks: MarkDistribution,
}

impl JumpSpec {
    pub fn new(intensity: f64, marks: MarkDistribution) -> Result<Self> {
        if !(intensity.is_finite() && intensity >= 0.0) {
            return Err(Error::Invalid(format!(
                "jump intensity must be finite and >= 0, got {intensity}"
            )));
        }
        Ok(JumpSpec { intensity, marks })
    }

    /// `\int f(z) nu(dz) = lambda * E[f(mark)]`.
    pub fn integrate(&self, f: impl FnMut(f64) -> f64) -> f64 {
        self.intensity * self.marks.expect(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftSpec {
    Const { value: f64 },
    /// `b(t) = 1/S(t-)`.
    InverseS,
    /// Drift read off the simulated hidden state.
    Hidden,
    Expr { expr: Expr },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SigmaSpec {
    Const { value: f64 },
    Expr { expr: Expr },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GammaSpec {
    Zero,
    Const { value: f64 },
    Expr { expr: Expr },
}

/// Single-asset jump-diffusion model with predictable coefficient
/// evaluators. `coefficient_bound`, when set, declares the uniformly
/// bounded regime and is enforced at every queried point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketModel {
    pub drift: DriftSpec,
    pub sigma: SigmaSpec,
    pub gamma: GammaSpec,
    pub jumps: Option<JumpSpec>,
    pub s0: f64,
    pub coefficient_bound: Option<f64>,
    pub hidden: Option<HiddenDriftSpec>,
}

impl MarketModel {
    pub fn drift_at(&self, t: f64, s: f64, hidden: Option<f64>) -> f64 {
        match &self.drift {
            DriftSpec::Const { value } => *value,
            DriftSpec::InverseS => 1.0 / s,
            DriftSpec::Hidden => hidden.expect("hidden drift model evaluated without hidden state"),
            DriftSpec::Expr { expr } => expr.eval(t, s, 0.0),
        }
    }

    pub fn sigma_at(&self, t: f64, s: f64) -> f64 {
        match &self.sigma {
            SigmaSpec::Const { value } => *value,
            SigmaSpec::Expr { expr } => expr.eval(t, s, 0.0),
        }
    }

    pub fn gamma_at(&self, t: f64, s: f64, mark: f64) -> f64 {
        match &self.gamma {
            GammaSpec::Zero => 0.0,
            GammaSpec::Const { value } => *value,
            GammaSpec::Expr { expr } => expr.eval(t, s, mark),
        }
    }

    pub fn has_jumps(&self) -> bool {
        self.jumps.as_ref().map(|j| j.intensity > 0.0).unwrap_or(false)
            && !matches!(self.gamma, GammaSpec::Zero)
    }

    /// `\int gamma(t, s, z) nu(dz)`; zero without a jump spec.
    pub fn gamma_nu_integral(&self, t: f64, s: f64) -> f64 {
        match (&self.jumps, &self.gamma) {
            (None, _) | (_, GammaSpec::Zero) => 0.0,
            (Some(spec), _) => spec.integrate(|z| self.gamma_at(t, s, z)),
        }
    }
}

/// Utility function on wealth: concave, strictly increasing, C^1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UtilitySpec {
    Log,
    /// `U(x) = x^gamma / gamma`, `gamma < 1`, `gamma != 0`; domain `x > 0`.
    Power { gamma: f64 },
    /// `U(x) = -exp(-alpha x) / alpha`, `alpha > 0`.
    Exponential { alpha: f64 },
    Linear,
}

impl UtilitySpec {
    pub fn in_domain(&self, x: f64) -> bool {
        x.is_finite()
            && match self {
                UtilitySpec::Log | UtilitySpec::Power { .. } => x > 0.0,
                UtilitySpec::Exponential { .. } | UtilitySpec::Linear => true,
            }
    }

    pub fn u(&self, x: f64) -> Result<f64> {
        if !self.in_domain(x) {
            return Err(Error::UtilityDomain { count: 1, first: vec![] });
        }
        Ok(match self {
            UtilitySpec::Log => x.ln(),
            UtilitySpec::Power { gamma } => x.powf(*gamma) / gamma,
            UtilitySpec::Exponential { alpha } => -(-alpha * x).exp() / alpha,
            UtilitySpec::Linear => x,
        })
    }

    pub fn u_prime(&self, x: f64) -> Result<f64> {
        if !self.in_domain(x) {
            return Err(Error::UtilityDomain { count: 1, first: vec![] });
        }
        Ok(match self {
            UtilitySpec::Log => 1.0 / x,
            UtilitySpec::Power { gamma } => x.powf(gamma - 1.0),
            UtilitySpec::Exponential { alpha } => (-alpha * x).exp(),
            UtilitySpec::Linear => 1.0,
        })
    }
}

/// Marginal utility `U'(wealth)`, strictly positive on the domain.
pub fn marginal_utility(utility: &UtilitySpec, wealth: f64) -> Result<f64> {
    utility.u_prime(wealth)
}

/// State summary a strategy is allowed to see: everything here is
/// measurable with respect to the observation filtration strictly before
/// the trading decision takes effect.
#[derive(Debug, Clone, Copy)]
pub struct StrategyState {
    pub t: f64,
    /// Price left limit `S(t-)`.
    pub s: f64,
    /// Wealth left limit `X(t-)` of the strategy's own wealth process.
    pub x: f64,
    /// Filter probability of the high-drift state, when a filter runs.
    pub pi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    /// Hold a fixed number of units.
    ConstantUnits { units: f64 },
    /// `phi(t) = c * X(t-)`.
    ProportionalWealth { c: f64 },
    /// `phi(t) = (pi mu_high + (1-pi) mu_low) * X(t-) / sigma^2`,
    /// the certainty-equivalent feedback rule driven by the filter.
    FilterProportional { mu_low: f64, mu_high: f64, sigma: f64 },
    /// Units as an expression in `(t, s)`.
    ExprUnits { expr: Expr },
}

impl Strategy {
    pub fn label(&self) -> String {
        match self {
            Strategy::ConstantUnits { units } => format!("const({units})"),
            Strategy::ProportionalWealth { c } => format!("prop-wealth({c})"),
            Strategy::FilterProportional { .. } => "filter-proportional".to_string(),
            Strategy::ExprUnits { expr } => format!("expr({expr})"),
        }
    }

    /// Units of the risky asset to hold over the coming step.
    pub fn phi(&self, state: &StrategyState) -> Result<f64> {
        Ok(match self {
            Strategy::ConstantUnits { units } => *units,
            Strategy::ProportionalWealth { c } => c * state.x,
            Strategy::FilterProportional { mu_low, mu_high, sigma } => {
                let pi = state.pi.ok_or_else(|| Error::MissingFilterState {
                    strategy: self.label(),
                })?;
                let drift = pi * mu_high + (1.0 - pi) * mu_low;
                drift * state.x / (sigma * sigma)
            }
            Strategy::ExprUnits { expr } => expr.eval(state.t, state.s, 0.0),
        })
    }

    pub fn needs_filter(&self) -> bool {
        matches!(self, Strategy::FilterProportional { .. })
    }
}

/// Monte Carlo moment estimate with a heavy-tail / divergence heuristic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub se: f64,
    /// Means over nested path prefixes (n/8, n/4, n/2, n).
    pub nested_means: Vec<f64>,
    /// Largest single-path share of the total sum.
    pub max_share: f64,
    pub diverging: bool,
}

/// The estimate is flagged when nested prefix means keep growing by more
/// than a factor of two, or a single path carries over 10% of the sum.
/// Divergence cannot be decided from finitely many paths; this is a
/// diagnostic, not a proof.
pub fn moment_estimate(values: &[f64]) -> MomentEstimate {
    let n = values.len();
    let sum: f64 = values.iter().sum();
    let mean = sum / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n.max(2) - 1) as f64;
    let se = (var / n as f64).sqrt();
    let mut nested_means = Vec::with_capacity(4);
    for denom in [8usize, 4, 2, 1] {
        let k = (n / denom).max(1);
        nested_means.push(values[..k].iter().sum::<f64>() / k as f64);
    }
    let max_abs = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let abs_sum: f64 = values.iter().map(|v| v.abs()).sum();
    let max_share = if abs_sum > 0.0 { max_abs / abs_sum } else { 0.0 };
    let growing = nested_means.windows(2).all(|w| w[1] > w[0])
        && nested_means[0] > 0.0
        && nested_means[3] / nested_means[0] > 2.0;
    let concentrated = n >= 64 && max_share > 0.10;
    MomentEstimate { mean, se, nested_means, max_share, diverging: growing || concentrated }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub strategy: String,
    pub layer_level: Option<u32>,
    /// Estimate of `E[sup_t X(t)^2]`.
    pub sup_wealth_sq: MomentEstimate,
    /// Estimate of `E[U'(X(T /\ tau_n))^2]`.
    pub marginal_utility_sq: MomentEstimate,
    pub pass: bool,
}

/// Monte Carlo admissibility diagnostics for a wealth process stopped at
/// the given layer. Square-integrability of the running supremum and of
/// the terminal marginal utility are certified statistically with a
/// divergence flag; utility domain violations are hard errors.
pub fn validate_admissibility(
    wealth: &WealthPath,
    ensemble: &PathEnsemble,
    utility: &UtilitySpec,
    layer: Option<&StoppingLayer>,
) -> Result<AdmissibilityReport> {
    if wealth.x.n_paths != ensemble.n_paths {
        return Err(Error::EnsembleMismatch(format!(
            "wealth has {} paths, ensemble has {}",
            wealth.x.n_paths, ensemble.n_paths
        )));
    }
    let n_steps = ensemble.grid.n_steps;
    let mut sup_sq = Vec::with_capacity(ensemble.n_paths);
    let mut mu_sq = Vec::with_capacity(ensemble.n_paths);
    let mut offenders = Vec::new();
    for p in 0..ensemble.n_paths {
        let stop = layer.map(|l| l.tau_index[p] as usize).unwrap_or(n_steps);
        let row = wealth.x.row(p);
        let mut sup = 0.0f64;
        for &x in &row[..=stop] {
            sup = sup.max(x.abs());
        }
        sup_sq.push(sup * sup);
        let terminal = row[stop.min(n_steps)];
        match utility.u_prime(terminal) {
            Ok(up) => mu_sq.push(up * up),
            Err(_) => {
                if offenders.len() < 16 {
                    offenders.push(p);
                }
                mu_sq.push(f64::NAN);
            }
        }
    }
    if !offenders.is_empty() {
        let count = mu_sq.iter().filter(|v| v.is_nan()).count();
        return Err(Error::UtilityDomain { count, first: offenders });
    }
    let sup_est = moment_estimate(&sup_sq);
    let mu_est = moment_estimate(&mu_sq);
    let pass = !sup_est.diverging && !mu_est.diverging;
    Ok(AdmissibilityReport {
        strategy: wealth.strategy.label(),
        layer_level: layer.map(|l| l.level),
        sup_wealth_sq: sup_est,
        marginal_utility_sq: mu_est,
        pass,
    })
}

/// 64-point Gauss-Legendre rule on [-1, 1], computed once by Newton
/// iteration on the Legendre recurrence.
fn gauss_legendre_64() -> &'static ([f64; 64], [f64; 64]) {
    use std::sync::OnceLock;
    static RULE: OnceLock<([f64; 64], [f64; 64])> = OnceLock::new();
    RULE.get_or_init(|| {
        const N: usize = 64;
        let mut nodes = [0.0f64; N];
        let mut weights = [0.0f64; N];
        for i in 0..N {
            // Chebyshev initial guess
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (N as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0f64, x);
                for k in 2..=N {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                let dp = N as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let (mut p0, mut p1) = (1.0f64, x);
            for k in 2..=N {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = N as f64 * (x * p1 - p0) / (x * x - 1.0);
            nodes[N - 1 - i] = x;
            weights[N - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        (nodes, weights)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marginal_utility_examples() {
        assert_eq!(marginal_utility(&UtilitySpec::Log, 2.0).unwrap(), 0.5);
        assert_eq!(marginal_utility(&UtilitySpec::Linear, -3.0).unwrap(), 1.0);
        assert_eq!(
            marginal_utility(&UtilitySpec::Exponential { alpha: 1.0 }, 0.0).unwrap(),
            1.0
        );
        assert!(marginal_utility(&UtilitySpec::Log, 0.0).is_err());
        assert!(marginal_utility(&UtilitySpec::Power { gamma: 0.5 }, -1.0).is_err());
    }

    #[test]
    fn utilities_are_increasing_and_concave() {
        let utils = [
            UtilitySpec::Log,
            UtilitySpec::Power { gamma: 0.5 },
            UtilitySpec::Power { gamma: -1.0 },
            UtilitySpec::Exponential { alpha: 1.0 },
            UtilitySpec::Linear,
        ];
        for u in utils {
            let mut prev: Option<(f64, f64)> = None;
            for i in 1..=40 {
                let x = 0.25 * i as f64;
                let val = u.u(x).unwrap();
                let slope = u.u_prime(x).unwrap();
                assert!(slope > 0.0, "{u:?} marginal utility must be positive");
                if let Some((pv, ps)) = prev {
                    assert!(val > pv, "{u:?} must be strictly increasing");
                    assert!(slope <= ps + 1e-12, "{u:?} marginal utility must be nonincreasing");
                }
                prev = Some((val, slope));
            }
        }
    }

    #[test]
    fn finite_difference_matches_marginal_utility() {
        // central difference at h = 1e-5 agrees to 1e-6 for the smooth built-ins
        let utils = [
            UtilitySpec::Log,
            UtilitySpec::Power { gamma: 0.3 },
            UtilitySpec::Exponential { alpha: 0.7 },
            UtilitySpec::Linear,
        ];
        let mut rng = StreamRng::new(123, 0, 0, 99);
        for u in utils {
            for _ in 0..10 {
                let x = 0.5 + 4.0 * rng.uniform();
                let h = 1e-5;
                let fd = (u.u(x + h).unwrap() - u.u(x - h).unwrap()) / (2.0 * h);
                let exact = u.u_prime(x).unwrap();
                assert!(
                    (fd - exact).abs() < 1e-6,
                    "{u:?} at x={x}: fd={fd}, exact={exact}"
                );
            }
        }
    }

    #[test]
    fn strategies_are_deterministic() {
        let strats = [
            Strategy::ConstantUnits { units: 1.5 },
            Strategy::ProportionalWealth { c: 2.5 },
            Strategy::ExprUnits { expr: Expr::parse("0.1 * s + t").unwrap() },
            Strategy::FilterProportional { mu_low: -0.2, mu_high: 0.6, sigma: 0.3 },
        ];
        let state = StrategyState { t: 0.5, s: 1.2, x: 0.9, pi: Some(0.4) };
        for s in strats {
            assert_eq!(s.phi(&state).unwrap(), s.phi(&state).unwrap());
        }
    }

    #[test]
    fn filter_strategy_requires_filter_state() {
        let s = Strategy::FilterProportional { mu_low: 0.0, mu_high: 0.2, sigma: 0.2 };
        let state = StrategyState { t: 0.0, s: 1.0, x: 1.0, pi: None };
        assert!(matches!(s.phi(&state), Err(Error::MissingFilterState { .. })));
    }

    #[test]
    fn jump_integral_point_mass() {
        let spec = JumpSpec::new(2.0, MarkDistribution::Point { value: 0.5 }).unwrap();
        assert_eq!(spec.integrate(|z| z), 1.0);
    }

    #[test]
    fn jump_integral_quadrature_matches_closed_forms() {
        let spec = JumpSpec::new(3.0, MarkDistribution::Uniform { lo: -1.0, hi: 2.0 }).unwrap();
        // E[z] = 0.5, E[z^2] = (2^3 - (-1)^3)/(3*3) = 1
        assert!((spec.integrate(|z| z) - 1.5).abs() < 1e-12);
        assert!((spec.integrate(|z| z * z) - 3.0).abs() < 1e-12);

        let spec = JumpSpec::new(1.0, MarkDistribution::Normal { mean: 0.3, sd: 0.2 }).unwrap();
        assert!((spec.integrate(|z| z) - 0.3).abs() < 1e-10);
        assert!((spec.integrate(|z| z * z) - (0.09 + 0.04)).abs() < 1e-10);
    }

    #[test]
    fn moment_flag_fires_on_concentration() {
        let mut vals = vec![1.0; 1000];
        vals[999] = 1e6;
        assert!(moment_estimate(&vals).diverging);
        assert!(!moment_estimate(&vec![2.0; 1000]).diverging);
    }
}
