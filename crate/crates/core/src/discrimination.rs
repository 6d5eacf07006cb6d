//! Sequential Bayesian discrimination between two candidate transparencies.
//!
//! Single probe particles are sent one at a time. After every run the
//! posterior of `alpha1` (equal priors) is updated from the outcome counts;
//! the measurement stops as soon as either hypothesis falls below the
//! threshold `x` and reports the more likely one.

use std::collections::HashSet;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_unit, invalid, Error, Result};
use crate::sim::{final_probabilities, OutcomeProbabilities, SampleSpec, SetupSpec};
use crate::stats::{sample_bernoulli, sample_categorical3, Detection, RngSeed};

/// Default cap on particles per sequential measurement.
pub const DEFAULT_RUN_CAP: u64 = 1_000_000;
/// Replications per curve point used for the published curves.
pub const DEFAULT_REPLICATIONS: u64 = 40_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    /// Count transmitted versus lost particles.
    Classical,
    /// Count particles found in `|R>`, `|S>` or lost after `n_roundtrips`.
    Ifm { n_roundtrips: u32, phi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub strategy: Strategy,
    pub alpha1: f64,
    pub alpha2: f64,
}

impl StrategySpec {
    pub fn classical(alpha1: f64, alpha2: f64) -> Result<Self> {
        Self::new(Strategy::Classical, alpha1, alpha2)
    }

    pub fn ifm(n_roundtrips: u32, alpha1: f64, alpha2: f64) -> Result<Self> {
        Self::new(Strategy::Ifm { n_roundtrips, phi: 0.0 }, alpha1, alpha2)
    }

    pub fn new(strategy: Strategy, alpha1: f64, alpha2: f64) -> Result<Self> {
        check_unit("alpha1", alpha1)?;
        check_unit("alpha2", alpha2)?;
        if !(alpha1 < alpha2) {
            return Err(invalid("alpha1", format!("requires alpha1 < alpha2, got {alpha1} >= {alpha2}")));
        }
        if let Strategy::Ifm { n_roundtrips, phi } = strategy {
            SetupSpec::new(n_roundtrips)?;
            if !phi.is_finite() {
                return Err(invalid("phi", "must be finite"));
            }
        }
        Ok(Self { strategy, alpha1, alpha2 })
    }

    /// Round trips for IFM, `None` for the classical measurement.
    pub fn n_roundtrips(&self) -> Option<u32> {
        match self.strategy {
            Strategy::Classical => None,
            Strategy::Ifm { n_roundtrips, .. } => Some(n_roundtrips),
        }
    }

    pub fn label(&self) -> &'static str {
        match self.strategy {
            Strategy::Classical => "classical",
            Strategy::Ifm { .. } => "ifm",
        }
    }

    /// Per-particle outcome probabilities under each hypothesis.
    pub fn outcome_model(&self) -> OutcomeModel {
        match self.strategy {
            Strategy::Classical => OutcomeModel {
                classical: true,
                probs: [
                    [self.alpha1, 0.0, 1.0 - self.alpha1],
                    [self.alpha2, 0.0, 1.0 - self.alpha2],
                ],
            },
            Strategy::Ifm { n_roundtrips, phi } => {
                let probs = |alpha| {
                    let sample = SampleSpec { alpha, phi, phi_comp: 0.0 };
                    final_probabilities(n_roundtrips, &sample).as_array()
                };
                OutcomeModel {
                    classical: false,
                    probs: [probs(self.alpha1), probs(self.alpha2)],
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hypothesis {
    Alpha1,
    Alpha2,
}

/// Outcome probabilities `[detected-in-R | transmitted, detected-in-S, lost]`
/// for `alpha1` (row 0) and `alpha2` (row 1). Classical measurements only use
/// the first and last outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeModel {
    classical: bool,
    probs: [[f64; 3]; 2],
}

impl OutcomeModel {
    pub fn probabilities(&self, hypothesis: Hypothesis) -> [f64; 3] {
        match hypothesis {
            Hypothesis::Alpha1 => self.probs[0],
            Hypothesis::Alpha2 => self.probs[1],
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, truth: Hypothesis) -> Result<Detection> {
        let p = self.probabilities(truth);
        if self.classical {
            Ok(if sample_bernoulli(rng, p[0])? {
                Detection::Reference
            } else {
                Detection::Lost
            })
        } else {
            sample_categorical3(rng, p)
        }
    }

    /// `ln P(outcome | alpha2) - ln P(outcome | alpha1)`.
    fn log_ratio(&self, outcome: Detection) -> f64 {
        let i = outcome.index();
        self.probs[1][i].ln() - self.probs[0][i].ln()
    }
}

/// `n * ln p` with `0 * ln 0 = 0`.
fn count_log(count: u64, p: f64) -> f64 {
    if count == 0 {
        0.0
    } else {
        count as f64 * p.ln()
    }
}

/// Posterior of hypothesis 1 from the two log-likelihoods with equal priors.
fn posterior_from_logs(log1: f64, log2: f64) -> Result<f64> {
    match (log1 == f64::NEG_INFINITY, log2 == f64::NEG_INFINITY) {
        (true, true) => Err(Error::ImpossibleData),
        (true, false) => Ok(0.0),
        (false, true) => Ok(1.0),
        (false, false) => Ok(1.0 / (1.0 + (log2 - log1).exp())),
    }
}

/// `P(alpha = alpha1)` after `n_total` classical runs of which `n_pass`
/// particles were transmitted.
pub fn posterior_classical(n_pass: u64, n_total: u64, alpha1: f64, alpha2: f64) -> Result<f64> {
    check_unit("alpha1", alpha1)?;
    check_unit("alpha2", alpha2)?;
    if n_pass > n_total {
        return Err(invalid("n_pass", format!("{n_pass} exceeds {n_total} runs")));
    }
    let lost = n_total - n_pass;
    let log1 = count_log(n_pass, alpha1) + count_log(lost, 1.0 - alpha1);
    let log2 = count_log(n_pass, alpha2) + count_log(lost, 1.0 - alpha2);
    posterior_from_logs(log1, log2)
}

/// `P(alpha = alpha1)` after IFM runs with `n_r`, `n_s`, `n_l` particles
/// found in `|R>`, `|S>` and lost, given the outcome probabilities under each
/// hypothesis.
pub fn posterior_ifm(
    n_r: u64,
    n_s: u64,
    n_l: u64,
    probs1: &OutcomeProbabilities,
    probs2: &OutcomeProbabilities,
) -> Result<f64> {
    let log = |p: &OutcomeProbabilities| count_log(n_r, p.p_r) + count_log(n_s, p.p_s) + count_log(n_l, p.p_l);
    posterior_from_logs(log(probs1), log(probs2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequentialRun {
    pub truth: Hypothesis,
    pub decision: Hypothesis,
    pub particles_used: u64,
    pub particles_lost: u64,
    /// `[n_r, n_s, n_l]` for IFM, `[n', 0, n - n']` for classical.
    pub counts: [u64; 3],
    /// The run cap was reached before the threshold.
    pub capped: bool,
}

fn check_threshold(x: f64) -> Result<()> {
    if x > 0.0 && x < 0.5 {
        Ok(())
    } else {
        Err(invalid("threshold_x", format!("{x} is not in (0, 0.5)")))
    }
}

/// One sequential measurement with the true transparency `truth`.
pub fn run_sequential<R: Rng + ?Sized>(
    model: &OutcomeModel,
    truth: Hypothesis,
    threshold_x: f64,
    rng: &mut R,
    cap: u64,
) -> Result<SequentialRun> {
    check_threshold(threshold_x)?;
    if cap == 0 {
        return Err(invalid("cap", "must be at least 1"));
    }
    // Stop once min(P1, P2) = 1 / (1 + e^|d|) < x, i.e. |d| > ln(1/x - 1).
    let stop_at = (1.0 / threshold_x - 1.0).ln();
    let mut log_ratio = 0.0f64;
    let mut counts = [0u64; 3];
    let mut used = 0u64;
    while used < cap {
        let outcome = model.draw(rng, truth)?;
        counts[outcome.index()] += 1;
        used += 1;
        log_ratio += model.log_ratio(outcome);
        if log_ratio.is_nan() {
            return Err(Error::ImpossibleData);
        }
        if log_ratio.abs() > stop_at {
            break;
        }
    }
    let capped = log_ratio.abs() <= stop_at;
    let decision = if log_ratio > 0.0 {
        Hypothesis::Alpha2
    } else {
        Hypothesis::Alpha1
    };
    Ok(SequentialRun {
        truth,
        decision,
        particles_used: used,
        particles_lost: counts[Detection::Lost.index()],
        counts,
        capped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthAssignment {
    /// Each replication draws its true transparency with probability 1/2.
    Random,
    /// Even replications use `alpha1`, odd ones `alpha2`.
    Stratified,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub replications: u64,
    pub seed: u64,
    pub cap: u64,
    pub truth: TruthAssignment,
}

impl MonteCarloConfig {
    pub fn new(replications: u64, seed: u64) -> Self {
        Self {
            replications,
            seed,
            cap: DEFAULT_RUN_CAP,
            truth: TruthAssignment::Random,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscriminationPoint {
    pub threshold_x: f64,
    pub error_probability: f64,
    pub mean_lost: f64,
    pub mean_used: f64,
    pub replications: u64,
    pub capped_runs: u64,
    /// Standard error of `mean_lost` over replications.
    pub lost_std_error: f64,
    pub errors: u64,
    pub total_lost: u64,
    pub total_used: u64,
}

impl DiscriminationPoint {
    pub fn error_std_error(&self) -> f64 {
        let p = self.error_probability;
        (p * (1.0 - p) / self.replications as f64).sqrt()
    }
}

#[derive(Default, Clone, Copy)]
struct Tally {
    errors: u64,
    lost: u64,
    lost_sq: u128,
    used: u64,
    capped: u64,
}

impl Tally {
    fn merge(self, o: Self) -> Self {
        Self {
            errors: self.errors + o.errors,
            lost: self.lost + o.lost,
            lost_sq: self.lost_sq + o.lost_sq,
            used: self.used + o.used,
            capped: self.capped + o.capped,
        }
    }
}

/// Runs one sequential measurement per replication and threshold.
///
/// Replication `i` draws everything (including its true transparency) from
/// stream `i` of `config.seed`, so all thresholds and strategies see common
/// random numbers, and the aggregation is integer-exact regardless of thread
/// scheduling. Thresholds producing the same totals as an earlier threshold
/// are dropped.
pub fn monte_carlo_curve(
    spec: &StrategySpec,
    thresholds: &[f64],
    config: &MonteCarloConfig,
) -> Result<Vec<DiscriminationPoint>> {
    if config.replications == 0 {
        return Err(invalid("replications", "must be at least 1"));
    }
    for &x in thresholds {
        check_threshold(x)?;
    }
    let model = spec.outcome_model();
    let base = RngSeed::new(config.seed, 0);
    let mut seen = HashSet::new();
    let mut points = Vec::with_capacity(thresholds.len());
    for &x in thresholds {
        let tally = (0..config.replications)
            .into_par_iter()
            .map(|i| -> Result<Tally> {
                let mut rng = base.with_stream(i).stream();
                let truth = match config.truth {
                    TruthAssignment::Random => {
                        if rng.random::<bool>() {
                            Hypothesis::Alpha2
                        } else {
                            Hypothesis::Alpha1
                        }
                    }
                    TruthAssignment::Stratified => {
                        if i % 2 == 0 {
                            Hypothesis::Alpha1
                        } else {
                            Hypothesis::Alpha2
                        }
                    }
                };
                let run = run_sequential(&model, truth, x, &mut rng, config.cap)?;
                Ok(Tally {
                    errors: u64::from(run.decision != run.truth),
                    lost: run.particles_lost,
                    lost_sq: u128::from(run.particles_lost) * u128::from(run.particles_lost),
                    used: run.particles_used,
                    capped: u64::from(run.capped),
                })
            })
            .try_reduce(Tally::default, |a, b| Ok(a.merge(b)))?;
        if !seen.insert((tally.errors, tally.lost, tally.used)) {
            continue;
        }
        let r = config.replications as f64;
        let mean_lost = tally.lost as f64 / r;
        let var = (tally.lost_sq as f64 / r - mean_lost * mean_lost).max(0.0);
        let lost_std_error = if config.replications > 1 {
            (var * r / (r - 1.0) / r).sqrt()
        } else {
            0.0
        };
        points.push(DiscriminationPoint {
            threshold_x: x,
            error_probability: tally.errors as f64 / r,
            mean_lost,
            mean_used: tally.used as f64 / r,
            replications: config.replications,
            capped_runs: tally.capped,
            lost_std_error,
            errors: tally.errors,
            total_lost: tally.lost,
            total_used: tally.used,
        });
    }
    Ok(points)
}

/// Logarithmic grid of `count` stopping thresholds from 0.49 down to 1e-12.
pub fn default_thresholds(count: usize) -> Vec<f64> {
    log_thresholds(0.49, 1e-12, count)
}

/// `count` thresholds spaced evenly in `ln x` from `from` to `to`.
pub fn log_thresholds(from: f64, to: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![from],
        _ => {
            let (a, b) = (from.ln(), to.ln());
            (0..count)
                .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
                .collect()
        }
    }
}

/// Minimum mean number of lost particles for telling `alpha1` from `alpha2`
/// (equal priors) with error probability at most `p_e`, over all quantum
/// measurement schemes.
pub fn min_loss_bound(alpha1: f64, alpha2: f64, p_e: f64) -> Result<f64> {
    check_unit("alpha1", alpha1)?;
    check_unit("alpha2", alpha2)?;
    if !(0.0..=0.5).contains(&p_e) {
        return Err(invalid("p_e", format!("{p_e} is not in [0, 0.5]")));
    }
    let opacity = ((1.0 - alpha1) * (1.0 - alpha2)).sqrt();
    let denominator = 1.0 - (alpha1 * alpha2).sqrt() - opacity;
    if denominator <= 0.0 {
        return Err(Error::Unbounded("minimum loss for identical transparencies"));
    }
    Ok(opacity * (1.0 - 2.0 * (p_e * (1.0 - p_e)).sqrt()) / denominator)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn probs(p_r: f64, p_s: f64, p_l: f64) -> OutcomeProbabilities {
        OutcomeProbabilities { p_r, p_s, p_l, trace: None }
    }

    #[test]
    fn classical_posterior_values() {
        assert_eq!(posterior_classical(0, 0, 0.2, 0.5).unwrap(), 0.5);
        assert_eq!(posterior_classical(1, 1, 0.0, 0.5).unwrap(), 0.0);
        let expected = 0.2f64.powi(3) * 0.8f64.powi(2) / (0.2f64.powi(3) * 0.8f64.powi(2) + 0.5f64.powi(5));
        assert_relative_eq!(posterior_classical(3, 5, 0.2, 0.5).unwrap(), expected, epsilon = 1e-14);
        assert_relative_eq!(expected, 0.140_775, epsilon = 1e-6);
        assert!(posterior_classical(6, 5, 0.2, 0.5).is_err());
    }

    #[test]
    fn classical_posterior_survives_long_runs() {
        let p = posterior_classical(20_000, 50_000, 0.4, 0.41).unwrap();
        assert!(p > 0.5 && p <= 1.0);
    }

    #[test]
    fn ifm_posterior_values() {
        let p1 = probs(0.6, 0.3, 0.1);
        let p2 = probs(0.0, 1.0, 0.0);
        assert_eq!(posterior_ifm(0, 0, 0, &p1, &p2).unwrap(), 0.5);
        assert_eq!(posterior_ifm(1, 0, 0, &p1, &p2).unwrap(), 1.0);
        let dead = probs(0.0, 0.0, 1.0);
        assert!(matches!(posterior_ifm(1, 0, 0, &dead, &p2), Err(Error::ImpossibleData)));
    }

    #[test]
    fn bound_values() {
        for a1 in [0.0, 0.3, 0.99] {
            assert_eq!(min_loss_bound(a1, 1.0, 0.1).unwrap(), 0.0);
        }
        assert!((min_loss_bound(0.5, 0.99, 0.08).unwrap() - 0.143).abs() < 5e-4);
        assert!((min_loss_bound(0.04, 0.64, 0.0).unwrap() - 2.332).abs() < 5e-4);
        assert!(matches!(min_loss_bound(0.3, 0.3, 0.1), Err(Error::Unbounded(_))));
        assert!(min_loss_bound(0.3, 0.5, 0.6).is_err());
    }

    #[test]
    fn disjoint_supports_decide_in_one_particle() {
        let spec = StrategySpec::classical(0.0, 1.0).unwrap();
        let model = spec.outcome_model();
        let mut rng = RngSeed::new(3, 0).stream();
        for truth in [Hypothesis::Alpha1, Hypothesis::Alpha2] {
            let run = run_sequential(&model, truth, 0.49, &mut rng, 10).unwrap();
            assert_eq!(run.particles_used, 1);
            assert_eq!(run.decision, truth);
        }
    }

    #[test]
    fn cap_is_flagged() {
        let spec = StrategySpec::classical(0.5, 0.5 + 1e-9).unwrap();
        let model = spec.outcome_model();
        let mut rng = RngSeed::new(1, 0).stream();
        let run = run_sequential(&model, Hypothesis::Alpha1, 1e-6, &mut rng, 50).unwrap();
        assert!(run.capped);
        assert_eq!(run.particles_used, 50);
        assert!(run.particles_lost <= run.particles_used);
    }

    #[test]
    fn invalid_inputs() {
        assert!(StrategySpec::classical(0.6, 0.5).is_err());
        assert!(StrategySpec::ifm(0, 0.1, 0.5).is_err());
        let model = StrategySpec::classical(0.1, 0.5).unwrap().outcome_model();
        let mut rng = RngSeed::new(1, 0).stream();
        assert!(run_sequential(&model, Hypothesis::Alpha1, 0.5, &mut rng, 10).is_err());
        assert!(run_sequential(&model, Hypothesis::Alpha1, 0.1, &mut rng, 0).is_err());
    }

    #[test]
    fn single_replication_error_is_zero_or_one() {
        let spec = StrategySpec::ifm(10, 0.2, 0.5).unwrap();
        let pts = monte_carlo_curve(&spec, &[0.3, 0.01], &MonteCarloConfig::new(1, 9)).unwrap();
        for p in pts {
            assert!(p.error_probability == 0.0 || p.error_probability == 1.0);
        }
    }

    #[test]
    fn duplicates_are_dropped() {
        // high contrast: both thresholds stop after the first particle
        let spec = StrategySpec::classical(0.0, 1.0).unwrap();
        let pts = monte_carlo_curve(&spec, &[0.4, 0.3, 0.2], &MonteCarloConfig::new(100, 1)).unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].threshold_x, 0.4);
    }

    #[test]
    fn threshold_grid_endpoints() {
        let g = default_thresholds(40);
        assert_eq!(g.len(), 40);
        assert_relative_eq!(g[0], 0.49, max_relative = 1e-12);
        assert_relative_eq!(g[39], 1e-12, max_relative = 1e-9);
        assert!(g.windows(2).all(|w| w[0] > w[1]));
    }
}
