//! Expected number of lost particles when measuring an unknown transparency
//! to a target uncertainty `Δα`.
//!
//! A signal probability `P(α)` is estimated from `M` repetitions; its
//! confidence interval has to shrink below `ΔP = |P'(α)| Δα`. The expected
//! loss is then `M · P_L(α)`. Binomial statistics (known particle number) use
//! the Clopper-Pearson interval, Poissonian statistics (known mean, unknown
//! losses) the central χ² interval on the count.

use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_unit, invalid, Error, Result};
use crate::sim::{final_probabilities, SampleSpec};
use crate::stats::{clopper_pearson, normal_critical_value, poisson_interval};

/// Finite-difference step for `P'(α)`.
pub const DERIVATIVE_STEP: f64 = 1e-4;
const RICHARDSON_STEP: f64 = 1e-5;
const RICHARDSON_TOLERANCE: f64 = 1e-3;
/// Slopes below this are treated as zero: `ΔP` would sit at rounding level.
pub const FLAT_SLOPE: f64 = 1e-9;
/// Largest repetition count the inversion will consider.
pub const MAX_REPETITIONS: u64 = 1_000_000_000_000;
pub const DEFAULT_COVERAGE: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalChoice {
    /// Particles found in `|R>` after an IFM.
    Reference,
    /// Particles found in `|S>` after an IFM.
    Sample,
    /// Particles lost in an IFM. Requires that losses can be counted.
    Loss,
    /// Particles transmitted through the sample in a classical measurement.
    ClassicalTransmission,
}

impl SignalChoice {
    pub fn is_classical(self) -> bool {
        self == SignalChoice::ClassicalTransmission
    }

    pub fn name(self) -> &'static str {
        match self {
            SignalChoice::Reference => "reference",
            SignalChoice::Sample => "sample",
            SignalChoice::Loss => "loss",
            SignalChoice::ClassicalTransmission => "classical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistics {
    /// Fixed, known number of particles.
    Binomial,
    /// Poissonian source; lost particles are not counted.
    Poisson,
}

impl Statistics {
    pub fn name(self) -> &'static str {
        match self {
            Statistics::Binomial => "binomial",
            Statistics::Poisson => "poisson",
        }
    }
}

/// Observed count at which the interval width is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountChoice {
    /// `k = round(P M)`.
    Expected,
    /// Widest interval for counts within `z` standard deviations of `P M`.
    WorstInRange,
}

/// Signal and loss probability at one transparency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalPoint {
    pub signal: f64,
    pub loss: f64,
}

fn validate_measurement(signal: SignalChoice, n: u32) -> Result<()> {
    if !signal.is_classical() && n == 0 {
        return Err(invalid("n", "IFM signals need at least one round trip"));
    }
    Ok(())
}

/// `P(α)` and `P_L(α)` for the chosen signal. `n` is ignored for the classical
/// measurement.
pub fn signal_point(alpha: f64, n: u32, signal: SignalChoice) -> Result<SignalPoint> {
    check_unit("alpha", alpha)?;
    validate_measurement(signal, n)?;
    if signal.is_classical() {
        return Ok(SignalPoint {
            signal: alpha,
            loss: 1.0 - alpha,
        });
    }
    let p = final_probabilities(n, &SampleSpec { alpha, phi: 0.0, phi_comp: 0.0 });
    let value = match signal {
        SignalChoice::Reference => p.p_r,
        SignalChoice::Sample => p.p_s,
        SignalChoice::Loss => p.p_l,
        SignalChoice::ClassicalTransmission => unreachable!(),
    };
    Ok(SignalPoint {
        signal: value,
        loss: p.p_l,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Slope {
    pub value: f64,
    /// Forward or backward difference because `α` is within one step of 0 or 1.
    pub one_sided: bool,
    /// The estimates with steps `1e-4` and `1e-5` agree to `1e-3` relative.
    pub richardson_agrees: bool,
    /// `|P'| < FLAT_SLOPE`: the signal carries no usable information here.
    pub flat: bool,
}

fn difference(f: &impl Fn(f64) -> Result<f64>, alpha: f64, h: f64) -> Result<(f64, bool)> {
    if alpha - h < 0.0 {
        Ok(((f(alpha + h)? - f(alpha)?) / h, true))
    } else if alpha + h > 1.0 {
        Ok(((f(alpha)? - f(alpha - h)?) / h, true))
    } else {
        Ok(((f(alpha + h)? - f(alpha - h)?) / (2.0 * h), false))
    }
}

/// Slope `P'(α)` of the signal by central differences with step `1e-4`,
/// cross-checked against step `1e-5`.
pub fn signal_derivative(alpha: f64, n: u32, signal: SignalChoice) -> Result<Slope> {
    check_unit("alpha", alpha)?;
    validate_measurement(signal, n)?;
    if signal.is_classical() {
        return Ok(Slope {
            value: 1.0,
            one_sided: false,
            richardson_agrees: true,
            flat: false,
        });
    }
    let f = |a: f64| signal_point(a, n, signal).map(|p| p.signal);
    let (coarse, one_sided) = difference(&f, alpha, DERIVATIVE_STEP)?;
    let (fine, _) = difference(&f, alpha, RICHARDSON_STEP)?;
    let scale = coarse.abs().max(fine.abs());
    let richardson_agrees = scale == 0.0 || (coarse - fine).abs() <= RICHARDSON_TOLERANCE * scale;
    Ok(Slope {
        value: coarse,
        one_sided,
        richardson_agrees,
        flat: !(coarse.abs() >= FLAT_SLOPE),
    })
}

fn check_delta(delta_alpha: f64) -> Result<()> {
    if delta_alpha > 0.0 && delta_alpha.is_finite() {
        Ok(())
    } else {
        Err(invalid("delta_alpha", format!("{delta_alpha} must be positive")))
    }
}

fn check_statistics(signal: SignalChoice, statistics: Statistics) -> Result<()> {
    if signal == SignalChoice::Loss && statistics == Statistics::Poisson {
        return Err(invalid("signal", "lost particles are not counted under Poissonian statistics"));
    }
    Ok(())
}

fn normal_loss(
    alpha: f64,
    delta_alpha: f64,
    signal: SignalChoice,
    n: u32,
    coverage: f64,
    statistics: Statistics,
) -> Result<f64> {
    check_delta(delta_alpha)?;
    check_statistics(signal, statistics)?;
    let point = signal_point(alpha, n, signal)?;
    if point.loss == 0.0 {
        return Ok(0.0);
    }
    let p = point.signal;
    let variance = match statistics {
        Statistics::Binomial if p <= 0.0 || p >= 1.0 => return Err(Error::InvalidRegime { p }),
        Statistics::Poisson if p <= 0.0 => return Err(Error::InvalidRegime { p }),
        Statistics::Binomial => p * (1.0 - p),
        Statistics::Poisson => p,
    };
    let slope = signal_derivative(alpha, n, signal)?;
    if slope.flat {
        return Err(Error::Unbounded("repetitions for a flat signal"));
    }
    let z = normal_critical_value(coverage)?;
    Ok(point.loss * variance * (2.0 * z / (delta_alpha * slope.value)).powi(2))
}

/// Expected loss from the normal approximation of the binomial count:
/// `P_L P (1 - P) (2z / (Δα P'))²`.
pub fn expected_loss_normal_binomial(
    alpha: f64,
    delta_alpha: f64,
    signal: SignalChoice,
    n: u32,
    coverage: f64,
) -> Result<f64> {
    normal_loss(alpha, delta_alpha, signal, n, coverage, Statistics::Binomial)
}

/// Expected loss from the normal approximation of the Poisson count:
/// `P_L P (2z / (Δα P'))²`.
pub fn expected_loss_normal_poisson(
    alpha: f64,
    delta_alpha: f64,
    signal: SignalChoice,
    n: u32,
    coverage: f64,
) -> Result<f64> {
    normal_loss(alpha, delta_alpha, signal, n, coverage, Statistics::Poisson)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossFlags {
    pub one_sided_slope: bool,
    pub richardson_mismatch: bool,
    pub flat_slope: bool,
    /// No repetition count up to [`MAX_REPETITIONS`] reaches the target width.
    pub unbounded: bool,
}

impl LossFlags {
    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }

    /// `;`-separated flag names, empty when no flag is set.
    pub fn to_label(&self) -> String {
        let mut out = Vec::new();
        if self.one_sided_slope {
            out.push("one_sided_slope");
        }
        if self.richardson_mismatch {
            out.push("richardson_mismatch");
        }
        if self.flat_slope {
            out.push("flat_slope");
        }
        if self.unbounded {
            out.push("unbounded");
        }
        out.join(";")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBudget {
    pub alpha: f64,
    pub delta_alpha: f64,
    pub signal: SignalChoice,
    /// Round trips, `None` for the classical measurement.
    pub n: Option<u32>,
    pub statistics: Statistics,
    pub coverage: f64,
    pub signal_probability: f64,
    pub loss_probability: f64,
    pub slope: f64,
    /// Repetitions (binomial) or mean particle number (Poisson).
    pub m_required: Option<u64>,
    /// `m_required · P_L(α)`.
    pub expected_lost: Option<f64>,
    pub flags: LossFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InversionOptions {
    pub coverage: f64,
    pub count: CountChoice,
}

impl Default for InversionOptions {
    fn default() -> Self {
        Self {
            coverage: DEFAULT_COVERAGE,
            count: CountChoice::Expected,
        }
    }
}

fn interval_width(statistics: Statistics, k: u64, m: u64, coverage: f64) -> Result<f64> {
    match statistics {
        Statistics::Binomial => Ok(clopper_pearson(k, m, coverage)?.width()),
        Statistics::Poisson => Ok(poisson_interval(k, coverage)?.width() / m as f64),
    }
}

fn width_at(statistics: Statistics, p: f64, m: u64, options: &InversionOptions) -> Result<f64> {
    let mf = m as f64;
    let expected = p * mf;
    let k = (expected.round() as u64).min(m);
    match options.count {
        CountChoice::Expected => interval_width(statistics, k, m, options.coverage),
        CountChoice::WorstInRange => {
            let z = normal_critical_value(options.coverage)?;
            let sd = match statistics {
                Statistics::Binomial => (mf * p * (1.0 - p)).sqrt(),
                Statistics::Poisson => expected.sqrt(),
            };
            let lo = (expected - z * sd).floor().max(0.0) as u64;
            let hi = ((expected + z * sd).ceil() as u64).min(m);
            let mut candidates = vec![lo, k, hi];
            let half = m / 2;
            if statistics == Statistics::Binomial && lo < half && half < hi {
                candidates.push(half);
            }
            candidates
                .into_iter()
                .map(|k| interval_width(statistics, k, m, options.coverage))
                .try_fold(0.0f64, |acc, w| w.map(|w| acc.max(w)))
        }
    }
}

/// Smallest `M` whose interval width at probability `p` is at most `target`.
///
/// A secant iteration on `ln w` against `ln M`, started from the normal
/// approximation, lands within a few counts of the answer; a bracket grown
/// around that point is then bisected.
fn minimal_repetitions(statistics: Statistics, p: f64, target: f64, options: &InversionOptions) -> Result<Option<u64>> {
    let width = |m: u64| width_at(statistics, p, m, options);
    let ok = |m: u64| width(m).map(|w| w <= target);
    let clamp = |m: f64| -> u64 {
        if m.is_nan() {
            1
        } else {
            m.clamp(1.0, MAX_REPETITIONS as f64) as u64
        }
    };

    let z = normal_critical_value(options.coverage)?;
    let variance = match statistics {
        Statistics::Binomial => p * (1.0 - p),
        Statistics::Poisson => p,
    };
    let mut m = clamp((variance * (2.0 * z / target).powi(2)).ceil());
    let mut w = width(m)?;
    let mut prev: Option<(u64, f64)> = None;
    for _ in 0..12 {
        if w <= 0.0 {
            break;
        }
        let slope = match prev {
            Some((pm, pw)) if pm != m && pw > 0.0 && pw != w => {
                ((w.ln() - pw.ln()) / ((m as f64).ln() - (pm as f64).ln())).clamp(-4.0, -0.25)
            }
            _ => -0.5,
        };
        let next = clamp(((m as f64).ln() + (target.ln() - w.ln()) / slope).exp().ceil());
        if next == m {
            break;
        }
        prev = Some((m, w));
        m = next;
        w = width(m)?;
    }

    // grow a bracket (lo fails or is 0, hi passes) around the estimate
    let mut step = (m / 1_000_000).max(1);
    let (mut lo, mut hi);
    if w <= target {
        hi = m;
        loop {
            lo = hi.saturating_sub(step);
            if lo == 0 || !ok(lo)? {
                break;
            }
            hi = lo;
            step *= 2;
        }
    } else {
        lo = m;
        loop {
            if lo >= MAX_REPETITIONS {
                return Ok(None);
            }
            hi = lo.saturating_add(step).min(MAX_REPETITIONS);
            if ok(hi)? {
                break;
            }
            lo = hi;
            step *= 2;
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // The width is monotone in M only up to the rounding of k.
    for _ in 0..64 {
        if hi > 1 && ok(hi - 1)? {
            hi -= 1;
        } else {
            break;
        }
    }
    Ok(Some(hi))
}

fn inverted_budget(
    alpha: f64,
    delta_alpha: f64,
    signal: SignalChoice,
    n: u32,
    statistics: Statistics,
    options: &InversionOptions,
) -> Result<LossBudget> {
    check_delta(delta_alpha)?;
    check_statistics(signal, statistics)?;
    if !(options.coverage > 0.0 && options.coverage < 1.0) {
        return Err(invalid("coverage", format!("{} is not in (0, 1)", options.coverage)));
    }
    let point = signal_point(alpha, n, signal)?;
    let slope = signal_derivative(alpha, n, signal)?;
    let mut flags = LossFlags {
        one_sided_slope: slope.one_sided,
        richardson_mismatch: !slope.richardson_agrees,
        flat_slope: slope.flat,
        unbounded: false,
    };
    let target = slope.value.abs() * delta_alpha;
    let m_required = if slope.flat {
        None
    } else {
        minimal_repetitions(statistics, point.signal, target, options)?
    };
    flags.unbounded = m_required.is_none();
    Ok(LossBudget {
        alpha,
        delta_alpha,
        signal,
        n: (!signal.is_classical()).then_some(n),
        statistics,
        coverage: options.coverage,
        signal_probability: point.signal,
        loss_probability: point.loss,
        slope: slope.value,
        m_required,
        expected_lost: m_required.map(|m| m as f64 * point.loss),
        flags,
    })
}

/// Expected loss with the binomial count inverted through the Clopper-Pearson
/// interval at `k = round(P M)`.
pub fn expected_loss_clopper_pearson(
    alpha: f64,
    delta_alpha: f64,
    signal: SignalChoice,
    n: u32,
    coverage: f64,
) -> Result<LossBudget> {
    let options = InversionOptions {
        coverage,
        ..InversionOptions::default()
    };
    inverted_budget(alpha, delta_alpha, signal, n, Statistics::Binomial, &options)
}

/// Expected loss with a Poissonian source: the smallest mean particle number
/// whose χ² interval on the count, scaled by `1/<M>`, is narrower than `ΔP`.
pub fn expected_loss_poisson_chi2(
    alpha: f64,
    delta_alpha: f64,
    signal: SignalChoice,
    n: u32,
    coverage: f64,
) -> Result<LossBudget> {
    let options = InversionOptions {
        coverage,
        ..InversionOptions::default()
    };
    inverted_budget(alpha, delta_alpha, signal, n, Statistics::Poisson, &options)
}

/// Loss budget under either statistics with explicit inversion options.
pub fn expected_loss(
    alpha: f64,
    delta_alpha: f64,
    signal: SignalChoice,
    n: u32,
    statistics: Statistics,
    options: &InversionOptions,
) -> Result<LossBudget> {
    inverted_budget(alpha, delta_alpha, signal, n, statistics, options)
}

/// One [`LossBudget`] per transparency of `alphas`, in input order. Points
/// without a finite repetition count come back flagged, not as errors.
pub fn loss_curve(
    signal: SignalChoice,
    n: u32,
    delta_alpha: f64,
    alphas: &[f64],
    statistics: Statistics,
    options: &InversionOptions,
) -> Result<Vec<LossBudget>> {
    alphas
        .par_iter()
        .map(|&alpha| inverted_budget(alpha, delta_alpha, signal, n, statistics, options))
        .collect()
}

/// Lowest-loss IFM configuration over `signals` and every `N` in `n_range`.
pub fn best_ifm_loss(
    alpha: f64,
    delta_alpha: f64,
    statistics: Statistics,
    signals: &[SignalChoice],
    n_range: RangeInclusive<u32>,
    options: &InversionOptions,
) -> Result<LossBudget> {
    if signals.iter().any(|s| s.is_classical()) {
        return Err(invalid("signals", "only IFM signals can be searched over N"));
    }
    if n_range.is_empty() || *n_range.start() == 0 {
        return Err(invalid("n_range", "must be a non-empty range of positive round trips"));
    }
    let candidates: Vec<(SignalChoice, u32)> = signals
        .iter()
        .flat_map(|&s| n_range.clone().map(move |n| (s, n)))
        .collect();
    let budgets = candidates
        .par_iter()
        .map(|&(s, n)| inverted_budget(alpha, delta_alpha, s, n, statistics, options))
        .collect::<Result<Vec<_>>>()?;
    budgets
        .into_iter()
        .filter(|b| b.expected_lost.is_some())
        .min_by(|a, b| a.expected_lost.unwrap().total_cmp(&b.expected_lost.unwrap()))
        .ok_or(Error::Unbounded("expected loss for every IFM configuration"))
}
