use serde::{Deserialize, Serialize};

use super::special::{chi_squared_quantile, inverse_regularized_incomplete_beta, normal_critical_value};
use crate::error::{invalid, Result};

/// Two-sided confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub coverage: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

fn check_coverage(coverage: f64) -> Result<()> {
    if coverage > 0.0 && coverage < 1.0 {
        Ok(())
    } else {
        Err(invalid("coverage", format!("{coverage} is not in (0, 1)")))
    }
}

/// Exact (Clopper-Pearson) interval for a binomial proportion after `k`
/// successes in `m` trials, with equal tail probabilities.
///
/// `k = 0` gives a lower bound of 0 and `k = m` an upper bound of 1.
pub fn clopper_pearson(k: u64, m: u64, coverage: f64) -> Result<Interval> {
    if m == 0 {
        return Err(invalid("m", "at least one trial is required"));
    }
    if k > m {
        return Err(invalid("k", format!("{k} successes exceed {m} trials")));
    }
    check_coverage(coverage)?;
    let tail = (1.0 - coverage) / 2.0;
    let (kf, mf) = (k as f64, m as f64);
    let lower = if k == 0 {
        0.0
    } else {
        inverse_regularized_incomplete_beta(kf, mf - kf + 1.0, tail)?
    };
    let upper = if k == m {
        1.0
    } else {
        inverse_regularized_incomplete_beta(kf + 1.0, mf - kf, 1.0 - tail)?
    };
    Ok(Interval { lower, upper, coverage })
}

/// Central χ² interval for the mean of a Poisson variable observed at `k`.
pub fn poisson_interval(k: u64, coverage: f64) -> Result<Interval> {
    check_coverage(coverage)?;
    let tail = (1.0 - coverage) / 2.0;
    let lower = if k == 0 {
        0.0
    } else {
        chi_squared_quantile(tail, 2 * k)? / 2.0
    };
    let upper = chi_squared_quantile(1.0 - tail, 2 * k + 2)? / 2.0;
    Ok(Interval { lower, upper, coverage })
}

/// Width of the normal-approximation (Wald) interval for a binomial
/// proportion `p` estimated from `m` trials. Degenerates to 0 at `p` = 0 or 1,
/// where the approximation is not valid.
pub fn normal_width_binomial(p: f64, m: u64, coverage: f64) -> Result<f64> {
    crate::error::check_unit("p", p)?;
    if m == 0 {
        return Err(invalid("m", "at least one trial is required"));
    }
    let z = normal_critical_value(coverage)?;
    Ok(2.0 * z * (p * (1.0 - p) / m as f64).sqrt())
}
