use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{final_probabilities, SampleSpec};
use crate::error::{check_unit, invalid, Error, Result};

/// Empirical constant in the large-`N` loss-peak position `1 - 4.4/N`.
const PEAK_CONSTANT: f64 = 4.4;
const PEAK_GRID_POINTS: usize = 10_000;
/// Default `1 - alpha2` for the contrast curve.
pub const DEFAULT_CONTRAST_ANCHOR: f64 = 1.0 - 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPeak {
    pub alpha_peak: f64,
    pub p_l_max: f64,
}

fn loss_at(n: u32, alpha: f64) -> f64 {
    final_probabilities(n, &SampleSpec { alpha, phi: 0.0, phi_comp: 0.0 }).p_l
}

/// Transparency maximizing the loss probability for `n` round trips.
///
/// Scans `u = ln(1 - alpha)` on a 10^4-point grid over `[ln(1e-3/n), 0]` and
/// refines the best cell by golden-section search. The peak is flat to second
/// order, so `alpha_peak` is resolved to about `1e-8 (1 - alpha_peak)`, well
/// inside `1e-6` absolute.
pub fn loss_peak(n: u32) -> Result<LossPeak> {
    if n < 2 {
        return Err(invalid("n", "the loss peak is interior only for n >= 2"));
    }
    let alpha_of = |u: f64| 1.0 - u.exp();
    let u_lo = (1e-3 / f64::from(n)).ln();
    let du = -u_lo / (PEAK_GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..PEAK_GRID_POINTS)
        .into_par_iter()
        .map(|i| loss_at(n, alpha_of(u_lo + i as f64 * du)))
        .collect();
    let best = grid
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > grid[best] { i } else { best });

    let mut a = u_lo + best.saturating_sub(1) as f64 * du;
    let mut b = (u_lo + (best + 1) as f64 * du).min(0.0);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let f = |u: f64| loss_at(n, alpha_of(u));
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > 1e-12 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    let u = 0.5 * (a + b);
    let refined = f(u);
    let (u, p_l_max) = if refined >= grid[best] {
        (u, refined)
    } else {
        (u_lo + best as f64 * du, grid[best])
    };
    Ok(LossPeak {
        alpha_peak: alpha_of(u),
        p_l_max,
    })
}

/// Large-`N` approximation `1 - 4.4/n` of the loss-peak position. Values for
/// `n < 5` are returned inside [`Error::OutsideValidity`].
pub fn alpha_prime_approx(n: u32) -> Result<f64> {
    if n == 0 {
        return Err(invalid("n", "must be positive"));
    }
    let value = 1.0 - PEAK_CONSTANT / f64::from(n);
    if n < 5 {
        return Err(Error::OutsideValidity { n, value });
    }
    Ok(value)
}

fn check_below_one(name: &'static str, alpha: f64) -> Result<()> {
    check_unit(name, alpha)?;
    if alpha == 1.0 {
        return Err(invalid(name, "must be below 1 (the optimum N diverges)"));
    }
    Ok(())
}

/// `4.4 / sqrt((1 - alpha1)(1 - alpha2))`: the round-trip count putting the
/// loss peak at the geometric mean of the two opacities.
pub fn n_opt_approx(alpha1: f64, alpha2: f64) -> Result<f64> {
    check_below_one("alpha1", alpha1)?;
    check_below_one("alpha2", alpha2)?;
    Ok(PEAK_CONSTANT / ((1.0 - alpha1) * (1.0 - alpha2)).sqrt())
}

/// Default exhaustive-search bound, ten times the approximate optimum.
pub fn default_search_bound(alpha1: f64, alpha2: f64) -> Result<u32> {
    let bound = (10.0 * n_opt_approx(alpha1, alpha2)?).ceil();
    if bound > f64::from(u32::MAX) {
        return Err(invalid("alpha", "search bound exceeds the supported round-trip count"));
    }
    Ok(bound as u32)
}

/// Which end of the search range the optimum landed on, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NOptimum {
    pub n: u32,
    pub avg_loss: f64,
    /// Set when the minimum sits on a truncated end of the search range, i.e.
    /// the true optimum may lie outside it.
    pub boundary: Option<Boundary>,
}

/// Integer `N` in `[1, n_max]` minimizing the mean loss probability at the two
/// transparencies. Ties go to the smaller `N`.
pub fn n_opt_numeric(alpha1: f64, alpha2: f64, n_max: u32) -> Result<NOptimum> {
    if n_max == 0 {
        return Err(invalid("n_max", "must be positive"));
    }
    n_opt_in_range(alpha1, alpha2, 1..=n_max)
}

/// [`n_opt_numeric`] over an arbitrary inclusive range.
pub fn n_opt_in_range(alpha1: f64, alpha2: f64, range: RangeInclusive<u32>) -> Result<NOptimum> {
    check_below_one("alpha1", alpha1)?;
    check_below_one("alpha2", alpha2)?;
    let (start, end) = (*range.start(), *range.end());
    if start == 0 || start > end {
        return Err(invalid("range", format!("{start}..={end} is not a valid round-trip range")));
    }
    let (n, avg_loss) = range
        .into_par_iter()
        .map(|n| (n, 0.5 * (loss_at(n, alpha1) + loss_at(n, alpha2))))
        .reduce(
            || (0, f64::INFINITY),
            |a, b| {
                if b.1 < a.1 || (b.1 == a.1 && b.0 < a.0) {
                    b
                } else {
                    a
                }
            },
        );
    let boundary = if n == end && end > start {
        Some(Boundary::Upper)
    } else if n == start && start > 1 {
        Some(Boundary::Lower)
    } else {
        None
    };
    Ok(NOptimum { n, avg_loss, boundary })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastPoint {
    pub contrast: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub n_opt: u32,
    pub avg_loss: f64,
    pub boundary: Option<Boundary>,
}

/// Minimum mean loss as a function of the contrast `(1 - alpha1)/(1 - alpha2)`
/// with `alpha2` held at `alpha2_anchor`.
///
/// The optimum is searched over the decade either side of the approximate
/// optimum, `[N_approx/10, 10 N_approx]`, which keeps the search in the
/// many-round-trip regime.
pub fn contrast_curve(contrasts: &[f64], alpha2_anchor: f64) -> Result<Vec<ContrastPoint>> {
    check_below_one("alpha2_anchor", alpha2_anchor)?;
    let opacity2 = 1.0 - alpha2_anchor;
    contrasts
        .iter()
        .map(|&contrast| {
            if !(contrast >= 1.0) || !contrast.is_finite() {
                return Err(invalid("contrast", format!("{contrast} must be finite and >= 1")));
            }
            let mut alpha1 = 1.0 - contrast * opacity2;
            if alpha1 < 0.0 {
                if alpha1 > -1e-9 {
                    alpha1 = 0.0;
                } else {
                    return Err(invalid(
                        "contrast",
                        format!("{contrast} needs alpha1 = {alpha1} < 0 at anchor {alpha2_anchor}"),
                    ));
                }
            }
            let approx = n_opt_approx(alpha1, alpha2_anchor)?;
            let lo = ((approx / 10.0).floor() as u32).max(1);
            let hi = ((10.0 * approx).ceil() as u32).max(lo);
            let opt = n_opt_in_range(alpha1, alpha2_anchor, lo..=hi)?;
            Ok(ContrastPoint {
                contrast,
                alpha1,
                alpha2: alpha2_anchor,
                n_opt: opt.n,
                avg_loss: opt.avg_loss,
                boundary: opt.boundary,
            })
        })
        .collect()
}
