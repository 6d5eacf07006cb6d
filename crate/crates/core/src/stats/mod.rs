//! Special functions, confidence intervals and seeded random sampling.

mod intervals;
mod sampling;
mod special;

pub use intervals::{clopper_pearson, normal_width_binomial, poisson_interval, Interval};
pub use sampling::{sample_bernoulli, sample_categorical3, sample_poisson, Detection, RngSeed};
pub use special::{
    chi_squared_quantile, inverse_regularized_incomplete_beta, inverse_regularized_lower_gamma,
    normal_critical_value, regularized_incomplete_beta, regularized_lower_gamma,
};
