//! Evolution of the probe particle through `N` round trips.
//!
//! Each round trip applies the coherent coupling step for `Δt = T/N` and then
//! the sample encounter. Without a sample the coupling completes half an
//! oscillation from `|R>` to `|S>` after `N` steps.

mod optimize;

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_unit, invalid, Result};

pub use optimize::{
    alpha_prime_approx, contrast_curve, default_search_bound, loss_peak, n_opt_approx, n_opt_in_range,
    n_opt_numeric, Boundary, ContrastPoint, LossPeak, NOptimum, DEFAULT_CONTRAST_ANCHOR,
};

/// Amplitudes in the reference and sample states plus the probability that
/// has already been lost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeState {
    pub r: Complex64,
    pub s: Complex64,
    pub p_loss: f64,
}

impl ProbeState {
    /// Particle entirely in `|R>`.
    pub fn reference() -> Self {
        Self {
            r: Complex64::new(1.0, 0.0),
            s: Complex64::new(0.0, 0.0),
            p_loss: 0.0,
        }
    }

    pub fn total_probability(&self) -> f64 {
        self.r.norm_sqr() + self.s.norm_sqr() + self.p_loss
    }

    pub fn probabilities(&self) -> (f64, f64, f64) {
        (self.r.norm_sqr(), self.s.norm_sqr(), self.p_loss)
    }
}

/// Sample seen by the `|S>` amplitude once per round trip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    /// Per-encounter transmission probability.
    pub alpha: f64,
    /// Phase imprinted per encounter, radians.
    pub phi: f64,
    /// Opposite phase applied to the sample state each round trip.
    pub phi_comp: f64,
}

impl SampleSpec {
    pub fn new(alpha: f64) -> Result<Self> {
        Self::with_phase(alpha, 0.0, 0.0)
    }

    pub fn with_phase(alpha: f64, phi: f64, phi_comp: f64) -> Result<Self> {
        check_unit("alpha", alpha)?;
        if !phi.is_finite() {
            return Err(invalid("phi", "must be finite"));
        }
        if !phi_comp.is_finite() {
            return Err(invalid("phi_comp", "must be finite"));
        }
        Ok(Self { alpha, phi, phi_comp })
    }

    /// Complex factor applied to the `|S>` amplitude per encounter.
    pub fn transmission(&self) -> Complex64 {
        Complex64::from_polar(self.alpha.sqrt(), self.phi - self.phi_comp)
    }

    fn is_identity(&self) -> bool {
        self.alpha == 1.0 && self.phi - self.phi_comp == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetupSpec {
    pub n_roundtrips: u32,
    pub record_trace: bool,
}

impl SetupSpec {
    pub fn new(n_roundtrips: u32) -> Result<Self> {
        if n_roundtrips == 0 {
            return Err(invalid("n_roundtrips", "at least one round trip is required"));
        }
        Ok(Self {
            n_roundtrips,
            record_trace: false,
        })
    }

    pub fn with_trace(mut self) -> Self {
        self.record_trace = true;
        self
    }
}

/// Probabilities after `step` round trips.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub step: u32,
    pub p_r: f64,
    pub p_s: f64,
    pub p_l: f64,
}

/// Detection probabilities at time `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeProbabilities {
    pub p_r: f64,
    pub p_s: f64,
    pub p_l: f64,
    /// Step 0 (the initial state) through step `N`, when requested.
    pub trace: Option<Vec<TracePoint>>,
}

impl OutcomeProbabilities {
    pub fn as_array(&self) -> [f64; 3] {
        [self.p_r, self.p_s, self.p_l]
    }
}

/// The 2×2 coherent coupling `½[[1+e, 1−e], [1−e, 1+e]]` with
/// `e = exp(-iπ Δt/T)`. Symmetric, so it is stored as its diagonal and
/// off-diagonal entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Propagator {
    pub diag: Complex64,
    pub off: Complex64,
}

impl Propagator {
    /// Propagator over the fraction `Δt/T` of the half oscillation.
    pub fn for_fraction(dt_over_t: f64) -> Self {
        let e = Complex64::from_polar(1.0, -PI * dt_over_t);
        let one = Complex64::new(1.0, 0.0);
        Self {
            diag: (one + e) * 0.5,
            off: (one - e) * 0.5,
        }
    }

    /// One round trip of an `n`-step setup.
    pub fn round_trip(n: u32) -> Self {
        Self::for_fraction(1.0 / f64::from(n))
    }

    pub fn apply(&self, r: Complex64, s: Complex64) -> (Complex64, Complex64) {
        (self.diag * r + self.off * s, self.off * r + self.diag * s)
    }

    /// `self · other`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            diag: self.diag * other.diag + self.off * other.off,
            off: self.diag * other.off + self.off * other.diag,
        }
    }

    pub fn matrix(&self) -> [[Complex64; 2]; 2] {
        [[self.diag, self.off], [self.off, self.diag]]
    }
}

/// Coherent coupling over one round trip of an `n`-step setup.
pub fn coherent_step(state: ProbeState, n: u32) -> ProbeState {
    debug_assert!(n >= 1);
    let (r, s) = Propagator::round_trip(n).apply(state.r, state.s);
    ProbeState { r, s, ..state }
}

/// One pass of the `|S>` amplitude through the sample.
pub fn sample_encounter(state: ProbeState, sample: &SampleSpec) -> ProbeState {
    let p_s = state.s.norm_sqr();
    ProbeState {
        r: state.r,
        s: state.s * sample.transmission(),
        p_loss: state.p_loss + (1.0 - sample.alpha) * p_s,
    }
}

/// Step-by-step evolution from `|R>` through `N` round trips.
pub fn run_ifm(setup: &SetupSpec, sample: &SampleSpec) -> OutcomeProbabilities {
    let n = setup.n_roundtrips;
    let mut trace = setup.record_trace.then(|| {
        let mut v = Vec::with_capacity(n as usize + 1);
        v.push(TracePoint {
            step: 0,
            p_r: 1.0,
            p_s: 0.0,
            p_l: 0.0,
        });
        v
    });

    if sample.is_identity() && trace.is_none() {
        // N identical couplings compose to the full half oscillation.
        let (r, s) = Propagator::for_fraction(1.0).apply(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        return OutcomeProbabilities {
            p_r: r.norm_sqr(),
            p_s: s.norm_sqr(),
            p_l: 0.0,
            trace: None,
        };
    }

    let step = Propagator::round_trip(n);
    let transmission = sample.transmission();
    let loss_fraction = 1.0 - sample.alpha;
    let mut state = ProbeState::reference();
    for k in 1..=n {
        let (r, s) = step.apply(state.r, state.s);
        state = ProbeState {
            r,
            s: s * transmission,
            p_loss: state.p_loss + loss_fraction * s.norm_sqr(),
        };
        if let Some(t) = trace.as_mut() {
            let (p_r, p_s, p_l) = state.probabilities();
            t.push(TracePoint { step: k, p_r, p_s, p_l });
        }
    }
    let (p_r, p_s, p_l) = state.probabilities();
    OutcomeProbabilities { p_r, p_s, p_l, trace }
}

/// Final probabilities from the `N`-th power of the round-trip operator
/// (repeated squaring). Agrees with [`run_ifm`] to rounding and costs
/// `O(log N)`, which is what the optimizers and sweeps use.
pub fn final_probabilities(n: u32, sample: &SampleSpec) -> OutcomeProbabilities {
    if sample.is_identity() {
        return run_ifm(&SetupSpec { n_roundtrips: n, record_trace: false }, sample);
    }
    let step = Propagator::round_trip(n);
    let t = sample.transmission();
    // round trip = diag(1, t) · coupling
    let round_trip = [[step.diag, step.off], [t * step.off, t * step.diag]];
    let m = mat_pow(round_trip, n);
    let (r, s) = (m[0][0], m[1][0]);
    let p_r = r.norm_sqr();
    let p_s = s.norm_sqr();
    OutcomeProbabilities {
        p_r,
        p_s,
        p_l: (1.0 - p_r - p_s).max(0.0),
        trace: None,
    }
}

type Mat2 = [[Complex64; 2]; 2];

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

fn mat_pow(mut base: Mat2, mut exp: u32) -> Mat2 {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let mut acc = [[one, zero], [zero, one]];
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mat_mul(&acc, &base);
        }
        exp >>= 1;
        if exp > 0 {
            base = mat_mul(&base, &base);
        }
    }
    acc
}

/// Loss probability for an opaque sample, `1 - cos^{2N}(π / 2N)`.
pub fn opaque_loss_closed_form(n: u32) -> f64 {
    assert!(n >= 1, "n must be at least 1");
    let c = (PI / (2.0 * f64::from(n))).cos();
    1.0 - c.powi(2 * n as i32)
}

/// Final probabilities at each transparency of `alphas`, in input order.
pub fn probability_sweep(n: u32, alphas: &[f64], phi: f64) -> Result<Vec<(f64, OutcomeProbabilities)>> {
    SetupSpec::new(n)?;
    let samples = alphas
        .iter()
        .map(|&a| SampleSpec::with_phase(a, phi, 0.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(samples
        .par_iter()
        .map(|s| (s.alpha, final_probabilities(n, s)))
        .collect())
}
