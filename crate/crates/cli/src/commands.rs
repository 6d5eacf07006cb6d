use std::fmt;

use clap::{Args, ValueEnum};
use ifm_core::discrimination::{
    min_loss_bound, monte_carlo_curve, MonteCarloConfig, Strategy, StrategySpec, TruthAssignment, DEFAULT_REPLICATIONS,
    DEFAULT_RUN_CAP,
};
use ifm_core::precision::{
    best_ifm_loss, expected_loss_normal_binomial, expected_loss_normal_poisson, loss_curve, CountChoice,
    InversionOptions, LossBudget, SignalChoice, Statistics, DEFAULT_COVERAGE,
};
use ifm_core::sim::{
    contrast_curve, n_opt_approx, probability_sweep, run_ifm, Boundary, SampleSpec, SetupSpec,
    DEFAULT_CONTRAST_ANCHOR,
};
use ifm_core::Error;
use serde::Serialize;

use crate::grid::{Counts, Grid};
use crate::table::{Cell, Table};

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numeric(String),
    Io(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numeric(_) => 3,
            Failure::Io(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) | Failure::Numeric(m) | Failure::Io(m) => f.write_str(m),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { .. } | Error::OutsideValidity { .. } => Failure::Config(e.to_string()),
            _ => Failure::Numeric(e.to_string()),
        }
    }
}

fn config(msg: impl Into<String>) -> Failure {
    Failure::Config(msg.into())
}

fn nonempty_counts(counts: &Counts, flag: &str) -> Result<(), Failure> {
    if counts.0.is_empty() {
        return Err(config(format!("{flag} needs at least one round-trip count")));
    }
    if counts.0.contains(&0) {
        return Err(config(format!("{flag}: round-trip counts must be positive")));
    }
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct EvolutionArgs {
    /// Round trips.
    #[arg(long = "n")]
    pub n: u32,
    /// Sample transparency.
    #[arg(long)]
    pub alpha: f64,
    /// Phase shift per sample encounter (radians).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub phi: f64,
    /// Compensating phase applied per round trip (radians).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub phi_comp: f64,
}

pub fn evolution(a: &EvolutionArgs) -> Result<Table, Failure> {
    let setup = SetupSpec::new(a.n)?.with_trace();
    let sample = SampleSpec::with_phase(a.alpha, a.phi, a.phi_comp)?;
    let result = run_ifm(&setup, &sample);
    let mut t = Table::new(&["step", "t_over_t", "p_r", "p_s", "p_l"]);
    for p in result.trace.unwrap_or_default() {
        t.push(vec![
            p.step.into(),
            (f64::from(p.step) / f64::from(a.n)).into(),
            p.p_r.into(),
            p.p_s.into(),
            p.p_l.into(),
        ]);
    }
    Ok(t)
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    /// Round trips (comma list).
    #[arg(long = "n", default_value = "10")]
    pub n: Counts,
    /// Transparency grid; with --log-scale the grid is over 1 - alpha.
    #[arg(long)]
    pub alpha: Option<Grid>,
    /// Interpret the grid as values of 1 - alpha (default log:1e-6:1:241).
    #[arg(long)]
    pub log_scale: bool,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub phi: f64,
}

pub fn sweep(a: &SweepArgs) -> Result<Table, Failure> {
    nonempty_counts(&a.n, "--n")?;
    let grid = match (&a.alpha, a.log_scale) {
        (Some(g), _) => g.clone(),
        (None, false) => "lin:0:1:201".parse().map_err(config)?,
        (None, true) => "log:1e-6:1:241".parse().map_err(config)?,
    };
    let (alphas, opacities): (Vec<f64>, Vec<f64>) = if a.log_scale {
        grid.values().iter().map(|&u| (1.0 - u, u)).unzip()
    } else {
        grid.values().iter().map(|&x| (x, 1.0 - x)).unzip()
    };
    if let Some(bad) = opacities.iter().find(|u| !(0.0..=1.0).contains(*u)) {
        return Err(config(format!("grid value {bad} is outside [0, 1]")));
    }
    let mut t = Table::new(&["n", "alpha", "one_minus_alpha", "p_r", "p_s", "p_l"]);
    for &n in &a.n.0 {
        let rows = probability_sweep(n, &alphas, a.phi)?;
        for ((alpha, p), u) in rows.into_iter().zip(&opacities) {
            t.push(vec![n.into(), alpha.into(), (*u).into(), p.p_r.into(), p.p_s.into(), p.p_l.into()]);
        }
    }
    Ok(t)
}

#[derive(Debug, Args, Serialize)]
pub struct ContrastArgs {
    /// Contrast grid, (1 - alpha1) / (1 - alpha2).
    #[arg(long, default_value = "log:1:1e4:41")]
    pub contrast: Grid,
    /// Transparency held fixed while the contrast varies.
    #[arg(long, default_value_t = DEFAULT_CONTRAST_ANCHOR)]
    pub alpha2: f64,
}

fn boundary_label(b: Option<Boundary>) -> Cell {
    match b {
        None => Cell::Empty,
        Some(Boundary::Lower) => "lower".into(),
        Some(Boundary::Upper) => "upper".into(),
    }
}

pub fn contrast(a: &ContrastArgs) -> Result<Table, Failure> {
    let points = contrast_curve(a.contrast.values(), a.alpha2)?;
    let mut t = Table::new(&["contrast", "alpha1", "alpha2", "n_opt", "n_opt_approx", "avg_loss", "boundary"]);
    for p in points {
        t.push(vec![
            p.contrast.into(),
            p.alpha1.into(),
            p.alpha2.into(),
            p.n_opt.into(),
            n_opt_approx(p.alpha1, p.alpha2)?.into(),
            p.avg_loss.into(),
            boundary_label(p.boundary),
        ]);
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Truth {
    Random,
    Stratified,
}

#[derive(Debug, Args, Serialize)]
pub struct DiscriminateArgs {
    #[arg(long)]
    pub alpha1: f64,
    #[arg(long)]
    pub alpha2: f64,
    /// IFM round-trip counts to simulate (comma list; may be empty).
    #[arg(long = "n", default_value = "10,100")]
    pub n: Counts,
    /// Skip the classical transmission measurement.
    #[arg(long)]
    pub no_classical: bool,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub phi: f64,
    /// Stopping thresholds x in (0, 0.5).
    #[arg(long, default_value = "log:0.49:1e-12:40")]
    pub thresholds: Grid,
    #[arg(long, default_value_t = DEFAULT_REPLICATIONS)]
    pub replications: u64,
    /// Particle cap per sequential measurement.
    #[arg(long, default_value_t = DEFAULT_RUN_CAP)]
    pub cap: u64,
    #[arg(long, value_enum, default_value_t = Truth::Random)]
    pub truth: Truth,
}

pub fn discriminate(a: &DiscriminateArgs, seed: u64) -> Result<Table, Failure> {
    let mut specs = Vec::new();
    if !a.no_classical {
        specs.push(StrategySpec::classical(a.alpha1, a.alpha2)?);
    }
    for &n in &a.n.0 {
        specs.push(StrategySpec::new(Strategy::Ifm { n_roundtrips: n, phi: a.phi }, a.alpha1, a.alpha2)?);
    }
    if specs.is_empty() {
        return Err(config("nothing to simulate: give --n or drop --no-classical"));
    }
    let config_mc = MonteCarloConfig {
        replications: a.replications,
        seed,
        cap: a.cap,
        truth: match a.truth {
            Truth::Random => TruthAssignment::Random,
            Truth::Stratified => TruthAssignment::Stratified,
        },
    };
    let mut t = Table::new(&[
        "strategy",
        "n",
        "alpha1",
        "alpha2",
        "threshold",
        "error",
        "error_se",
        "mean_lost",
        "lost_se",
        "mean_used",
        "replications",
        "capped_runs",
        "bound",
    ]);
    for spec in specs {
        for p in monte_carlo_curve(&spec, a.thresholds.values(), &config_mc)? {
            let bound = match min_loss_bound(a.alpha1, a.alpha2, p.error_probability) {
                Ok(b) => Cell::Float(b),
                Err(Error::Unbounded(_)) => Cell::Float(f64::INFINITY),
                Err(e) => return Err(e.into()),
            };
            t.push(vec![
                spec.label().into(),
                spec.n_roundtrips().into(),
                a.alpha1.into(),
                a.alpha2.into(),
                p.threshold_x.into(),
                p.error_probability.into(),
                p.error_std_error().into(),
                p.mean_lost.into(),
                p.lost_std_error.into(),
                p.mean_used.into(),
                p.replications.into(),
                p.capped_runs.into(),
                bound,
            ]);
        }
    }
    Ok(t)
}

#[derive(Debug, Args, Serialize)]
pub struct BoundArgs {
    #[arg(long)]
    pub alpha1: f64,
    #[arg(long)]
    pub alpha2: f64,
    /// Error probabilities in [0, 0.5].
    #[arg(long = "p-e", default_value = "lin:0:0.5:51")]
    pub p_e: Grid,
}

pub fn bound(a: &BoundArgs) -> Result<Table, Failure> {
    let mut t = Table::new(&["alpha1", "alpha2", "p_e", "min_lost", "flags"]);
    for &p_e in a.p_e.values() {
        let (value, flag) = match min_loss_bound(a.alpha1, a.alpha2, p_e) {
            Ok(v) => (v, ""),
            Err(Error::Unbounded(_)) => (f64::INFINITY, "unbounded"),
            Err(e) => return Err(e.into()),
        };
        t.push(vec![a.alpha1.into(), a.alpha2.into(), p_e.into(), value.into(), flag.into()]);
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalArg {
    Reference,
    Sample,
    Loss,
    Classical,
}

impl From<SignalArg> for SignalChoice {
    fn from(s: SignalArg) -> Self {
        match s {
            SignalArg::Reference => SignalChoice::Reference,
            SignalArg::Sample => SignalChoice::Sample,
            SignalArg::Loss => SignalChoice::Loss,
            SignalArg::Classical => SignalChoice::ClassicalTransmission,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StatisticsArg {
    Binomial,
    Poisson,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CountArg {
    /// Interval width at k = round(P M).
    Expected,
    /// Widest interval for k within z standard deviations.
    Worst,
}

#[derive(Debug, Args, Serialize)]
pub struct PrecisionArgs {
    #[arg(long, default_value = "lin:0.05:0.95:19")]
    pub alpha: Grid,
    #[arg(long, default_value_t = 0.01)]
    pub delta_alpha: f64,
    #[arg(long, default_value_t = DEFAULT_COVERAGE)]
    pub coverage: f64,
    /// Signals to evaluate (comma list).
    #[arg(long, value_enum, value_delimiter = ',', default_value = "classical,reference")]
    pub signal: Vec<SignalArg>,
    /// Round trips for the IFM signals (comma list).
    #[arg(long = "n", default_value = "10,100,500")]
    pub n: Counts,
    #[arg(long, value_enum, default_value_t = StatisticsArg::Binomial)]
    pub statistics: StatisticsArg,
    #[arg(long, value_enum, default_value_t = CountArg::Expected)]
    pub count: CountArg,
    /// Also report the lowest-loss IFM over N in MIN:MAX and the chosen IFM signals.
    #[arg(long, value_name = "MIN:MAX")]
    pub best_n: Option<String>,
}

fn parse_range(text: &str) -> Result<(u32, u32), Failure> {
    let bad = || config(format!("--best-n expects MIN:MAX, got `{text}`"));
    let (lo, hi) = text.split_once(':').ok_or_else(bad)?;
    let lo: u32 = lo.trim().parse().map_err(|_| bad())?;
    let hi: u32 = hi.trim().parse().map_err(|_| bad())?;
    if lo == 0 || lo > hi {
        return Err(bad());
    }
    Ok((lo, hi))
}

const PRECISION_COLUMNS: &[&str] = &[
    "statistics",
    "signal",
    "n",
    "alpha",
    "delta_alpha",
    "coverage",
    "p_signal",
    "p_loss",
    "slope",
    "m_required",
    "expected_lost",
    "normal_expected_lost",
    "best_of",
    "flags",
];

fn precision_row(b: &LossBudget, best_of: Option<&str>) -> Vec<Cell> {
    let normal = match b.statistics {
        Statistics::Binomial => expected_loss_normal_binomial,
        Statistics::Poisson => expected_loss_normal_poisson,
    };
    let normal = normal(b.alpha, b.delta_alpha, b.signal, b.n.unwrap_or(0), b.coverage).ok();
    vec![
        b.statistics.name().into(),
        b.signal.name().into(),
        b.n.into(),
        b.alpha.into(),
        b.delta_alpha.into(),
        b.coverage.into(),
        b.signal_probability.into(),
        b.loss_probability.into(),
        b.slope.into(),
        b.m_required.into(),
        b.expected_lost.into(),
        normal.into(),
        best_of.map(str::to_string).into(),
        b.flags.to_label().into(),
    ]
}

pub fn precision(a: &PrecisionArgs) -> Result<Table, Failure> {
    if a.signal.is_empty() {
        return Err(config("--signal needs at least one signal"));
    }
    let statistics = match a.statistics {
        StatisticsArg::Binomial => Statistics::Binomial,
        StatisticsArg::Poisson => Statistics::Poisson,
    };
    if statistics == Statistics::Poisson && a.signal.contains(&SignalArg::Loss) {
        return Err(config("the loss signal is not available under poisson statistics"));
    }
    let options = InversionOptions {
        coverage: a.coverage,
        count: match a.count {
            CountArg::Expected => CountChoice::Expected,
            CountArg::Worst => CountChoice::WorstInRange,
        },
    };
    let best_range = a.best_n.as_deref().map(parse_range).transpose()?;
    let ifm_signals: Vec<SignalChoice> = a
        .signal
        .iter()
        .filter(|s| **s != SignalArg::Classical)
        .map(|&s| s.into())
        .collect();
    if !ifm_signals.is_empty() {
        nonempty_counts(&a.n, "--n")?;
    }

    let mut t = Table::new(PRECISION_COLUMNS);
    for &signal in &a.signal {
        let signal: SignalChoice = signal.into();
        let ns: &[u32] = if signal.is_classical() { &[0] } else { &a.n.0 };
        for &n in ns {
            for b in loss_curve(signal, n, a.delta_alpha, a.alpha.values(), statistics, &options)? {
                t.push(precision_row(&b, None));
            }
        }
    }
    if let Some((lo, hi)) = best_range {
        if ifm_signals.is_empty() {
            return Err(config("--best-n needs at least one IFM signal"));
        }
        let label = format!("{lo}:{hi}");
        for &alpha in a.alpha.values() {
            let b = best_ifm_loss(alpha, a.delta_alpha, statistics, &ifm_signals, lo..=hi, &options)?;
            t.push(precision_row(&b, Some(&label)));
        }
    }
    Ok(t)
}

#[derive(Debug, Args, Serialize)]
pub struct PhaseArgs {
    /// Round trips (comma list).
    #[arg(long = "n", default_value = "2,10,50")]
    pub n: Counts,
    /// Phase grid in radians.
    #[arg(long, default_value = "lin:0:6.283185307179586:361", allow_hyphen_values = true)]
    pub phi: Grid,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub phi_comp: f64,
}

pub fn phase(a: &PhaseArgs) -> Result<Table, Failure> {
    nonempty_counts(&a.n, "--n")?;
    let mut t = Table::new(&["n", "phi", "p_r", "p_s", "p_l"]);
    for &n in &a.n.0 {
        let setup = SetupSpec::new(n)?;
        for &phi in a.phi.values() {
            let p = run_ifm(&setup, &SampleSpec::with_phase(a.alpha, phi, a.phi_comp)?);
            t.push(vec![n.into(), phi.into(), p.p_r.into(), p.p_s.into(), p.p_l.into()]);
        }
    }
    Ok(t)
}
