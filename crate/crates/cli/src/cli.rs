//! Command-line arguments. Every flag overrides the matching config entry.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use sindy_delay::models::bio::ErrorMode;
use sindy_delay::{CrossPolicy, StopRule};

use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "sindy-delay",
    version,
    about = "Sparse identification of delay differential equations"
)]
pub struct Cli {
    /// TOML config, or a manifest.json from an earlier run.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the delayed-oscillator toy model and write truth.csv and observed.csv.
    Generate(GenerateArgs),
    /// Estimate derivatives of a series with the local polynomial smoother.
    Denoise(DenoiseArgs),
    /// Fit a sparse model at one delay.
    Fit(FitArgs),
    /// Fit at every candidate delay and keep the best reconstruction.
    Sweep(SweepArgs),
    /// Simulate a model.json, optionally scoring it against observations.
    Simulate(SimulateArgs),
    /// Joint two-strain fit over (tau_wt, tau_dca) for one or more zinc levels.
    Biofit(BiofitArgs),
    /// Through-origin slope of delay against zinc concentration.
    Slope(SlopeArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub n_samples: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Standard deviation of additive Gaussian noise.
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SmootherArgs {
    #[arg(long)]
    pub radius: Option<usize>,
    #[arg(long)]
    pub degree: Option<usize>,
    /// Use smoothed values in place of raw samples.
    #[arg(long)]
    pub smooth_values: bool,
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub smoother: SmootherArgs,
}

#[derive(Debug, Args)]
pub struct FitSettings {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub smoother: SmootherArgs,
    /// Maximum monomial degree.
    #[arg(long)]
    pub max_degree: Option<u32>,
    #[arg(long)]
    pub cross_policy: Option<CrossPolicy>,
    /// Drop the delayed channels from the library.
    #[arg(long)]
    pub no_delayed: bool,
    #[arg(long)]
    pub stop_increase: Option<f64>,
    #[arg(long, value_parser = parse_rule)]
    pub rule: Option<StopRule>,
    /// Integration step for scoring.
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub divergence_bound: Option<f64>,
    /// Estimate derivatives even if the input has `_dot` columns.
    #[arg(long)]
    pub ignore_derivs: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub settings: FitSettings,
    #[arg(long)]
    pub tau: f64,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub settings: FitSettings,
    #[arg(long)]
    pub grid_max: Option<f64>,
    #[arg(long)]
    pub grid_step: Option<f64>,
    /// Add a second pass around the coarse minimum at this spacing.
    #[arg(long)]
    pub fine_step: Option<f64>,
    #[arg(long)]
    pub fine_radius: Option<f64>,
    /// Write an elimination trace at this delay (repeatable).
    #[arg(long = "trace")]
    pub traces: Vec<f64>,
    /// Report a sub-grid minimum from a parabola through the best point.
    #[arg(long)]
    pub refine: bool,
    /// Evaluate grid points one at a time.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// End time; defaults to the last observation.
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub h: Option<f64>,
    /// Observations supplying the history and scored against the result.
    #[arg(long)]
    pub observations: Option<PathBuf>,
    /// Constant history, one value per component.
    #[arg(long, value_delimiter = ',')]
    pub constant: Option<Vec<f64>>,
    /// Start time when using a constant history.
    #[arg(long, default_value_t = 0.0)]
    pub start: f64,
}

#[derive(Debug, Args)]
pub struct BiofitArgs {
    /// Directory with wt.csv, delta_czc.csv, delta_cad.csv (repeatable, one per --zinc).
    #[arg(long = "data-dir")]
    pub data_dirs: Vec<PathBuf>,
    /// Zinc concentration in mM (repeatable).
    #[arg(long, value_delimiter = ',')]
    pub zinc: Vec<f64>,
    /// Generate datasets from the bundled reference fits.
    #[arg(long)]
    pub synthesize: bool,
    #[arg(long)]
    pub n_points: Option<usize>,
    #[arg(long)]
    pub sample_dt: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub radius: Option<usize>,
    #[arg(long)]
    pub degree: Option<usize>,
    #[arg(long)]
    pub stop_increase: Option<f64>,
    #[arg(long)]
    pub grid_step: Option<f64>,
    #[arg(long)]
    pub grid_max: Option<f64>,
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long, value_parser = parse_error_mode)]
    pub error_mode: Option<ErrorMode>,
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct SlopeArgs {
    /// CSV with columns `zinc_mm,tau_dca`; the bundled reference fits when absent.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

fn parse_rule(s: &str) -> Result<StopRule, String> {
    match s {
        "cumulative" => Ok(StopRule::Cumulative),
        "stepwise" => Ok(StopRule::Stepwise),
        _ => Err(format!("unknown rule `{s}` (cumulative | stepwise)")),
    }
}

fn parse_error_mode(s: &str) -> Result<ErrorMode, String> {
    match s {
        "per-strain" => Ok(ErrorMode::PerStrain),
        "concatenated" => Ok(ErrorMode::Concatenated),
        _ => Err(format!(
            "unknown error mode `{s}` (per-strain | concatenated)"
        )),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl SmootherArgs {
    fn apply(&self, config: &mut RunConfig) {
        set(&mut config.smoother.radius, self.radius);
        set(&mut config.smoother.degree, self.degree);
        if self.smooth_values {
            config.smoother.smooth_values = true;
        }
    }
}

impl FitSettings {
    fn apply(&self, config: &mut RunConfig) {
        if self.input.is_some() {
            config.io.input = self.input.clone();
        }
        self.smoother.apply(config);
        set(&mut config.library.max_degree, self.max_degree);
        set(&mut config.library.cross_policy, self.cross_policy);
        if self.no_delayed {
            config.library.delayed = false;
        }
        set(&mut config.sparsify.stop_increase, self.stop_increase);
        set(&mut config.sparsify.rule, self.rule);
        if self.h.is_some() {
            config.sim.h = self.h;
        }
        set(&mut config.sim.divergence_bound, self.divergence_bound);
        if self.ignore_derivs {
            config.io.ignore_derivs = true;
        }
    }
}

impl Cli {
    /// Config file (or defaults) with every given flag applied.
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        set(&mut config.seed, self.seed);
        if let Some(out) = &self.output {
            config.io.output = out.clone();
        }
        match &self.command {
            Command::Generate(a) => {
                set(&mut config.toy.alpha, a.alpha);
                set(&mut config.toy.tau, a.tau);
                set(&mut config.toy.n_samples, a.n_samples);
                set(&mut config.toy.dt, a.dt);
                set(&mut config.toy.gamma, a.gamma);
            }
            Command::Denoise(a) => {
                if a.input.is_some() {
                    config.io.input = a.input.clone();
                }
                a.smoother.apply(&mut config);
            }
            Command::Fit(a) => a.settings.apply(&mut config),
            Command::Sweep(a) => {
                a.settings.apply(&mut config);
                set(&mut config.grid.max, a.grid_max);
                if a.grid_step.is_some() {
                    config.grid.step = a.grid_step;
                    config.grid.axes = None;
                }
                if a.fine_step.is_some() {
                    config.grid.fine_step = a.fine_step;
                }
                set(&mut config.grid.fine_radius, a.fine_radius);
                if !a.traces.is_empty() {
                    config.io.traces = a.traces.clone();
                }
                if a.refine {
                    config.grid.refine = true;
                }
                if a.sequential {
                    config.io.sequential = true;
                }
            }
            Command::Simulate(a) => {
                if a.h.is_some() {
                    config.sim.h = a.h;
                }
            }
            Command::Biofit(a) => {
                let b = &mut config.bio;
                if !a.data_dirs.is_empty() {
                    b.data_dirs = a.data_dirs.clone();
                }
                if !a.zinc.is_empty() {
                    b.zinc = a.zinc.clone();
                }
                if a.synthesize {
                    b.synthesize = true;
                }
                set(&mut b.n_points, a.n_points);
                set(&mut b.sample_dt, a.sample_dt);
                set(&mut b.gamma, a.gamma);
                set(&mut b.radius, a.radius);
                set(&mut b.degree, a.degree);
                set(&mut b.grid_step, a.grid_step);
                set(&mut b.grid_max, a.grid_max);
                set(&mut b.error_mode, a.error_mode);
                set(&mut config.sparsify.stop_increase, a.stop_increase);
                if a.h.is_some() {
                    config.sim.h = a.h;
                }
                if a.sequential {
                    config.io.sequential = true;
                }
            }
            Command::Slope(a) => {
                if a.input.is_some() {
                    config.io.input = a.input.clone();
                }
            }
        }
        Ok(config)
    }
}
