//! Subcommand implementations. Each builds its outputs in memory and writes
//! them only once every computation has succeeded.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use serde_json::json;
use sindy_delay::dde_sim::{integrate, trajectory_csv, HistorySpec, SimConfig};
use sindy_delay::delay_opt::{
    error_profile, reconstruction_error, refine_minimum, smoothed_history,
};
use sindy_delay::denoise::estimate_derivatives;
use sindy_delay::models::bio::{
    delay_concentration_slope, fit_bio, reference_fit, reference_fits, synthesize_bio, term_labels,
    BioFitConfig, BioProblem, Strain,
};
use sindy_delay::models::enso::{generate_enso, EnsoSpec};
use sindy_delay::sparsify::trace_csv;
use sindy_delay::timeseries::{fmt_f64, parse_csv, to_csv_string, NoiseSpec};
use sindy_delay::{sweep, SindyDelayConfig, SindyDelayProblem, TimeSeries};

use crate::cli::{Cli, Command, SimulateArgs};
use crate::config::RunConfig;
use crate::model_file::{BioModelFile, ModelFile, Scoring};
use crate::output::{Inputs, Outputs};

/// Runs the parsed command line and returns a short report for stdout.
pub fn run(cli: &Cli) -> anyhow::Result<String> {
    let config = cli.resolve()?;
    match &cli.command {
        Command::Generate(_) => generate(&config),
        Command::Denoise(_) => denoise(&config),
        Command::Fit(a) => fit(&config, a.tau),
        Command::Sweep(_) => run_sweep(&config),
        Command::Simulate(a) => simulate(&config, a),
        Command::Biofit(_) => biofit(&config),
        Command::Slope(_) => slope(&config),
    }
}

fn finish(
    mut out: Outputs,
    command: &str,
    config: &RunConfig,
    inputs: &Inputs,
    report: String,
) -> anyhow::Result<String> {
    out.add_manifest(command, config, inputs);
    out.commit(&config.io.output)?;
    Ok(report)
}

pub fn generate(config: &RunConfig) -> anyhow::Result<String> {
    let t = &config.toy;
    let spec = EnsoSpec {
        alpha: t.alpha,
        tau: t.tau,
        n_samples: t.n_samples,
        dt: t.dt,
        noise: NoiseSpec::new(t.gamma, config.seed)?,
    };
    let (truth, observed) = generate_enso(&spec)?;
    let mut out = Outputs::default();
    out.add("truth.csv", to_csv_string(&truth));
    out.add("observed.csv", to_csv_string(&observed.without_derivs()));
    let report = format!("generated {} samples (gamma = {})", truth.len(), t.gamma);
    finish(out, "generate", config, &Inputs::default(), report)
}

fn read_series(config: &RunConfig, inputs: &mut Inputs) -> anyhow::Result<TimeSeries> {
    let path = config
        .io
        .input
        .as_ref()
        .ok_or_else(|| anyhow!("no input series (use --input)"))?;
    let text = inputs.read(path)?;
    let series = parse_csv(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(if config.io.ignore_derivs {
        series.without_derivs()
    } else {
        series
    })
}

fn mean_step(series: &TimeSeries) -> f64 {
    series
        .uniform_step()
        .unwrap_or_else(|_| (series.end() - series.start()) / (series.len() - 1) as f64)
}

pub fn denoise(config: &RunConfig) -> anyhow::Result<String> {
    let mut inputs = Inputs::default();
    let series = read_series(config, &mut inputs)?.without_derivs();
    let estimated = estimate_derivatives(&series, &config.smoother.spec()?)?;
    let mut out = Outputs::default();
    out.add("denoised.csv", to_csv_string(&estimated));
    finish(
        out,
        "denoise",
        config,
        &inputs,
        format!("estimated derivatives for {} samples", series.len()),
    )
}

fn sindy_problem(config: &RunConfig, series: &TimeSeries) -> anyhow::Result<SindyDelayProblem> {
    let dt = mean_step(series);
    let sim = SimConfig {
        h: config.sim.h.unwrap_or(dt / 10.0),
        divergence_bound: config.sim.divergence_bound,
    };
    let fit_config = SindyDelayConfig {
        library: config.library.spec(series.dim())?,
        smoother: config.smoother.spec()?,
        greedy: config.sparsify.greedy()?,
        sim,
    };
    Ok(SindyDelayProblem::new(series, fit_config)?)
}

fn scoring_block(problem: &SindyDelayProblem, delay: f64, error: f64) -> Scoring {
    let c = problem.config();
    Scoring {
        t_start: problem.observations().start() + delay,
        h: c.sim.h,
        divergence_bound: c.sim.divergence_bound,
        smoother: c.smoother,
        error,
    }
}

fn add_traces(
    out: &mut Outputs,
    problem: &SindyDelayProblem,
    delay: f64,
    names: &[String],
) -> anyhow::Result<()> {
    let (model, traces) = problem.fit(delay)?;
    let labels: Vec<String> = model.terms().iter().map(|t| t.label(names)).collect();
    for (k, trace) in traces.iter().enumerate() {
        let name = if traces.len() == 1 {
            format!("trace_tau={delay}.csv")
        } else {
            format!("trace_tau={delay}_{}.csv", names[k])
        };
        out.add(name, trace_csv(trace, &labels));
    }
    Ok(())
}

pub fn fit(config: &RunConfig, delay: f64) -> anyhow::Result<String> {
    let mut inputs = Inputs::default();
    let series = read_series(config, &mut inputs)?;
    let problem = sindy_problem(config, &series)?;
    let (model, _) = problem.fit(delay)?;
    let error = problem.score(&model, delay)?;
    let mut out = Outputs::default();
    add_traces(&mut out, &problem, delay, series.names())?;
    let scoring = error
        .is_finite()
        .then(|| scoring_block(&problem, delay, error));
    let file = ModelFile::from_model(
        &model,
        series.names().to_vec(),
        scoring,
        inputs.provenance(config),
    );
    out.add("model.json", file.to_json());
    finish(
        out,
        "fit",
        config,
        &inputs,
        format!("tau = {delay}, E = {}", fmt_f64(error)),
    )
}

pub fn run_sweep(config: &RunConfig) -> anyhow::Result<String> {
    let mut inputs = Inputs::default();
    let series = read_series(config, &mut inputs)?;
    let coarse = config.grid.coarse(mean_step(&series))?;
    let problem = sindy_problem(config, &series)?;
    let parallel = !config.io.sequential;
    let mut result = sweep(&problem, &coarse, parallel)?;
    if let Some(best) = result.best() {
        if let Some(fine) = config.grid.fine_around(best.delays[0])? {
            result = sweep(&problem, &coarse.union(&fine)?, parallel)?;
        }
    }
    let best = result.best().ok_or_else(|| {
        anyhow!(
            "every candidate delay failed; first diagnostic: {:?}",
            result.entries()[0].diagnostic
        )
    })?;
    let delay = best.delays[0];
    let fit = best.fit.as_ref().expect("finite entries carry a fit");

    let mut out = Outputs::default();
    out.add("profile.csv", error_profile(&result).to_csv());
    for &tau in &config.io.traces {
        add_traces(&mut out, &problem, tau, series.names())?;
    }
    let file = ModelFile::from_model(
        &fit.model,
        series.names().to_vec(),
        Some(scoring_block(&problem, delay, best.error)),
        inputs.provenance(config),
    );
    out.add("model.json", file.to_json());
    let refined = if config.grid.refine {
        refine_minimum(&result)
    } else {
        None
    };
    let failed = result
        .entries()
        .iter()
        .filter(|e| !e.error.is_finite())
        .count();
    let summary = json!({
        "best_tau": delay,
        "error": best.error,
        "refined_tau": refined,
        "grid_points": result.entries().len(),
        "failed_points": failed,
        "scored_subset": "observations at or after t_first + tau; history on [t_first, t_first + tau] from the smoothed observations",
    });
    out.add(
        "summary.json",
        format!("{}\n", serde_json::to_string_pretty(&summary)?),
    );
    let mut report = format!("best tau = {delay}, E = {}", fmt_f64(best.error));
    if let Some(r) = refined {
        let _ = write!(report, ", refined tau = {r}");
    }
    finish(out, "sweep", config, &inputs, report)
}

pub fn simulate(config: &RunConfig, args: &SimulateArgs) -> anyhow::Result<String> {
    let mut inputs = Inputs::default();
    let file = ModelFile::parse(&inputs.read(&args.model)?)
        .with_context(|| format!("in {}", args.model.display()))?;
    let model = file.model()?;
    let mut out = Outputs::default();
    let report;
    if let Some(path) = &args.observations {
        let scoring = file.scoring.as_ref().ok_or_else(|| {
            anyhow!(
                "{} has no scoring block; use --constant",
                args.model.display()
            )
        })?;
        let observed = parse_csv(&inputs.read(path)?)?.without_derivs();
        let history = smoothed_history(&observed, &scoring.smoother)?;
        let sim = SimConfig {
            h: config.sim.h.unwrap_or(scoring.h),
            divergence_bound: scoring.divergence_bound,
        };
        let horizon = args.horizon.unwrap_or(observed.end());
        let traj = sindy_delay::dde_sim::integrate_field(
            &model,
            &history,
            scoring.t_start,
            horizon,
            &sim,
        )?;
        out.add("trajectory.csv", trajectory_csv(&traj, &file.names));
        let error = reconstruction_error(&model, &observed, &history, scoring.t_start, &sim)?;
        out.add(
            "score.json",
            format!(
                "{}\n",
                serde_json::to_string_pretty(
                    &json!({ "error": error, "t_start": scoring.t_start, "h": sim.h })
                )?
            ),
        );
        report = format!("E = {}", fmt_f64(error));
    } else {
        let constant = args
            .constant
            .clone()
            .ok_or_else(|| anyhow!("need --observations or --constant for the history"))?;
        let horizon = args
            .horizon
            .ok_or_else(|| anyhow!("--horizon is required with --constant"))?;
        let h = config
            .sim
            .h
            .ok_or_else(|| anyhow!("--h is required with --constant"))?;
        let traj = integrate(
            &model,
            &HistorySpec::Constant(constant),
            args.start,
            horizon,
            h,
        )?;
        out.add("trajectory.csv", trajectory_csv(&traj, &file.names));
        report = format!(
            "simulated {} steps{}",
            traj.len() - 1,
            if traj.diverged() { " (diverged)" } else { "" }
        );
    }
    finish(out, "simulate", config, &inputs, report)
}

fn bio_problems(
    config: &RunConfig,
    inputs: &mut Inputs,
) -> anyhow::Result<Vec<(BioProblem, bool)>> {
    let b = &config.bio;
    if b.synthesize {
        let zinc: Vec<f64> = if b.zinc.is_empty() {
            reference_fits().iter().map(|r| r.zinc_mm).collect()
        } else {
            b.zinc.clone()
        };
        let noise = (b.gamma > 0.0)
            .then(|| NoiseSpec::new(b.gamma, config.seed))
            .transpose()?;
        return zinc
            .iter()
            .map(|&z| {
                let reference =
                    reference_fit(z).ok_or_else(|| anyhow!("no reference fit at {z} mM"))?;
                Ok((
                    synthesize_bio(&reference.model()?, z, b.n_points, b.sample_dt, noise)?,
                    true,
                ))
            })
            .collect();
    }
    if b.data_dirs.is_empty() {
        bail!("no strain data (use --data-dir, or --synthesize)");
    }
    if b.data_dirs.len() != b.zinc.len() {
        bail!(
            "{} data directories but {} zinc concentrations",
            b.data_dirs.len(),
            b.zinc.len()
        );
    }
    b.data_dirs
        .iter()
        .zip(&b.zinc)
        .map(|(dir, &z)| {
            for strain in Strain::ALL {
                inputs.read(&dir.join(format!("{}.csv", strain.file_stem())))?;
            }
            Ok((
                BioProblem::load_dir(dir, z)
                    .with_context(|| format!("loading {}", dir.display()))?,
                false,
            ))
        })
        .collect()
}

fn strain_csv(problem: &BioProblem, strain: Strain) -> String {
    to_csv_string(problem.series(strain))
}

pub fn biofit(config: &RunConfig) -> anyhow::Result<String> {
    let grid = config.bio.grid()?;
    let fit_config = BioFitConfig {
        smoother: sindy_delay::SmootherSpec::new(config.bio.radius, config.bio.degree)?,
        greedy: config.sparsify.greedy()?,
        h: config.sim.h,
        divergence_bound: config.sim.divergence_bound,
        error_mode: config.bio.error_mode,
    };
    let mut inputs = Inputs::default();
    let problems = bio_problems(config, &mut inputs)?;
    let batch = problems.len() > 1;
    let labels = term_labels();
    let mut out = Outputs::default();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut report = String::new();
    for (problem, synthetic) in &problems {
        let z = problem.zinc_mm;
        let prefix = if batch {
            format!("zinc={z}/")
        } else {
            String::new()
        };
        match fit_bio(problem, &grid, &fit_config, !config.io.sequential) {
            Ok((model, result)) => {
                let best = result.best().expect("fit_bio returns a best point");
                let traces = &best.fit.as_ref().expect("best has a fit").traces;
                out.add(
                    format!("{prefix}bio_model.json"),
                    BioModelFile::new(&model, z, best.error, inputs.provenance(config)).to_json(),
                );
                out.add(
                    format!("{prefix}surface.csv"),
                    error_profile(&result).to_csv(),
                );
                out.add(
                    format!("{prefix}trace_f.csv"),
                    trace_csv(&traces[0], &labels),
                );
                out.add(
                    format!("{prefix}trace_g.csv"),
                    trace_csv(&traces[1], &labels),
                );
                if *synthetic {
                    for strain in Strain::ALL {
                        out.add(
                            format!("{prefix}data/{}.csv", strain.file_stem()),
                            strain_csv(problem, strain),
                        );
                    }
                }
                let _ = writeln!(
                    report,
                    "{z} mM: tau_wt = {}, tau_dca = {}, E = {}",
                    model.tau_wt,
                    model.tau_dca,
                    fmt_f64(best.error)
                );
                rows.push((z, model.tau_wt, model.tau_dca, best.error));
            }
            Err(e) => failures.push(format!("{z} mM: {e}")),
        }
    }
    if batch && !rows.is_empty() {
        let mut csv = String::from("zinc_mm,tau_wt,tau_dca,error\n");
        for (z, tw, td, e) in &rows {
            let _ = writeln!(csv, "{z},{tw},{td},{}", fmt_f64(*e));
        }
        let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.0, r.2)).collect();
        if let Ok(slope) = delay_concentration_slope(&pairs) {
            let _ = writeln!(csv, "# slope_tau_dca_per_mM,{}", fmt_f64(slope));
            let _ = writeln!(report, "slope = {slope:.4} min/mM");
        }
        out.add("delays_vs_zinc.csv", csv);
    }
    out.add_manifest("biofit", config, &inputs);
    out.commit(&config.io.output)?;
    if !failures.is_empty() {
        bail!(
            "{} concentration(s) failed:\n{}",
            failures.len(),
            failures.join("\n")
        );
    }
    Ok(report.trim_end().to_string())
}

/// Parses `zinc_mm,tau_dca` rows.
pub fn parse_slope_rows(text: &str) -> anyhow::Result<Vec<(f64, f64)>> {
    let mut rows = Vec::new();
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    match lines.next() {
        Some((_, h)) if h.trim() == "zinc_mm,tau_dca" => {}
        _ => bail!("expected header `zinc_mm,tau_dca`"),
    }
    for (i, line) in lines {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != 2 {
            bail!("row {}: expected 2 cells", i + 1);
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| anyhow!("row {}: bad number `{s}`", i + 1))
        };
        rows.push((parse(cells[0])?, parse(cells[1])?));
    }
    Ok(rows)
}

pub fn slope(config: &RunConfig) -> anyhow::Result<String> {
    let rows = match &config.io.input {
        Some(path) => parse_slope_rows(
            &std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?,
        )?,
        None => reference_fits()
            .iter()
            .map(|r| (r.zinc_mm, r.tau_dca))
            .collect(),
    };
    let slope = delay_concentration_slope(&rows)?;
    Ok(format!(
        "slope = {} min/mM ({} rows)",
        fmt_f64(slope),
        rows.len()
    ))
}

/// Loads a model file from disk.
pub fn load_model(path: &Path) -> anyhow::Result<ModelFile> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ModelFile::parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_rows_parse() {
        let rows = parse_slope_rows("zinc_mm,tau_dca\n1,5\n2,10\n").unwrap();
        assert_eq!(rows, vec![(1.0, 5.0), (2.0, 10.0)]);
        assert!(parse_slope_rows("a,b\n1,2\n").is_err());
        assert!(parse_slope_rows("zinc_mm,tau_dca\n1,x\n").is_err());
    }
}
