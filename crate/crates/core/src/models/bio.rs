//! Two-reporter gene expression model with strain knockouts.
//!
//! State `x` is the first reporter (cadA), `y` the second (czcA). The wild
//! type obeys `ẋ = f(x, y)` and, after a dormant interval of length `τ_wt`
//! during which `y` stays at zero, `ẏ(t) = g(x(t − τ_wt), y(t − τ_wt))`.
//! The Δczc strain lacks `y` and follows `ẋ = f(x, 0)`; the Δcad strain lacks
//! `x` and follows `ẏ(t) = g(0, y(t − τ_Δca))` after its own dormancy. All
//! strains start from zero with zero history.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dde_sim::{
    integrate_field, sample, DelayField, HistorySpec, Side, SimConfig, Trajectory,
    DEFAULT_DIVERGENCE_BOUND,
};
use crate::delay_opt::{
    mismatch, sweep, DelayFitProblem, DelayGrid, Evaluation, Mismatch, SweepResult,
};
use crate::denoise::{estimate_derivatives, evaluate_at, SmootherSpec};
use crate::library::{
    enumerate_terms, library_rows, CrossPolicy, LibrarySpec, PreStart, StateLookup, TermId,
};
use crate::sparsify::{greedy_eliminate, FitTrace, GreedyConfig};
use crate::timeseries::{add_noise, load_csv, shift_to_zero, NoiseSpec, TimeSeries};
use crate::{Error, Result};

pub const X_NAME: &str = "cadA";
pub const Y_NAME: &str = "czcA";

/// Number of terms in the bivariate cubic library.
pub const N_TERMS: usize = 10;

/// Bivariate cubic library with all cross products and no delayed channels.
pub fn bio_library() -> LibrarySpec {
    LibrarySpec::new(2, 3, false, CrossPolicy::Full).expect("valid library")
}

fn bio_terms() -> Vec<TermId> {
    enumerate_terms(&bio_library())
}

/// Term labels in library order, written in `x`, `y`.
pub fn term_labels() -> Vec<String> {
    let names = ["x".to_string(), "y".to_string()];
    bio_terms().iter().map(|t| t.label(&names)).collect()
}

pub type NamedTerms = Vec<(String, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BioModel {
    pub f_coeffs: Vec<f64>,
    pub g_coeffs: Vec<f64>,
    pub tau_wt: f64,
    pub tau_dca: f64,
}

impl BioModel {
    pub fn new(f_coeffs: Vec<f64>, g_coeffs: Vec<f64>, tau_wt: f64, tau_dca: f64) -> Result<Self> {
        let m = BioModel {
            f_coeffs,
            g_coeffs,
            tau_wt,
            tau_dca,
        };
        m.validate()?;
        Ok(m)
    }

    /// Builds a model from `(label, coefficient)` pairs, labels as in
    /// [`term_labels`].
    pub fn from_named(
        f: &[(&str, f64)],
        g: &[(&str, f64)],
        tau_wt: f64,
        tau_dca: f64,
    ) -> Result<Self> {
        let labels = term_labels();
        let expand = |named: &[(&str, f64)]| -> Result<Vec<f64>> {
            let mut out = vec![0.0; N_TERMS];
            for (label, c) in named {
                let j = labels
                    .iter()
                    .position(|l| l == label)
                    .ok_or_else(|| Error::InvalidModel(format!("unknown term {label:?}")))?;
                out[j] = *c;
            }
            Ok(out)
        };
        Self::new(expand(f)?, expand(g)?, tau_wt, tau_dca)
    }

    pub fn validate(&self) -> Result<()> {
        if self.f_coeffs.len() != N_TERMS || self.g_coeffs.len() != N_TERMS {
            return Err(Error::InvalidModel(format!(
                "coefficient vectors need {N_TERMS} entries, got {} and {}",
                self.f_coeffs.len(),
                self.g_coeffs.len()
            )));
        }
        if self
            .f_coeffs
            .iter()
            .chain(&self.g_coeffs)
            .any(|c| !c.is_finite())
        {
            return Err(Error::InvalidModel("non-finite coefficient".into()));
        }
        for tau in [self.tau_wt, self.tau_dca] {
            if !(tau.is_finite() && tau >= 0.0) {
                return Err(Error::InvalidModel(format!(
                    "delay {tau} must be finite and >= 0"
                )));
            }
        }
        Ok(())
    }

    /// Nonzero `(label, coefficient)` pairs of `f` and `g`.
    pub fn named(&self) -> (NamedTerms, NamedTerms) {
        let labels = term_labels();
        let pick = |c: &[f64]| {
            labels
                .iter()
                .zip(c)
                .filter(|(_, v)| **v != 0.0)
                .map(|(l, v)| (l.clone(), *v))
                .collect()
        };
        (pick(&self.f_coeffs), pick(&self.g_coeffs))
    }

    pub fn f_support(&self) -> Vec<usize> {
        (0..N_TERMS).filter(|&j| self.f_coeffs[j] != 0.0).collect()
    }

    pub fn g_support(&self) -> Vec<usize> {
        (0..N_TERMS).filter(|&j| self.g_coeffs[j] != 0.0).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strain {
    WildType,
    DeltaCzc,
    DeltaCad,
}

impl Strain {
    pub const ALL: [Strain; 3] = [Strain::WildType, Strain::DeltaCzc, Strain::DeltaCad];

    pub fn dim(self) -> usize {
        match self {
            Strain::WildType => 2,
            Strain::DeltaCzc | Strain::DeltaCad => 1,
        }
    }

    pub fn column_names(self) -> Vec<String> {
        match self {
            Strain::WildType => vec![X_NAME.into(), Y_NAME.into()],
            Strain::DeltaCzc => vec![X_NAME.into()],
            Strain::DeltaCad => vec![Y_NAME.into()],
        }
    }

    pub fn file_stem(self) -> &'static str {
        match self {
            Strain::WildType => "wt",
            Strain::DeltaCzc => "delta_czc",
            Strain::DeltaCad => "delta_cad",
        }
    }

    /// Embeds the strain's state into `(x, y)`, zeroing the missing channel.
    fn embed(self, state: &[f64]) -> [f64; 2] {
        match self {
            Strain::WildType => [state[0], state[1]],
            Strain::DeltaCzc => [state[0], 0.0],
            Strain::DeltaCad => [0.0, state[0]],
        }
    }
}

/// The right-hand side of one strain.
pub struct StrainField {
    strain: Strain,
    f: Vec<(TermId, f64)>,
    g: Vec<(TermId, f64)>,
    tau: f64,
}

impl StrainField {
    pub fn new(model: &BioModel, strain: Strain) -> Self {
        let terms = bio_terms();
        let active = |c: &[f64]| {
            terms
                .iter()
                .zip(c)
                .filter(|(_, v)| **v != 0.0)
                .map(|(t, v)| (t.clone(), *v))
                .collect()
        };
        StrainField {
            strain,
            f: active(&model.f_coeffs),
            g: active(&model.g_coeffs),
            tau: match strain {
                Strain::DeltaCad => model.tau_dca,
                _ => model.tau_wt,
            },
        }
    }

    fn poly(terms: &[(TermId, f64)], xy: &[f64; 2]) -> f64 {
        terms.iter().map(|(t, c)| c * t.eval(xy, &[0.0, 0.0])).sum()
    }

    /// `y` is held at zero until `τ`; at `t = τ` the left limit is dormant
    /// and the right limit is not.
    fn dormant(&self, t: f64, side: Side) -> bool {
        let tol = 1e-9 * self.tau.max(1.0);
        match side {
            Side::Right => t < self.tau - tol,
            Side::Left => t <= self.tau + tol,
        }
    }

    fn g_rate(&self, t: f64, side: Side, x: &[f64], lagged: &[Vec<f64>]) -> f64 {
        if self.tau == 0.0 {
            return Self::poly(&self.g, &self.strain.embed(x));
        }
        if self.dormant(t, side) {
            return 0.0;
        }
        Self::poly(&self.g, &self.strain.embed(&lagged[0]))
    }
}

impl DelayField for StrainField {
    fn dim(&self) -> usize {
        self.strain.dim()
    }

    fn lags(&self) -> Vec<f64> {
        match self.strain {
            Strain::DeltaCzc => Vec::new(),
            _ if self.tau > 0.0 => vec![self.tau],
            _ => Vec::new(),
        }
    }

    fn eval(&self, t: f64, side: Side, x: &[f64], lagged: &[Vec<f64>], out: &mut [f64]) {
        match self.strain {
            Strain::WildType => {
                out[0] = Self::poly(&self.f, &self.strain.embed(x));
                out[1] = self.g_rate(t, side, x, lagged);
            }
            Strain::DeltaCzc => out[0] = Self::poly(&self.f, &self.strain.embed(x)),
            Strain::DeltaCad => out[0] = self.g_rate(t, side, x, lagged),
        }
    }

    fn piecewise(&self) -> bool {
        self.strain != Strain::DeltaCzc && self.tau > 0.0
    }
}

/// Simulates one strain from zero on `[0, t_end]`.
pub fn simulate_strain(
    model: &BioModel,
    strain: Strain,
    t_end: f64,
    sim: &SimConfig,
) -> Result<Trajectory> {
    model.validate()?;
    let field = StrainField::new(model, strain);
    integrate_field(&field, &HistorySpec::Zero(strain.dim()), 0.0, t_end, sim)
}

/// Simulates the wild type from zero on `[0, t_end]`.
pub fn simulate_bio(model: &BioModel, t_end: f64, h: f64) -> Result<Trajectory> {
    simulate_strain(model, Strain::WildType, t_end, &SimConfig::new(h))
}

/// Measurements for one zinc concentration.
#[derive(Debug, Clone, PartialEq)]
pub struct BioProblem {
    pub wt: TimeSeries,
    pub delta_czc: TimeSeries,
    pub delta_cad: TimeSeries,
    pub zinc_mm: f64,
}

impl BioProblem {
    pub fn new(
        wt: TimeSeries,
        delta_czc: TimeSeries,
        delta_cad: TimeSeries,
        zinc_mm: f64,
    ) -> Result<Self> {
        let p = BioProblem {
            wt,
            delta_czc,
            delta_cad,
            zinc_mm,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn series(&self, strain: Strain) -> &TimeSeries {
        match strain {
            Strain::WildType => &self.wt,
            Strain::DeltaCzc => &self.delta_czc,
            Strain::DeltaCad => &self.delta_cad,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for strain in Strain::ALL {
            let s = self.series(strain);
            let name = strain.file_stem();
            if s.dim() != strain.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "{name} needs {} columns, has {}",
                    strain.dim(),
                    s.dim()
                )));
            }
            if s.start() != 0.0 || s.values().row(0).iter().any(|v| *v != 0.0) {
                return Err(Error::InvalidSeries(format!(
                    "{name} must start at t = 0 with zero values"
                )));
            }
            s.uniform_step()?;
        }
        Ok(())
    }

    /// Reads `wt.csv` (`t,cadA,czcA`), `delta_czc.csv` (`t,cadA`) and
    /// `delta_cad.csv` (`t,czcA`) from `dir`, shifting each to start at zero.
    pub fn load_dir(dir: impl AsRef<Path>, zinc_mm: f64) -> Result<Self> {
        let dir = dir.as_ref();
        let read = |strain: Strain| -> Result<TimeSeries> {
            let path = dir.join(format!("{}.csv", strain.file_stem()));
            let raw = load_csv(&path)?;
            let wanted = strain.column_names();
            let columns = wanted
                .iter()
                .map(|w| {
                    raw.names().iter().position(|n| n == w).ok_or_else(|| {
                        Error::InvalidSeries(format!("{}: missing column {w}", path.display()))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(shift_to_zero(&raw.select_columns(&columns)?))
        };
        Self::new(
            read(Strain::WildType)?,
            read(Strain::DeltaCzc)?,
            read(Strain::DeltaCad)?,
            zinc_mm,
        )
    }
}

/// How per-strain mismatches combine into one error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorMode {
    /// Sum of the three normalized errors.
    PerStrain,
    /// One normalization over all strains together.
    Concatenated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BioFitConfig {
    pub smoother: SmootherSpec,
    pub greedy: GreedyConfig,
    /// Simulation step; `None` uses a tenth of the sampling interval.
    pub h: Option<f64>,
    pub divergence_bound: f64,
    pub error_mode: ErrorMode,
}

impl Default for BioFitConfig {
    fn default() -> Self {
        BioFitConfig {
            smoother: SmootherSpec::new(2, 2).expect("valid smoother"),
            greedy: GreedyConfig::default(),
            h: None,
            divergence_bound: DEFAULT_DIVERGENCE_BOUND,
            error_mode: ErrorMode::PerStrain,
        }
    }
}

/// The joint fit prepared for a delay sweep over `(τ_wt, τ_Δca)`.
///
/// `f` does not depend on the delays and is fitted once.
pub struct BioFitProblem {
    problem: BioProblem,
    estimated: [TimeSeries; 3],
    terms: Vec<TermId>,
    f_coeffs: Vec<f64>,
    f_trace: FitTrace,
    config: BioFitConfig,
    sim: SimConfig,
}

impl BioFitProblem {
    pub fn new(problem: BioProblem, config: BioFitConfig) -> Result<Self> {
        problem.validate()?;
        config.smoother.validate()?;
        for strain in Strain::ALL {
            let s = problem.series(strain);
            if s.values().iter().all(|v| *v == 0.0) {
                return Err(Error::ZeroNormalization);
            }
        }
        let estimated = [
            estimate_derivatives(&problem.wt, &config.smoother)?,
            estimate_derivatives(&problem.delta_czc, &config.smoother)?,
            estimate_derivatives(&problem.delta_cad, &config.smoother)?,
        ];
        let h = match config.h {
            Some(h) => h,
            None => problem.wt.uniform_step()? / 10.0,
        };
        let sim = SimConfig {
            h,
            divergence_bound: config.divergence_bound,
        };
        let terms = bio_terms();
        let mut fit = BioFitProblem {
            problem,
            estimated,
            terms,
            f_coeffs: Vec::new(),
            f_trace: FitTrace {
                steps: Vec::new(),
                c_full: 0.0,
                c_zero: 0.0,
                stopped_at: 0,
                rank_deficient: false,
            },
            config,
            sim,
        };
        let (theta, target) = fit.f_regression()?;
        let f = greedy_eliminate(&theta, &target, &fit.config.greedy)?;
        fit.f_coeffs = f.coeffs.iter().copied().collect();
        fit.f_trace = f.trace;
        Ok(fit)
    }

    pub fn problem(&self) -> &BioProblem {
        &self.problem
    }

    pub fn sim(&self) -> &SimConfig {
        &self.sim
    }

    /// Series with the derivative estimates used as targets.
    pub fn estimated(&self, strain: Strain) -> &TimeSeries {
        match strain {
            Strain::WildType => &self.estimated[0],
            Strain::DeltaCzc => &self.estimated[1],
            Strain::DeltaCad => &self.estimated[2],
        }
    }

    fn states(&self, strain: Strain) -> Result<Vec<[f64; 2]>> {
        let series = self.estimated(strain);
        let lookup = StateLookup::new(series, &self.config.smoother, PreStart::Reject);
        series
            .times()
            .iter()
            .map(|&t| Ok(strain.embed(&lookup.state_at(t)?)))
            .collect()
    }

    /// Stacked `f` rows: wild type then Δczc, targets `ẋ(t_n)`.
    pub fn f_regression(&self) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let mut states = Vec::new();
        let mut targets = Vec::new();
        for strain in [Strain::WildType, Strain::DeltaCzc] {
            let derivs = self.estimated(strain).derivs().expect("estimated");
            for (n, xy) in self.states(strain)?.into_iter().enumerate() {
                states.push((xy.to_vec(), vec![0.0, 0.0]));
                targets.push(derivs[(n, 0)]);
            }
        }
        Ok((
            library_rows(&self.terms, &states),
            DVector::from_vec(targets),
        ))
    }

    /// Derivative of channel `k` of `strain` at `t`: the stored estimate on
    /// the sampling grid, the local polynomial between samples.
    fn deriv_at(&self, strain: Strain, k: usize, t: f64) -> Result<f64> {
        let series = self.estimated(strain);
        let tol = 1e-9 * series.uniform_step()?;
        if let Some(n) = series.index_of_time(t, tol) {
            return Ok(series.derivs().expect("estimated")[(n, k)]);
        }
        Ok(evaluate_at(series, &self.config.smoother, t)?.deriv[k])
    }

    /// Stacked `g` rows: wild type at `τ_wt` then Δcad at `τ_Δca`, regressors
    /// at `t_n`, targets `ẏ(t_n + τ)` for shifts inside the series.
    pub fn g_regression(&self, tau_wt: f64, tau_dca: f64) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let mut states = Vec::new();
        let mut targets = Vec::new();
        for (strain, tau, k) in [
            (Strain::WildType, tau_wt, 1),
            (Strain::DeltaCad, tau_dca, 0),
        ] {
            let series = self.estimated(strain);
            let tol = 1e-9 * series.uniform_step()?;
            for (n, xy) in self.states(strain)?.into_iter().enumerate() {
                let shifted = series.times()[n] + tau;
                if shifted > series.end() + tol {
                    break;
                }
                states.push((xy.to_vec(), vec![0.0, 0.0]));
                targets.push(self.deriv_at(strain, k, shifted.min(series.end()))?);
            }
        }
        if targets.is_empty() {
            return Err(Error::InvalidInput(format!(
                "no regression rows for delays ({tau_wt}, {tau_dca})"
            )));
        }
        Ok((
            library_rows(&self.terms, &states),
            DVector::from_vec(targets),
        ))
    }

    /// Per-strain mismatches of a model against the measurements.
    pub fn mismatches(&self, model: &BioModel) -> Result<[Mismatch; 3]> {
        let one = |strain: Strain| {
            let field = StrainField::new(model, strain);
            let obs = self.problem.series(strain);
            mismatch(
                &field,
                obs,
                &HistorySpec::Zero(strain.dim()),
                0.0,
                &self.sim,
            )
        };
        Ok([
            one(Strain::WildType)?,
            one(Strain::DeltaCzc)?,
            one(Strain::DeltaCad)?,
        ])
    }

    pub fn error(&self, model: &BioModel) -> Result<f64> {
        let m = self.mismatches(model)?;
        if m.iter().any(|m| m.norm == 0.0) {
            return Err(Error::ZeroNormalization);
        }
        Ok(match self.config.error_mode {
            ErrorMode::PerStrain => m.iter().map(Mismatch::normalized).sum(),
            ErrorMode::Concatenated => Mismatch {
                squared_error: m.iter().map(|m| m.squared_error).sum(),
                norm: m.iter().map(|m| m.norm).sum(),
            }
            .normalized(),
        })
    }

    pub fn fit(&self, tau_wt: f64, tau_dca: f64) -> Result<(BioModel, Vec<FitTrace>)> {
        let (theta, target) = self.g_regression(tau_wt, tau_dca)?;
        let g = greedy_eliminate(&theta, &target, &self.config.greedy)?;
        let model = BioModel::new(
            self.f_coeffs.clone(),
            g.coeffs.iter().copied().collect(),
            tau_wt,
            tau_dca,
        )?;
        Ok((model, vec![self.f_trace.clone(), g.trace]))
    }
}

impl DelayFitProblem for BioFitProblem {
    type Model = BioModel;

    fn n_axes(&self) -> usize {
        2
    }

    fn evaluate(&self, delays: &[f64]) -> Result<Evaluation<BioModel>> {
        let (model, traces) = self.fit(delays[0], delays[1])?;
        let error = self.error(&model)?;
        Ok(Evaluation {
            model,
            traces,
            error,
        })
    }
}

/// Sweeps `(τ_wt, τ_Δca)` and returns the best model with the full sweep.
pub fn fit_bio(
    problem: &BioProblem,
    grid: &DelayGrid,
    config: &BioFitConfig,
    parallel: bool,
) -> Result<(BioModel, SweepResult<BioModel>)> {
    let fit = BioFitProblem::new(problem.clone(), config.clone())?;
    let result = sweep(&fit, grid, parallel)?;
    let best = result
        .best()
        .and_then(|b| b.fit.as_ref())
        .map(|e| e.model.clone())
        .ok_or_else(|| {
            Error::InvalidInput("no delay pair produced a finite reconstruction error".into())
        })?;
    Ok((best, result))
}

/// Generates measurements from a model: `n_points` samples every `dt`
/// minutes per strain, optionally with additive noise (one stream per
/// strain, seeds `seed`, `seed + 1`, `seed + 2`), shifted to start at zero.
pub fn synthesize_bio(
    model: &BioModel,
    zinc_mm: f64,
    n_points: usize,
    dt: f64,
    noise: Option<NoiseSpec>,
) -> Result<BioProblem> {
    if n_points < 2 || !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInput(
            "need at least 2 points and dt > 0".into(),
        ));
    }
    let t_end = (n_points - 1) as f64 * dt;
    let times: Vec<f64> = (0..n_points).map(|n| n as f64 * dt).collect();
    let sim = SimConfig::new(dt / 50.0);
    let make = |strain: Strain, k: u64| -> Result<TimeSeries> {
        let traj = simulate_strain(model, strain, t_end, &sim)?;
        if traj.diverged() {
            return Err(Error::InvalidModel(format!(
                "{} simulation diverged",
                strain.file_stem()
            )));
        }
        let values = sample(&traj, &times)?;
        let clean = TimeSeries::with_names(times.clone(), values, strain.column_names())?;
        Ok(match noise {
            Some(spec) if spec.gamma > 0.0 => {
                let spec = NoiseSpec::new(spec.gamma, spec.seed.wrapping_add(k))?;
                shift_to_zero(&add_noise(&clean, &spec))
            }
            _ => clean,
        })
    };
    BioProblem::new(
        make(Strain::WildType, 0)?,
        make(Strain::DeltaCzc, 1)?,
        make(Strain::DeltaCad, 2)?,
        zinc_mm,
    )
}

/// One published fit: concentration, delays, named coefficients and error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFit {
    pub zinc_mm: f64,
    pub tau_wt: f64,
    pub tau_dca: f64,
    pub f: std::collections::BTreeMap<String, f64>,
    pub g: std::collections::BTreeMap<String, f64>,
    pub error: f64,
}

impl ReferenceFit {
    pub fn model(&self) -> Result<BioModel> {
        let f: Vec<(&str, f64)> = self.f.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        let g: Vec<(&str, f64)> = self.g.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        BioModel::from_named(&f, &g, self.tau_wt, self.tau_dca)
    }
}

const REFERENCE_FITS: &str = include_str!("../../data/reference_fits.json");

/// The eight reference fits, ordered by concentration.
pub fn reference_fits() -> Vec<ReferenceFit> {
    serde_json::from_str(REFERENCE_FITS).expect("bundled fixture parses")
}

/// Reference fit at a given concentration.
pub fn reference_fit(zinc_mm: f64) -> Option<ReferenceFit> {
    reference_fits()
        .into_iter()
        .find(|r| (r.zinc_mm - zinc_mm).abs() < 1e-9)
}

/// Least-squares slope through the origin of delay against concentration.
pub fn delay_concentration_slope(rows: &[(f64, f64)]) -> Result<f64> {
    if rows.len() < 2 {
        return Err(Error::InvalidInput(
            "need at least two (concentration, delay) rows".into(),
        ));
    }
    if rows.iter().any(|(c, _)| !(c.is_finite() && *c > 0.0)) {
        return Err(Error::InvalidInput(
            "concentrations must be positive".into(),
        ));
    }
    let cc: f64 = rows.iter().map(|(c, _)| c * c).sum();
    let ct: f64 = rows.iter().map(|(c, t)| c * t).sum();
    Ok(ct / cc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_mm() -> BioModel {
        BioModel::from_named(
            &[("1", 201.0), ("y", -9.08e-3)],
            &[("1", 117.0), ("x^2", 4.28e-7)],
            30.0,
            70.0,
        )
        .unwrap()
    }

    #[test]
    fn labels_in_library_order() {
        assert_eq!(
            term_labels(),
            vec!["1", "x", "y", "x^2", "x*y", "y^2", "x^3", "x^2*y", "x*y^2", "y^3"]
        );
    }

    #[test]
    fn dormant_phase_is_linear_in_x_and_zero_in_y() {
        let traj = simulate_bio(&two_mm(), 30.0, 0.5).unwrap();
        for i in 0..traj.len() {
            let t = traj.time(i);
            assert!((traj.state(i)[0] - 201.0 * t).abs() <= 1e-9 * (201.0 * t).max(1.0));
            assert_eq!(traj.state(i)[1], 0.0);
        }
    }

    #[test]
    fn y_stays_zero_before_delay() {
        let traj = simulate_bio(&two_mm(), 160.0, 0.5).unwrap();
        for i in 0..traj.len() {
            if traj.time(i) < 30.0 {
                assert_eq!(traj.state(i)[1], 0.0);
            }
        }
        // After the switch ẏ(t) = 117 + c·(201·(t − 30))², integrated over one minute.
        let k = traj.times().iter().position(|&t| t == 31.0).unwrap();
        let expect = 117.0 + 4.28e-7 * 201.0 * 201.0 / 3.0;
        assert!(
            (traj.state(k)[1] - expect).abs() < 1e-9,
            "{}",
            traj.state(k)[1]
        );
    }

    #[test]
    fn long_run_goes_negative() {
        let traj = simulate_bio(&two_mm(), 1000.0, 0.5).unwrap();
        assert!((0..traj.len()).any(|i| traj.state(i).iter().any(|v| *v < 0.0)));
    }

    #[test]
    fn zero_model_stays_zero() {
        let m = BioModel::new(vec![0.0; 10], vec![0.0; 10], 30.0, 70.0).unwrap();
        let traj = simulate_bio(&m, 100.0, 0.5).unwrap();
        assert!(traj.states().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn mutants_use_shared_coefficients() {
        let m = two_mm();
        let czc = simulate_strain(&m, Strain::DeltaCzc, 50.0, &SimConfig::new(0.5)).unwrap();
        assert!((czc.state(czc.len() - 1)[0] - 201.0 * 50.0).abs() < 1e-9);
        let cad = simulate_strain(&m, Strain::DeltaCad, 100.0, &SimConfig::new(0.5)).unwrap();
        let end = cad.state(cad.len() - 1)[0];
        assert!((end - 117.0 * 30.0).abs() < 1e-8, "{end}");
    }

    #[test]
    fn zero_delay_wild_type_has_no_dormancy() {
        let m = BioModel::from_named(&[], &[("1", 2.0)], 0.0, 0.0).unwrap();
        let traj = simulate_bio(&m, 1.0, 0.1).unwrap();
        assert!((traj.state(traj.len() - 1)[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn model_validation() {
        assert!(BioModel::new(vec![0.0; 9], vec![0.0; 10], 1.0, 1.0).is_err());
        assert!(BioModel::new(vec![0.0; 10], vec![0.0; 10], -1.0, 1.0).is_err());
        assert!(BioModel::from_named(&[("z", 1.0)], &[], 1.0, 1.0).is_err());
    }

    #[test]
    fn synthesized_problem_shape() {
        let p = synthesize_bio(&two_mm(), 2.0, 33, 5.0, None).unwrap();
        assert_eq!(p.wt.len(), 33);
        assert_eq!(p.wt.end(), 160.0);
        assert_eq!(p.delta_czc.dim(), 1);
        assert_eq!(p.delta_cad.names(), &["czcA".to_string()]);
    }

    #[test]
    fn noisy_synthesis_starts_at_zero() {
        let noise = NoiseSpec::new(50.0, 3).unwrap();
        let p = synthesize_bio(&two_mm(), 2.0, 33, 5.0, Some(noise)).unwrap();
        assert!(p.validate().is_ok());
        let clean = synthesize_bio(&two_mm(), 2.0, 33, 5.0, None).unwrap();
        assert_ne!(p.wt.values(), clean.wt.values());
    }

    #[test]
    fn all_zero_problem_rejected() {
        let z = |d: usize| {
            TimeSeries::new(
                (0..5).map(|n| n as f64 * 5.0).collect(),
                DMatrix::zeros(5, d),
            )
            .unwrap()
        };
        let p = BioProblem::new(z(2), z(1), z(1), 1.0).unwrap();
        let grid = DelayGrid::new(vec![vec![0.0], vec![0.0]]).unwrap();
        let err = fit_bio(&p, &grid, &BioFitConfig::default(), true).unwrap_err();
        assert!(matches!(err, Error::ZeroNormalization));
    }

    #[test]
    fn problem_must_start_at_zero() {
        let t: Vec<f64> = (0..5).map(|n| n as f64).collect();
        let one = DMatrix::from_element(5, 1, 1.0);
        let two = DMatrix::from_element(5, 2, 1.0);
        let s1 = TimeSeries::new(t.clone(), one).unwrap();
        let s2 = TimeSeries::new(t, two).unwrap();
        assert!(BioProblem::new(s2, s1.clone(), s1, 1.0).is_err());
    }

    #[test]
    fn shifted_targets_line_up() {
        let p = synthesize_bio(&two_mm(), 2.0, 33, 5.0, None).unwrap();
        let fit = BioFitProblem::new(p, BioFitConfig::default()).unwrap();
        let (theta, target) = fit.g_regression(30.0, 70.0).unwrap();
        // 33 − 6 wild-type rows and 33 − 14 Δcad rows.
        assert_eq!(theta.nrows(), 27 + 19);
        assert_eq!(target.len(), 46);
        let wt_deriv = fit.estimated(Strain::WildType).derivs().unwrap();
        assert_eq!(target[0], wt_deriv[(6, 1)]);
        let cad_deriv = fit.estimated(Strain::DeltaCad).derivs().unwrap();
        assert_eq!(target[27], cad_deriv[(14, 0)]);
        // Δcad regressors have x = 0.
        assert_eq!(theta[(27, 1)], 0.0);
    }

    #[test]
    fn off_grid_shift_uses_local_polynomial() {
        let p = synthesize_bio(&two_mm(), 2.0, 33, 5.0, None).unwrap();
        let fit = BioFitProblem::new(p, BioFitConfig::default()).unwrap();
        let (_, target) = fit.g_regression(32.5, 70.0).unwrap();
        let expect = evaluate_at(
            fit.estimated(Strain::WildType),
            &SmootherSpec::new(2, 2).unwrap(),
            32.5,
        )
        .unwrap()
        .deriv[1];
        assert_eq!(target[0], expect);
    }

    #[test]
    fn reference_fits_load() {
        let rows = reference_fits();
        assert_eq!(rows.len(), 8);
        for r in &rows {
            r.model().unwrap();
        }
        let two = reference_fit(2.0).unwrap().model().unwrap();
        assert_eq!(two, two_mm());
    }

    #[test]
    fn slope_of_exact_line() {
        let rows = [(1.0, 5.0), (2.0, 10.0), (3.0, 15.0)];
        assert_eq!(delay_concentration_slope(&rows).unwrap(), 5.0);
        assert!(delay_concentration_slope(&[(1.0, 1.0)]).is_err());
        assert!(delay_concentration_slope(&[(0.0, 1.0), (0.0, 2.0)]).is_err());
    }
}
