//! Outer delay search: fit a sparse model at every candidate delay, simulate
//! it, and keep the delay whose simulation best reproduces the data.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dde_sim::{integrate_field, sample, DelayField, DelayModel, HistorySpec, SimConfig};
use crate::denoise::{estimate_derivatives, SmootherSpec};
use crate::library::{
    admissible_row_times, build_library_matrix, LibrarySpec, PreStart, StateLookup,
};
use crate::sparsify::{greedy_eliminate, FitTrace, GreedyConfig};
use crate::timeseries::{fmt_f64, TimeSeries};
use crate::{Error, Result};

/// Candidate delays, one ordered list per delay axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayGrid {
    axes: Vec<Vec<f64>>,
}

impl DelayGrid {
    pub fn new(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidGrid("grid needs at least one axis".into()));
        }
        for (a, axis) in axes.iter().enumerate() {
            if axis.is_empty() {
                return Err(Error::InvalidGrid(format!("axis {} is empty", a + 1)));
            }
            if axis.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::InvalidGrid(format!(
                    "axis {} has a negative or non-finite delay",
                    a + 1
                )));
            }
            if axis.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidGrid(format!(
                    "axis {} is not strictly increasing",
                    a + 1
                )));
            }
        }
        Ok(DelayGrid { axes })
    }

    /// `step, 2·step, …` up to the first multiple reaching `max`.
    pub fn multiples(step: f64, max: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite() && max >= step) {
            return Err(Error::InvalidGrid(format!(
                "need 0 < step <= max (step={step}, max={max})"
            )));
        }
        let count = (max / step - 1e-9).ceil() as usize;
        Self::new(vec![(1..=count).map(|s| s as f64 * step).collect()])
    }

    /// `start, start + step, …, end` inclusive.
    pub fn range(start: f64, step: f64, end: f64) -> Result<Vec<f64>> {
        if !(step > 0.0 && step.is_finite() && end >= start && start >= 0.0) {
            return Err(Error::InvalidGrid(format!(
                "need 0 <= start <= end and step > 0 (start={start}, step={step}, end={end})"
            )));
        }
        let count = ((end - start) / step + 1e-9).floor() as usize;
        Ok((0..=count).map(|k| start + k as f64 * step).collect())
    }

    /// Per-axis union of two grids with the same number of axes.
    pub fn union(&self, other: &DelayGrid) -> Result<Self> {
        if self.axes.len() != other.axes.len() {
            return Err(Error::InvalidGrid(
                "grids have different numbers of axes".into(),
            ));
        }
        let axes = self
            .axes
            .iter()
            .zip(&other.axes)
            .map(|(a, b)| {
                let mut all: Vec<f64> = a.iter().chain(b).copied().collect();
                all.sort_by(f64::total_cmp);
                all.dedup_by(|x, y| (*x - *y).abs() <= 1e-9 * y.abs().max(1.0));
                all
            })
            .collect();
        Self::new(axes)
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn n_axes(&self) -> usize {
        self.axes.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Vec::len).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All grid points, first axis varying slowest.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let mut points = vec![Vec::new()];
        for axis in &self.axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        points
    }
}

/// Inner fit and score at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation<M> {
    pub model: M,
    pub traces: Vec<FitTrace>,
    pub error: f64,
}

/// A fitting problem parameterized by a tuple of delays.
pub trait DelayFitProblem: Sync {
    type Model: Send;

    fn n_axes(&self) -> usize;

    fn evaluate(&self, delays: &[f64]) -> Result<Evaluation<Self::Model>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry<M> {
    pub delays: Vec<f64>,
    /// Reconstruction error; infinite when the fit or simulation failed.
    pub error: f64,
    pub fit: Option<Evaluation<M>>,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult<M> {
    grid: DelayGrid,
    entries: Vec<SweepEntry<M>>,
    best: Option<usize>,
}

impl<M> SweepResult<M> {
    pub fn grid(&self) -> &DelayGrid {
        &self.grid
    }

    /// Entries in grid-point order.
    pub fn entries(&self) -> &[SweepEntry<M>] {
        &self.entries
    }

    pub fn best_index(&self) -> Option<usize> {
        self.best
    }

    /// The minimizing entry, or `None` when every point failed.
    pub fn best(&self) -> Option<&SweepEntry<M>> {
        self.best.map(|i| &self.entries[i])
    }

    pub fn errors(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.error).collect()
    }

    pub fn entry_at(&self, delays: &[f64]) -> Option<&SweepEntry<M>> {
        self.entries.iter().find(|e| {
            e.delays.len() == delays.len()
                && e.delays
                    .iter()
                    .zip(delays)
                    .all(|(a, b)| (a - b).abs() <= 1e-9 * b.abs().max(1.0))
        })
    }

    pub fn into_entries(self) -> Vec<SweepEntry<M>> {
        self.entries
    }
}

/// First index of the smallest finite error.
fn argmin(errors: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, e) in errors.into_iter().enumerate() {
        if !e.is_finite() {
            continue;
        }
        if best.is_none_or(|(_, b)| e < b) {
            best = Some((i, e));
        }
    }
    best.map(|(i, _)| i)
}

fn evaluate_point<P: DelayFitProblem>(problem: &P, delays: Vec<f64>) -> SweepEntry<P::Model> {
    match problem.evaluate(&delays) {
        Ok(ev) => {
            let error = if ev.error.is_nan() {
                f64::INFINITY
            } else {
                ev.error
            };
            let diagnostic = error
                .is_infinite()
                .then(|| "simulation diverged".to_string());
            SweepEntry {
                delays,
                error,
                fit: Some(ev),
                diagnostic,
            }
        }
        Err(e) => SweepEntry {
            delays,
            error: f64::INFINITY,
            fit: None,
            diagnostic: Some(e.to_string()),
        },
    }
}

/// Evaluates every grid point and selects the minimizer. A failing point is
/// recorded with infinite error and a diagnostic.
pub fn sweep<P: DelayFitProblem>(
    problem: &P,
    grid: &DelayGrid,
    parallel: bool,
) -> Result<SweepResult<P::Model>> {
    if grid.n_axes() != problem.n_axes() {
        return Err(Error::InvalidGrid(format!(
            "problem has {} delay axes, grid has {}",
            problem.n_axes(),
            grid.n_axes()
        )));
    }
    let points = grid.points();
    let entries: Vec<SweepEntry<P::Model>> = if parallel {
        points
            .into_par_iter()
            .map(|p| evaluate_point(problem, p))
            .collect()
    } else {
        points
            .into_iter()
            .map(|p| evaluate_point(problem, p))
            .collect()
    };
    let best = argmin(entries.iter().map(|e| e.error));
    Ok(SweepResult {
        grid: grid.clone(),
        entries,
        best,
    })
}

/// Error landscape over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorProfile {
    pub shape: Vec<usize>,
    pub rows: Vec<(Vec<f64>, f64)>,
}

pub fn error_profile<M>(result: &SweepResult<M>) -> ErrorProfile {
    ErrorProfile {
        shape: result.grid.shape(),
        rows: result
            .entries
            .iter()
            .map(|e| (e.delays.clone(), e.error))
            .collect(),
    }
}

impl ErrorProfile {
    /// CSV with header `tau_1[,tau_2,…],error`.
    pub fn to_csv(&self) -> String {
        let n_axes = self.shape.len();
        let mut out = (1..=n_axes)
            .map(|a| format!("tau_{a},"))
            .collect::<String>();
        out.push_str("error\n");
        for (delays, e) in &self.rows {
            for d in delays {
                out.push_str(&fmt_f64(*d));
                out.push(',');
            }
            out.push_str(&fmt_f64(*e));
            out.push('\n');
        }
        out
    }

    /// Index of the smallest finite error, first on ties.
    pub fn argmin(&self) -> Option<usize> {
        argmin(self.rows.iter().map(|r| r.1))
    }

    /// Two-axis landscape as a matrix, rows along the first axis.
    pub fn surface(&self) -> Option<DMatrix<f64>> {
        if self.shape.len() != 2 {
            return None;
        }
        let (n0, n1) = (self.shape[0], self.shape[1]);
        Some(DMatrix::from_fn(n0, n1, |i, j| self.rows[i * n1 + j].1))
    }
}

/// Sub-grid estimate of a one-axis minimum from the parabola through the
/// discrete argmin and its two neighbours. `None` at the grid edge or when
/// the three points are not convex.
pub fn refine_minimum<M>(result: &SweepResult<M>) -> Option<f64> {
    if result.grid.n_axes() != 1 {
        return None;
    }
    let i = result.best?;
    if i == 0 || i + 1 >= result.entries.len() {
        return None;
    }
    let p = |k: usize| (result.entries[k].delays[0], result.entries[k].error);
    let ((x0, y0), (x1, y1), (x2, y2)) = (p(i - 1), p(i), p(i + 1));
    if ![y0, y1, y2].iter().all(|y| y.is_finite()) {
        return None;
    }
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let curvature = (d12 - d01) / (x2 - x0);
    if curvature <= 0.0 {
        return None;
    }
    // Vertex of the interpolating parabola in Newton form.
    let vertex = 0.5 * (x0 + x1) - d01 / (2.0 * curvature);
    Some(vertex.clamp(x0, x2))
}

/// Normalized squared mismatch between a simulated trajectory and the
/// observations at times `≥ t_start`.
///
/// Integration starts at `t_start` from `history`; observations before it are
/// not scored and do not enter the normalization. A diverged simulation
/// scores `+∞`.
pub fn reconstruction_error<F: DelayField + ?Sized>(
    field: &F,
    observations: &TimeSeries,
    history: &HistorySpec,
    t_start: f64,
    sim: &SimConfig,
) -> Result<f64> {
    let m = mismatch(field, observations, history, t_start, sim)?;
    if m.norm == 0.0 {
        return Err(Error::ZeroNormalization);
    }
    Ok(m.normalized())
}

/// Unnormalized pieces of the reconstruction error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mismatch {
    /// `Σ‖x(t_n) − χ_n‖²` over the scored rows; infinite after divergence.
    pub squared_error: f64,
    /// `Σ‖χ_n‖²` over the same rows.
    pub norm: f64,
}

impl Mismatch {
    pub fn normalized(&self) -> f64 {
        let e = self.squared_error / self.norm;
        if e.is_finite() {
            e
        } else {
            f64::INFINITY
        }
    }
}

/// Simulates `field` from `t_start` and compares it with the observations at
/// or after `t_start`.
pub fn mismatch<F: DelayField + ?Sized>(
    field: &F,
    observations: &TimeSeries,
    history: &HistorySpec,
    t_start: f64,
    sim: &SimConfig,
) -> Result<Mismatch> {
    if field.dim() != observations.dim() {
        return Err(Error::DimensionMismatch(format!(
            "model has {} components, observations {}",
            field.dim(),
            observations.dim()
        )));
    }
    let span = observations.end() - observations.start();
    let tol = 1e-9 * span.max(f64::MIN_POSITIVE);
    let first = observations.times().partition_point(|&t| t < t_start - tol);
    let times = &observations.times()[first..];
    if times.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no observations at or after the scoring start {t_start}"
        )));
    }
    let values = observations.values();
    let norm: f64 = (first..observations.len())
        .map(|n| values.row(n).iter().map(|v| v * v).sum::<f64>())
        .sum();
    let t_end = *times.last().expect("nonempty");
    let simulated = if t_end - t_start > tol {
        let traj = integrate_field(field, history, t_start, t_end, sim)?;
        if traj.diverged() {
            return Ok(Mismatch {
                squared_error: f64::INFINITY,
                norm,
            });
        }
        sample(&traj, times)?
    } else {
        let x0 = history.value_at(t_start)?;
        DMatrix::from_row_slice(1, x0.len(), &x0)
    };
    let mut squared_error = 0.0;
    for (r, n) in (first..observations.len()).enumerate() {
        for k in 0..observations.dim() {
            let d = simulated[(r, k)] - values[(n, k)];
            squared_error += d * d;
        }
    }
    if !squared_error.is_finite() {
        squared_error = f64::INFINITY;
    }
    Ok(Mismatch {
        squared_error,
        norm,
    })
}

/// Settings for the single-delay polynomial library fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SindyDelayConfig {
    pub library: LibrarySpec,
    /// Derivative estimation and off-grid state lookups.
    pub smoother: SmootherSpec,
    pub greedy: GreedyConfig,
    pub sim: SimConfig,
}

/// A library model with one delay shared by all components, fitted to a
/// single series.
///
/// Derivatives are taken from the series when present and estimated with the
/// smoother otherwise, once, before any delay is tried. Scoring at delay `τ`
/// starts at `t_first + τ`; the history on `[t_first, t_first + τ]` is the
/// cubic Hermite interpolant through the smoothed values and slopes.
#[derive(Debug, Clone)]
pub struct SindyDelayProblem {
    raw: TimeSeries,
    observations: TimeSeries,
    history: HistorySpec,
    config: SindyDelayConfig,
}

/// History interpolating the smoothed observations: cubic Hermite through the
/// local polynomial values and slopes at every sample.
pub fn smoothed_history(observations: &TimeSeries, smoother: &SmootherSpec) -> Result<HistorySpec> {
    let spec = smoother.smoothing_values(true);
    let series = estimate_derivatives(&observations.clone().without_derivs(), &spec)?;
    Ok(HistorySpec::Sampled {
        series,
        smoother: spec,
    })
}

impl SindyDelayProblem {
    pub fn new(observations: &TimeSeries, config: SindyDelayConfig) -> Result<Self> {
        config.smoother.validate()?;
        if observations.dim() != config.library.dim {
            return Err(Error::DimensionMismatch(format!(
                "library over {} channels, series has {}",
                config.library.dim,
                observations.dim()
            )));
        }
        let raw = observations.clone().without_derivs();
        let history = smoothed_history(&raw, &config.smoother)?;
        let observations = match observations.derivs() {
            Some(_) => observations.clone(),
            None => estimate_derivatives(observations, &config.smoother)?,
        };
        Ok(SindyDelayProblem {
            raw,
            observations,
            history,
            config,
        })
    }

    /// Observations with the derivative estimates used as regression targets.
    pub fn observations(&self) -> &TimeSeries {
        &self.observations
    }

    pub fn history(&self) -> &HistorySpec {
        &self.history
    }

    pub fn config(&self) -> &SindyDelayConfig {
        &self.config
    }

    /// Regression targets and library matrix at `delay`.
    pub fn regression(&self, delay: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let rows = admissible_row_times(&self.observations, delay);
        if rows.is_empty() {
            return Err(Error::InvalidInput(format!(
                "no library rows at delay {delay}"
            )));
        }
        let lookup = StateLookup::new(&self.observations, &self.config.smoother, PreStart::Reject);
        let theta = build_library_matrix(&lookup, &self.config.library, delay, &rows)?;
        let offset = self.observations.len() - rows.len();
        let derivs = self
            .observations
            .derivs()
            .expect("derivatives are always attached");
        let targets = derivs.rows(offset, rows.len()).clone_owned();
        Ok((theta, targets))
    }

    /// Inner sparse fit at `delay`, one trace per component.
    pub fn fit(&self, delay: f64) -> Result<(DelayModel, Vec<FitTrace>)> {
        let (theta, targets) = self.regression(delay)?;
        let n_terms = theta.ncols();
        let dim = targets.ncols();
        let mut coeffs = DMatrix::zeros(n_terms, dim);
        let mut traces = Vec::with_capacity(dim);
        for k in 0..dim {
            let target: DVector<f64> = targets.column(k).clone_owned();
            let fit = greedy_eliminate(&theta, &target, &self.config.greedy)?;
            coeffs.set_column(k, &fit.coeffs);
            traces.push(fit.trace);
        }
        let model = DelayModel::shared_delay(self.config.library, coeffs, delay)?;
        Ok((model, traces))
    }

    /// Reconstruction error of `model` when scoring starts `delay` after the
    /// first observation.
    pub fn score(&self, model: &DelayModel, delay: f64) -> Result<f64> {
        let t_start = self.raw.start() + delay;
        reconstruction_error(model, &self.raw, &self.history, t_start, &self.config.sim)
    }
}

impl DelayFitProblem for SindyDelayProblem {
    type Model = DelayModel;

    fn n_axes(&self) -> usize {
        1
    }

    fn evaluate(&self, delays: &[f64]) -> Result<Evaluation<DelayModel>> {
        let delay = delays[0];
        let (model, traces) = self.fit(delay)?;
        let error = self.score(&model, delay)?;
        Ok(Evaluation {
            model,
            traces,
            error,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dde_sim::Side;
    use crate::library::CrossPolicy;
    use proptest::prelude::*;

    /// Fake problem whose error is a fixed function of the delays.
    struct Bowl<F: Fn(&[f64]) -> Result<f64> + Sync>(usize, F);

    impl<F: Fn(&[f64]) -> Result<f64> + Sync> DelayFitProblem for Bowl<F> {
        type Model = Vec<f64>;

        fn n_axes(&self) -> usize {
            self.0
        }

        fn evaluate(&self, delays: &[f64]) -> Result<Evaluation<Vec<f64>>> {
            Ok(Evaluation {
                model: delays.to_vec(),
                traces: Vec::new(),
                error: (self.1)(delays)?,
            })
        }
    }

    #[test]
    fn grid_validation() {
        assert!(DelayGrid::new(vec![]).is_err());
        assert!(DelayGrid::new(vec![vec![]]).is_err());
        assert!(DelayGrid::new(vec![vec![1.0, 1.0]]).is_err());
        assert!(DelayGrid::new(vec![vec![-1.0, 1.0]]).is_err());
        assert!(DelayGrid::new(vec![vec![0.0, 2.0], vec![5.0]]).is_ok());
    }

    #[test]
    fn multiples_cover_the_interval() {
        let g = DelayGrid::multiples(0.025, 8.5).unwrap();
        assert_eq!(g.len(), 340);
        assert_eq!(g.axes()[0][279], 7.0);
        assert_eq!(*g.axes()[0].last().unwrap(), 8.5);
        let g = DelayGrid::multiples(0.25, 8.5).unwrap();
        assert_eq!(g.len(), 34);
    }

    #[test]
    fn range_is_inclusive() {
        let r = DelayGrid::range(0.0, 5.0, 160.0).unwrap();
        assert_eq!(r.len(), 33);
        assert_eq!(r[6], 30.0);
        assert_eq!(r[14], 70.0);
    }

    #[test]
    fn points_are_lexicographic() {
        let g = DelayGrid::new(vec![vec![1.0, 2.0], vec![10.0, 20.0, 30.0]]).unwrap();
        let p = g.points();
        assert_eq!(p.len(), 6);
        assert_eq!(p[0], vec![1.0, 10.0]);
        assert_eq!(p[2], vec![1.0, 30.0]);
        assert_eq!(p[3], vec![2.0, 10.0]);
    }

    #[test]
    fn union_merges_axes() {
        let a = DelayGrid::new(vec![vec![1.0, 2.0, 3.0]]).unwrap();
        let b = DelayGrid::new(vec![vec![2.0, 2.5]]).unwrap();
        assert_eq!(a.union(&b).unwrap().axes()[0], vec![1.0, 2.0, 2.5, 3.0]);
    }

    #[test]
    fn sweep_finds_minimum_and_breaks_ties_low() {
        let g = DelayGrid::new(vec![vec![1.0, 2.0, 3.0, 4.0]]).unwrap();
        let r = sweep(&Bowl(1, |d: &[f64]| Ok((d[0] - 3.0).powi(2))), &g, true).unwrap();
        assert_eq!(r.best().unwrap().delays, vec![3.0]);
        let r = sweep(&Bowl(1, |d: &[f64]| Ok((d[0] - 2.5).abs())), &g, true).unwrap();
        assert_eq!(r.best().unwrap().delays, vec![2.0]);
    }

    #[test]
    fn failing_points_get_infinite_error() {
        let g = DelayGrid::new(vec![vec![1.0, 2.0, 3.0]]).unwrap();
        let p = Bowl(1, |d: &[f64]| {
            if d[0] == 2.0 {
                Err(Error::InvalidInput("boom".into()))
            } else {
                Ok(d[0])
            }
        });
        let r = sweep(&p, &g, false).unwrap();
        assert!(r.entries()[1].error.is_infinite());
        assert!(r.entries()[1]
            .diagnostic
            .as_deref()
            .unwrap()
            .contains("boom"));
        assert_eq!(r.best_index(), Some(0));
    }

    #[test]
    fn all_failed_has_no_best() {
        let g = DelayGrid::new(vec![vec![1.0]]).unwrap();
        let r = sweep(&Bowl(1, |_: &[f64]| Ok(f64::INFINITY)), &g, true).unwrap();
        assert!(r.best().is_none());
    }

    #[test]
    fn single_point_grid() {
        let g = DelayGrid::new(vec![vec![4.0]]).unwrap();
        let r = sweep(&Bowl(1, |_: &[f64]| Ok(0.5)), &g, true).unwrap();
        assert_eq!(r.entries().len(), 1);
        assert_eq!(r.best().unwrap().delays, vec![4.0]);
        let csv = error_profile(&r).to_csv();
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn axis_mismatch_rejected() {
        let g = DelayGrid::new(vec![vec![1.0], vec![2.0]]).unwrap();
        assert!(sweep(&Bowl(1, |_: &[f64]| Ok(0.0)), &g, true).is_err());
    }

    #[test]
    fn two_axis_surface() {
        let g = DelayGrid::new(vec![vec![0.0, 5.0, 10.0], vec![0.0, 5.0]]).unwrap();
        let r = sweep(
            &Bowl(2, |d: &[f64]| Ok((d[0] - 5.0).abs() + d[1])),
            &g,
            true,
        )
        .unwrap();
        let prof = error_profile(&r);
        let s = prof.surface().unwrap();
        assert_eq!(s.shape(), (3, 2));
        assert_eq!(s[(1, 0)], 0.0);
        assert_eq!(prof.argmin(), r.best_index());
        assert!(prof.to_csv().starts_with("tau_1,tau_2,error\n"));
    }

    #[test]
    fn quadratic_refinement_recovers_vertex() {
        let g = DelayGrid::new(vec![vec![1.0, 2.0, 3.0, 4.0]]).unwrap();
        let r = sweep(&Bowl(1, |d: &[f64]| Ok((d[0] - 2.3).powi(2))), &g, true).unwrap();
        let v = refine_minimum(&r).unwrap();
        assert!((v - 2.3).abs() < 1e-12);
    }

    struct Decay;

    impl DelayField for Decay {
        fn dim(&self) -> usize {
            1
        }
        fn lags(&self) -> Vec<f64> {
            Vec::new()
        }
        fn eval(&self, _t: f64, _s: Side, x: &[f64], _l: &[Vec<f64>], out: &mut [f64]) {
            out[0] = -x[0];
        }
    }

    fn decay_series(scale: f64) -> TimeSeries {
        let times: Vec<f64> = (0..41).map(|n| n as f64 * 0.05 * scale).collect();
        let values = DMatrix::from_fn(41, 1, |n, _| (-(times[n] / scale)).exp());
        TimeSeries::new(times, values).unwrap()
    }

    #[test]
    fn exact_trajectory_scores_near_zero() {
        let obs = decay_series(1.0);
        let e = reconstruction_error(
            &Decay,
            &obs,
            &HistorySpec::Constant(vec![1.0]),
            0.0,
            &SimConfig::new(0.005),
        )
        .unwrap();
        assert!(e < 1e-18, "{e}");
    }

    #[test]
    fn scoring_subset_and_normalization() {
        let obs = decay_series(1.0);
        let wrong = HistorySpec::Constant(vec![0.0]);
        let e = reconstruction_error(&Decay, &obs, &wrong, 1.0, &SimConfig::new(0.005)).unwrap();
        // Zero start gives a zero trajectory: E = Σ χ² / Σ χ² over the subset.
        assert!((e - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_observations_rejected() {
        let obs = TimeSeries::new(vec![0.0, 1.0], DMatrix::zeros(2, 1)).unwrap();
        let err = reconstruction_error(
            &Decay,
            &obs,
            &HistorySpec::Zero(1),
            0.0,
            &SimConfig::new(0.1),
        )
        .unwrap_err();
        assert!(matches!(err, Error::ZeroNormalization));
    }

    #[test]
    fn diverged_simulation_is_infinite() {
        let spec = LibrarySpec::new(1, 3, true, CrossPolicy::ExcludeMixed).unwrap();
        let mut coeffs = DMatrix::zeros(7, 1);
        coeffs[(5, 0)] = 1.0;
        let model = DelayModel::shared_delay(spec, coeffs, 0.5).unwrap();
        let obs = decay_series(1.0);
        let e = reconstruction_error(
            &model,
            &obs,
            &HistorySpec::Constant(vec![3.0]),
            0.0,
            &SimConfig::new(0.01),
        )
        .unwrap();
        assert!(e.is_infinite());
    }

    #[test]
    fn sindy_problem_recovers_linear_delay_model() {
        // x' = -0.5 x(t-1) from a constant history, sampled densely.
        let spec = LibrarySpec::new(1, 3, true, CrossPolicy::ExcludeMixed).unwrap();
        let mut coeffs = DMatrix::zeros(7, 1);
        coeffs[(2, 0)] = -0.5;
        let truth = DelayModel::shared_delay(spec, coeffs, 1.0).unwrap();
        let traj =
            crate::dde_sim::integrate(&truth, &HistorySpec::Constant(vec![1.0]), 0.0, 10.0, 0.01)
                .unwrap();
        let series = traj.to_series().unwrap();
        let config = SindyDelayConfig {
            library: spec,
            smoother: SmootherSpec::new(3, 3).unwrap(),
            greedy: GreedyConfig::default(),
            sim: SimConfig::new(0.01),
        };
        let problem = SindyDelayProblem::new(&series, config).unwrap();
        let grid = DelayGrid::new(vec![vec![0.5, 1.0, 1.5]]).unwrap();
        let r = sweep(&problem, &grid, true).unwrap();
        let best = r.best().unwrap();
        assert_eq!(best.delays, vec![1.0]);
        let model = &best.fit.as_ref().unwrap().model;
        assert_eq!(model.active_terms(0), vec![2]);
        assert!((model.coeffs()[(2, 0)] + 0.5).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn sequential_and_parallel_agree(vals in prop::collection::vec(0.0f64..10.0, 1..30)) {
            let axis: Vec<f64> = (0..vals.len()).map(|i| i as f64).collect();
            let g = DelayGrid::new(vec![axis]).unwrap();
            let p = Bowl(1, |d: &[f64]| Ok(vals[d[0] as usize]));
            let a = sweep(&p, &g, true).unwrap();
            let b = sweep(&p, &g, false).unwrap();
            prop_assert_eq!(&a, &b);
            let best = a.best().unwrap().error;
            prop_assert!(vals.iter().all(|&v| best <= v));
            prop_assert_eq!(error_profile(&a).argmin(), a.best_index());
        }

        #[test]
        fn superset_never_worsens_best(vals in prop::collection::vec(0.0f64..10.0, 2..30), cut in 1usize..29) {
            let cut = cut.min(vals.len() - 1);
            let axis: Vec<f64> = (0..vals.len()).map(|i| i as f64).collect();
            let p = Bowl(1, |d: &[f64]| Ok(vals[d[0] as usize]));
            let small = sweep(&p, &DelayGrid::new(vec![axis[..cut].to_vec()]).unwrap(), true).unwrap();
            let full = sweep(&p, &DelayGrid::new(vec![axis]).unwrap(), true).unwrap();
            prop_assert!(full.best().unwrap().error <= small.best().unwrap().error);
        }

        #[test]
        fn error_invariant_to_time_rescaling(scale in 0.2f64..5.0) {
            // x' = -x/scale on rescaled time is the same trajectory.
            struct Scaled(f64);
            impl DelayField for Scaled {
                fn dim(&self) -> usize { 1 }
                fn lags(&self) -> Vec<f64> { Vec::new() }
                fn eval(&self, _t: f64, _s: Side, x: &[f64], _l: &[Vec<f64>], out: &mut [f64]) {
                    out[0] = -0.9 * x[0] / self.0;
                }
            }
            let base = reconstruction_error(&Scaled(1.0), &decay_series(1.0), &HistorySpec::Constant(vec![1.0]), 0.0, &SimConfig::new(0.005)).unwrap();
            let scaled = reconstruction_error(&Scaled(scale), &decay_series(scale), &HistorySpec::Constant(vec![1.0]), 0.0, &SimConfig::new(0.005 * scale)).unwrap();
            prop_assert!((base - scaled).abs() <= 1e-9 * base);
        }
    }
}
