//! Fixed-step integration of delay differential equations by the method of
//! steps.
//!
//! Each step is a classical four-stage Runge–Kutta step. Delayed states are
//! read from the solution computed so far through cubic Hermite interpolation
//! of the stored states and derivatives, or from the history function for
//! times at or before the initial time. The step never exceeds the smallest
//! positive delay, so every lookup lands in already-computed territory.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::denoise::{evaluate_at, SmootherSpec};
use crate::error::{Error, Result};
use crate::library::{enumerate_terms, LibrarySpec, TermId};
use crate::timeseries::TimeSeries;

/// Default divergence bound on `|x_k|`.
pub const DEFAULT_DIVERGENCE_BOUND: f64 = 1e6;

/// Step used to generate reference data (self-convergence error well below
/// 1e-8 for the toy model).
pub const GENERATOR_STEP: f64 = 0.0025;

/// Which one-sided limit a piecewise field is evaluated as.
///
/// A Runge–Kutta step over `[t, t + h]` evaluates its first stage as the
/// right limit at `t` and its last stage as the left limit at `t + h`, so a
/// field that switches branches on a grid point is integrated with the
/// branch active inside the step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Right-hand side of a delay differential equation with constant lags.
pub trait DelayField: Sync {
    fn dim(&self) -> usize;

    /// Distinct nonnegative lags the field reads, in any fixed order.
    fn lags(&self) -> Vec<f64>;

    /// Writes `ẋ(t)` into `out`. `lagged[i]` holds `x(t − lags()[i])`; a zero
    /// lag receives the current state.
    fn eval(&self, t: f64, side: Side, x: &[f64], lagged: &[Vec<f64>], out: &mut [f64]);

    /// True when the field switches branches in time, so left and right
    /// derivatives at grid points can differ.
    fn piecewise(&self) -> bool {
        false
    }
}

/// A sparse library model `ẋ_k = Σ_j Ξ_jk θ_j(x(t), x(t − τ_k))`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayModel {
    spec: LibrarySpec,
    terms: Vec<TermId>,
    coeffs: DMatrix<f64>,
    delays: Vec<f64>,
    meta: BTreeMap<String, String>,
    active: Vec<Vec<(usize, f64)>>,
    lag_slot: Vec<usize>,
    lags: Vec<f64>,
}

impl DelayModel {
    /// `coeffs` is `N_R × d`: column `k` holds the coefficients of component
    /// `k`. `delays[k]` is the lag read by component `k`'s delayed channels.
    pub fn new(spec: LibrarySpec, coeffs: DMatrix<f64>, delays: Vec<f64>) -> Result<Self> {
        let terms = enumerate_terms(&spec);
        if coeffs.nrows() != terms.len() || coeffs.ncols() != spec.dim {
            return Err(Error::InvalidModel(format!(
                "coefficient matrix is {}x{}, library needs {}x{}",
                coeffs.nrows(),
                coeffs.ncols(),
                terms.len(),
                spec.dim
            )));
        }
        if delays.len() != spec.dim {
            return Err(Error::InvalidModel(format!(
                "{} delays for {} components",
                delays.len(),
                spec.dim
            )));
        }
        if delays.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::InvalidModel("delays must be finite and >= 0".into()));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidModel("non-finite coefficient".into()));
        }
        let active = (0..spec.dim)
            .map(|k| {
                (0..terms.len())
                    .filter(|&j| coeffs[(j, k)] != 0.0)
                    .map(|j| (j, coeffs[(j, k)]))
                    .collect()
            })
            .collect();
        let mut lags: Vec<f64> = Vec::new();
        let lag_slot = delays
            .iter()
            .map(|&d| match lags.iter().position(|&l| l == d) {
                Some(i) => i,
                None => {
                    lags.push(d);
                    lags.len() - 1
                }
            })
            .collect();
        Ok(DelayModel {
            spec,
            terms,
            coeffs,
            delays,
            meta: BTreeMap::new(),
            active,
            lag_slot,
            lags,
        })
    }

    /// Model with one delay shared by every component.
    pub fn shared_delay(spec: LibrarySpec, coeffs: DMatrix<f64>, delay: f64) -> Result<Self> {
        let d = spec.dim;
        Self::new(spec, coeffs, vec![delay; d])
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    pub fn spec(&self) -> &LibrarySpec {
        &self.spec
    }

    pub fn terms(&self) -> &[TermId] {
        &self.terms
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    pub fn meta(&self) -> &BTreeMap<String, String> {
        &self.meta
    }

    pub fn max_delay(&self) -> f64 {
        self.delays.iter().copied().fold(0.0, f64::max)
    }

    /// Indices of nonzero coefficients for component `k`.
    pub fn active_terms(&self, k: usize) -> Vec<usize> {
        self.active[k].iter().map(|&(j, _)| j).collect()
    }

    /// Evaluates the field on explicit current and delayed states.
    pub fn field(&self, current: &[f64], delayed: &[f64]) -> Vec<f64> {
        (0..self.spec.dim)
            .map(|k| {
                self.active[k]
                    .iter()
                    .map(|&(j, c)| c * self.terms[j].eval(current, delayed))
                    .sum()
            })
            .collect()
    }
}

impl DelayField for DelayModel {
    fn dim(&self) -> usize {
        self.spec.dim
    }

    fn lags(&self) -> Vec<f64> {
        self.lags.clone()
    }

    fn eval(&self, _t: f64, _side: Side, x: &[f64], lagged: &[Vec<f64>], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let delayed = &lagged[self.lag_slot[k]];
            *o = self.active[k]
                .iter()
                .map(|&(j, c)| c * self.terms[j].eval(x, delayed))
                .sum();
        }
    }
}

/// State before the initial time.
#[derive(Debug, Clone, PartialEq)]
pub enum HistorySpec {
    Constant(Vec<f64>),
    Zero(usize),
    /// Samples covering the history interval. With derivatives present the
    /// samples are joined by cubic Hermite interpolation; otherwise the local
    /// polynomial smoother supplies values.
    Sampled {
        series: TimeSeries,
        smoother: SmootherSpec,
    },
}

impl HistorySpec {
    pub fn dim(&self) -> usize {
        match self {
            HistorySpec::Constant(c) => c.len(),
            HistorySpec::Zero(d) => *d,
            HistorySpec::Sampled { series, .. } => series.dim(),
        }
    }

    pub fn value_at(&self, t: f64) -> Result<Vec<f64>> {
        match self {
            HistorySpec::Constant(c) => Ok(c.clone()),
            HistorySpec::Zero(d) => Ok(vec![0.0; *d]),
            HistorySpec::Sampled { series, smoother } => match series.derivs() {
                Some(derivs) => hermite_series(series, derivs, t),
                None => {
                    let tol = 1e-9 * (series.end() - series.start()) / (series.len() - 1) as f64;
                    if !smoother.smooth_values {
                        if let Some(i) = series.index_of_time(t, tol) {
                            return Ok(series.row(i));
                        }
                    }
                    let t = if (t < series.start() && t >= series.start() - tol)
                        || (t > series.end() && t <= series.end() + tol)
                    {
                        t.clamp(series.start(), series.end())
                    } else {
                        t
                    };
                    Ok(evaluate_at(series, smoother, t)?.value)
                }
            },
        }
    }

    fn check_covers(&self, from: f64, to: f64) -> Result<()> {
        if let HistorySpec::Sampled { series, .. } = self {
            let tol = 1e-9 * (series.end() - series.start()).abs().max(1.0);
            if series.start() > from + tol || series.end() < to - tol {
                return Err(Error::InvalidHistory(format!(
                    "samples cover [{}, {}], need [{from}, {to}]",
                    series.start(),
                    series.end()
                )));
            }
        }
        Ok(())
    }
}

fn hermite(h: f64, u: f64, y0: f64, d0: f64, y1: f64, d1: f64) -> f64 {
    let u2 = u * u;
    let u3 = u2 * u;
    let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
    let h10 = u3 - 2.0 * u2 + u;
    let h01 = -2.0 * u3 + 3.0 * u2;
    let h11 = u3 - u2;
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}

fn hermite_series(series: &TimeSeries, derivs: &DMatrix<f64>, t: f64) -> Result<Vec<f64>> {
    let times = series.times();
    let tol = 1e-9 * (series.end() - series.start());
    if t < series.start() - tol || t > series.end() + tol {
        return Err(Error::OutOfRange {
            t,
            start: series.start(),
            end: series.end(),
        });
    }
    let i = times.partition_point(|&s| s <= t).clamp(1, times.len() - 1) - 1;
    let h = times[i + 1] - times[i];
    let u = ((t - times[i]) / h).clamp(0.0, 1.0);
    let v = series.values();
    Ok((0..series.dim())
        .map(|k| {
            hermite(
                h,
                u,
                v[(i, k)],
                derivs[(i, k)],
                v[(i + 1, k)],
                derivs[(i + 1, k)],
            )
        })
        .collect())
}

/// Dense solution on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    t0: f64,
    h: f64,
    dim: usize,
    states: Vec<f64>,
    derivs: Vec<f64>,
    /// Left-limit derivatives, kept only for piecewise fields.
    left_derivs: Option<Vec<f64>>,
    diverged: bool,
}

impl Trajectory {
    pub fn step(&self) -> f64 {
        self.h
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Integration stopped early on a non-finite or out-of-bound state.
    pub fn diverged(&self) -> bool {
        self.diverged
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.h
    }

    pub fn start(&self) -> f64 {
        self.t0
    }

    pub fn end(&self) -> f64 {
        self.time(self.len() - 1)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn deriv(&self, i: usize) -> &[f64] {
        &self.derivs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn states(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.dim, &self.states)
    }

    pub fn derivs(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.dim, &self.derivs)
    }

    /// Index and offset fraction of `t` on the grid, given the last index
    /// available.
    fn locate(&self, t: f64, last: usize) -> (usize, f64) {
        let x = (t - self.t0) / self.h;
        let i = x.floor();
        if i < 0.0 {
            return (0, 0.0);
        }
        let i = i as usize;
        if i >= last {
            return (last, 0.0);
        }
        let u = (x - i as f64).clamp(0.0, 1.0);
        if u < 1e-12 {
            (i, 0.0)
        } else if u > 1.0 - 1e-12 {
            (i + 1, 0.0)
        } else {
            (i, u)
        }
    }

    fn interpolate(&self, t: f64, last: usize, out: &mut [f64]) {
        let (i, u) = self.locate(t, last);
        if u == 0.0 {
            out.copy_from_slice(self.state(i));
            return;
        }
        let d1 = match &self.left_derivs {
            Some(left) => &left[(i + 1) * self.dim..(i + 2) * self.dim],
            None => self.deriv(i + 1),
        };
        let (y0, d0, y1) = (self.state(i), self.deriv(i), self.state(i + 1));
        for k in 0..self.dim {
            out[k] = hermite(self.h, u, y0[k], d0[k], y1[k], d1[k]);
        }
    }

    /// Converts to a series (states, with stored derivatives).
    pub fn to_series(&self) -> Result<TimeSeries> {
        TimeSeries::new(self.times(), self.states())?.with_derivs(self.derivs())
    }
}

/// Step-size and divergence settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub h: f64,
    pub divergence_bound: f64,
}

impl SimConfig {
    pub fn new(h: f64) -> Self {
        SimConfig {
            h,
            divergence_bound: DEFAULT_DIVERGENCE_BOUND,
        }
    }
}

/// Integrates `field` from `t0` to `t1`.
///
/// The step actually used is `(t1 − t0) / ceil((t1 − t0) / h)`, the largest
/// uniform step not exceeding `h` that lands on `t1`.
pub fn integrate_field<F: DelayField + ?Sized>(
    field: &F,
    history: &HistorySpec,
    t0: f64,
    t1: f64,
    config: &SimConfig,
) -> Result<Trajectory> {
    let dim = field.dim();
    if history.dim() != dim {
        return Err(Error::DimensionMismatch(format!(
            "history has dimension {}, model {}",
            history.dim(),
            dim
        )));
    }
    if t1.partial_cmp(&t0) != Some(std::cmp::Ordering::Greater)
        || !config.h.is_finite()
        || config.h <= 0.0
    {
        return Err(Error::InvalidInput(format!(
            "need t1 > t0 and h > 0 (t0={t0}, t1={t1}, h={})",
            config.h
        )));
    }
    let lags = field.lags();
    let min_pos = lags
        .iter()
        .copied()
        .filter(|&l| l > 0.0)
        .fold(f64::INFINITY, f64::min);
    let span = t1 - t0;
    let n_steps = ((span / config.h) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let h = span / n_steps as f64;
    if min_pos.is_finite() && h > min_pos * (1.0 + 1e-12) {
        return Err(Error::StepTooLarge {
            h: config.h,
            min_delay: min_pos,
        });
    }
    let max_lag = lags.iter().copied().fold(0.0, f64::max);
    history.check_covers(t0 - max_lag, t0)?;

    let mut traj = Trajectory {
        t0,
        h,
        dim,
        states: Vec::with_capacity((n_steps + 1) * dim),
        derivs: Vec::with_capacity((n_steps + 1) * dim),
        left_derivs: field
            .piecewise()
            .then(|| Vec::with_capacity((n_steps + 1) * dim)),
        diverged: false,
    };
    if let Some(left) = &mut traj.left_derivs {
        left.extend(std::iter::repeat_n(f64::NAN, dim));
    }
    traj.states.extend(history.value_at(t0)?);

    let mut lagged = vec![vec![0.0; dim]; lags.len()];
    let lookup = |traj: &Trajectory,
                  last: usize,
                  t: f64,
                  x: &[f64],
                  lagged: &mut [Vec<f64>]|
     -> Result<()> {
        for (slot, &lag) in lagged.iter_mut().zip(&lags) {
            if lag == 0.0 {
                slot.copy_from_slice(x);
                continue;
            }
            let s = t - lag;
            if s <= t0 + 1e-12 * h {
                slot.copy_from_slice(&history.value_at(s.min(t0))?);
            } else {
                traj.interpolate(s, last, slot);
            }
        }
        Ok(())
    };

    let bound = config.divergence_bound;
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut stage = vec![0.0; dim];
    for n in 0..n_steps {
        let t = traj.time(n);
        let x: Vec<f64> = traj.state(n).to_vec();
        lookup(&traj, n, t, &x, &mut lagged)?;
        field.eval(t, Side::Right, &x, &lagged, &mut k1);
        traj.derivs.extend_from_slice(&k1);
        if k1.iter().any(|v| !v.is_finite()) {
            traj.diverged = true;
            return Ok(traj);
        }

        for j in 0..dim {
            stage[j] = x[j] + 0.5 * h * k1[j];
        }
        lookup(&traj, n, t + 0.5 * h, &stage, &mut lagged)?;
        field.eval(t + 0.5 * h, Side::Right, &stage, &lagged, &mut k2);

        for j in 0..dim {
            stage[j] = x[j] + 0.5 * h * k2[j];
        }
        lookup(&traj, n, t + 0.5 * h, &stage, &mut lagged)?;
        field.eval(t + 0.5 * h, Side::Right, &stage, &lagged, &mut k3);

        for j in 0..dim {
            stage[j] = x[j] + h * k3[j];
        }
        lookup(&traj, n, t + h, &stage, &mut lagged)?;
        field.eval(t + h, Side::Left, &stage, &lagged, &mut k4);

        let next: Vec<f64> = (0..dim)
            .map(|j| x[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]))
            .collect();
        let blown = next.iter().any(|v| !v.is_finite() || v.abs() > bound);
        traj.states.extend(next);
        if blown {
            traj.derivs.extend(std::iter::repeat_n(f64::NAN, dim));
            traj.diverged = true;
            return Ok(traj);
        }
        if traj.left_derivs.is_some() {
            let t_next = traj.time(n + 1);
            let x_next = traj.state(n + 1).to_vec();
            lookup(&traj, n + 1, t_next, &x_next, &mut lagged)?;
            let mut left = vec![0.0; dim];
            field.eval(t_next, Side::Left, &x_next, &lagged, &mut left);
            if let Some(store) = &mut traj.left_derivs {
                store.extend(left);
            }
        }
    }
    let last = n_steps;
    let x = traj.state(last).to_vec();
    lookup(&traj, last, t1, &x, &mut lagged)?;
    let mut d = vec![0.0; dim];
    field.eval(traj.time(last), Side::Right, &x, &lagged, &mut d);
    traj.derivs.extend(d);
    Ok(traj)
}

/// Integrates a library model.
pub fn integrate(
    model: &DelayModel,
    history: &HistorySpec,
    t0: f64,
    t1: f64,
    h: f64,
) -> Result<Trajectory> {
    integrate_field(model, history, t0, t1, &SimConfig::new(h))
}

/// Samples the dense solution at arbitrary times inside its span.
pub fn sample(traj: &Trajectory, times: &[f64]) -> Result<DMatrix<f64>> {
    let tol = 1e-9 * traj.h;
    let last = traj.len() - 1;
    let mut out = DMatrix::zeros(times.len(), traj.dim);
    let mut buf = vec![0.0; traj.dim];
    for (r, &t) in times.iter().enumerate() {
        if t < traj.start() - tol || t > traj.end() + tol {
            return Err(Error::OutOfRange {
                t,
                start: traj.start(),
                end: traj.end(),
            });
        }
        traj.interpolate(t, last, &mut buf);
        for (k, v) in buf.iter().enumerate() {
            out[(r, k)] = *v;
        }
    }
    Ok(out)
}

/// Finds a history segment on a periodic attractor of a scalar model.
///
/// Integrates from a constant history equal to `anchor` for `burn_in` time
/// units, takes the last upward crossing of `anchor` in the second half of
/// the run as the new time origin, and returns the solution on `[−τ, 0]`
/// sampled densely with exact derivatives.
pub fn find_periodic_history(model: &DelayModel, burn_in: f64, anchor: f64) -> Result<HistorySpec> {
    if model.spec().dim != 1 {
        return Err(Error::InvalidModel(
            "periodic history needs a scalar model".into(),
        ));
    }
    let tau = model.max_delay();
    let slots = (tau / GENERATOR_STEP).ceil().max(1.0);
    let h = if tau > 0.0 {
        tau / slots
    } else {
        GENERATOR_STEP
    };
    let traj = integrate(model, &HistorySpec::Constant(vec![anchor]), 0.0, burn_in, h)?;
    if traj.diverged() {
        return Err(Error::InvalidModel("burn-in integration diverged".into()));
    }
    let window_start = (burn_in / 2.0).max(tau);
    let first = ((window_start / traj.step()).ceil() as usize).min(traj.len() - 1);
    let x = |i: usize| traj.state(i)[0];
    let crossing = (first..traj.len() - 1)
        .rev()
        .find(|&i| x(i) < anchor && x(i + 1) >= anchor);
    let Some(i) = crossing else {
        if (first..traj.len()).all(|i| x(i) == anchor) {
            return Ok(HistorySpec::Constant(vec![anchor]));
        }
        return Err(Error::NoCrossing { anchor });
    };
    let (mut lo, mut hi) = (traj.time(i), traj.time(i + 1));
    let last = traj.len() - 1;
    let mut buf = [0.0];
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        traj.interpolate(mid, last, &mut buf);
        if buf[0] < anchor {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t_cross = hi;
    let m = slots as usize;
    let span = if tau > 0.0 { tau } else { h };
    let rel: Vec<f64> = (0..=m)
        .map(|k| -span + span * k as f64 / m as f64)
        .collect();
    let abs: Vec<f64> = rel.iter().map(|r| t_cross + r).collect();
    let values = sample(&traj, &abs)?;
    let delayed_times: Vec<f64> = abs.iter().map(|t| t - tau).collect();
    let delayed = sample(&traj, &delayed_times)?;
    let derivs = DMatrix::from_fn(abs.len(), 1, |r, _| {
        model.field(&[values[(r, 0)]], &[delayed[(r, 0)]])[0]
    });
    let mut rel = rel;
    *rel.last_mut().expect("nonempty") = 0.0;
    let series = TimeSeries::new(rel, values)?.with_derivs(derivs)?;
    Ok(HistorySpec::Sampled {
        series,
        smoother: SmootherSpec::new(2, 3)?,
    })
}

/// Trajectory as CSV `t,x1,...,xd`.
pub fn trajectory_csv(traj: &Trajectory, names: &[String]) -> String {
    use crate::timeseries::fmt_f64;
    let mut out = String::from("t");
    for k in 0..traj.dim() {
        out.push(',');
        out.push_str(names.get(k).map_or(&format!("x{}", k + 1), |s| s));
    }
    out.push('\n');
    for i in 0..traj.len() {
        out.push_str(&fmt_f64(traj.time(i)));
        for v in traj.state(i) {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::CrossPolicy;

    fn scalar_model(c1: f64, c_tau: f64, c3: f64, tau: f64) -> DelayModel {
        let spec = LibrarySpec::new(1, 3, true, CrossPolicy::ExcludeMixed).unwrap();
        let mut coeffs = DMatrix::zeros(7, 1);
        coeffs[(1, 0)] = c1;
        coeffs[(2, 0)] = c_tau;
        coeffs[(5, 0)] = c3;
        DelayModel::shared_delay(spec, coeffs, tau).unwrap()
    }

    #[test]
    fn zero_field_keeps_constant() {
        let m = scalar_model(0.0, 0.0, 0.0, 1.0);
        let traj = integrate(&m, &HistorySpec::Constant(vec![2.5]), 0.0, 5.0, 0.1).unwrap();
        assert!((0..traj.len()).all(|i| traj.state(i)[0] == 2.5));
    }

    #[test]
    fn method_of_steps_closed_form() {
        let m = scalar_model(0.0, -1.0, 0.0, 1.0);
        let traj = integrate(&m, &HistorySpec::Constant(vec![1.0]), 0.0, 2.0, 1e-3).unwrap();
        let at = sample(&traj, &[0.5, 1.0, 1.5, 2.0]).unwrap();
        assert!((at[0] - 0.5).abs() < 1e-8);
        assert!(at[1].abs() < 1e-8);
        let p2 = |t: f64| t * t / 2.0 - 2.0 * t + 1.5;
        assert!((at[2] - p2(1.5)).abs() < 1e-8);
        assert!((at[3] + 0.5).abs() < 1e-8);
    }

    #[test]
    fn step_larger_than_delay_rejected() {
        let m = scalar_model(0.0, -1.0, 0.0, 0.05);
        let err = integrate(&m, &HistorySpec::Constant(vec![1.0]), 0.0, 1.0, 0.1).unwrap_err();
        assert!(matches!(err, Error::StepTooLarge { .. }));
    }

    #[test]
    fn grid_samples_are_stored_states() {
        let m = scalar_model(1.0, -0.75, -1.0, 7.0);
        let traj = integrate(&m, &HistorySpec::Constant(vec![0.8]), 0.0, 10.0, 0.01).unwrap();
        let times = traj.times();
        let got = sample(&traj, &times).unwrap();
        for i in 0..traj.len() {
            assert_eq!(got[i], traj.state(i)[0]);
        }
        assert!(sample(&traj, &[10.5]).is_err());
    }

    #[test]
    fn linear_trajectory_midpoints_exact() {
        // ẋ = 1 (constant term only).
        let spec = LibrarySpec::new(1, 1, true, CrossPolicy::ExcludeMixed).unwrap();
        let mut coeffs = DMatrix::zeros(3, 1);
        coeffs[(0, 0)] = 1.0;
        let m = DelayModel::shared_delay(spec, coeffs, 0.5).unwrap();
        let traj = integrate(&m, &HistorySpec::Zero(1), 0.0, 3.0, 0.1).unwrap();
        let mids: Vec<f64> = (0..29).map(|i| 0.05 + 0.1 * i as f64).collect();
        let got = sample(&traj, &mids).unwrap();
        for (g, t) in got.iter().zip(&mids) {
            assert!((g - t).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_delay_matches_plain_rk4_bitwise() {
        let m = scalar_model(1.0, -0.75, -1.0, 0.0);
        let h = 0.01;
        let traj = integrate(&m, &HistorySpec::Constant(vec![0.3]), 0.0, 2.0, h).unwrap();
        let f = |x: f64| m.field(&[x], &[x])[0];
        let mut x = 0.3;
        for i in 0..traj.len() - 1 {
            let k1 = f(x);
            let k2 = f(x + 0.5 * h * k1);
            let k3 = f(x + 0.5 * h * k2);
            let k4 = f(x + h * k3);
            x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            assert_eq!(traj.state(i + 1)[0].to_bits(), x.to_bits(), "step {i}");
        }
    }

    #[test]
    fn divergence_is_flagged() {
        // ẋ = x³ blows up in finite time.
        let m = scalar_model(0.0, 0.0, 1.0, 1.0);
        let traj = integrate(&m, &HistorySpec::Constant(vec![1.0]), 0.0, 5.0, 0.01).unwrap();
        assert!(traj.diverged());
        assert!(traj.end() < 5.0);
    }

    #[test]
    fn sampled_history_must_cover_span() {
        let series = TimeSeries::new(vec![-0.5, 0.0], DMatrix::from_element(2, 1, 1.0)).unwrap();
        let hist = HistorySpec::Sampled {
            series,
            smoother: SmootherSpec::new(1, 1).unwrap(),
        };
        let m = scalar_model(0.0, -1.0, 0.0, 1.0);
        assert!(matches!(
            integrate(&m, &hist, 0.0, 1.0, 0.1),
            Err(Error::InvalidHistory(_))
        ));
    }

    #[test]
    fn constant_model_history_is_constant() {
        let m = scalar_model(0.0, 0.0, 0.0, 1.0);
        let h = find_periodic_history(&m, 20.0, 0.7).unwrap();
        assert_eq!(h, HistorySpec::Constant(vec![0.7]));
    }

    #[test]
    fn model_validation() {
        let spec = LibrarySpec::new(1, 3, true, CrossPolicy::ExcludeMixed).unwrap();
        assert!(DelayModel::shared_delay(spec, DMatrix::zeros(6, 1), 1.0).is_err());
        assert!(DelayModel::shared_delay(spec, DMatrix::zeros(7, 1), -1.0).is_err());
        assert!(DelayModel::new(spec, DMatrix::zeros(7, 1), vec![1.0, 2.0]).is_err());
    }
}
