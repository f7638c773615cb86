//! Local polynomial regression for smoothing and differentiating sampled
//! series, and for evaluating them between samples.
//!
//! Every fit uses a window of `2r + 1` consecutive samples. Interior windows
//! are centred on the evaluation index; near either end the window is shifted
//! inwards so it keeps its full size. Polynomials are fitted in the local
//! coordinate `u = (t − t_eval) / s`, with `s` the largest distance from
//! `t_eval` to a window sample, so the Vandermonde matrix stays well
//! conditioned whatever the absolute time offset.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::lstsq;
use crate::timeseries::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmootherSpec {
    /// Window half-width `r` in samples.
    pub radius: usize,
    /// Degree of the local regression polynomial.
    pub degree: usize,
    /// Replace values by the fitted polynomial value as well as filling in
    /// derivatives.
    #[serde(default)]
    pub smooth_values: bool,
}

impl SmootherSpec {
    pub fn new(radius: usize, degree: usize) -> Result<Self> {
        let spec = SmootherSpec {
            radius,
            degree,
            smooth_values: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn smoothing_values(mut self, on: bool) -> Self {
        self.smooth_values = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.radius < 1 {
            return Err(Error::InvalidSmoother("radius must be at least 1".into()));
        }
        if self.window_len() <= self.degree + 1 {
            return Err(Error::InvalidSmoother(format!(
                "a {}-point window does not overdetermine a degree-{} polynomial",
                self.window_len(),
                self.degree
            )));
        }
        Ok(())
    }

    pub fn window_len(&self) -> usize {
        2 * self.radius + 1
    }

    /// Window half-width in time units for sampling interval `dt`.
    pub fn window_delta(&self, dt: f64) -> f64 {
        self.radius as f64 * dt
    }

    fn check_len(&self, series: &TimeSeries) -> Result<()> {
        self.validate()?;
        if series.len() < self.window_len() {
            return Err(Error::SeriesTooShort {
                len: series.len(),
                window: self.window_len(),
            });
        }
        Ok(())
    }

    /// First index of the window used for sample `n`.
    fn window_start(&self, n: usize, len: usize) -> usize {
        n.saturating_sub(self.radius).min(len - self.window_len())
    }
}

/// Value and first derivative of the local fit at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalEstimate {
    pub value: Vec<f64>,
    pub deriv: Vec<f64>,
}

fn fit_window(series: &TimeSeries, spec: &SmootherSpec, start: usize, t: f64) -> LocalEstimate {
    let len = spec.window_len();
    let times = &series.times()[start..start + len];
    let scale = times
        .iter()
        .map(|s| (s - t).abs())
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let cols = spec.degree + 1;
    let vander = DMatrix::from_fn(len, cols, |i, j| ((times[i] - t) / scale).powi(j as i32));
    let rhs = series.values().rows(start, len).clone_owned();
    let coeffs = lstsq(&vander, &rhs).x;
    let value = coeffs.row(0).iter().copied().collect();
    let deriv = if spec.degree >= 1 {
        coeffs.row(1).iter().map(|c| c / scale).collect()
    } else {
        vec![0.0; series.dim()]
    };
    LocalEstimate { value, deriv }
}

/// Fills in derivative estimates at every sample.
///
/// Values are left as observed unless `spec.smooth_values` is set.
pub fn estimate_derivatives(series: &TimeSeries, spec: &SmootherSpec) -> Result<TimeSeries> {
    spec.check_len(series)?;
    let n = series.len();
    let estimates: Vec<LocalEstimate> = (0..n)
        .into_par_iter()
        .map(|i| fit_window(series, spec, spec.window_start(i, n), series.times()[i]))
        .collect();
    let d = series.dim();
    let derivs = DMatrix::from_fn(n, d, |i, j| estimates[i].deriv[j]);
    let out = if spec.smooth_values {
        let values = DMatrix::from_fn(n, d, |i, j| estimates[i].value[j]);
        let mut s =
            TimeSeries::with_names(series.times().to_vec(), values, series.names().to_vec())?;
        for (k, v) in series.meta() {
            s = s.with_meta(k.clone(), v.clone());
        }
        s
    } else {
        series.clone()
    };
    out.with_derivs(derivs)
}

/// Index of the sample nearest to `t` (lower index on ties).
fn nearest_index(times: &[f64], t: f64) -> usize {
    let i = times.partition_point(|&s| s < t);
    if i == 0 {
        0
    } else if i == times.len() {
        times.len() - 1
    } else if t - times[i - 1] <= times[i] - t {
        i - 1
    } else {
        i
    }
}

/// Fits the local polynomial on the window around the sample nearest to `t`
/// and returns its value and derivative at `t`.
pub fn evaluate_at(series: &TimeSeries, spec: &SmootherSpec, t: f64) -> Result<LocalEstimate> {
    spec.check_len(series)?;
    let (start, end) = (series.start(), series.end());
    let slack = 1e-12 * (end - start);
    if !(t >= start - slack && t <= end + slack) {
        return Err(Error::OutOfRange { t, start, end });
    }
    let n = nearest_index(series.times(), t);
    Ok(fit_window(
        series,
        spec,
        spec.window_start(n, series.len()),
        t,
    ))
}
