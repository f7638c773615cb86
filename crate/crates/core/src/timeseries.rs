//! Observation series: sampling times, state values, optional derivative
//! estimates, and CSV ingestion.
//!
//! CSV layout is a header row `t,<name1>,...,<named>` followed by numeric
//! rows. Lines beginning with `#` are ignored. Derivatives, when present,
//! follow the values as columns `<name>_dot`, one per value column. Values
//! are written with 17 significant digits so every `f64` survives a
//! write/read cycle unchanged.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when checking that a series is uniformly sampled.
pub const UNIFORM_RTOL: f64 = 1e-9;

/// Timestamped `d`-dimensional observations.
///
/// Row `n` of `values` is the observation at `times[n]`. When present,
/// `derivs` has the same shape as `values` and holds estimates of the time
/// derivative at each sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    times: Vec<f64>,
    values: DMatrix<f64>,
    derivs: Option<DMatrix<f64>>,
    names: Vec<String>,
    meta: BTreeMap<String, String>,
}

impl TimeSeries {
    /// Builds a series with default channel names `x1..xd`.
    pub fn new(times: Vec<f64>, values: DMatrix<f64>) -> Result<Self> {
        let names = (1..=values.ncols()).map(|k| format!("x{k}")).collect();
        Self::with_names(times, values, names)
    }

    pub fn with_names(times: Vec<f64>, values: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidSeries(format!(
                "need at least 2 samples, got {}",
                times.len()
            )));
        }
        if values.nrows() != times.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} times but {} value rows",
                times.len(),
                values.nrows()
            )));
        }
        if values.ncols() == 0 {
            return Err(Error::InvalidSeries("no value columns".into()));
        }
        if names.len() != values.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} channel names for {} columns",
                names.len(),
                values.ncols()
            )));
        }
        if let Some(i) = times.iter().position(|t| !t.is_finite()) {
            return Err(Error::InvalidSeries(format!("non-finite time at row {i}")));
        }
        if let Some(i) = (1..times.len()).find(|&i| times[i] <= times[i - 1]) {
            return Err(Error::NonIncreasingTimes { row: i });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries("non-finite value".into()));
        }
        Ok(TimeSeries {
            times,
            values,
            derivs: None,
            names,
            meta: BTreeMap::new(),
        })
    }

    /// Builds a series from per-row state vectors.
    pub fn from_rows(times: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        let values = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        Self::new(times, values)
    }

    pub fn with_derivs(mut self, derivs: DMatrix<f64>) -> Result<Self> {
        if derivs.shape() != self.values.shape() {
            return Err(Error::DimensionMismatch(format!(
                "derivative shape {:?} differs from value shape {:?}",
                derivs.shape(),
                self.values.shape()
            )));
        }
        if derivs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries("non-finite derivative".into()));
        }
        self.derivs = Some(derivs);
        Ok(self)
    }

    pub fn without_derivs(mut self) -> Self {
        self.derivs = None;
        self
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn derivs(&self) -> Option<&DMatrix<f64>> {
        self.derivs.as_ref()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn meta(&self) -> &BTreeMap<String, String> {
        &self.meta
    }

    /// Number of samples `N`.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    /// Always false; a valid series holds at least two samples.
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// State dimension `d`.
    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn row(&self, n: usize) -> Vec<f64> {
        self.values.row(n).iter().copied().collect()
    }

    /// Sampling interval `Δt`, verified uniform to relative tolerance
    /// [`UNIFORM_RTOL`].
    pub fn uniform_step(&self) -> Result<f64> {
        let n = self.times.len();
        let dt = (self.end() - self.start()) / (n - 1) as f64;
        for i in 1..n {
            let found = self.times[i] - self.times[i - 1];
            if (found - dt).abs() > UNIFORM_RTOL * dt.abs().max(f64::MIN_POSITIVE) {
                return Err(Error::NonUniformSampling {
                    row: i,
                    expected: dt,
                    found,
                });
            }
        }
        Ok(dt)
    }

    /// Index of the sample whose time equals `t` within `tol`, if any.
    pub fn index_of_time(&self, t: f64, tol: f64) -> Option<usize> {
        let i = self.times.partition_point(|&s| s < t);
        [i.checked_sub(1), Some(i)]
            .into_iter()
            .flatten()
            .filter(|&j| j < self.times.len())
            .find(|&j| (self.times[j] - t).abs() <= tol)
    }

    /// Keeps only the value columns listed in `columns`.
    pub fn select_columns(&self, columns: &[usize]) -> Result<Self> {
        if columns.iter().any(|&c| c >= self.dim()) {
            return Err(Error::DimensionMismatch("column index out of range".into()));
        }
        let values = self.values.select_columns(columns.iter());
        let names = columns.iter().map(|&c| self.names[c].clone()).collect();
        let mut out = Self::with_names(self.times.clone(), values, names)?;
        if let Some(d) = &self.derivs {
            out.derivs = Some(d.select_columns(columns.iter()));
        }
        out.meta = self.meta.clone();
        Ok(out)
    }

    pub fn rename(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.dim() {
            return Err(Error::DimensionMismatch("channel name count".into()));
        }
        self.names = names;
        Ok(self)
    }
}

/// Observation noise `γ·η` with `η` i.i.d. standard normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub gamma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(gamma: f64, seed: u64) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "noise scale {gamma} must be >= 0"
            )));
        }
        Ok(NoiseSpec { gamma, seed })
    }
}

/// Deterministic standard-normal stream.
///
/// ChaCha20 seeded with `seed_from_u64`, 53-bit uniforms, and the polar-free
/// Box-Muller transform, with both outputs of each pair consumed in order.
/// The ChaCha20 stream is fixed by its reference definition, so values do not
/// change across builds.
pub struct GaussianStream {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        GaussianStream {
            rng: ChaCha20Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the logarithm finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }
}

/// Adds seeded Gaussian noise to every value; derivative estimates are dropped.
///
/// Noise is drawn row by row, channel by channel.
pub fn add_noise(series: &TimeSeries, noise: &NoiseSpec) -> TimeSeries {
    let mut out = series.clone().without_derivs();
    if noise.gamma == 0.0 {
        return out;
    }
    let mut stream = GaussianStream::new(noise.seed);
    let (n, d) = out.values.shape();
    for i in 0..n {
        for j in 0..d {
            out.values[(i, j)] += noise.gamma * stream.next_normal();
        }
    }
    out
}

/// Subtracts the first row from every value column and re-bases time to start
/// at zero.
pub fn shift_to_zero(series: &TimeSeries) -> TimeSeries {
    let mut out = series.clone();
    let t0 = out.times[0];
    for t in &mut out.times {
        *t -= t0;
    }
    let first = out.values.row(0).clone_owned();
    for mut row in out.values.row_iter_mut() {
        row -= &first;
    }
    out
}

/// Parses CSV text in the layout described at module level.
pub fn parse_csv(text: &str) -> Result<TimeSeries> {
    let mut header: Option<Vec<String>> = None;
    let mut times = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let row = lineno + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        match &header {
            None => {
                if cells.len() < 2 || cells[0] != "t" {
                    return Err(Error::Csv {
                        row,
                        column: 1,
                        message: format!("expected header `t,x1,...`, found `{line}`"),
                    });
                }
                if let Some(c) = cells.iter().position(|c| c.is_empty()) {
                    return Err(Error::Csv {
                        row,
                        column: c + 1,
                        message: "empty column name".into(),
                    });
                }
                header = Some(cells.iter().map(|s| s.to_string()).collect());
            }
            Some(h) => {
                if cells.len() != h.len() {
                    return Err(Error::Csv {
                        row,
                        column: cells.len().min(h.len()) + 1,
                        message: format!("expected {} cells, found {}", h.len(), cells.len()),
                    });
                }
                let mut parsed = Vec::with_capacity(cells.len());
                for (c, cell) in cells.iter().enumerate() {
                    let v: f64 = cell.parse().map_err(|_| Error::Csv {
                        row,
                        column: c + 1,
                        message: format!("non-numeric cell `{cell}`"),
                    })?;
                    if !v.is_finite() {
                        return Err(Error::Csv {
                            row,
                            column: c + 1,
                            message: format!("non-finite cell `{cell}`"),
                        });
                    }
                    parsed.push(v);
                }
                if let Some(&prev) = times.last() {
                    if parsed[0] <= prev {
                        return Err(Error::NonIncreasingTimes { row });
                    }
                }
                times.push(parsed[0]);
                rows.push(parsed[1..].to_vec());
            }
        }
    }
    let header = header.ok_or(Error::Csv {
        row: 1,
        column: 1,
        message: "missing header".into(),
    })?;
    if times.len() < 2 {
        return Err(Error::InvalidSeries(format!(
            "need at least 2 data rows, found {}",
            times.len()
        )));
    }
    let names = &header[1..];
    let is_dot = |n: &String| n.ends_with(DERIV_SUFFIX);
    let value_cols: Vec<usize> = (0..names.len()).filter(|&j| !is_dot(&names[j])).collect();
    let dot_cols: Vec<usize> = (0..names.len()).filter(|&j| is_dot(&names[j])).collect();
    let values = DMatrix::from_fn(rows.len(), value_cols.len(), |i, j| rows[i][value_cols[j]]);
    let value_names: Vec<String> = value_cols.iter().map(|&j| names[j].clone()).collect();
    let series = TimeSeries::with_names(times, values, value_names.clone())?;
    if dot_cols.is_empty() {
        return Ok(series);
    }
    let mut order = Vec::with_capacity(value_names.len());
    for name in &value_names {
        let want = format!("{name}{DERIV_SUFFIX}");
        let j = dot_cols
            .iter()
            .copied()
            .find(|&j| names[j] == want)
            .ok_or_else(|| Error::Csv {
                row: 1,
                column: 1,
                message: format!("derivative columns present but `{want}` is missing"),
            })?;
        order.push(j);
    }
    if order.len() != dot_cols.len() {
        return Err(Error::Csv {
            row: 1,
            column: 1,
            message: "derivative column without a matching value column".into(),
        });
    }
    let derivs = DMatrix::from_fn(rows.len(), order.len(), |i, j| rows[i][order[j]]);
    series.with_derivs(derivs)
}

/// Suffix marking a derivative column.
pub const DERIV_SUFFIX: &str = "_dot";

pub fn load_csv(path: impl AsRef<Path>) -> Result<TimeSeries> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text)
}

/// Formats a value with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn to_csv_string(series: &TimeSeries) -> String {
    let mut out = String::new();
    out.push('t');
    for name in &series.names {
        out.push(',');
        out.push_str(name);
    }
    if series.derivs.is_some() {
        for name in &series.names {
            let _ = write!(out, ",{name}{DERIV_SUFFIX}");
        }
    }
    out.push('\n');
    for (i, t) in series.times.iter().enumerate() {
        out.push_str(&fmt_f64(*t));
        for v in series.values.row(i).iter() {
            let _ = write!(out, ",{}", fmt_f64(*v));
        }
        if let Some(d) = &series.derivs {
            for v in d.row(i).iter() {
                let _ = write!(out, ",{}", fmt_f64(*v));
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_csv(series: &TimeSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_csv_string(series)).map_err(|e| Error::io(path, e))
}
