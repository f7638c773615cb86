//! Monomial function libraries over current and delayed state channels.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoise::{evaluate_at, SmootherSpec};
use crate::error::{Error, Result};
use crate::timeseries::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrossPolicy {
    /// Every monomial of total degree ≤ M over all 2d channels.
    Full,
    /// Monomials never mix current and delayed channels.
    ExcludeMixed,
}

impl fmt::Display for CrossPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CrossPolicy::Full => f.write_str("full"),
            CrossPolicy::ExcludeMixed => f.write_str("exclude-mixed"),
        }
    }
}

impl FromStr for CrossPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(CrossPolicy::Full),
            "exclude-mixed" => Ok(CrossPolicy::ExcludeMixed),
            other => Err(Error::InvalidInput(format!(
                "unknown cross policy `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LibrarySpec {
    /// State dimension `d`.
    #[serde(rename = "d")]
    pub dim: usize,
    /// Maximum total degree `M`.
    #[serde(rename = "M")]
    pub max_degree: u32,
    /// Whether delayed copies `x(t − τ)` enter the library.
    pub delayed: bool,
    pub cross_policy: CrossPolicy,
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

impl LibrarySpec {
    pub fn new(
        dim: usize,
        max_degree: u32,
        delayed: bool,
        cross_policy: CrossPolicy,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput(
                "library dimension must be positive".into(),
            ));
        }
        Ok(LibrarySpec {
            dim,
            max_degree,
            delayed,
            cross_policy,
        })
    }

    /// Closed-form term count `N_R`.
    pub fn term_count(&self) -> usize {
        let d = self.dim as u64;
        let m = self.max_degree as u64;
        let n = match (self.delayed, self.cross_policy) {
            (false, _) => binomial(d + m, m),
            (true, CrossPolicy::Full) => binomial(2 * d + m, m),
            (true, CrossPolicy::ExcludeMixed) => 2 * binomial(d + m, m) - 1,
        };
        n as usize
    }
}

/// Exponent vector of one monomial: `d` current-channel exponents followed by
/// `d` delayed-channel exponents.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TermId {
    exponents: Vec<u32>,
}

impl TermId {
    pub fn new(exponents: Vec<u32>) -> Result<Self> {
        if exponents.is_empty() || !exponents.len().is_multiple_of(2) {
            return Err(Error::InvalidInput(
                "term exponent vector must have even, nonzero length".into(),
            ));
        }
        Ok(TermId { exponents })
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }

    pub fn dim(&self) -> usize {
        self.exponents.len() / 2
    }

    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }

    pub fn current(&self) -> &[u32] {
        &self.exponents[..self.dim()]
    }

    pub fn delayed(&self) -> &[u32] {
        &self.exponents[self.dim()..]
    }

    pub fn is_constant(&self) -> bool {
        self.degree() == 0
    }

    pub fn uses_delayed(&self) -> bool {
        self.delayed().iter().any(|&e| e > 0)
    }

    /// Evaluates the monomial on the concatenated vector `(x(t), x(t − τ))`.
    pub fn eval(&self, current: &[f64], delayed: &[f64]) -> f64 {
        let d = self.dim();
        let mut acc = 1.0;
        for k in 0..d {
            if self.exponents[k] > 0 {
                acc *= current[k].powi(self.exponents[k] as i32);
            }
            if self.exponents[d + k] > 0 {
                acc *= delayed[k].powi(self.exponents[d + k] as i32);
            }
        }
        acc
    }

    /// Human-readable name such as `x1^2*x2(t-tau)`.
    pub fn label(&self, names: &[String]) -> String {
        if self.is_constant() {
            return "1".into();
        }
        let d = self.dim();
        let mut parts = Vec::new();
        for (k, &e) in self.exponents.iter().enumerate() {
            if e == 0 {
                continue;
            }
            let mut base = names
                .get(k % d)
                .cloned()
                .unwrap_or_else(|| format!("x{}", k % d + 1));
            if k >= d {
                base.push_str("(t-tau)");
            }
            if e > 1 {
                parts.push(format!("{base}^{e}"));
            } else {
                parts.push(base);
            }
        }
        parts.join("*")
    }
}

impl fmt::Display for TermId {
    /// Serialized form `[a,b|c,d]`: current block, then delayed block.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |xs: &[u32]| xs.iter().map(u32::to_string).collect::<Vec<_>>().join(",");
        write!(f, "[{}|{}]", join(self.current()), join(self.delayed()))
    }
}

impl FromStr for TermId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("malformed term `{s}`"));
        let inner = s
            .trim()
            .strip_prefix('[')
            .and_then(|r| r.strip_suffix(']'))
            .ok_or_else(bad)?;
        let (cur, del) = inner.split_once('|').ok_or_else(bad)?;
        let parse = |block: &str| -> Result<Vec<u32>> {
            block
                .split(',')
                .map(|c| c.trim().parse::<u32>().map_err(|_| bad()))
                .collect()
        };
        let (cur, del) = (parse(cur)?, parse(del)?);
        if cur.len() != del.len() {
            return Err(bad());
        }
        TermId::new([cur, del].concat())
    }
}

impl Serialize for TermId {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TermId {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn compositions(slots: usize, max_total: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if prefix.len() == slots {
        out.push(prefix.clone());
        return;
    }
    let used: u32 = prefix.iter().sum();
    for e in 0..=max_total - used {
        prefix.push(e);
        compositions(slots, max_total, prefix, out);
        prefix.pop();
    }
}

/// Lists the library terms in canonical order: ascending total degree, then
/// descending lexicographic exponent vector (so `x` precedes `y`, and `x²`
/// precedes `xy`).
pub fn enumerate_terms(spec: &LibrarySpec) -> Vec<TermId> {
    let d = spec.dim;
    let slots = if spec.delayed { 2 * d } else { d };
    let mut raw = Vec::new();
    compositions(
        slots,
        spec.max_degree,
        &mut Vec::with_capacity(slots),
        &mut raw,
    );
    let mut terms: Vec<TermId> = raw
        .into_iter()
        .map(|mut e| {
            e.resize(2 * d, 0);
            TermId { exponents: e }
        })
        .filter(|t| match spec.cross_policy {
            CrossPolicy::Full => true,
            CrossPolicy::ExcludeMixed => !(t.current().iter().any(|&e| e > 0) && t.uses_delayed()),
        })
        .collect();
    terms.sort_by(|a, b| {
        a.degree()
            .cmp(&b.degree())
            .then_with(|| b.exponents.cmp(&a.exponents))
    });
    terms
}

/// What a delayed lookup returns for times before the first observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PreStart {
    /// Such rows cannot be built.
    Reject,
    /// The state is known to be identically zero before the series starts.
    Zero,
}

/// Reads states out of a series: raw samples on the sampling grid, local
/// polynomial evaluation between samples.
#[derive(Debug, Clone, Copy)]
pub struct StateLookup<'a> {
    series: &'a TimeSeries,
    smoother: &'a SmootherSpec,
    pre_start: PreStart,
    tol: f64,
}

impl<'a> StateLookup<'a> {
    pub fn new(series: &'a TimeSeries, smoother: &'a SmootherSpec, pre_start: PreStart) -> Self {
        let mean_dt = (series.end() - series.start()) / (series.len() - 1) as f64;
        StateLookup {
            series,
            smoother,
            pre_start,
            tol: 1e-9 * mean_dt,
        }
    }

    pub fn series(&self) -> &TimeSeries {
        self.series
    }

    /// Matching tolerance for "lands on a sample time".
    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn state_at(&self, t: f64) -> Result<Vec<f64>> {
        let s = self.series;
        if t < s.start() - self.tol {
            return match self.pre_start {
                PreStart::Zero => Ok(vec![0.0; s.dim()]),
                PreStart::Reject => Err(Error::OutOfRange {
                    t,
                    start: s.start(),
                    end: s.end(),
                }),
            };
        }
        if !self.smoother.smooth_values {
            if let Some(i) = s.index_of_time(t, self.tol) {
                return Ok(s.row(i));
            }
        }
        let t = if t < s.start() || (t > s.end() && t <= s.end() + self.tol) {
            t.clamp(s.start(), s.end())
        } else {
            t
        };
        Ok(evaluate_at(s, self.smoother, t)?.value)
    }
}

/// Sample times whose delayed partner `t − τ` lies inside the series.
pub fn admissible_row_times(series: &TimeSeries, delay: f64) -> Vec<f64> {
    let mean_dt = (series.end() - series.start()) / (series.len() - 1) as f64;
    let tol = 1e-9 * mean_dt;
    series
        .times()
        .iter()
        .copied()
        .filter(|&t| t - delay >= series.start() - tol)
        .collect()
}

/// Evaluates every term on `(x(t), x(t − τ))` for each requested row time.
///
/// Column order follows [`enumerate_terms`].
pub fn build_library_matrix(
    lookup: &StateLookup<'_>,
    spec: &LibrarySpec,
    delay: f64,
    row_times: &[f64],
) -> Result<DMatrix<f64>> {
    if lookup.series().dim() != spec.dim {
        return Err(Error::DimensionMismatch(format!(
            "library over {} channels, series has {}",
            spec.dim,
            lookup.series().dim()
        )));
    }
    if !(delay >= 0.0 && delay.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "delay {delay} must be finite and >= 0"
        )));
    }
    let terms = enumerate_terms(spec);
    let rows: Vec<Vec<f64>> = row_times
        .par_iter()
        .map(|&t| {
            let current = lookup.state_at(t)?;
            let delayed = if spec.delayed {
                lookup.state_at(t - delay)?
            } else {
                vec![0.0; spec.dim]
            };
            Ok(terms
                .iter()
                .map(|term| term.eval(&current, &delayed))
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(rows.len(), terms.len(), |i, j| rows[i][j]))
}

/// Builds library rows directly from state vectors.
pub fn library_rows(terms: &[TermId], states: &[(Vec<f64>, Vec<f64>)]) -> DMatrix<f64> {
    DMatrix::from_fn(states.len(), terms.len(), |i, j| {
        terms[j].eval(&states[i].0, &states[i].1)
    })
}
