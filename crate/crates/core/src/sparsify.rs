//! Masked least squares and greedy single-term elimination.
//!
//! The greedy procedure starts from the full library and repeatedly removes
//! the term whose removal raises the least-squares cost the least. The whole
//! elimination path down to the empty model is recorded; the returned model
//! is the last state before the normalized cost `C / C(0)` rose by more than
//! the configured threshold.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{lstsq, sq_norm};

/// Active-term mask over a library; `true` keeps the term.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    active: Vec<bool>,
}

impl Mask {
    pub fn all(len: usize) -> Self {
        Mask {
            active: vec![true; len],
        }
    }

    pub fn none(len: usize) -> Self {
        Mask {
            active: vec![false; len],
        }
    }

    pub fn from_active(active: Vec<bool>) -> Self {
        Mask { active }
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn is_active(&self, j: usize) -> bool {
        self.active[j]
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.active.len()).filter(|&j| self.active[j]).collect()
    }

    pub fn count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn without(&self, j: usize) -> Self {
        let mut m = self.clone();
        m.active[j] = false;
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsFit {
    /// Full-length coefficient vector; inactive entries are exactly zero.
    pub coeffs: DVector<f64>,
    /// Squared residual norm.
    pub cost: f64,
    /// The active submatrix was numerically rank deficient and the
    /// minimum-norm solution was used.
    pub rank_deficient: bool,
}

/// Minimizes `‖target − Θ ξ‖²` subject to `ξ_j = 0` for inactive `j`.
///
/// Active columns are equilibrated to unit norm before factorization, which
/// leaves the minimizer unchanged but keeps libraries whose columns span many
/// orders of magnitude solvable.
pub fn masked_least_squares(
    theta: &DMatrix<f64>,
    target: &DVector<f64>,
    mask: &Mask,
) -> Result<LsFit> {
    if theta.nrows() != target.len() {
        return Err(Error::DimensionMismatch(format!(
            "library has {} rows, target has {}",
            theta.nrows(),
            target.len()
        )));
    }
    if theta.ncols() != mask.len() {
        return Err(Error::DimensionMismatch(format!(
            "library has {} columns, mask has {}",
            theta.ncols(),
            mask.len()
        )));
    }
    let mut coeffs = DVector::zeros(theta.ncols());
    let active = mask.active_indices();
    let scales: Vec<f64> = active.iter().map(|&j| theta.column(j).norm()).collect();
    let live: Vec<usize> = (0..active.len()).filter(|&k| scales[k] > 0.0).collect();
    let mut rank_deficient = live.len() < active.len() || live.len() > theta.nrows();
    if !live.is_empty() {
        let sub = DMatrix::from_fn(theta.nrows(), live.len(), |i, k| {
            theta[(i, active[live[k]])] / scales[live[k]]
        });
        let rhs = DMatrix::from_column_slice(target.len(), 1, target.as_slice());
        let sol = lstsq(&sub, &rhs);
        rank_deficient |= sol.rank_deficient;
        for (k, &l) in live.iter().enumerate() {
            coeffs[active[l]] = sol.x[(k, 0)] / scales[l];
        }
    }
    let residual = target - theta * &coeffs;
    Ok(LsFit {
        coeffs,
        cost: sq_norm(&residual),
        rank_deficient,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopRule {
    /// Stop once `C/C(0)` exceeds the all-active value by more than the
    /// threshold.
    Cumulative,
    /// Stop once a single elimination raises `C/C(0)` by more than the
    /// threshold.
    Stepwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreedyConfig {
    pub stop_increase: f64,
    pub rule: StopRule,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        GreedyConfig {
            stop_increase: 0.10,
            rule: StopRule::Cumulative,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitStep {
    /// Library index of the eliminated term.
    pub term: usize,
    pub cost: f64,
    pub normalized_cost: f64,
}

/// Elimination history for one state component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    /// Every elimination down to the empty model.
    pub steps: Vec<FitStep>,
    pub c_full: f64,
    pub c_zero: f64,
    /// Number of accepted eliminations (a prefix of `steps`).
    pub stopped_at: usize,
    /// Some solve along the path hit a rank-deficient active set.
    pub rank_deficient: bool,
}

impl FitTrace {
    pub fn normalized_full(&self) -> f64 {
        if self.c_zero > 0.0 {
            self.c_full / self.c_zero
        } else {
            0.0
        }
    }

    pub fn accepted(&self) -> &[FitStep] {
        &self.steps[..self.stopped_at]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyFit {
    pub coeffs: DVector<f64>,
    pub mask: Mask,
    pub trace: FitTrace,
}

/// Costs of removing each active term in turn, as `(index, cost)` in index
/// order.
pub fn removal_costs(
    theta: &DMatrix<f64>,
    target: &DVector<f64>,
    mask: &Mask,
) -> Result<Vec<(usize, f64, bool)>> {
    mask.active_indices()
        .into_par_iter()
        .map(|q| {
            let fit = masked_least_squares(theta, target, &mask.without(q))?;
            Ok((q, fit.cost, fit.rank_deficient))
        })
        .collect()
}

/// Chooses the removal with the smallest cost, lowest index on ties.
fn best_removal(costs: &[(usize, f64, bool)]) -> Option<(usize, f64, bool)> {
    costs.iter().copied().fold(None, |best, cand| match best {
        Some(b) if b.1 <= cand.1 => Some(b),
        _ => Some(cand),
    })
}

pub fn greedy_eliminate(
    theta: &DMatrix<f64>,
    target: &DVector<f64>,
    config: &GreedyConfig,
) -> Result<GreedyFit> {
    let n_terms = theta.ncols();
    if n_terms == 0 || theta.nrows() == 0 {
        return Err(Error::InvalidInput("empty library matrix".into()));
    }
    let c_zero = sq_norm(target);
    if theta.nrows() != target.len() {
        return Err(Error::DimensionMismatch(format!(
            "library has {} rows, target has {}",
            theta.nrows(),
            target.len()
        )));
    }
    if c_zero == 0.0 {
        return Ok(GreedyFit {
            coeffs: DVector::zeros(n_terms),
            mask: Mask::none(n_terms),
            trace: FitTrace {
                steps: Vec::new(),
                c_full: 0.0,
                c_zero,
                stopped_at: 0,
                rank_deficient: false,
            },
        });
    }

    let full = masked_least_squares(theta, target, &Mask::all(n_terms))?;
    let mut rank_deficient = full.rank_deficient;
    let base = full.cost / c_zero;
    let mut mask = Mask::all(n_terms);
    let mut steps = Vec::with_capacity(n_terms);
    let mut stopped_at = None;
    let mut previous = base;
    while mask.count() > 0 {
        let costs = removal_costs(theta, target, &mask)?;
        let (q, cost, deficient) = best_removal(&costs).expect("mask has an active term");
        rank_deficient |= deficient;
        let normalized = cost / c_zero;
        let reference = match config.rule {
            StopRule::Cumulative => base,
            StopRule::Stepwise => previous,
        };
        if stopped_at.is_none() && normalized - reference > config.stop_increase {
            stopped_at = Some(steps.len());
        }
        steps.push(FitStep {
            term: q,
            cost,
            normalized_cost: normalized,
        });
        previous = normalized;
        mask = mask.without(q);
    }
    let stopped_at = stopped_at.unwrap_or(steps.len());

    let mut final_mask = Mask::all(n_terms);
    for step in &steps[..stopped_at] {
        final_mask = final_mask.without(step.term);
    }
    let fit = masked_least_squares(theta, target, &final_mask)?;
    Ok(GreedyFit {
        coeffs: fit.coeffs,
        mask: final_mask,
        trace: FitTrace {
            steps,
            c_full: full.cost,
            c_zero,
            stopped_at,
            rank_deficient,
        },
    })
}

/// Runs [`greedy_eliminate`] on every column of `targets`.
pub fn greedy_eliminate_columns(
    theta: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    config: &GreedyConfig,
) -> Result<Vec<GreedyFit>> {
    (0..targets.ncols())
        .map(|k| greedy_eliminate(theta, &targets.column(k).clone_owned(), config))
        .collect()
}

/// Elimination trace as CSV: `step,term,cost,normalized_cost`; step 0 is the
/// all-active model. `labels` names the library terms.
pub fn trace_csv(trace: &FitTrace, labels: &[String]) -> String {
    use crate::timeseries::fmt_f64;
    let mut out = String::from("step,term,cost,normalized_cost\n");
    out.push_str(&format!(
        "0,,{},{}\n",
        fmt_f64(trace.c_full),
        fmt_f64(trace.normalized_full())
    ));
    for (i, s) in trace.steps.iter().enumerate() {
        let label = labels
            .get(s.term)
            .cloned()
            .unwrap_or_else(|| s.term.to_string());
        out.push_str(&format!(
            "{},{},{},{}\n",
            i + 1,
            label,
            fmt_f64(s.cost),
            fmt_f64(s.normalized_cost)
        ));
    }
    out
}
