//! Delayed-oscillator toy model `ẋ = x − x³ − α x(t − τ)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dde_sim::{
    find_periodic_history, integrate, sample, DelayModel, HistorySpec, GENERATOR_STEP,
};
use crate::library::{CrossPolicy, LibrarySpec, TermId};
use crate::timeseries::{add_noise, NoiseSpec, TimeSeries};
use crate::{Error, Result};

/// Burn-in before the periodic history is taken.
pub const BURN_IN: f64 = 200.0;
/// Value at which the periodic history is phase-anchored.
pub const ANCHOR: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsoSpec {
    pub alpha: f64,
    pub tau: f64,
    pub n_samples: usize,
    pub dt: f64,
    pub noise: NoiseSpec,
}

impl EnsoSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "tau must be > 0, got {}",
                self.tau
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "dt must be > 0, got {}",
                self.dt
            )));
        }
        if self.n_samples < 2 {
            return Err(Error::InvalidInput("need at least 2 samples".into()));
        }
        if !self.alpha.is_finite() {
            return Err(Error::InvalidInput("alpha must be finite".into()));
        }
        Ok(())
    }

    /// Largest step not above the generator step that divides `dt`.
    pub fn generator_step(&self) -> f64 {
        self.dt / (self.dt / GENERATOR_STEP).ceil()
    }
}

/// The library the toy model lives in: one channel, cubic, delayed,
/// no mixed current/delayed products.
pub fn enso_library() -> LibrarySpec {
    LibrarySpec::new(1, 3, true, CrossPolicy::ExcludeMixed).expect("valid library")
}

pub fn enso_model(alpha: f64, tau: f64) -> Result<DelayModel> {
    let spec = enso_library();
    let terms = crate::library::enumerate_terms(&spec);
    let index = |e: [u32; 2]| {
        let id = TermId::new(e.to_vec()).expect("valid exponents");
        terms
            .iter()
            .position(|t| *t == id)
            .expect("term in library")
    };
    let mut coeffs = DMatrix::zeros(terms.len(), 1);
    coeffs[(index([1, 0]), 0)] = 1.0;
    coeffs[(index([0, 1]), 0)] = -alpha;
    coeffs[(index([3, 0]), 0)] = -1.0;
    DelayModel::shared_delay(spec, coeffs, tau)
}

/// Simulates the toy model from a periodic history and samples it at
/// `t_n = n·Δt`, `n = 0…N−1`.
///
/// Returns the exact series (with model-evaluated derivatives) and the
/// observed series. Noise-free observations keep the exact derivatives.
pub fn generate_enso(spec: &EnsoSpec) -> Result<(TimeSeries, TimeSeries)> {
    spec.validate()?;
    let model = enso_model(spec.alpha, spec.tau)?;
    let history = find_periodic_history(&model, BURN_IN, ANCHOR)?;
    let t_end = (spec.n_samples - 1) as f64 * spec.dt;
    let traj = integrate(&model, &history, 0.0, t_end, spec.generator_step())?;
    if traj.diverged() {
        return Err(Error::InvalidModel("toy model diverged".into()));
    }
    let times: Vec<f64> = (0..spec.n_samples).map(|n| n as f64 * spec.dt).collect();
    let values = sample(&traj, &times)?;
    let mut derivs = DMatrix::zeros(spec.n_samples, 1);
    for (n, &t) in times.iter().enumerate() {
        let s = t - spec.tau;
        let delayed = if s <= 0.0 {
            history.value_at(s)?[0]
        } else {
            sample(&traj, &[s])?[0]
        };
        derivs[(n, 0)] = model.field(&[values[(n, 0)]], &[delayed])[0];
    }
    let truth = TimeSeries::with_names(times, values, vec!["x".into()])?.with_derivs(derivs)?;
    let observed = if spec.noise.gamma > 0.0 {
        add_noise(&truth, &spec.noise)
    } else {
        truth.clone()
    };
    Ok((truth, observed))
}

/// The ENSO initial history used by the generator.
pub fn enso_history(alpha: f64, tau: f64) -> Result<HistorySpec> {
    find_periodic_history(&enso_model(alpha, tau)?, BURN_IN, ANCHOR)
}
