//! Run configuration: one structured file for everything, flags on top.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sindy_delay::models::bio::ErrorMode;
use sindy_delay::{CrossPolicy, DelayGrid, GreedyConfig, LibrarySpec, SmootherSpec, StopRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub toy: ToyConfig,
    pub smoother: SmootherConfig,
    pub library: LibraryConfig,
    pub sparsify: SparsifyConfig,
    pub sim: SimSettings,
    pub grid: GridConfig,
    pub io: IoConfig,
    pub bio: BioConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            toy: ToyConfig::default(),
            smoother: SmootherConfig::default(),
            library: LibraryConfig::default(),
            sparsify: SparsifyConfig::default(),
            sim: SimSettings::default(),
            grid: GridConfig::default(),
            io: IoConfig::default(),
            bio: BioConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub alpha: f64,
    pub tau: f64,
    pub n_samples: usize,
    pub dt: f64,
    pub gamma: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            alpha: 0.75,
            tau: 7.0,
            n_samples: 4000,
            dt: 0.025,
            gamma: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmootherConfig {
    pub radius: usize,
    pub degree: usize,
    pub smooth_values: bool,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        SmootherConfig {
            radius: 25,
            degree: 3,
            smooth_values: false,
        }
    }
}

impl SmootherConfig {
    pub fn spec(&self) -> anyhow::Result<SmootherSpec> {
        Ok(SmootherSpec::new(self.radius, self.degree)?.smoothing_values(self.smooth_values))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LibraryConfig {
    #[serde(rename = "M")]
    pub max_degree: u32,
    pub cross_policy: CrossPolicy,
    pub delayed: bool,
}

impl Default for LibraryConfig {
    fn default() -> Self {
        LibraryConfig {
            max_degree: 3,
            cross_policy: CrossPolicy::ExcludeMixed,
            delayed: true,
        }
    }
}

impl LibraryConfig {
    pub fn spec(&self, dim: usize) -> anyhow::Result<LibrarySpec> {
        Ok(LibrarySpec::new(
            dim,
            self.max_degree,
            self.delayed,
            self.cross_policy,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SparsifyConfig {
    pub stop_increase: f64,
    pub rule: StopRule,
}

impl Default for SparsifyConfig {
    fn default() -> Self {
        let g = GreedyConfig::default();
        SparsifyConfig {
            stop_increase: g.stop_increase,
            rule: g.rule,
        }
    }
}

impl SparsifyConfig {
    pub fn greedy(&self) -> anyhow::Result<GreedyConfig> {
        if !(self.stop_increase.is_finite() && self.stop_increase >= 0.0) {
            bail!("sparsify.stop_increase must be finite and >= 0");
        }
        Ok(GreedyConfig {
            stop_increase: self.stop_increase,
            rule: self.rule,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSettings {
    /// Integration step; a tenth of the sampling interval when unset.
    pub h: Option<f64>,
    pub divergence_bound: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            h: None,
            divergence_bound: sindy_delay::dde_sim::DEFAULT_DIVERGENCE_BOUND,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Explicit axes; when set, `step`/`max` are ignored.
    pub axes: Option<Vec<Vec<f64>>>,
    /// Candidate spacing; the sampling interval when unset.
    pub step: Option<f64>,
    pub max: f64,
    /// Second pass around the coarse minimum at this spacing.
    pub fine_step: Option<f64>,
    pub fine_radius: f64,
    pub refine: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            axes: None,
            step: None,
            max: 8.5,
            fine_step: None,
            fine_radius: 0.5,
            refine: false,
        }
    }
}

impl GridConfig {
    pub fn coarse(&self, dt: f64) -> anyhow::Result<DelayGrid> {
        if let Some(axes) = &self.axes {
            return Ok(DelayGrid::new(axes.clone())?);
        }
        Ok(DelayGrid::multiples(self.step.unwrap_or(dt), self.max)?)
    }

    /// Fine points within `fine_radius` of `center`, on multiples of
    /// `fine_step`.
    pub fn fine_around(&self, center: f64) -> anyhow::Result<Option<DelayGrid>> {
        let Some(step) = self.fine_step else {
            return Ok(None);
        };
        if !(step > 0.0 && step.is_finite()) {
            bail!("grid.fine_step must be > 0");
        }
        let lo = ((center - self.fine_radius) / step - 1e-9).ceil().max(1.0) as i64;
        let hi = ((center + self.fine_radius) / step + 1e-9).floor() as i64;
        let points: Vec<f64> = (lo..=hi).map(|s| s as f64 * step).collect();
        if points.is_empty() {
            return Ok(None);
        }
        Ok(Some(DelayGrid::new(vec![points])?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    pub input: Option<PathBuf>,
    /// Where outputs go; not part of the recorded config.
    #[serde(skip_serializing)]
    pub output: PathBuf,
    /// Delays at which elimination traces are written.
    pub traces: Vec<f64>,
    /// Estimate derivatives even when the input carries them.
    pub ignore_derivs: bool,
    /// Evaluate grid points one at a time; results are identical either way,
    /// so it is not recorded.
    #[serde(skip_serializing)]
    pub sequential: bool,
}

impl Default for IoConfig {
    fn default() -> Self {
        IoConfig {
            input: None,
            output: PathBuf::from("out"),
            traces: Vec::new(),
            ignore_derivs: false,
            sequential: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BioConfig {
    /// Directories holding `wt.csv`, `delta_czc.csv`, `delta_cad.csv`, one
    /// per concentration in `zinc`.
    pub data_dirs: Vec<PathBuf>,
    /// Zinc concentrations in mM.
    pub zinc: Vec<f64>,
    /// Generate the datasets from the bundled reference fits instead of
    /// reading them.
    pub synthesize: bool,
    pub n_points: usize,
    pub sample_dt: f64,
    pub gamma: f64,
    pub radius: usize,
    pub degree: usize,
    pub grid_step: f64,
    pub grid_max: f64,
    pub error_mode: ErrorMode,
}

impl Default for BioConfig {
    fn default() -> Self {
        BioConfig {
            data_dirs: Vec::new(),
            zinc: Vec::new(),
            synthesize: false,
            n_points: 33,
            sample_dt: 5.0,
            gamma: 0.0,
            radius: 2,
            degree: 2,
            grid_step: 5.0,
            grid_max: 160.0,
            error_mode: ErrorMode::PerStrain,
        }
    }
}

impl BioConfig {
    pub fn grid(&self) -> anyhow::Result<DelayGrid> {
        let axis = DelayGrid::range(0.0, self.grid_step, self.grid_max)?;
        Ok(DelayGrid::new(vec![axis.clone(), axis])?)
    }
}

impl RunConfig {
    /// Reads a TOML config, or the `config` object of a JSON manifest.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        if path.extension().is_some_and(|e| e == "json") {
            let value: serde_json::Value = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", path.display()))?;
            let config = value.get("config").cloned().unwrap_or(value);
            return serde_json::from_value(config)
                .with_context(|| format!("reading config in {}", path.display()));
        }
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}
