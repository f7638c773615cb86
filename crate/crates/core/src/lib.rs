//! Sparse identification of delay differential equations.
//!
//! Regresses estimated derivatives onto a polynomial library built from
//! current and delayed states, prunes the library greedily, and selects the
//! delay by simulating each candidate model and comparing against the data.
//!
//! ```
//! use sindy_delay::models::enso::{enso_library, generate_enso, EnsoSpec};
//! use sindy_delay::{DelayGrid, GreedyConfig, SimConfig, SindyDelayConfig, SindyDelayProblem, SmootherSpec};
//! use sindy_delay::timeseries::NoiseSpec;
//!
//! let spec = EnsoSpec { alpha: 0.75, tau: 7.0, n_samples: 200, dt: 0.25, noise: NoiseSpec::new(0.0, 0).unwrap() };
//! let (_, observed) = generate_enso(&spec).unwrap();
//! let config = SindyDelayConfig {
//!     library: enso_library(),
//!     smoother: SmootherSpec::new(5, 3).unwrap(),
//!     greedy: GreedyConfig::default(),
//!     sim: SimConfig::new(0.025),
//! };
//! let problem = SindyDelayProblem::new(&observed.without_derivs(), config).unwrap();
//! let grid = DelayGrid::new(vec![vec![6.0, 7.0, 8.0]]).unwrap();
//! let result = sindy_delay::sweep(&problem, &grid, true).unwrap();
//! assert_eq!(result.best().unwrap().delays, vec![7.0]);
//! ```

pub mod dde_sim;
pub mod delay_opt;
pub mod denoise;
pub mod error;
pub mod library;
mod linalg;
pub mod models;
pub mod sparsify;
pub mod timeseries;

pub use dde_sim::{DelayModel, HistorySpec, SimConfig, Trajectory};
pub use delay_opt::{sweep, DelayGrid, SindyDelayConfig, SindyDelayProblem, SweepResult};
pub use denoise::SmootherSpec;
pub use error::{Error, Result};
pub use library::{CrossPolicy, LibrarySpec, TermId};
pub use sparsify::{FitTrace, GreedyConfig, StopRule};
pub use timeseries::TimeSeries;
