//! Nonstationary extreme-value modeling for gridded annual-maximum series.
//!
//! The crate fits a Poisson-rate reparametrization of the GEV (PGEV) in which
//! the annual exceedance rate and the Pareto scale of threshold exceedances
//! may each depend log-linearly on a temporal covariate. On top of the
//! per-pixel fits it provides likelihood-ratio and AIC model selection,
//! climate-scenario projections of frequency and intensity changes, Matérn
//! kriging of the fitted trend surfaces, and a Gaussian-copula spatial
//! bootstrap for test-statistic uncertainty.
//!
//! # Determinism
//!
//! Every stochastic routine takes an explicit `u64` seed and derives named
//! substreams from it (see [`rng`]); results are identical across runs,
//! thread counts, and the `parallel` feature flag.
//!
//! # Features
//!
//! * `parallel` (default) — data-parallel per-pixel fitting and bootstrap
//!   replication via rayon. Disabling it swaps in sequential loops with
//!   identical output.

pub mod climate;
pub mod copula;
pub mod data;
pub mod eda;
pub mod error;
pub mod evd;
pub mod fit;
pub mod optim;
pub(crate) mod parallel;
pub mod rng;
pub mod select;
pub mod spatial;
pub mod synth;
pub mod special;

pub use error::{Error, Result};
