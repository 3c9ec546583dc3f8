//! Scoring fitted models: posterior predictive densities, KL divergence to
//! the good-data law, trimmed cross-validation, and the contaminated-mixture
//! simulation study.

mod kl;
mod predictive;
mod simulate;
mod study;
mod summary;
mod tlm;

pub use kl::kl_good_data;
pub use predictive::{PredictiveDensity, MIN_DRAWS};
pub use simulate::{simulate_contaminated, SimGroup, SimulationDesign};
pub use study::{derive_seed, run_simulation_study, Fitter, GroupInfo, KlCell, KlReport, MainEffect, PriorSetting};
pub use summary::{batch_means_se, mean, quantile, sd, DrawSummary};
pub use tlm::{crossval_split, tlm_score, Split, TlmReport, TlmScore};
