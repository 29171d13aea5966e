//! Dynamical-indices diagnostics for forecast evaluation.
//!
//! Local dimension `d` and inverse persistence `theta` are estimated from
//! extreme-value statistics of close returns to a reference attractor, and
//! forecasts are scored both with conventional error metrics and with
//! metrics on these indices (per-state differences, Wasserstein distances
//! between index distributions).
//!
//! Modules, bottom-up:
//!
//! * [`data`]: trajectory datasets, file formats, z-score, splits
//! * [`attractor`]: negative-log distance series and threshold exceedances
//! * [`indices`]: `d`, `theta`, exponential goodness of fit
//! * [`metrics`]: state and index error metrics, DID, Wasserstein, binning
//! * [`generators`]: Lorenz-63 and Kuramoto–Sivashinsky trajectories
//! * [`forecast`]: persistence and analog baselines, direct and recursive evaluation

pub mod attractor;
pub mod data;
pub mod forecast;
pub mod generators;
pub mod indices;
pub mod metrics;

pub use attractor::{
    batch_exceedances, build_reference, exceedances, neg_log_distance_series, ExceedanceSet,
    ReferenceAttractor, DEFAULT_QUANTILE, MIN_EXCEEDANCES,
};
pub use data::{
    compute_norm_stats, inverse_zscore, load_dataset, save_dataset, split, zscore, DataError,
    Format, NormStats, SplitSpec, TrajectoryDataset,
};
pub use indices::{
    compute_indices, gpd_fit_test, inverse_persistence, local_dimension, DynamicalIndices,
    GofResult,
};
