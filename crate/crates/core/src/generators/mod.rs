//! Ground-truth trajectory generators and characteristic time scales.

mod ks;
mod lorenz;
mod timescale;

pub use ks::{simulate_ks, simulate_ks_from, KsParams};
pub use lorenz::{lorenz_rhs, simulate_lorenz, LorenzParams};
pub use timescale::{time_scale, System, TimeScale, ROLLOUT_STEPS_KS, ROLLOUT_STEPS_LORENZ};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenError {
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("non-finite state at step {step}")]
    BlowUp { step: usize },
    #[error("unknown system {0:?} (expected lorenz or ks)")]
    UnknownSystem(String),
}
