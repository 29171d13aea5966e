use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::GenError;

/// Largest Lyapunov exponent of Lorenz-63 at the standard parameters.
pub const LYAPUNOV_LORENZ: f64 = 0.906;
/// Largest Lyapunov exponent of KS with L = 22.
pub const LYAPUNOV_KS: f64 = 0.043;

/// Rollout horizon of 10 LT at dt 0.01.
pub const ROLLOUT_STEPS_LORENZ: usize = 1_100;
/// Rollout horizon of 3 LT at dt 0.25.
pub const ROLLOUT_STEPS_KS: usize = 279;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum System {
    Lorenz,
    Ks,
}

impl System {
    pub fn lyapunov_exponent(self) -> f64 {
        match self {
            System::Lorenz => LYAPUNOV_LORENZ,
            System::Ks => LYAPUNOV_KS,
        }
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            System::Lorenz => "lorenz",
            System::Ks => "ks",
        })
    }
}

impl FromStr for System {
    type Err = GenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lorenz" | "lorenz63" => Ok(System::Lorenz),
            "ks" => Ok(System::Ks),
            _ => Err(GenError::UnknownSystem(s.to_string())),
        }
    }
}

/// Lyapunov time of a system, in model time and in dataset steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeScale {
    pub system: System,
    pub lyapunov_exponent: f64,
    pub lt_model_units: f64,
    pub lt_steps: usize,
}

impl TimeScale {
    /// Nearest whole step count for a horizon in Lyapunov times, taking
    /// one LT as `lt_steps` steps.
    pub fn lt_to_steps(&self, lt: f64) -> usize {
        (lt * self.lt_steps as f64).round() as usize
    }

    pub fn steps_to_lt(&self, steps: usize) -> f64 {
        steps as f64 / self.lt_steps as f64
    }
}

pub fn time_scale(system: System, dataset_dt: f64) -> Result<TimeScale, GenError> {
    if !(dataset_dt > 0.0 && dataset_dt.is_finite()) {
        return Err(GenError::BadParams(format!("dataset dt must be positive, got {dataset_dt}")));
    }
    let lambda = system.lyapunov_exponent();
    let lt = 1.0 / lambda;
    Ok(TimeScale {
        system,
        lyapunov_exponent: lambda,
        lt_model_units: lt,
        lt_steps: (lt / dataset_dt).round().max(1.0) as usize,
    })
}
