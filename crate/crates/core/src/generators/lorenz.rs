use serde::{Deserialize, Serialize};

use super::GenError;
use crate::data::TrajectoryDataset;

/// Lorenz-63 configuration. Defaults: sigma=10, rho=28, beta=2.667,
/// dt=0.01, start (1, 1, 1), first 1,000 states discarded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorenzParams {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
    pub dt: f64,
    /// Number of states produced by the integrator, including the initial
    /// state and the discarded transient.
    pub n_steps: usize,
    pub init: [f64; 3],
    pub transient_discard: usize,
}

impl Default for LorenzParams {
    fn default() -> Self {
        Self {
            sigma: 10.0,
            rho: 28.0,
            beta: 2.667,
            dt: 0.01,
            n_steps: 1_001_000,
            init: [1.0, 1.0, 1.0],
            transient_discard: 1_000,
        }
    }
}

impl LorenzParams {
    fn validate(&self) -> Result<(), GenError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(GenError::BadParams(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n_steps <= self.transient_discard {
            return Err(GenError::BadParams(format!(
                "n_steps ({}) must exceed transient_discard ({})",
                self.n_steps, self.transient_discard
            )));
        }
        if self.init.iter().any(|v| !v.is_finite()) {
            return Err(GenError::BadParams("non-finite initial state".into()));
        }
        Ok(())
    }
}

#[inline]
pub fn lorenz_rhs(p: &LorenzParams, s: [f64; 3]) -> [f64; 3] {
    let [x, y, z] = s;
    [p.sigma * (y - x), x * (p.rho - z) - y, x * y - p.beta * z]
}

#[inline]
fn rk4_step(p: &LorenzParams, s: [f64; 3]) -> [f64; 3] {
    let h = p.dt;
    let add = |a: [f64; 3], b: [f64; 3], c: f64| [a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2]];
    let k1 = lorenz_rhs(p, s);
    let k2 = lorenz_rhs(p, add(s, k1, h / 2.0));
    let k3 = lorenz_rhs(p, add(s, k2, h / 2.0));
    let k4 = lorenz_rhs(p, add(s, k3, h));
    let mut out = s;
    for i in 0..3 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Classical fixed-step RK4. Row `i` of the output is the state after
/// `transient_discard + i` steps.
pub fn simulate_lorenz(params: &LorenzParams) -> Result<TrajectoryDataset, GenError> {
    params.validate()?;
    let kept = params.n_steps - params.transient_discard;
    let mut states = Vec::with_capacity(kept * 3);
    let mut s = params.init;
    for step in 0..params.n_steps {
        if step > 0 {
            s = rk4_step(params, s);
            if s.iter().any(|v| !v.is_finite()) {
                return Err(GenError::BlowUp { step });
            }
        }
        if step >= params.transient_discard {
            states.extend_from_slice(&s);
        }
    }
    TrajectoryDataset::new("lorenz", params.dt, 3, params.transient_discard as u64, states)
        .map_err(|e| GenError::BadParams(e.to_string()))
}
