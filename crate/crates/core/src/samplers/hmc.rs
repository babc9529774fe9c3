use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{metropolis_accept, ChainState};
use crate::error::{invalid, Result};
use crate::rng::fill_standard_normal;
use crate::targets::EnergyTarget;

fn default_mass() -> f64 {
    1.0
}

/// HMC with an isotropic mass matrix `M = m·I`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HmcConfig {
    pub step_size: f64,
    pub n_leapfrog: usize,
    #[serde(default = "default_mass")]
    pub mass: f64,
}

impl HmcConfig {
    pub fn new(step_size: f64, n_leapfrog: usize) -> Self {
        Self {
            step_size,
            n_leapfrog,
            mass: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(invalid("step_size", "must be positive"));
        }
        if self.n_leapfrog == 0 {
            return Err(invalid("n_leapfrog", "must be at least 1"));
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(invalid("mass", "must be positive"));
        }
        Ok(())
    }
}

/// Kick-drift-kick integration of Hamilton's equations for
/// `H(x, v) = E(x) + ‖v‖²/(2m)`.
///
/// `state` holds the starting position with its cached energy and gradient
/// and is overwritten with the end point; `v` is updated in place. Costs one
/// joint evaluation per step.
pub fn leapfrog(
    state: &mut ChainState,
    v: &mut [f64],
    target: &dyn EnergyTarget,
    eps: f64,
    steps: usize,
    mass: f64,
) {
    let half = 0.5 * eps;
    for _ in 0..steps {
        for (vi, g) in v.iter_mut().zip(&state.grad) {
            *vi -= half * g;
        }
        for (xi, vi) in state.x.iter_mut().zip(v.iter()) {
            *xi += eps * vi / mass;
        }
        state.energy = target.energy_and_grad(&state.x, &mut state.grad);
        for (vi, g) in v.iter_mut().zip(&state.grad) {
            *vi -= half * g;
        }
    }
}

fn kinetic(v: &[f64], mass: f64) -> f64 {
    0.5 * v.iter().map(|x| x * x).sum::<f64>() / mass
}

/// One HMC transition: fresh momentum, a leapfrog trajectory, then a
/// Metropolis correction on the Hamiltonian.
pub fn hmc_step<R: Rng + ?Sized>(
    state: &mut ChainState,
    target: &dyn EnergyTarget,
    cfg: &HmcConfig,
    rng: &mut R,
) -> bool {
    let mut v = vec![0.0; state.x.len()];
    fill_standard_normal(rng, &mut v);
    let sd = cfg.mass.sqrt();
    for vi in v.iter_mut() {
        *vi *= sd;
    }
    let h0 = state.energy + kinetic(&v, cfg.mass);
    let mut proposal = state.clone();
    leapfrog(&mut proposal, &mut v, target, cfg.step_size, cfg.n_leapfrog, cfg.mass);
    let h1 = proposal.energy + kinetic(&v, cfg.mass);
    let accepted = metropolis_accept(rng, h0 - h1);
    if accepted {
        *state = proposal;
    }
    accepted
}
