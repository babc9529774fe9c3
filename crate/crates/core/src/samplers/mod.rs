//! MCMC transition kernels and the samplers built from them.
//!
//! Every sampler documents the exact number of target oracle calls it makes
//! (see [`Sampler::setup_calls`] and [`Sampler::calls_per_sample`]); the run
//! driver checks the measured counters against that closed form.

mod digs;
mod hmc;
mod langevin;
mod pt;
mod rdmc;
mod runner;
mod tuning;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::ChainRng;
use crate::targets::{EnergyTarget, Point};

pub use digs::{
    digs_mh_init, digs_mh_init_with, digs_sweep, mh_init_log_ratio, DigsConfig, DigsSampler,
    InitStrategy, MhInit, SweepOutcome,
};
pub use hmc::{hmc_step, leapfrog, HmcConfig};
pub use langevin::{
    mala_log_acceptance, mala_step, mala_step_with, ula_move, ula_step, ula_step_with,
};
pub use pt::{swap_log_acceptance, PtConfig, PtSampler};
pub use rdmc::{rdmc_score_estimate, RdmcConfig, RdmcSampler};
pub use runner::{expected_calls, run_sampler, RunOptions, SamplerRun};
pub use tuning::{tune_step_size, TuneResult};

/// Position with its energy and gradient under the target it is being
/// moved on.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub x: Vec<f64>,
    pub energy: f64,
    pub grad: Vec<f64>,
}

impl ChainState {
    /// Evaluates energy and gradient at `x` (one oracle call).
    pub fn new(target: &dyn EnergyTarget, x: &[f64]) -> Self {
        let mut grad = vec![0.0; x.len()];
        let energy = target.energy_and_grad(x, &mut grad);
        Self {
            x: x.to_vec(),
            energy,
            grad,
        }
    }

    pub fn from_parts(x: Vec<f64>, energy: f64, grad: Vec<f64>) -> Self {
        debug_assert_eq!(x.len(), grad.len());
        Self { x, energy, grad }
    }

    pub fn point(&self) -> Point {
        Point::from_vec_unchecked(self.x.clone())
    }
}

/// A single Markov transition applied to a [`ChainState`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransitionKernel {
    Ula { step_size: f64 },
    Mala { step_size: f64 },
    Hmc(HmcConfig),
}

impl TransitionKernel {
    pub fn validate(&self) -> Result<()> {
        match self {
            TransitionKernel::Ula { step_size } | TransitionKernel::Mala { step_size } => {
                if *step_size > 0.0 && step_size.is_finite() {
                    Ok(())
                } else {
                    Err(invalid("step_size", format!("{step_size} must be positive")))
                }
            }
            TransitionKernel::Hmc(cfg) => cfg.validate(),
        }
    }

    /// Applies one transition; returns whether a proposal was accepted
    /// (always `true` for ULA).
    pub fn step(&self, state: &mut ChainState, target: &dyn EnergyTarget, rng: &mut ChainRng) -> bool {
        match self {
            TransitionKernel::Ula { step_size } => {
                ula_step(state, target, *step_size, rng);
                true
            }
            TransitionKernel::Mala { step_size } => mala_step(state, target, *step_size, rng),
            TransitionKernel::Hmc(cfg) => hmc_step(state, target, cfg, rng),
        }
    }

    /// Oracle calls per transition.
    pub fn calls_per_step(&self) -> u64 {
        match self {
            TransitionKernel::Ula { .. } | TransitionKernel::Mala { .. } => 1,
            TransitionKernel::Hmc(cfg) => cfg.n_leapfrog as u64,
        }
    }

    pub fn step_size(&self) -> f64 {
        match self {
            TransitionKernel::Ula { step_size } | TransitionKernel::Mala { step_size } => *step_size,
            TransitionKernel::Hmc(cfg) => cfg.step_size,
        }
    }

    pub fn with_step_size(&self, step_size: f64) -> Self {
        match self {
            TransitionKernel::Ula { .. } => TransitionKernel::Ula { step_size },
            TransitionKernel::Mala { .. } => TransitionKernel::Mala { step_size },
            TransitionKernel::Hmc(cfg) => TransitionKernel::Hmc(HmcConfig { step_size, ..*cfg }),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TransitionKernel::Ula { .. } => "ula",
            TransitionKernel::Mala { .. } => "mala",
            TransitionKernel::Hmc(_) => "hmc",
        }
    }
}

/// Accepted/proposed tally for one kind of Metropolis move.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceStat {
    pub name: String,
    pub accepted: u64,
    pub proposed: u64,
}

impl AcceptanceStat {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            accepted: 0,
            proposed: 0,
        }
    }

    pub fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
    }

    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    fn merge(&mut self, other: &AcceptanceStat) {
        self.accepted += other.accepted;
        self.proposed += other.proposed;
    }
}

/// Output of one chain.
#[derive(Clone, Debug, Default)]
pub struct ChainOutput {
    pub samples: Vec<Point>,
    pub acceptance: Vec<AcceptanceStat>,
}

/// A sampler that can run independent chains from a starting point.
pub trait Sampler: Sync {
    fn name(&self) -> &str;

    fn validate(&self, dim: usize) -> Result<()>;

    /// Oracle calls made once per chain before the first sample.
    fn setup_calls(&self) -> u64;

    /// Oracle calls per kept sample.
    fn calls_per_sample(&self) -> u64;

    fn run_chain(
        &self,
        target: &dyn EnergyTarget,
        x0: &[f64],
        n_samples: usize,
        rng: &mut ChainRng,
    ) -> ChainOutput;
}

/// Plain MALA/HMC/ULA chain keeping the state after every
/// `steps_per_sample` transitions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McmcSampler {
    pub kernel: TransitionKernel,
    pub steps_per_sample: usize,
}

impl Sampler for McmcSampler {
    fn name(&self) -> &str {
        self.kernel.name()
    }

    fn validate(&self, _dim: usize) -> Result<()> {
        if self.steps_per_sample == 0 {
            return Err(invalid("steps_per_sample", "must be at least 1"));
        }
        self.kernel.validate()
    }

    fn setup_calls(&self) -> u64 {
        1
    }

    fn calls_per_sample(&self) -> u64 {
        self.steps_per_sample as u64 * self.kernel.calls_per_step()
    }

    fn run_chain(
        &self,
        target: &dyn EnergyTarget,
        x0: &[f64],
        n_samples: usize,
        rng: &mut ChainRng,
    ) -> ChainOutput {
        let mut state = ChainState::new(target, x0);
        let mut stat = AcceptanceStat::new(self.kernel.name());
        let mut samples = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            for _ in 0..self.steps_per_sample {
                let acc = self.kernel.step(&mut state, target, rng);
                stat.record(acc);
            }
            samples.push(state.point());
        }
        ChainOutput {
            samples,
            acceptance: vec![stat],
        }
    }
}

/// `log u < log_ratio` with `u ~ U(0, 1)`.
pub(crate) fn metropolis_accept<R: Rng + ?Sized>(rng: &mut R, log_ratio: f64) -> bool {
    if log_ratio >= 0.0 {
        // still consume the uniform so the stream position does not depend
        // on the outcome
        let _: f64 = rng.random();
        return true;
    }
    let u: f64 = rng.random();
    u.ln() < log_ratio
}
