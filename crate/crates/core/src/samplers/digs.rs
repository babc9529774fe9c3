//! Diffusive Gibbs sampling: alternate between a Gaussian corruption
//! `x̃ ~ N(αx, σ²I)` and MCMC on the denoising posterior `p(x|x̃)`, level by
//! level through a noise schedule.

use serde::{Deserialize, Serialize};

use super::{metropolis_accept, AcceptanceStat, ChainOutput, ChainState, Sampler, TransitionKernel};
use crate::error::{invalid, Result};
use crate::kernels::{corrupt, ConvolutionKernel, DenoisingPosterior, NoiseSchedule, ScheduleSpec};
use crate::rng::{fill_standard_normal, ChainRng};
use crate::targets::EnergyTarget;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Where the denoising chain starts after each corruption.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Start from the current clean state.
    PrevState,
    /// Start from `x̃/α`.
    ScaledNoisy,
    /// Metropolis move between the current state and a draw from
    /// `N(x̃/α, (σ/α)²I)`.
    #[default]
    Mh,
}

impl InitStrategy {
    pub const ALL: [InitStrategy; 3] = [InitStrategy::PrevState, InitStrategy::ScaledNoisy, InitStrategy::Mh];

    /// Fresh oracle calls spent on initialization per sweep.
    pub fn calls(self) -> u64 {
        match self {
            InitStrategy::PrevState => 0,
            InitStrategy::ScaledNoisy | InitStrategy::Mh => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            InitStrategy::PrevState => "prev_state",
            InitStrategy::ScaledNoisy => "scaled_noisy",
            InitStrategy::Mh => "mh",
        }
    }
}

fn default_denoiser() -> TransitionKernel {
    TransitionKernel::Mala { step_size: 1e-3 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DigsConfig {
    pub schedule: ScheduleSpec,
    /// Gibbs sweeps per noise level.
    pub sweeps: usize,
    /// Denoising transitions per sweep.
    pub denoise_steps: usize,
    #[serde(default = "default_denoiser")]
    pub denoiser: TransitionKernel,
    #[serde(default)]
    pub init: InitStrategy,
    /// Permit kernels outside `α ∈ (0, 1]` (hyperparameter sweeps only).
    #[serde(default)]
    pub allow_extended: bool,
}

impl DigsConfig {
    pub fn validate(&self) -> Result<NoiseSchedule> {
        if self.sweeps == 0 {
            return Err(invalid("sweeps", "must be at least 1"));
        }
        if self.denoise_steps == 0 {
            return Err(invalid("denoise_steps", "must be at least 1"));
        }
        self.denoiser.validate()?;
        self.schedule.build(self.allow_extended)
    }
}

/// Result of the Metropolis initialization.
#[derive(Clone, Debug, PartialEq)]
pub struct MhInit {
    /// Untempered state (energy and gradient of the base target).
    pub state: ChainState,
    pub accepted: bool,
}

/// `log N(x | x̃/α, (σ/α)²I)`.
fn proposal_log_density(kernel: &ConvolutionKernel, x_tilde: &[f64], x: &[f64]) -> f64 {
    let (a, s) = (kernel.alpha(), kernel.sigma());
    let std = s / a;
    let sq: f64 = x.iter().zip(x_tilde).map(|(v, t)| (v - t / a).powi(2)).sum();
    -0.5 * sq / (std * std) - 0.5 * x.len() as f64 * (LN_2PI + 2.0 * std.ln())
}

/// Log acceptance ratio for moving the denoising chain's start from
/// `x_prev` to the proposal `x_prop ~ N(x̃/α, (σ/α)²I)`:
///
/// `[−E(x') + log p(x̃|x') − log q(x'|x̃)] − [−E(x) + log p(x̃|x) − log q(x|x̃)]`.
pub fn mh_init_log_ratio(
    kernel: &ConvolutionKernel,
    x_tilde: &[f64],
    x_prev: &[f64],
    energy_prev: f64,
    x_prop: &[f64],
    energy_prop: f64,
) -> f64 {
    let fwd = -energy_prop + kernel.log_density(x_tilde, x_prop)
        - proposal_log_density(kernel, x_tilde, x_prop);
    let bwd = -energy_prev + kernel.log_density(x_tilde, x_prev)
        - proposal_log_density(kernel, x_tilde, x_prev);
    fwd - bwd
}

fn mh_propose(prev: &ChainState, dp: &DenoisingPosterior<'_>, eps: &[f64]) -> (ChainState, f64) {
    let kernel = dp.kernel();
    let (a, s) = (kernel.alpha(), kernel.sigma());
    let x_prop: Vec<f64> = dp
        .x_tilde()
        .iter()
        .zip(eps)
        .map(|(t, e)| t / a + s / a * e)
        .collect();
    let proposal = ChainState::new(dp.base(), &x_prop);
    let log_ratio = mh_init_log_ratio(kernel, dp.x_tilde(), &prev.x, prev.energy, &proposal.x, proposal.energy);
    (proposal, log_ratio)
}

fn mh_select(prev: &ChainState, proposal: ChainState, accepted: bool) -> MhInit {
    MhInit {
        state: if accepted { proposal } else { prev.clone() },
        accepted,
    }
}

/// Metropolis initialization with an explicit proposal noise `eps` and
/// log-uniform `log_u`; `x' = x̃/α + (σ/α)·eps`. One oracle call.
pub fn digs_mh_init_with(
    prev: &ChainState,
    dp: &DenoisingPosterior<'_>,
    eps: &[f64],
    log_u: f64,
) -> MhInit {
    let (proposal, log_ratio) = mh_propose(prev, dp, eps);
    mh_select(prev, proposal, log_ratio >= 0.0 || log_u < log_ratio)
}

/// Metropolis initialization drawing the proposal from `rng`.
pub fn digs_mh_init(prev: &ChainState, dp: &DenoisingPosterior<'_>, rng: &mut ChainRng) -> MhInit {
    let mut eps = vec![0.0; prev.x.len()];
    fill_standard_normal(rng, &mut eps);
    let (proposal, log_ratio) = mh_propose(prev, dp, &eps);
    let accepted = metropolis_accept(rng, log_ratio);
    mh_select(prev, proposal, accepted)
}

/// What happened during one sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SweepOutcome {
    /// `Some` only for [`InitStrategy::Mh`].
    pub init_accepted: Option<bool>,
    pub denoise_accepted: usize,
}

/// One Gibbs sweep: corrupt the state with `dp`'s kernel (overwriting its
/// `x̃`), pick the denoising start per `init`, then run `denoise_steps`
/// transitions of `denoiser` on the posterior.
///
/// `state` holds base-target energy and gradient on entry and on exit.
/// Costs `init.calls() + denoise_steps · denoiser.calls_per_step()` oracle
/// calls.
pub fn digs_sweep(
    state: &mut ChainState,
    dp: &mut DenoisingPosterior<'_>,
    denoise_steps: usize,
    init: InitStrategy,
    denoiser: &TransitionKernel,
    rng: &mut ChainRng,
) -> SweepOutcome {
    let x_tilde = corrupt(&state.x, dp.kernel(), rng);
    dp.set_x_tilde(&x_tilde);

    let mut init_accepted = None;
    let mut post = match init {
        InitStrategy::PrevState => to_posterior(dp, state),
        InitStrategy::ScaledNoisy => {
            let a = dp.kernel().alpha();
            let x0: Vec<f64> = x_tilde.iter().map(|t| t / a).collect();
            ChainState::new(dp, &x0)
        }
        InitStrategy::Mh => {
            let mh = digs_mh_init(state, dp, rng);
            init_accepted = Some(mh.accepted);
            to_posterior(dp, &mh.state)
        }
    };

    let mut denoise_accepted = 0;
    for _ in 0..denoise_steps {
        denoise_accepted += denoiser.step(&mut post, dp, rng) as usize;
    }

    // strip the tether to recover the base-target cache
    state.energy = post.energy - dp.tether(&post.x);
    let mut tether_grad = vec![0.0; post.x.len()];
    dp.add_tether_grad(&post.x, &mut tether_grad);
    for ((g, p), t) in state.grad.iter_mut().zip(&post.grad).zip(&tether_grad) {
        *g = p - t;
    }
    state.x = post.x;

    SweepOutcome {
        init_accepted,
        denoise_accepted,
    }
}

fn to_posterior(dp: &DenoisingPosterior<'_>, base: &ChainState) -> ChainState {
    let mut grad = vec![0.0; base.x.len()];
    let energy = dp.from_base(&base.x, base.energy, &base.grad, &mut grad);
    ChainState::from_parts(base.x.clone(), energy, grad)
}

/// Multi-level DiGS. For every kept sample the chain passes through all
/// levels of the schedule coarse to fine, `sweeps` sweeps per level, and
/// the clean state after the last sweep is recorded; the chain then
/// continues from it.
#[derive(Clone, Debug, PartialEq)]
pub struct DigsSampler {
    config: DigsConfig,
    schedule: NoiseSchedule,
}

impl DigsSampler {
    pub fn new(config: DigsConfig) -> Result<Self> {
        let schedule = config.validate()?;
        Ok(Self { config, schedule })
    }

    pub fn config(&self) -> &DigsConfig {
        &self.config
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }
}

impl Sampler for DigsSampler {
    fn name(&self) -> &str {
        "digs"
    }

    fn validate(&self, _dim: usize) -> Result<()> {
        self.config.validate().map(|_| ())
    }

    fn setup_calls(&self) -> u64 {
        1
    }

    fn calls_per_sample(&self) -> u64 {
        let c = &self.config;
        let per_sweep = c.init.calls() + c.denoise_steps as u64 * c.denoiser.calls_per_step();
        self.schedule.len() as u64 * c.sweeps as u64 * per_sweep
    }

    fn run_chain(
        &self,
        target: &dyn EnergyTarget,
        x0: &[f64],
        n_samples: usize,
        rng: &mut ChainRng,
    ) -> ChainOutput {
        let c = &self.config;
        let mut state = ChainState::new(target, x0);
        let mut posteriors: Vec<DenoisingPosterior<'_>> = self
            .schedule
            .levels()
            .iter()
            .map(|k| DenoisingPosterior::new(target, *k, x0.to_vec()).expect("dimension checked by x0"))
            .collect();
        let levels = posteriors.len();
        let label = |i: usize, what: &str| {
            if levels == 1 {
                what.to_string()
            } else {
                format!("{what}[level {}]", levels - i)
            }
        };
        let mut init_stats: Vec<AcceptanceStat> = (0..levels).map(|i| AcceptanceStat::new(label(i, "mh_init"))).collect();
        let mut denoise_stats: Vec<AcceptanceStat> = (0..levels)
            .map(|i| AcceptanceStat::new(label(i, c.denoiser.name())))
            .collect();

        let mut samples = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            for (i, dp) in posteriors.iter_mut().enumerate() {
                for _ in 0..c.sweeps {
                    let out = digs_sweep(&mut state, dp, c.denoise_steps, c.init, &c.denoiser, rng);
                    if let Some(acc) = out.init_accepted {
                        init_stats[i].record(acc);
                    }
                    denoise_stats[i].accepted += out.denoise_accepted as u64;
                    denoise_stats[i].proposed += c.denoise_steps as u64;
                }
            }
            samples.push(state.point());
        }

        let mut acceptance = Vec::new();
        if c.init == InitStrategy::Mh {
            acceptance.extend(init_stats);
        }
        acceptance.extend(denoise_stats);
        ChainOutput { samples, acceptance }
    }
}
