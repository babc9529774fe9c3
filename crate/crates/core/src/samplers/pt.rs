use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{metropolis_accept, AcceptanceStat, ChainOutput, ChainState, Sampler, TransitionKernel};
use crate::error::{invalid, Result};
use crate::rng::{stream, ChainRng};
use crate::targets::{EnergyTarget, TemperedTarget};

fn one() -> usize {
    1
}

/// Replica exchange over a temperature ladder `τ_1 = 1 < τ_2 < … < τ_C`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PtConfig {
    pub temperatures: Vec<f64>,
    /// Kernel run on every tempered chain.
    pub inner: TransitionKernel,
    /// Inner transitions per chain between kept samples.
    pub steps_per_sample: usize,
    /// Inner transitions between swap rounds.
    #[serde(default = "one")]
    pub swap_every: usize,
}

impl PtConfig {
    /// Five-chain ladder, logarithmically spaced from 1 to 1000.
    pub const DEFAULT_LADDER: [f64; 5] = [1.0, 5.62, 31.62, 177.83, 1000.0];

    pub fn validate(&self) -> Result<()> {
        let t = &self.temperatures;
        if t.is_empty() {
            return Err(invalid("temperatures", "ladder is empty"));
        }
        if t[0] != 1.0 {
            return Err(invalid("temperatures", "the first temperature must be 1"));
        }
        if t.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(invalid("temperatures", "ladder must be strictly increasing"));
        }
        if self.steps_per_sample == 0 || self.swap_every == 0 {
            return Err(invalid("steps_per_sample/swap_every", "must be at least 1"));
        }
        self.inner.validate()
    }
}

/// `log min{1, ·}` argument for exchanging the states of two replicas at
/// inverse temperatures `β_i`, `β_j` with untempered energies `E_i`, `E_j`.
pub fn swap_log_acceptance(beta_i: f64, beta_j: f64, energy_i: f64, energy_j: f64) -> f64 {
    (beta_i - beta_j) * (energy_i - energy_j)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PtSampler(pub PtConfig);

impl PtSampler {
    fn swap(states: &mut [ChainState], betas: &[f64], i: usize) {
        let (lo, hi) = states.split_at_mut(i + 1);
        let (a, b) = (&mut lo[i], &mut hi[0]);
        std::mem::swap(a, b);
        // caches hold β·E; rescale to the new owner's temperature
        let ra = betas[i] / betas[i + 1];
        a.energy *= ra;
        a.grad.iter_mut().for_each(|g| *g *= ra);
        let rb = betas[i + 1] / betas[i];
        b.energy *= rb;
        b.grad.iter_mut().for_each(|g| *g *= rb);
    }
}

impl Sampler for PtSampler {
    fn name(&self) -> &str {
        "pt"
    }

    fn validate(&self, _dim: usize) -> Result<()> {
        self.0.validate()
    }

    fn setup_calls(&self) -> u64 {
        self.0.temperatures.len() as u64
    }

    fn calls_per_sample(&self) -> u64 {
        self.0.temperatures.len() as u64 * self.0.steps_per_sample as u64 * self.0.inner.calls_per_step()
    }

    fn run_chain(
        &self,
        target: &dyn EnergyTarget,
        x0: &[f64],
        n_samples: usize,
        rng: &mut ChainRng,
    ) -> ChainOutput {
        let cfg = &self.0;
        let n_chains = cfg.temperatures.len();
        let betas: Vec<f64> = cfg.temperatures.iter().map(|t| 1.0 / t).collect();
        let tempered: Vec<TemperedTarget<'_>> = betas
            .iter()
            .map(|b| TemperedTarget::new(target, *b).expect("validated ladder"))
            .collect();
        let sub_seed: u64 = rng.random();
        let mut rngs: Vec<ChainRng> = (0..n_chains as u64).map(|c| stream(sub_seed, c)).collect();
        let mut swap_rng = stream(sub_seed, n_chains as u64);
        let mut states: Vec<ChainState> = tempered.iter().map(|t| ChainState::new(t, x0)).collect();

        let mut inner_stats: Vec<AcceptanceStat> = cfg
            .temperatures
            .iter()
            .map(|t| AcceptanceStat::new(format!("{}[tau={t}]", cfg.inner.name())))
            .collect();
        let mut swap_stats: Vec<AcceptanceStat> = (0..n_chains.saturating_sub(1))
            .map(|i| AcceptanceStat::new(format!("swap[{i}<->{}]", i + 1)))
            .collect();
        let mut round = 0usize;
        let mut samples = Vec::with_capacity(n_samples);

        for _ in 0..n_samples {
            let mut done = 0;
            while done < cfg.steps_per_sample {
                let block = cfg.swap_every.min(cfg.steps_per_sample - done);
                let accepted: Vec<usize> = states
                    .par_iter_mut()
                    .zip(rngs.par_iter_mut())
                    .zip(tempered.par_iter())
                    .map(|((state, r), t)| (0..block).filter(|_| cfg.inner.step(state, t, r)).count())
                    .collect();
                for (stat, a) in inner_stats.iter_mut().zip(accepted) {
                    stat.accepted += a as u64;
                    stat.proposed += block as u64;
                }
                done += block;

                let mut i = round % 2;
                while i + 1 < n_chains {
                    let e_i = states[i].energy / betas[i];
                    let e_j = states[i + 1].energy / betas[i + 1];
                    let ok = metropolis_accept(
                        &mut swap_rng,
                        swap_log_acceptance(betas[i], betas[i + 1], e_i, e_j),
                    );
                    swap_stats[i].record(ok);
                    if ok {
                        Self::swap(&mut states, &betas, i);
                    }
                    i += 2;
                }
                round += 1;
            }
            samples.push(states[0].point());
        }
        inner_stats.extend(swap_stats);
        ChainOutput {
            samples,
            acceptance: inner_stats,
        }
    }
}
