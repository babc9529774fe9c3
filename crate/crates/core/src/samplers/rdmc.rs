//! Reverse diffusion Monte Carlo: integrate the reverse Ornstein–Uhlenbeck
//! process with a noisy score estimated from nested posterior samples.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ula_move, AcceptanceStat, ChainOutput, Sampler};
use crate::error::{invalid, Result};
use crate::kernels::{ConvolutionKernel, DenoisingPosterior};
use crate::rng::{fill_standard_normal, ChainRng};
use crate::targets::{EnergyTarget, Point};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RdmcConfig {
    /// Reverse-time steps `T`.
    pub steps: usize,
    /// Total diffusion time `Γ`.
    pub gamma: f64,
    /// Posterior samples per score estimate `K`.
    pub posterior_samples: usize,
    /// ULA steps per posterior sample, and after the reverse pass.
    pub ula_steps: usize,
    pub ula_step_size: f64,
    /// Importance-sampling proposals per posterior sample.
    pub is_samples: usize,
}

impl RdmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.posterior_samples == 0 || self.ula_steps == 0 || self.is_samples == 0 {
            return Err(invalid("rdmc", "steps, posterior_samples, ula_steps and is_samples must be positive"));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(invalid("gamma", format!("{} must be positive", self.gamma)));
        }
        if !(self.ula_step_size > 0.0 && self.ula_step_size.is_finite()) {
            return Err(invalid("ula_step_size", format!("{} must be positive", self.ula_step_size)));
        }
        Ok(())
    }

    /// `(a_t, σ_t)` for reverse step `t = 0, …, T−1`, with
    /// `a_t = exp(−(Γ − tη))`, `η = Γ/T`, `σ_t = √(1 − a_t²)`.
    pub fn level(&self, t: usize) -> (f64, f64) {
        let eta = self.gamma / self.steps as f64;
        let a = (-(self.gamma - t as f64 * eta)).exp();
        (a, (1.0 - a * a).sqrt())
    }
}

/// Noisy score from posterior samples of `x₀ | x_t`: `(a·μ̂ − x_t)/σ²`
/// with `μ̂` their mean.
pub fn rdmc_score_estimate(posterior_samples: &[Vec<f64>], x_t: &[f64], kernel: &ConvolutionKernel) -> Vec<f64> {
    let k = posterior_samples.len() as f64;
    let (a, s2) = (kernel.alpha(), kernel.sigma() * kernel.sigma());
    (0..x_t.len())
        .map(|i| {
            let mean = posterior_samples.iter().map(|p| p[i]).sum::<f64>() / k;
            (a * mean - x_t[i]) / s2
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdmcSampler(pub RdmcConfig);

impl RdmcSampler {
    /// One posterior draw: importance resampling from `N(x_t/a, σ²/a² I)`
    /// weighted by the posterior, then ULA.
    fn posterior_sample(&self, dp: &DenoisingPosterior<'_>, rng: &mut ChainRng) -> Vec<f64> {
        let cfg = &self.0;
        let kernel = dp.kernel();
        let (a, s) = (kernel.alpha(), kernel.sigma());
        let d = dp.x_tilde().len();
        let mut eps = vec![0.0; d];
        let mut best: Option<(Vec<f64>, f64)> = None;
        let mut log_total = f64::NEG_INFINITY;
        // streaming categorical draw over proposals with weight ∝ exp(−E);
        // the kernel/proposal density ratio is constant
        for _ in 0..cfg.is_samples {
            fill_standard_normal(rng, &mut eps);
            let x: Vec<f64> = dp.x_tilde().iter().zip(&eps).map(|(t, e)| (t + s * e) / a).collect();
            let log_w = -dp.base().energy(&x);
            let u: f64 = rng.random();
            let new_total = log_add(log_total, log_w);
            if !log_w.is_finite() {
                continue;
            }
            if u.ln() < log_w - new_total || best.is_none() {
                best = Some((x, log_w));
            }
            log_total = new_total;
        }
        let mut x = best.map(|(x, _)| x).unwrap_or_else(|| dp.x_tilde().iter().map(|t| t / a).collect());
        let mut grad = vec![0.0; d];
        for _ in 0..cfg.ula_steps {
            ula_move(&mut x, &mut grad, dp, cfg.ula_step_size, rng);
        }
        x
    }

    fn sample(&self, target: &dyn EnergyTarget, rng: &mut ChainRng) -> Point {
        let cfg = &self.0;
        let d = target.dim();
        let eta = cfg.gamma / cfg.steps as f64;
        let (growth, noise) = (eta.exp(), (2.0 * eta).exp_m1().sqrt());
        let mut x = vec![0.0; d];
        fill_standard_normal(rng, &mut x);
        let mut xi = vec![0.0; d];
        for t in 0..cfg.steps {
            let (a, s) = cfg.level(t);
            let kernel = ConvolutionKernel::new(a, s).expect("a in (0, 1)");
            let dp = DenoisingPosterior::new(target, kernel, x.clone()).expect("matching dimension");
            let inner: Vec<Vec<f64>> = (0..cfg.posterior_samples).map(|_| self.posterior_sample(&dp, rng)).collect();
            let score = rdmc_score_estimate(&inner, &x, &kernel);
            fill_standard_normal(rng, &mut xi);
            for ((v, sc), e) in x.iter_mut().zip(&score).zip(&xi) {
                *v = growth * *v + 2.0 * (growth - 1.0) * sc + noise * e;
            }
        }
        let mut grad = vec![0.0; d];
        for _ in 0..cfg.ula_steps {
            ula_move(&mut x, &mut grad, target, cfg.ula_step_size, rng);
        }
        Point::from_vec_unchecked(x)
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

impl Sampler for RdmcSampler {
    fn name(&self) -> &str {
        "rdmc"
    }

    fn validate(&self, _dim: usize) -> Result<()> {
        self.0.validate()
    }

    fn setup_calls(&self) -> u64 {
        0
    }

    /// `T·K·(L + S) + L`.
    fn calls_per_sample(&self) -> u64 {
        let c = &self.0;
        (c.steps * c.posterior_samples * (c.ula_steps + c.is_samples) + c.ula_steps) as u64
    }

    /// Samples are independent; `x0` is unused.
    fn run_chain(
        &self,
        target: &dyn EnergyTarget,
        _x0: &[f64],
        n_samples: usize,
        rng: &mut ChainRng,
    ) -> ChainOutput {
        ChainOutput {
            samples: (0..n_samples).map(|_| self.sample(target, rng)).collect(),
            acceptance: Vec::<AcceptanceStat>::new(),
        }
    }
}
