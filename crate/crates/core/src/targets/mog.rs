use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};

use super::{check_point, EnergyTarget, EvalCounter, Point};
use crate::error::{check_dim, invalid, Error, Result};
use crate::kernels::ConvolutionKernel;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Mixture of isotropic Gaussians with the normalized density
/// `p(x) = Σ_i w_i N(x | μ_i, σ_i² I)`.
#[derive(Clone, Debug)]
pub struct MixtureOfGaussians {
    dim: usize,
    weights: Vec<f64>,
    /// Row-major `n_components × dim`.
    means: Vec<f64>,
    stddevs: Vec<f64>,
    /// `log w_i − (d/2) log(2π σ_i²)`
    log_norm: Vec<f64>,
    inv_var: Vec<f64>,
    counter: EvalCounter,
}

impl MixtureOfGaussians {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, stddevs: Vec<f64>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::Empty("mixture components"));
        }
        if means.len() != k || stddevs.len() != k {
            return Err(invalid(
                "mixture",
                format!(
                    "{} weights, {} means and {} stddevs",
                    k,
                    means.len(),
                    stddevs.len()
                ),
            ));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(invalid("weights", "all weights must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid("weights", format!("sum to {total}, not 1")));
        }
        if stddevs.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(invalid("stddevs", "all stddevs must be positive"));
        }
        let dim = means[0].len();
        if dim == 0 {
            return Err(Error::Empty("mean coordinates"));
        }
        let mut flat = Vec::with_capacity(k * dim);
        for m in &means {
            check_point(dim, m)?;
            flat.extend_from_slice(m);
        }
        let log_norm = weights
            .iter()
            .zip(&stddevs)
            .map(|(w, s)| w.ln() - 0.5 * dim as f64 * (LN_2PI + 2.0 * s.ln()))
            .collect();
        let inv_var = stddevs.iter().map(|s| 1.0 / (s * s)).collect();
        Ok(Self {
            dim,
            weights,
            means: flat,
            stddevs,
            log_norm,
            inv_var,
            counter: EvalCounter::new(),
        })
    }

    /// Equal weights and a shared standard deviation.
    pub fn equal_weights(means: Vec<Vec<f64>>, stddev: f64) -> Result<Self> {
        let k = means.len();
        if k == 0 {
            return Err(Error::Empty("mixture components"));
        }
        Self::new(vec![1.0 / k as f64; k], means, vec![stddev; k])
    }

    pub fn standard_normal(dim: usize) -> Self {
        Self::new(vec![1.0], vec![vec![0.0; dim]], vec![1.0]).expect("valid standard normal")
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn stddevs(&self) -> &[f64] {
        &self.stddevs
    }

    pub fn mean(&self, i: usize) -> &[f64] {
        &self.means[i * self.dim..(i + 1) * self.dim]
    }

    pub fn means(&self) -> Vec<Point> {
        (0..self.n_components())
            .map(|i| Point::from_vec_unchecked(self.mean(i).to_vec()))
            .collect()
    }

    fn component_log_terms(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for i in 0..self.n_components() {
            let sq: f64 = self
                .mean(i)
                .iter()
                .zip(x)
                .map(|(m, v)| (v - m) * (v - m))
                .sum();
            out.push(self.log_norm[i] - 0.5 * sq * self.inv_var[i]);
        }
    }

    /// `log p(x)` via max-stabilized log-sum-exp.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut terms = Vec::with_capacity(self.n_components());
        self.component_log_terms(x, &mut terms);
        log_sum_exp(&terms)
    }

    /// Analytic marginal of `x̃ = αx + σε`: means `αμ_i`, variances
    /// `α²σ_i² + σ²`, weights unchanged.
    pub fn convolve(&self, kernel: &ConvolutionKernel) -> Self {
        let (a, s) = (kernel.alpha(), kernel.sigma());
        let means = (0..self.n_components())
            .map(|i| self.mean(i).iter().map(|m| a * m).collect())
            .collect();
        let stddevs = self
            .stddevs
            .iter()
            .map(|sg| (a * a * sg * sg + s * s).sqrt())
            .collect();
        Self::new(self.weights.clone(), means, stddevs).expect("convolution preserves validity")
    }

    /// `E[‖x‖²] = Σ_i w_i (‖μ_i‖² + d σ_i²)`.
    pub fn second_moment(&self) -> f64 {
        (0..self.n_components())
            .map(|i| {
                let m2: f64 = self.mean(i).iter().map(|m| m * m).sum();
                self.weights[i] * (m2 + self.dim as f64 * self.stddevs[i].powi(2))
            })
            .sum()
    }

    /// Ancestral sampling: component by weight, then its Gaussian.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Point> {
        let pick = WeightedIndex::new(&self.weights).expect("weights validated at construction");
        (0..n)
            .map(|_| {
                let i = pick.sample(rng);
                let s = self.stddevs[i];
                let x = self
                    .mean(i)
                    .iter()
                    .map(|m| m + s * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                Point::from_vec_unchecked(x)
            })
            .collect()
    }
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

impl EnergyTarget for MixtureOfGaussians {
    fn dim(&self) -> usize {
        self.dim
    }

    fn counter(&self) -> &EvalCounter {
        &self.counter
    }

    fn compute_energy(&self, x: &[f64]) -> f64 {
        -self.log_density(x)
    }

    fn compute_energy_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let mut terms = Vec::with_capacity(self.n_components());
        self.component_log_terms(x, &mut terms);
        let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        grad.fill(0.0);
        let mut total = 0.0;
        for (i, t) in terms.iter().enumerate() {
            let r = (t - max).exp();
            total += r;
            let scale = r * self.inv_var[i];
            for ((g, v), m) in grad.iter_mut().zip(x).zip(self.mean(i)) {
                *g += scale * (v - m);
            }
        }
        for g in grad.iter_mut() {
            *g /= total;
        }
        -(max + total.ln())
    }
}

/// Checked energy of a mixture at `x`.
pub fn mog_energy(target: &MixtureOfGaussians, x: &[f64]) -> Result<f64> {
    target.try_energy(x)
}

/// Checked gradient of a mixture's energy at `x`.
pub fn mog_grad(target: &MixtureOfGaussians, x: &[f64]) -> Result<Point> {
    check_dim(target.dim(), x.len())?;
    target.try_grad(x)
}
