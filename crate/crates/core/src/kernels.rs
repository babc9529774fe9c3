//! Gaussian convolution kernels `p(x̃|x) = N(x̃ | αx, σ²I)`, variance-preserving
//! schedules, and the denoising posterior `p(x|x̃)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Result};
use crate::rng::fill_standard_normal;
use crate::targets::{check_point, EnergyTarget, EvalCounter, Point};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Largest contraction factor accepted by [`ConvolutionKernel::new_extended`].
pub const EXTENDED_ALPHA_MAX: f64 = 5.0;
/// Largest noise scale accepted by [`ConvolutionKernel::new_extended`].
pub const EXTENDED_SIGMA_MAX: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionKernel {
    alpha: f64,
    sigma: f64,
}

impl ConvolutionKernel {
    /// Standard domain: `0 < α ≤ 1`, `σ > 0`.
    pub fn new(alpha: f64, sigma: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(invalid("alpha", format!("{alpha} outside (0, 1]")));
        }
        Self::check_sigma(sigma)?;
        Ok(Self { alpha, sigma })
    }

    /// Sweep domain: `0 < α ≤ 5`, `0 < σ ≤ 20`. Check
    /// [`is_extended`](Self::is_extended) to flag results from outside the
    /// standard domain.
    pub fn new_extended(alpha: f64, sigma: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= EXTENDED_ALPHA_MAX) {
            return Err(invalid(
                "alpha",
                format!("{alpha} outside (0, {EXTENDED_ALPHA_MAX}]"),
            ));
        }
        Self::check_sigma(sigma)?;
        if sigma > EXTENDED_SIGMA_MAX {
            return Err(invalid(
                "sigma",
                format!("{sigma} outside (0, {EXTENDED_SIGMA_MAX}]"),
            ));
        }
        Ok(Self { alpha, sigma })
    }

    fn check_sigma(sigma: f64) -> Result<()> {
        if sigma > 0.0 && sigma.is_finite() {
            Ok(())
        } else {
            Err(invalid("sigma", format!("{sigma} must be positive")))
        }
    }

    /// Variance-preserving kernel `(α, √(1−α²))`.
    pub fn variance_preserving(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid("alpha", format!("{alpha} outside (0, 1)")));
        }
        Self::new(alpha, (1.0 - alpha * alpha).sqrt())
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn is_extended(&self) -> bool {
        self.alpha > 1.0
    }

    /// `log N(x̃ | αx, σ²I)`.
    pub fn log_density(&self, x_tilde: &[f64], x: &[f64]) -> f64 {
        let d = x.len() as f64;
        let sq: f64 = x_tilde
            .iter()
            .zip(x)
            .map(|(t, v)| (self.alpha * v - t).powi(2))
            .sum();
        -0.5 * sq / (self.sigma * self.sigma) - 0.5 * d * (LN_2PI + 2.0 * self.sigma.ln())
    }
}

/// `x̃ = αx + σε` with `ε ~ N(0, I)` from `rng`.
pub fn corrupt<R: Rng + ?Sized>(x: &[f64], kernel: &ConvolutionKernel, rng: &mut R) -> Point {
    let mut eps = vec![0.0; x.len()];
    fill_standard_normal(rng, &mut eps);
    corrupt_with_noise(x, kernel, &eps)
}

/// `x̃ = αx + σε` for a given `ε`.
pub fn corrupt_with_noise(x: &[f64], kernel: &ConvolutionKernel, eps: &[f64]) -> Point {
    debug_assert_eq!(x.len(), eps.len());
    Point::from_vec_unchecked(
        x.iter()
            .zip(eps)
            .map(|(v, e)| kernel.alpha * v + kernel.sigma * e)
            .collect(),
    )
}

/// Posterior mean from the noisy score: `μ(x̃) = (x̃ + σ²∇log p(x̃)) / α`.
pub fn tweedie_mean(
    noisy_score: &[f64],
    x_tilde: &[f64],
    kernel: &ConvolutionKernel,
) -> Result<Point> {
    check_dim(x_tilde.len(), noisy_score.len())?;
    if kernel.alpha == 0.0 {
        return Err(invalid("alpha", "Tweedie mean needs alpha > 0"));
    }
    let s2 = kernel.sigma * kernel.sigma;
    Point::new(
        x_tilde
            .iter()
            .zip(noisy_score)
            .map(|(t, s)| (t + s2 * s) / kernel.alpha)
            .collect(),
    )
}

/// Kernels ordered coarse to fine (`t = T, …, 1`), the order in which they
/// are applied.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    levels: Vec<ConvolutionKernel>,
}

impl NoiseSchedule {
    pub fn single(kernel: ConvolutionKernel) -> Self {
        Self {
            levels: vec![kernel],
        }
    }

    pub fn explicit(levels: Vec<ConvolutionKernel>) -> Result<Self> {
        if levels.is_empty() {
            return Err(invalid("levels", "schedule needs at least one level"));
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[ConvolutionKernel] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Linear VP schedule `α_t = α_T + (α_1 − α_T)(T − t)/(T − 1)`,
/// `σ_t = √(1 − α_t²)`, returned in application order `t = T, …, 1`.
pub fn vp_linear(steps: usize, alpha_1: f64, alpha_t: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(invalid("T", "need at least one level"));
    }
    if !(alpha_1 > 0.0 && alpha_1 < 1.0) {
        return Err(invalid("alpha_1", format!("{alpha_1} outside (0, 1)")));
    }
    if steps == 1 {
        return Ok(NoiseSchedule::single(ConvolutionKernel::variance_preserving(
            alpha_1,
        )?));
    }
    if !(alpha_t > 0.0 && alpha_t < alpha_1) {
        return Err(invalid(
            "alpha_T",
            format!("need 0 < alpha_T < alpha_1, got {alpha_t}"),
        ));
    }
    let span = (steps - 1) as f64;
    let levels = (1..=steps)
        .rev()
        .map(|t| {
            let a = alpha_t + (alpha_1 - alpha_t) * (steps - t) as f64 / span;
            ConvolutionKernel::variance_preserving(a)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NoiseSchedule { levels })
}

/// JSON form of a schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    VpLinear {
        #[serde(rename = "T")]
        steps: usize,
        alpha_1: f64,
        #[serde(rename = "alpha_T")]
        alpha_t: f64,
    },
    Explicit {
        /// `[alpha, sigma]` pairs, coarsest first.
        levels: Vec<[f64; 2]>,
    },
}

impl ScheduleSpec {
    pub fn single(alpha: f64, sigma: f64) -> Self {
        ScheduleSpec::Explicit {
            levels: vec![[alpha, sigma]],
        }
    }

    /// Builds the schedule. With `allow_extended`, explicit levels may use
    /// the sweep domain of [`ConvolutionKernel::new_extended`].
    pub fn build(&self, allow_extended: bool) -> Result<NoiseSchedule> {
        match self {
            ScheduleSpec::VpLinear {
                steps,
                alpha_1,
                alpha_t,
            } => vp_linear(*steps, *alpha_1, *alpha_t),
            ScheduleSpec::Explicit { levels } => NoiseSchedule::explicit(
                levels
                    .iter()
                    .map(|[a, s]| {
                        if allow_extended {
                            ConvolutionKernel::new_extended(*a, *s)
                        } else {
                            ConvolutionKernel::new(*a, *s)
                        }
                    })
                    .collect::<Result<_>>()?,
            ),
        }
    }
}

/// `p(x|x̃) ∝ exp(−E(x) − ‖αx − x̃‖²/(2σ²))`.
///
/// Evaluations are charged to the base target; the quadratic tether is free.
pub struct DenoisingPosterior<'a> {
    base: &'a dyn EnergyTarget,
    kernel: ConvolutionKernel,
    x_tilde: Vec<f64>,
    inv_var: f64,
}

impl<'a> DenoisingPosterior<'a> {
    pub fn new(base: &'a dyn EnergyTarget, kernel: ConvolutionKernel, x_tilde: Vec<f64>) -> Result<Self> {
        check_point(base.dim(), &x_tilde)?;
        Ok(Self {
            base,
            kernel,
            x_tilde,
            inv_var: 1.0 / (kernel.sigma * kernel.sigma),
        })
    }

    pub fn kernel(&self) -> &ConvolutionKernel {
        &self.kernel
    }

    pub fn x_tilde(&self) -> &[f64] {
        &self.x_tilde
    }

    pub fn base(&self) -> &'a dyn EnergyTarget {
        self.base
    }

    /// Replaces the conditioning point in place.
    pub fn set_x_tilde(&mut self, x_tilde: &[f64]) {
        debug_assert_eq!(x_tilde.len(), self.x_tilde.len());
        self.x_tilde.copy_from_slice(x_tilde);
    }

    /// `‖αx − x̃‖² / (2σ²)`
    pub fn tether(&self, x: &[f64]) -> f64 {
        let a = self.kernel.alpha;
        0.5 * self.inv_var
            * x.iter()
                .zip(&self.x_tilde)
                .map(|(v, t)| (a * v - t).powi(2))
                .sum::<f64>()
    }

    /// Adds `α(αx − x̃)/σ²` to `grad`.
    pub fn add_tether_grad(&self, x: &[f64], grad: &mut [f64]) {
        let a = self.kernel.alpha;
        for ((g, v), t) in grad.iter_mut().zip(x).zip(&self.x_tilde) {
            *g += a * self.inv_var * (a * v - t);
        }
    }

    /// Posterior energy and gradient from already-known base values; no
    /// evaluation is charged.
    pub fn from_base(&self, x: &[f64], base_energy: f64, base_grad: &[f64], grad: &mut [f64]) -> f64 {
        grad.copy_from_slice(base_grad);
        self.add_tether_grad(x, grad);
        base_energy + self.tether(x)
    }
}

impl EnergyTarget for DenoisingPosterior<'_> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn counter(&self) -> &EvalCounter {
        self.base.counter()
    }

    fn compute_energy(&self, x: &[f64]) -> f64 {
        self.base.compute_energy(x) + self.tether(x)
    }

    fn compute_energy_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let e = self.base.compute_energy_and_grad(x, grad);
        self.add_tether_grad(x, grad);
        e + self.tether(x)
    }
}

/// Checked posterior energy.
pub fn denoising_energy(dp: &DenoisingPosterior<'_>, x: &[f64]) -> Result<f64> {
    dp.try_energy(x)
}

/// Checked posterior score `−∇E(x) − α(αx − x̃)/σ²`.
pub fn denoising_score(dp: &DenoisingPosterior<'_>, x: &[f64]) -> Result<Point> {
    let mut g = dp.try_grad(x)?;
    for v in g.iter_mut() {
        *v = -*v;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::targets::MixtureOfGaussians;

    const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

    #[test]
    fn corrupt_hand_values() {
        let k = ConvolutionKernel::new(0.5, 1.0).unwrap();
        assert_eq!(corrupt_with_noise(&[3.0, -1.0], &k, &[0.0, 0.0]).as_slice(), &[1.5, -0.5]);
        assert_eq!(corrupt_with_noise(&[2.0, 0.0], &k, &[1.0, -1.0]).as_slice(), &[2.0, -1.0]);
    }

    #[test]
    fn corrupt_is_seed_deterministic() {
        let k = ConvolutionKernel::new(0.3, 0.7).unwrap();
        let a = corrupt(&[1.0, 2.0, 3.0], &k, &mut stream(9, 4));
        let b = corrupt(&[1.0, 2.0, 3.0], &k, &mut stream(9, 4));
        assert_eq!(a, b);
    }

    #[test]
    fn corrupt_noise_has_zero_mean() {
        let k = ConvolutionKernel::new(1.0, 1.0).unwrap();
        let mut rng = stream(1, 0);
        let n = 100_000;
        let mut sum = [0.0; 2];
        for _ in 0..n {
            let y = corrupt(&[0.0, 0.0], &k, &mut rng);
            sum[0] += y[0];
            sum[1] += y[1];
        }
        let se = 1.0 / (n as f64).sqrt();
        for s in sum {
            assert!((s / n as f64).abs() < 4.0 * se);
        }
    }

    #[test]
    fn kernel_domains() {
        assert!(ConvolutionKernel::new(0.0, 1.0).is_err());
        assert!(ConvolutionKernel::new(1.5, 1.0).is_err());
        assert!(ConvolutionKernel::new(0.5, 0.0).is_err());
        let k = ConvolutionKernel::new_extended(5.0, 20.0).unwrap();
        assert!(k.is_extended());
        assert!(ConvolutionKernel::new_extended(5.1, 1.0).is_err());
        assert!(ConvolutionKernel::new_extended(1.0, 20.5).is_err());
        assert!(!ConvolutionKernel::new_extended(1.0, 15.0).unwrap().is_extended());
    }

    #[test]
    fn vp_linear_values() {
        let s = vp_linear(5, 0.9, 0.1).unwrap();
        let alphas: Vec<f64> = s.levels().iter().map(|k| k.alpha()).collect();
        for (a, e) in alphas.iter().zip([0.1, 0.3, 0.5, 0.7, 0.9]) {
            assert!((a - e).abs() < 1e-12);
        }
        let two = vp_linear(2, 0.9, 0.1).unwrap();
        assert_eq!(two.levels()[0].alpha(), 0.1);
        assert_eq!(two.levels()[1].alpha(), 0.9);
        assert!((s.levels()[4].sigma() - 0.435_889_894_354_067_4).abs() < 1e-12);
        let one = vp_linear(1, 0.9, 0.1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one.levels()[0].alpha(), 0.9);
    }

    #[test]
    fn vp_linear_rejects_bad_bounds() {
        assert!(vp_linear(0, 0.9, 0.1).is_err());
        assert!(vp_linear(3, 1.0, 0.1).is_err());
        assert!(vp_linear(3, 0.5, 0.6).is_err());
        assert!(vp_linear(3, 0.5, 0.5).is_err());
        assert!(vp_linear(3, 0.9, 0.0).is_err());
    }

    #[test]
    fn schedule_json_forms() {
        let s: ScheduleSpec = serde_json::from_str(r#"{"type":"vp_linear","T":3,"alpha_1":0.9,"alpha_T":0.1}"#).unwrap();
        assert_eq!(s.build(false).unwrap().len(), 3);
        let e: ScheduleSpec = serde_json::from_str(r#"{"type":"explicit","levels":[[2.0,1.0],[1.0,1.0]]}"#).unwrap();
        assert!(e.build(false).is_err());
        let built = e.build(true).unwrap();
        assert!(built.levels()[0].is_extended());
        assert_eq!(serde_json::to_value(&s).unwrap()["T"], 3);
    }

    #[test]
    fn denoising_energy_hand_values() {
        let base = MixtureOfGaussians::standard_normal(1);
        let k = ConvolutionKernel::new(1.0, 1.0).unwrap();
        let dp = DenoisingPosterior::new(&base, k, vec![0.0]).unwrap();
        let e = denoising_energy(&dp, &[1.0]).unwrap();
        assert!((e - HALF_LN_2PI - 1.0).abs() < 1e-12);
        assert_eq!(base.evals().energy, 1);
        let s = denoising_score(&dp, &[1.0]).unwrap();
        assert!((s[0] + 2.0).abs() < 1e-12);
        assert_eq!(base.evals().gradient, 1);
    }

    #[test]
    fn tether_vanishes_at_its_minimum_and_for_huge_sigma() {
        let base = MixtureOfGaussians::standard_normal(2);
        let k = ConvolutionKernel::new(0.4, 0.3).unwrap();
        let dp = DenoisingPosterior::new(&base, k, vec![0.8, -0.2]).unwrap();
        assert_eq!(dp.tether(&[2.0, -0.5]), 0.0);

        let wide = DenoisingPosterior::new(&base, ConvolutionKernel::new(1.0, 1e6).unwrap(), vec![0.0, 0.0]).unwrap();
        let x = [0.6, -0.7];
        assert!((wide.compute_energy(&x) - base.compute_energy(&x)).abs() < 1e-6);
    }

    #[test]
    fn score_is_zero_at_joint_stationary_point() {
        // E has zero gradient at the origin and the tether is minimized there.
        let base = MixtureOfGaussians::standard_normal(1);
        let dp = DenoisingPosterior::new(&base, ConvolutionKernel::new(0.5, 1.0).unwrap(), vec![0.0]).unwrap();
        assert_eq!(denoising_score(&dp, &[0.0]).unwrap()[0], 0.0);
    }

    #[test]
    fn tweedie_hand_values() {
        let k = ConvolutionKernel::new(1.0, 1.0).unwrap();
        assert_eq!(tweedie_mean(&[0.0, 0.0], &[0.3, -2.0], &k).unwrap().as_slice(), &[0.3, -2.0]);
        // N(0,1) target: noisy marginal N(0,2), score at 2 is −1
        let m = tweedie_mean(&[-1.0], &[2.0], &k).unwrap();
        assert!((m[0] - 1.0).abs() < 1e-15);
        assert!(tweedie_mean(&[0.0], &[0.0, 1.0], &k).is_err());
    }

    #[test]
    fn kernel_log_density_is_finite_far_out() {
        let k = ConvolutionKernel::new(0.1, 0.05).unwrap();
        assert!(k.log_density(&[1e3, -1e3], &[-1e3, 1e3]).is_finite());
    }

    #[test]
    fn from_base_matches_fresh_evaluation() {
        let base = MixtureOfGaussians::equal_weights(vec![vec![-1.0, 0.0], vec![2.0, 1.0]], 0.5).unwrap();
        let dp = DenoisingPosterior::new(&base, ConvolutionKernel::new(0.7, 0.6).unwrap(), vec![0.1, 0.4]).unwrap();
        let x = [0.3, -0.2];
        let mut bg = [0.0; 2];
        let be = base.compute_energy_and_grad(&x, &mut bg);
        let mut g1 = [0.0; 2];
        let mut g2 = [0.0; 2];
        let e1 = dp.from_base(&x, be, &bg, &mut g1);
        let e2 = dp.compute_energy_and_grad(&x, &mut g2);
        assert_eq!(e1, e2);
        assert_eq!(g1, g2);
    }
}
