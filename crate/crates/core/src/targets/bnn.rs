use rand::Rng;
use rand_distr::StandardNormal;

use super::mog::log_sum_exp;
use super::{EnergyTarget, EvalCounter, Point};
use crate::error::{check_dim, invalid, Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Posterior over the weights of a one-hidden-layer ReLU regression network
/// with a Gaussian prior and Gaussian observation noise.
///
/// Parameters are flattened as `[W1 (d_h×d_x), b1 (d_h), W2 (d_y×d_h), b2 (d_y)]`,
/// row-major. Each layer's prior scale is `1/√fan_in`, shared by its biases.
#[derive(Clone, Debug)]
pub struct ToyBnnPosterior {
    d_x: usize,
    d_h: usize,
    d_y: usize,
    inputs: Vec<f64>,
    outputs: Vec<f64>,
    noise_std: f64,
    counter: EvalCounter,
}

impl ToyBnnPosterior {
    pub fn new(
        d_x: usize,
        d_h: usize,
        d_y: usize,
        inputs: Vec<Vec<f64>>,
        outputs: Vec<Vec<f64>>,
        noise_std: f64,
    ) -> Result<Self> {
        if d_x == 0 || d_h == 0 || d_y == 0 {
            return Err(invalid("layer sizes", "all layer sizes must be positive"));
        }
        if inputs.len() != outputs.len() {
            return Err(invalid(
                "data",
                format!("{} inputs but {} outputs", inputs.len(), outputs.len()),
            ));
        }
        if !(noise_std > 0.0 && noise_std.is_finite()) {
            return Err(invalid("noise_std", "must be positive"));
        }
        let mut xs = Vec::with_capacity(inputs.len() * d_x);
        let mut ys = Vec::with_capacity(outputs.len() * d_y);
        for (x, y) in inputs.iter().zip(&outputs) {
            check_dim(d_x, x.len())?;
            check_dim(d_y, y.len())?;
            xs.extend_from_slice(x);
            ys.extend_from_slice(y);
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(invalid("data", "non-finite value"));
        }
        Ok(Self {
            d_x,
            d_h,
            d_y,
            inputs: xs,
            outputs: ys,
            noise_std,
            counter: EvalCounter::new(),
        })
    }

    pub fn n_params(&self) -> usize {
        (self.d_x * self.d_h + self.d_h) + (self.d_h * self.d_y + self.d_y)
    }

    pub fn n_data(&self) -> usize {
        self.outputs.len() / self.d_y
    }

    pub fn layer_sizes(&self) -> (usize, usize, usize) {
        (self.d_x, self.d_h, self.d_y)
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    fn first_layer_len(&self) -> usize {
        self.d_x * self.d_h + self.d_h
    }

    fn prior_std(&self, index: usize) -> f64 {
        if index < self.first_layer_len() {
            1.0 / (self.d_x as f64).sqrt()
        } else {
            1.0 / (self.d_h as f64).sqrt()
        }
    }

    /// Draws a parameter vector from the prior.
    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let theta = (0..self.n_params())
            .map(|j| self.prior_std(j) * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Point::from_vec_unchecked(theta)
    }

    fn forward(&self, theta: &[f64], x: &[f64], pre: &mut [f64], out: &mut [f64]) {
        let (dx, dh, dy) = (self.d_x, self.d_h, self.d_y);
        let (w1, rest) = theta.split_at(dx * dh);
        let (b1, rest) = rest.split_at(dh);
        let (w2, b2) = rest.split_at(dh * dy);
        for h in 0..dh {
            let row = &w1[h * dx..(h + 1) * dx];
            pre[h] = b1[h] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        for k in 0..dy {
            let row = &w2[k * dh..(k + 1) * dh];
            out[k] = b2[k]
                + row
                    .iter()
                    .zip(pre.iter())
                    .map(|(w, p)| w * p.max(0.0))
                    .sum::<f64>();
        }
    }

    /// Network output `f_θ(x)`.
    pub fn predict(&self, theta: &[f64], x: &[f64]) -> Vec<f64> {
        let mut pre = vec![0.0; self.d_h];
        let mut out = vec![0.0; self.d_y];
        self.forward(theta, x, &mut pre, &mut out);
        out
    }

    /// Smallest `|pre-activation|` over the training inputs; small values mean
    /// `θ` sits near a ReLU kink where the gradient is discontinuous.
    pub fn min_abs_preactivation(&self, theta: &[f64]) -> f64 {
        let mut pre = vec![0.0; self.d_h];
        let mut out = vec![0.0; self.d_y];
        let mut min = f64::INFINITY;
        for x in self.inputs.chunks(self.d_x) {
            self.forward(theta, x, &mut pre, &mut out);
            min = pre.iter().fold(min, |m, p| m.min(p.abs()));
        }
        min
    }

    fn prior_energy(&self, theta: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let split = self.first_layer_len();
        let var1 = 1.0 / self.d_x as f64;
        let var2 = 1.0 / self.d_h as f64;
        let mut e = 0.0;
        for (j, t) in theta.iter().enumerate() {
            let var = if j < split { var1 } else { var2 };
            e += 0.5 * (t * t / var + LN_2PI + var.ln());
        }
        if let Some(g) = grad {
            for (j, (gj, t)) in g.iter_mut().zip(theta).enumerate() {
                *gj = t / if j < split { var1 } else { var2 };
            }
        }
        e
    }

    fn likelihood_const(&self) -> f64 {
        0.5 * self.outputs.len() as f64 * (LN_2PI + 2.0 * self.noise_std.ln())
    }
}

impl EnergyTarget for ToyBnnPosterior {
    fn dim(&self) -> usize {
        self.n_params()
    }

    fn counter(&self) -> &EvalCounter {
        &self.counter
    }

    fn compute_energy(&self, theta: &[f64]) -> f64 {
        let mut pre = vec![0.0; self.d_h];
        let mut out = vec![0.0; self.d_y];
        let inv_var = 1.0 / (self.noise_std * self.noise_std);
        let mut e = self.prior_energy(theta, None) + self.likelihood_const();
        for (x, y) in self.inputs.chunks(self.d_x).zip(self.outputs.chunks(self.d_y)) {
            self.forward(theta, x, &mut pre, &mut out);
            e += 0.5 * inv_var * out.iter().zip(y).map(|(f, t)| (f - t).powi(2)).sum::<f64>();
        }
        e
    }

    fn compute_energy_and_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let (dx, dh, dy) = (self.d_x, self.d_h, self.d_y);
        let mut e = self.prior_energy(theta, Some(grad)) + self.likelihood_const();
        let w2 = &theta[self.first_layer_len()..self.first_layer_len() + dh * dy];
        let (g1, g2) = grad.split_at_mut(self.first_layer_len());
        let (gw1, gb1) = g1.split_at_mut(dx * dh);
        let (gw2, gb2) = g2.split_at_mut(dh * dy);

        let inv_var = 1.0 / (self.noise_std * self.noise_std);
        let mut pre = vec![0.0; dh];
        let mut out = vec![0.0; dy];
        let mut delta_h = vec![0.0; dh];
        for (x, y) in self.inputs.chunks(dx).zip(self.outputs.chunks(dy)) {
            self.forward(theta, x, &mut pre, &mut out);
            delta_h.fill(0.0);
            for k in 0..dy {
                let r = out[k] - y[k];
                e += 0.5 * inv_var * r * r;
                let d_out = inv_var * r;
                gb2[k] += d_out;
                for h in 0..dh {
                    gw2[k * dh + h] += d_out * pre[h].max(0.0);
                    delta_h[h] += d_out * w2[k * dh + h];
                }
            }
            for h in 0..dh {
                if pre[h] > 0.0 {
                    let d = delta_h[h];
                    gb1[h] += d;
                    for (gw, xv) in gw1[h * dx..(h + 1) * dx].iter_mut().zip(x) {
                        *gw += d * xv;
                    }
                }
            }
        }
        e
    }
}

/// A synthetic regression task: a training posterior plus held-out data
/// generated from a ground-truth network drawn from the prior.
#[derive(Clone, Debug)]
pub struct BnnProblem {
    pub posterior: ToyBnnPosterior,
    pub test_inputs: Vec<Vec<f64>>,
    pub test_outputs: Vec<Vec<f64>>,
    pub theta_star: Point,
}

impl BnnProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn generate<R: Rng + ?Sized>(
        d_x: usize,
        d_h: usize,
        d_y: usize,
        n_train: usize,
        n_test: usize,
        noise_std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let template = ToyBnnPosterior::new(d_x, d_h, d_y, vec![], vec![], noise_std)?;
        let theta_star = template.sample_prior(rng);
        let mut draw = |n: usize| {
            let xs: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d_x).map(|_| rng.sample(StandardNormal)).collect())
                .collect();
            let ys: Vec<Vec<f64>> = xs
                .iter()
                .map(|x| {
                    template
                        .predict(&theta_star, x)
                        .into_iter()
                        .map(|f| f + noise_std * rng.sample::<f64, _>(StandardNormal))
                        .collect()
                })
                .collect();
            (xs, ys)
        };
        let (train_x, train_y) = draw(n_train);
        let (test_x, test_y) = draw(n_test);
        Ok(Self {
            posterior: ToyBnnPosterior::new(d_x, d_h, d_y, train_x, train_y, noise_std)?,
            test_inputs: test_x,
            test_outputs: test_y,
            theta_star,
        })
    }

    /// Mean negative log predictive density on the test set, where the
    /// predictive is the equal-weight mixture of the per-sample likelihoods.
    pub fn predictive_nll(&self, samples: &[Point]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::Empty("posterior samples"));
        }
        if self.test_inputs.is_empty() {
            return Err(Error::Empty("test set"));
        }
        let post = &self.posterior;
        for s in samples {
            check_dim(post.n_params(), s.dim())?;
        }
        let s2 = post.noise_std * post.noise_std;
        let log_s = (samples.len() as f64).ln();
        let mut total = 0.0;
        let mut terms = Vec::with_capacity(samples.len());
        for (x, y) in self.test_inputs.iter().zip(&self.test_outputs) {
            terms.clear();
            for theta in samples {
                let f = post.predict(theta, x);
                let ll: f64 = f
                    .iter()
                    .zip(y)
                    .map(|(fk, yk)| -0.5 * ((fk - yk).powi(2) / s2 + LN_2PI + s2.ln()))
                    .sum();
                terms.push(ll);
            }
            total -= log_sum_exp(&terms) - log_s;
        }
        Ok(total / self.test_inputs.len() as f64)
    }
}

/// Checked joint energy and gradient of a network posterior.
pub fn bnn_energy_and_grad(target: &ToyBnnPosterior, theta: &[f64]) -> Result<(f64, Point)> {
    super::check_point(target.n_params(), theta)?;
    let mut g = vec![0.0; target.n_params()];
    let e = target.energy_and_grad(theta, &mut g);
    Ok((e, Point::from_vec_unchecked(g)))
}
