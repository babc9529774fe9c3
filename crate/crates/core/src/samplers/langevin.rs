use rand::Rng;

use super::ChainState;
use crate::rng::fill_standard_normal;
use crate::targets::EnergyTarget;

/// One unadjusted Langevin step `x' = x − η∇E(x) + √(2η)ε` using the cached
/// gradient, followed by one joint evaluation at `x'` to refresh the cache.
pub fn ula_step<R: Rng + ?Sized>(state: &mut ChainState, target: &dyn EnergyTarget, eta: f64, rng: &mut R) {
    let mut eps = vec![0.0; state.x.len()];
    fill_standard_normal(rng, &mut eps);
    ula_step_with(state, target, eta, &eps);
}

/// [`ula_step`] with the Gaussian noise supplied.
pub fn ula_step_with(state: &mut ChainState, target: &dyn EnergyTarget, eta: f64, eps: &[f64]) {
    let scale = (2.0 * eta).sqrt();
    for ((x, g), e) in state.x.iter_mut().zip(&state.grad).zip(eps) {
        *x += -eta * g + scale * e;
    }
    state.energy = target.energy_and_grad(&state.x, &mut state.grad);
}

/// Uncached ULA step on a bare position: one gradient evaluation at `x`,
/// then the move. `grad` is scratch space of the same length.
pub fn ula_move<R: Rng + ?Sized>(
    x: &mut [f64],
    grad: &mut [f64],
    target: &dyn EnergyTarget,
    eta: f64,
    rng: &mut R,
) {
    target.grad(x, grad);
    let scale = (2.0 * eta).sqrt();
    for (xi, g) in x.iter_mut().zip(grad.iter()) {
        let e: f64 = rng.sample(rand_distr::StandardNormal);
        *xi += -eta * g + scale * e;
    }
}

/// `log [exp(−E') q(x|x') / (exp(−E) q(x'|x))]` for the Langevin proposal
/// `q(x'|x) = N(x' | x − η∇E(x), 2ηI)`.
pub fn mala_log_acceptance(
    x: &[f64],
    energy: f64,
    grad: &[f64],
    x_new: &[f64],
    energy_new: f64,
    grad_new: &[f64],
    eta: f64,
) -> f64 {
    let mut fwd = 0.0;
    let mut bwd = 0.0;
    for i in 0..x.len() {
        let f = x_new[i] - x[i] + eta * grad[i];
        let b = x[i] - x_new[i] + eta * grad_new[i];
        fwd += f * f;
        bwd += b * b;
    }
    (energy - energy_new) + (fwd - bwd) / (4.0 * eta)
}

/// One MALA transition. Costs exactly one joint evaluation at the proposal.
pub fn mala_step<R: Rng + ?Sized>(state: &mut ChainState, target: &dyn EnergyTarget, eta: f64, rng: &mut R) -> bool {
    let mut eps = vec![0.0; state.x.len()];
    fill_standard_normal(rng, &mut eps);
    let log_u = {
        let u: f64 = rng.random();
        u.ln()
    };
    mala_step_with(state, target, eta, &eps, log_u)
}

/// [`mala_step`] with the proposal noise and `log u` supplied.
pub fn mala_step_with(
    state: &mut ChainState,
    target: &dyn EnergyTarget,
    eta: f64,
    eps: &[f64],
    log_u: f64,
) -> bool {
    let scale = (2.0 * eta).sqrt();
    let proposal: Vec<f64> = state
        .x
        .iter()
        .zip(&state.grad)
        .zip(eps)
        .map(|((x, g), e)| x - eta * g + scale * e)
        .collect();
    let mut grad_new = vec![0.0; proposal.len()];
    let energy_new = target.energy_and_grad(&proposal, &mut grad_new);
    let log_ratio = mala_log_acceptance(
        &state.x,
        state.energy,
        &state.grad,
        &proposal,
        energy_new,
        &grad_new,
        eta,
    );
    if log_u < log_ratio {
        state.x = proposal;
        state.energy = energy_new;
        state.grad = grad_new;
        true
    } else {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::targets::MixtureOfGaussians;

    #[test]
    fn ula_zero_noise_hand_value() {
        let t = MixtureOfGaussians::standard_normal(1);
        let mut s = ChainState::new(&t, &[1.0]);
        ula_step_with(&mut s, &t, 0.1, &[0.0]);
        assert!((s.x[0] - 0.9).abs() < 1e-15);
        assert!((s.grad[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn ula_fixed_point_without_noise() {
        let t = MixtureOfGaussians::standard_normal(2);
        let mut s = ChainState::new(&t, &[0.0, 0.0]);
        ula_step_with(&mut s, &t, 0.3, &[0.0, 0.0]);
        assert_eq!(s.x, vec![0.0, 0.0]);
    }

    #[test]
    fn ula_long_run_variance() {
        // 10⁵ steps at η = 1e-3 cover ~100 autocorrelation times, too few
        // for a ±0.1 band on the variance; 10⁷ steps bring the standard
        // error to about 0.015
        let t = MixtureOfGaussians::standard_normal(1);
        let mut rng = stream(2, 0);
        let mut s = ChainState::new(&t, &[0.0]);
        let n = 10_000_000;
        let (mut m1, mut m2) = (0.0, 0.0);
        for _ in 0..n {
            ula_step(&mut s, &t, 1e-3, &mut rng);
            m1 += s.x[0];
            m2 += s.x[0] * s.x[0];
        }
        let mean = m1 / n as f64;
        let var = m2 / n as f64 - mean * mean;
        assert!((0.9..=1.1).contains(&var), "var {var}");
    }

    #[test]
    fn ula_move_costs_one_gradient() {
        let t = MixtureOfGaussians::standard_normal(3);
        let mut x = vec![1.0, 2.0, 3.0];
        let mut g = vec![0.0; 3];
        ula_move(&mut x, &mut g, &t, 0.01, &mut stream(0, 0));
        let c = t.evals();
        assert_eq!((c.energy, c.gradient, c.calls), (0, 1, 1));
    }

    #[test]
    fn mala_identity_proposal_accepts_with_probability_one() {
        let t = MixtureOfGaussians::equal_weights(vec![vec![-2.0], vec![1.0]], 0.7).unwrap();
        let s = ChainState::new(&t, &[0.4]);
        let eta = 0.05;
        // ε chosen so that x' = x
        let eps = [eta * s.grad[0] / (2.0 * eta).sqrt()];
        let mut moved = s.clone();
        let accepted = mala_step_with(&mut moved, &t, eta, &eps, -1e-300);
        assert!(accepted);
        let r = mala_log_acceptance(&s.x, s.energy, &s.grad, &moved.x, moved.energy, &moved.grad, eta);
        assert!(r.abs() < 1e-12, "log ratio {r}");
    }

    #[test]
    fn mala_forced_proposal_hand_oracle() {
        // N(0,1), x = 1, η = 0.1, ε = 0: proposal 0.9.
        // log a = (E(1) − E(0.9)) + (0 − (1 − 0.9 + 0.1·0.9)²)/(0.4)
        //       = 0.095 − 0.0361/0.4 = 0.095 − 0.09025 = 0.00475 > 0
        let t = MixtureOfGaussians::standard_normal(1);
        let s = ChainState::new(&t, &[1.0]);
        let mut m = s.clone();
        let acc = mala_step_with(&mut m, &t, 0.1, &[0.0], 0.0);
        assert!(acc);
        assert!((m.x[0] - 0.9).abs() < 1e-15);
        let r = mala_log_acceptance(&s.x, s.energy, &s.grad, &m.x, m.energy, &m.grad, 0.1);
        assert!((r - 0.00475).abs() < 1e-12, "log ratio {r}");
    }

    #[test]
    fn mala_rejection_keeps_state_and_costs_one_call() {
        let t = MixtureOfGaussians::standard_normal(2);
        let mut s = ChainState::new(&t, &[0.1, 0.2]);
        let before = s.clone();
        let c0 = t.evals().calls;
        let acc = mala_step_with(&mut s, &t, 0.5, &[5.0, 5.0], 0.0);
        assert!(!acc);
        assert_eq!(s, before);
        assert_eq!(t.evals().calls - c0, 1);
    }
}
