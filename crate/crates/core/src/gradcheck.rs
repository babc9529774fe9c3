//! Central finite-difference gradient checking.
//!
//! Uses only uncounted energy evaluations, so checking a target does not
//! disturb its budget counters.

use crate::targets::EnergyTarget;

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DENOMINATOR_FLOOR: f64 = 1e-8;

/// Central-difference estimate of `∇E(x)`.
pub fn finite_difference_gradient(target: &dyn EnergyTarget, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|j| {
            probe[j] = x[j] + step;
            let up = target.compute_energy(&probe);
            probe[j] = x[j] - step;
            let down = target.compute_energy(&probe);
            probe[j] = x[j];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// `max_j |g_j − fd_j| / max(max_j |fd_j|, floor)` between the analytic
/// gradient and its central-difference estimate.
pub fn gradient_relative_error(target: &dyn EnergyTarget, x: &[f64]) -> f64 {
    let mut analytic = vec![0.0; x.len()];
    target.compute_energy_and_grad(x, &mut analytic);
    let fd = finite_difference_gradient(target, x, DEFAULT_STEP);
    let diff = analytic
        .iter()
        .zip(&fd)
        .map(|(a, f)| (a - f).abs())
        .fold(0.0, f64::max);
    let scale = fd.iter().map(|f| f.abs()).fold(0.0, f64::max);
    diff / scale.max(DENOMINATOR_FLOOR)
}
