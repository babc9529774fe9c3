use serde::Serialize;

use super::{ChainState, TransitionKernel};
use crate::error::{invalid, Result};
use crate::rng::stream;
use crate::targets::{EnergyTarget, EvalCounts};

/// Outcome of [`tune_step_size`].
#[derive(Clone, Debug, Serialize)]
pub struct TuneResult {
    pub kernel: TransitionKernel,
    /// Acceptance of the last pilot run.
    pub acceptance: f64,
    pub converged: bool,
    pub pilots: usize,
    /// Oracle calls spent tuning; not part of any sampling budget.
    pub evals: EvalCounts,
}

const MAX_PILOTS: usize = 40;
const LOG_STEP_RANGE: (f64, f64) = (-30.0, 5.0);

/// Bisects `ln(step size)` until a pilot run of `pilot_steps` transitions
/// from `x0` accepts at `target_rate ± tolerance`. Every pilot reuses the
/// stream of `seed`. Not meaningful for ULA, which always accepts.
pub fn tune_step_size(
    kernel: &TransitionKernel,
    target: &dyn EnergyTarget,
    x0: &[f64],
    target_rate: f64,
    tolerance: f64,
    pilot_steps: usize,
    seed: u64,
) -> Result<TuneResult> {
    if matches!(kernel, TransitionKernel::Ula { .. }) {
        return Err(invalid("kernel", "ULA has no acceptance rate to tune"));
    }
    if pilot_steps == 0 {
        return Err(invalid("pilot_steps", "must be at least 1"));
    }
    kernel.validate()?;
    let before = target.evals();
    let pilot = |step: f64| {
        let k = kernel.with_step_size(step);
        let mut rng = stream(seed, 0);
        let mut state = ChainState::new(target, x0);
        let accepted = (0..pilot_steps).filter(|_| k.step(&mut state, target, &mut rng)).count();
        accepted as f64 / pilot_steps as f64
    };

    let (mut lo, mut hi) = LOG_STEP_RANGE;
    let mut log_step = kernel.step_size().ln().clamp(lo, hi);
    let mut rate = pilot(log_step.exp());
    let mut pilots = 1;
    while (rate - target_rate).abs() > tolerance && pilots < MAX_PILOTS {
        if rate > target_rate {
            lo = log_step;
        } else {
            hi = log_step;
        }
        log_step = 0.5 * (lo + hi);
        rate = pilot(log_step.exp());
        pilots += 1;
    }
    Ok(TuneResult {
        kernel: kernel.with_step_size(log_step.exp()),
        acceptance: rate,
        converged: (rate - target_rate).abs() <= tolerance,
        pilots,
        evals: target.evals() - before,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::MixtureOfGaussians;

    #[test]
    fn mala_hits_target_rate() {
        let t = MixtureOfGaussians::standard_normal(5);
        let k = TransitionKernel::Mala { step_size: 1e-3 };
        let r = tune_step_size(&k, &t, &[0.0; 5], 0.574, 0.05, 2000, 1).unwrap();
        assert!(r.converged, "{r:?}");
        assert!((r.acceptance - 0.574).abs() <= 0.05);
        assert_eq!(r.evals.calls, r.pilots as u64 * 2001);
    }

    #[test]
    fn ula_is_rejected() {
        let t = MixtureOfGaussians::standard_normal(1);
        let k = TransitionKernel::Ula { step_size: 0.1 };
        assert!(tune_step_size(&k, &t, &[0.0], 0.5, 0.05, 10, 0).is_err());
    }
}
