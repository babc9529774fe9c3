use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AcceptanceStat, Sampler};
use crate::error::{check_dim, invalid, Result};
use crate::rng::stream;
use crate::targets::{check_point, EnergyTarget, EvalCounts, Point};

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunOptions {
    /// Kept samples in total, split as evenly as possible over the chains.
    pub n_samples: usize,
    /// Independent chains, all started at the same point; chain `c` uses
    /// stream `c` of `seed`.
    #[serde(default = "one")]
    pub n_chains: usize,
    pub seed: u64,
    /// Oracle-call budget; the sample count is cut to fit and the run is
    /// flagged truncated.
    #[serde(default)]
    pub max_calls: Option<u64>,
}

impl RunOptions {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        Self {
            n_samples,
            n_chains: 1,
            seed,
            max_calls: None,
        }
    }
}

/// Outcome of [`run_sampler`].
#[derive(Clone, Debug, Serialize)]
pub struct SamplerRun {
    pub sampler: String,
    #[serde(skip)]
    pub samples: Vec<Point>,
    /// Per-move acceptance, summed over chains.
    pub acceptance: Vec<AcceptanceStat>,
    /// Counter deltas measured on the target.
    pub evals: EvalCounts,
    /// Closed-form call count for the samples actually drawn.
    pub expected_calls: u64,
    pub truncated: bool,
    pub wall_time_s: f64,
}

fn split(n: usize, chains: usize) -> Vec<usize> {
    (0..chains).map(|c| n / chains + usize::from(c < n % chains)).collect()
}

/// Closed-form oracle calls for drawing `n_samples` over `n_chains` chains.
pub fn expected_calls(sampler: &dyn Sampler, n_samples: usize, n_chains: usize) -> u64 {
    split(n_samples, n_chains)
        .into_iter()
        .filter(|&n| n > 0)
        .map(|n| sampler.setup_calls() + n as u64 * sampler.calls_per_sample())
        .sum()
}

/// Largest sample count whose closed-form cost fits in `budget`.
fn samples_within(sampler: &dyn Sampler, wanted: usize, n_chains: usize, budget: u64) -> usize {
    // cost is monotone in n: binary search
    let (mut lo, mut hi) = (0usize, wanted);
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if expected_calls(sampler, mid, n_chains) <= budget {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    lo
}

/// Runs `sampler` on `target` from `x0`. Chains run in parallel; their
/// samples are concatenated in chain order, so the result does not depend
/// on the thread count.
///
/// The measured counter delta covers only this run as long as nothing else
/// evaluates `target` concurrently.
pub fn run_sampler(
    sampler: &dyn Sampler,
    target: &dyn EnergyTarget,
    x0: &[f64],
    opts: &RunOptions,
) -> Result<SamplerRun> {
    check_point(target.dim(), x0)?;
    check_dim(target.dim(), x0.len())?;
    sampler.validate(target.dim())?;
    if opts.n_chains == 0 {
        return Err(invalid("n_chains", "must be at least 1"));
    }
    if opts.n_samples == 0 {
        return Err(invalid("n_samples", "must be at least 1"));
    }
    let n = match opts.max_calls {
        Some(b) => samples_within(sampler, opts.n_samples, opts.n_chains, b),
        None => opts.n_samples,
    };

    let start = Instant::now();
    let before = target.evals();
    let outputs: Vec<_> = split(n, opts.n_chains)
        .into_par_iter()
        .enumerate()
        .map(|(c, n_c)| {
            if n_c == 0 {
                return Default::default();
            }
            let mut rng = stream(opts.seed, c as u64);
            sampler.run_chain(target, x0, n_c, &mut rng)
        })
        .collect();
    let evals = target.evals() - before;
    let wall_time_s = start.elapsed().as_secs_f64();

    let mut samples = Vec::with_capacity(n);
    let mut acceptance: Vec<AcceptanceStat> = Vec::new();
    for out in outputs {
        samples.extend(out.samples);
        for stat in out.acceptance {
            match acceptance.iter_mut().find(|s| s.name == stat.name) {
                Some(s) => s.merge(&stat),
                None => acceptance.push(stat),
            }
        }
    }
    Ok(SamplerRun {
        sampler: sampler.name().to_string(),
        samples,
        acceptance,
        evals,
        expected_calls: expected_calls(sampler, n, opts.n_chains),
        truncated: n < opts.n_samples,
        wall_time_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::{McmcSampler, TransitionKernel};
    use crate::targets::MixtureOfGaussians;

    fn mala() -> McmcSampler {
        McmcSampler {
            kernel: TransitionKernel::Mala { step_size: 0.5 },
            steps_per_sample: 3,
        }
    }

    #[test]
    fn split_is_even() {
        assert_eq!(split(10, 3), vec![4, 3, 3]);
        assert_eq!(split(2, 4), vec![1, 1, 0, 0]);
    }

    #[test]
    fn counts_and_determinism() {
        let t = MixtureOfGaussians::standard_normal(2);
        let opts = RunOptions {
            n_samples: 50,
            n_chains: 4,
            seed: 11,
            max_calls: None,
        };
        let a = run_sampler(&mala(), &t, &[0.0, 0.0], &opts).unwrap();
        assert_eq!(a.evals.calls, a.expected_calls);
        assert_eq!(a.expected_calls, 4 + 50 * 3);
        assert_eq!(a.samples.len(), 50);
        assert_eq!(a.acceptance[0].proposed, 150);
        let b = run_sampler(&mala(), &t, &[0.0, 0.0], &opts).unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn budget_truncates() {
        let t = MixtureOfGaussians::standard_normal(1);
        let opts = RunOptions {
            max_calls: Some(31),
            ..RunOptions::new(100, 0)
        };
        let r = run_sampler(&mala(), &t, &[0.0], &opts).unwrap();
        assert!(r.truncated);
        assert_eq!(r.samples.len(), 10);
        assert_eq!(r.evals.calls, 31);
        let full = run_sampler(&mala(), &t, &[0.0], &RunOptions::new(10, 0)).unwrap();
        assert!(!full.truncated);
    }

    #[test]
    fn rejects_bad_input() {
        let t = MixtureOfGaussians::standard_normal(2);
        assert!(run_sampler(&mala(), &t, &[0.0], &RunOptions::new(5, 0)).is_err());
        assert!(run_sampler(&mala(), &t, &[0.0, f64::NAN], &RunOptions::new(5, 0)).is_err());
        assert!(run_sampler(&mala(), &t, &[0.0, 0.0], &RunOptions::new(0, 0)).is_err());
    }
}
