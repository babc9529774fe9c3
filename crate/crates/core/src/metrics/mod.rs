//! Sample-quality metrics.

mod histogram;
mod mmd;

use serde::Serialize;

use crate::error::{check_dim, invalid, Error, Result};
use crate::targets::{EnergyTarget, MixtureOfGaussians, Point};

pub use histogram::{histogram, histogram_csv, histogram_kl, HistogramSpec};
pub use mmd::{mmd, MmdConfig, MmdEstimator};

/// Relative error of the sample estimate of `E[‖x‖²]` against its exact
/// value under `target`, in percent.
pub fn mae_quadratic(samples: &[Point], target: &MixtureOfGaussians) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("samples"));
    }
    let truth = target.second_moment();
    if truth == 0.0 {
        return Err(invalid("target", "E[|x|^2] is zero; relative error undefined"));
    }
    for s in samples {
        check_dim(target.dim(), s.dim())?;
    }
    let est = samples.iter().map(|s| s.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / samples.len() as f64;
    Ok(100.0 * (est - truth).abs() / truth.abs())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModeCoverage {
    /// Modes with at least one sample within the radius.
    pub count: usize,
    pub covered: Vec<bool>,
    /// Fraction of samples whose nearest mode is each mode.
    pub per_mode_mass: Vec<f64>,
}

pub fn mode_coverage(samples: &[Point], modes: &[Point], radius: f64) -> Result<ModeCoverage> {
    if !(radius > 0.0) {
        return Err(invalid("radius", format!("{radius} must be positive")));
    }
    if modes.is_empty() {
        return Err(Error::Empty("modes"));
    }
    let d = modes[0].dim();
    let mut covered = vec![false; modes.len()];
    let mut mass = vec![0.0; modes.len()];
    let r2 = radius * radius;
    for s in samples {
        check_dim(d, s.dim())?;
        let mut best = (0, f64::INFINITY);
        for (j, m) in modes.iter().enumerate() {
            let d2: f64 = s.iter().zip(m.iter()).map(|(a, b)| (a - b).powi(2)).sum();
            if d2 <= r2 {
                covered[j] = true;
            }
            if d2 < best.1 {
                best = (j, d2);
            }
        }
        mass[best.0] += 1.0;
    }
    if !samples.is_empty() {
        let n = samples.len() as f64;
        mass.iter_mut().for_each(|m| *m /= n);
    }
    Ok(ModeCoverage {
        count: covered.iter().filter(|c| **c).count(),
        covered,
        per_mode_mass: mass,
    })
}
