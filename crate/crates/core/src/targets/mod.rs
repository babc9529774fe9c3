//! Energy functions and the concrete target distributions.
//!
//! A target is anything exposing an energy `E(x)` (negative log density up to
//! a constant) and its gradient. Every evaluation goes through an
//! [`EvalCounter`], which is the cost unit used to compare samplers.

mod bnn;
mod mog;
mod spec;

use std::ops::{Deref, DerefMut};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};

pub use bnn::{bnn_energy_and_grad, BnnProblem, ToyBnnPosterior};
pub use mog::{mog_energy, mog_grad, MixtureOfGaussians};
pub use spec::{BuiltTarget, TargetSpec};

/// A point in the sampler's state space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Empty("point coordinates"));
        }
        if let Some(i) = coords.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Point(coords))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "points have at least one coordinate");
        Point(vec![0.0; dim])
    }

    pub(crate) fn from_vec_unchecked(coords: Vec<f64>) -> Self {
        debug_assert!(!coords.is_empty());
        Point(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Point {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Point {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Point::new(v)
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Vec<f64> {
        p.0
    }
}

/// Snapshot of an [`EvalCounter`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounts {
    /// Calls that returned an energy value.
    pub energy: u64,
    /// Calls that returned a gradient.
    pub gradient: u64,
    /// Oracle calls of any kind; a joint energy+gradient call counts once.
    /// This is the budget unit ("energy evaluations").
    pub calls: u64,
}

impl std::ops::Sub for EvalCounts {
    type Output = EvalCounts;
    fn sub(self, rhs: EvalCounts) -> EvalCounts {
        EvalCounts {
            energy: self.energy - rhs.energy,
            gradient: self.gradient - rhs.gradient,
            calls: self.calls - rhs.calls,
        }
    }
}

/// Thread-safe monotone evaluation counters.
#[derive(Debug, Default)]
pub struct EvalCounter {
    energy: AtomicU64,
    gradient: AtomicU64,
    calls: AtomicU64,
}

impl EvalCounter {
    pub fn new() -> Self {
        Self::default()
    }

    fn record(&self, energy: bool, gradient: bool) {
        if energy {
            self.energy.fetch_add(1, Ordering::Relaxed);
        }
        if gradient {
            self.gradient.fetch_add(1, Ordering::Relaxed);
        }
        self.calls.fetch_add(1, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> EvalCounts {
        EvalCounts {
            energy: self.energy.load(Ordering::Relaxed),
            gradient: self.gradient.load(Ordering::Relaxed),
            calls: self.calls.load(Ordering::Relaxed),
        }
    }
}

impl Clone for EvalCounter {
    /// Clones start from zero: a cloned target is a fresh budget.
    fn clone(&self) -> Self {
        Self::default()
    }
}

/// Energy-function contract shared by all samplers.
///
/// Implementors provide the uncounted `compute_*` routines; callers use the
/// counted `energy`, `grad` and `energy_and_grad` wrappers. The hot-path
/// methods take slices and do not validate dimensions beyond a debug
/// assertion; the `try_*` methods validate.
pub trait EnergyTarget: Send + Sync {
    fn dim(&self) -> usize;

    fn counter(&self) -> &EvalCounter;

    fn compute_energy(&self, x: &[f64]) -> f64;

    /// Writes `∇E(x)` into `grad` and returns `E(x)`.
    fn compute_energy_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;

    fn compute_grad(&self, x: &[f64], grad: &mut [f64]) {
        self.compute_energy_and_grad(x, grad);
    }

    fn energy(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        self.counter().record(true, false);
        self.compute_energy(x)
    }

    fn grad(&self, x: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        self.counter().record(false, true);
        self.compute_grad(x, grad)
    }

    fn energy_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        self.counter().record(true, true);
        self.compute_energy_and_grad(x, grad)
    }

    fn evals(&self) -> EvalCounts {
        self.counter().snapshot()
    }

    fn try_energy(&self, x: &[f64]) -> Result<f64> {
        check_point(self.dim(), x)?;
        Ok(self.energy(x))
    }

    fn try_grad(&self, x: &[f64]) -> Result<Point> {
        check_point(self.dim(), x)?;
        let mut g = vec![0.0; self.dim()];
        self.grad(x, &mut g);
        Ok(Point::from_vec_unchecked(g))
    }
}

pub(crate) fn check_point(dim: usize, x: &[f64]) -> Result<()> {
    check_dim(dim, x.len())?;
    match x.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

/// `p_β(x) ∝ exp(−β E(x))`, the target raised to an inverse temperature.
///
/// Evaluations are charged to the base target's counter.
pub struct TemperedTarget<'a> {
    base: &'a dyn EnergyTarget,
    beta: f64,
}

impl<'a> TemperedTarget<'a> {
    pub fn new(base: &'a dyn EnergyTarget, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(invalid("beta", format!("must be positive, got {beta}")));
        }
        Ok(Self { base, beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

impl EnergyTarget for TemperedTarget<'_> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn counter(&self) -> &EvalCounter {
        self.base.counter()
    }

    fn compute_energy(&self, x: &[f64]) -> f64 {
        self.beta * self.base.compute_energy(x)
    }

    fn compute_energy_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let e = self.base.compute_energy_and_grad(x, grad);
        for g in grad.iter_mut() {
            *g *= self.beta;
        }
        self.beta * e
    }
}

/// Unnormalized tempered log density `−β E(x)`.
pub fn tempered_log_density(target: &dyn EnergyTarget, beta: f64, x: &[f64]) -> Result<f64> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(invalid("beta", format!("must be positive, got {beta}")));
    }
    Ok(-beta * target.try_energy(x)?)
}
