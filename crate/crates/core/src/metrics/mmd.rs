use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::rng::stream;
use crate::targets::Point;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MmdEstimator {
    /// V-statistic; `mmd(X, X) = 0`.
    #[default]
    Biased,
    /// U-statistic; excludes diagonal terms, may be slightly negative
    /// before clipping.
    Unbiased,
}

fn default_bandwidths() -> Vec<f64> {
    vec![0.25, 0.5, 1.0, 2.0, 4.0]
}

fn default_max_points() -> usize {
    10_000
}

/// Sum over bandwidths `h` of the squared MMD with kernel
/// `exp(−‖x−y‖²/(2h²))`, square-rooted after clipping at 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmdConfig {
    #[serde(default = "default_bandwidths")]
    pub bandwidths: Vec<f64>,
    #[serde(default)]
    pub estimator: MmdEstimator,
    /// Larger sets are uniformly subsampled to this size.
    #[serde(default = "default_max_points")]
    pub max_points: usize,
    #[serde(default)]
    pub subsample_seed: u64,
}

impl Default for MmdConfig {
    fn default() -> Self {
        Self {
            bandwidths: default_bandwidths(),
            estimator: MmdEstimator::Biased,
            max_points: default_max_points(),
            subsample_seed: 0,
        }
    }
}

impl MmdConfig {
    pub fn unbiased() -> Self {
        Self {
            estimator: MmdEstimator::Unbiased,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bandwidths.is_empty() {
            return Err(Error::Empty("bandwidths"));
        }
        if self.bandwidths.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
            return Err(invalid("bandwidths", "must be positive"));
        }
        if self.max_points < 2 {
            return Err(invalid("max_points", "must be at least 2"));
        }
        Ok(())
    }
}

/// Neumaier-compensated sum; fixed order, so results do not depend on how
/// rows were distributed over threads.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + comp
}

/// How each bandwidth's kernel value is obtained for one pair.
#[derive(Clone, Copy, Debug, PartialEq)]
enum KernelStep {
    Exp,
    /// Integer power of the value already computed for another bandwidth;
    /// `exp(−c_k d²) = exp(−c_j d²)^(c_k/c_j)`.
    Pow(usize, i32),
}

/// Evaluation plan, widest bandwidth first. A narrower bandwidth whose
/// scale is a small integer multiple of a wider one is derived by `powi`.
fn kernel_plan(scales: &[f64]) -> Vec<(usize, KernelStep)> {
    let mut order: Vec<usize> = (0..scales.len()).collect();
    order.sort_by(|&i, &j| scales[i].total_cmp(&scales[j]));
    let mut plan: Vec<(usize, KernelStep)> = Vec::with_capacity(order.len());
    for &k in &order {
        let source = plan.iter().rev().find_map(|&(j, _)| {
            let r = scales[k] / scales[j];
            (r.fract() == 0.0 && (1.0..=16.0).contains(&r)).then_some((j, r as i32))
        });
        plan.push((k, source.map_or(KernelStep::Exp, |(j, r)| KernelStep::Pow(j, r))));
    }
    plan
}

fn int_pow(mut base: f64, mut e: i32) -> f64 {
    let mut out = 1.0;
    while e > 0 {
        if e & 1 == 1 {
            out *= base;
        }
        base *= base;
        e >>= 1;
    }
    out
}

fn accumulate(x: &[f64], y: &[f64], scales: &[f64], plan: &[(usize, KernelStep)], vals: &mut [f64], acc: &mut [f64]) {
    let d2: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
    for &(k, step) in plan {
        vals[k] = match step {
            KernelStep::Exp => (-d2 * scales[k]).exp(),
            KernelStep::Pow(j, r) => int_pow(vals[j], r),
        };
    }
    for (a, &(k, _)) in acc.iter_mut().zip(plan) {
        *a += vals[k];
    }
}

/// `(first scale, exponents)` when the plan is one `exp` followed by a
/// chain where each step powers the previous value.
fn as_chain(scales: &[f64], plan: &[(usize, KernelStep)]) -> Option<(f64, Vec<i32>)> {
    let (&(first, KernelStep::Exp), rest) = plan.split_first()? else {
        return None;
    };
    let mut prev = first;
    let mut exps = Vec::with_capacity(rest.len());
    for &(k, step) in rest {
        match step {
            KernelStep::Pow(j, r) if j == prev => exps.push(r),
            _ => return None,
        }
        prev = k;
    }
    Some((scales[first], exps))
}

fn accumulate_chain(x: &[f64], y: &[f64], scale: f64, exps: &[i32], acc: &mut [f64]) {
    let d2: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
    let mut v = (-d2 * scale).exp();
    acc[0] += v;
    for (a, &r) in acc[1..].iter_mut().zip(exps) {
        v = if r == 4 {
            let s = v * v;
            s * s
        } else {
            int_pow(v, r)
        };
        *a += v;
    }
}

fn sum_rows(rows: Vec<Vec<f64>>, n_scales: usize) -> Vec<f64> {
    (0..n_scales)
        .map(|h| compensated_sum(rows.iter().map(|r| r[h])))
        .collect()
}

/// Per-bandwidth kernel sums `Σ_i Σ_j k_h(a_i, b_j)`, skipping `i = j`
/// when `skip_diagonal`. Self-sums go through the same full double loop as
/// cross sums so that `mmd(X, X)` cancels exactly.
fn kernel_sums(a: &[&Point], b: &[&Point], scales: &[f64], skip_diagonal: bool) -> Vec<f64> {
    let plan = kernel_plan(scales);
    let chain = as_chain(scales, &plan);
    let d = a[0].dim();
    let flat: Vec<f64> = b.iter().flat_map(|p| p.iter().copied()).collect();
    let rows = a
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            // accumulators are in plan order
            let mut acc = vec![0.0; scales.len()];
            let mut vals = vec![0.0; scales.len()];
            for (j, y) in flat.chunks_exact(d).enumerate() {
                if skip_diagonal && i == j {
                    continue;
                }
                match &chain {
                    Some((scale, exps)) => accumulate_chain(x, y, *scale, exps, &mut acc),
                    None => accumulate(x, y, scales, &plan, &mut vals, &mut acc),
                }
            }
            acc
        })
        .collect();
    let sums = sum_rows(rows, scales.len());
    let mut out = vec![0.0; scales.len()];
    for (p, &(k, _)) in plan.iter().enumerate() {
        out[k] = sums[p];
    }
    out
}

fn canonical_before(a: &[Point], b: &[Point]) -> bool {
    if a.len() != b.len() {
        return a.len() < b.len();
    }
    for (p, q) in a.iter().zip(b) {
        for (x, y) in p.iter().zip(q.iter()) {
            match x.total_cmp(y) {
                std::cmp::Ordering::Equal => continue,
                o => return o.is_lt(),
            }
        }
    }
    true
}

fn subsample<'a>(set: &'a [Point], max: usize, seed: u64, id: u64) -> Vec<&'a Point> {
    if set.len() <= max {
        return set.iter().collect();
    }
    let mut rng = stream(seed, id);
    let mut idx = sample(&mut rng, set.len(), max).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| &set[i]).collect()
}

/// Multi-bandwidth maximum mean discrepancy between two sample sets.
/// Symmetric in its arguments bit for bit.
pub fn mmd(sample_a: &[Point], sample_b: &[Point], cfg: &MmdConfig) -> Result<f64> {
    cfg.validate()?;
    if sample_a.is_empty() || sample_b.is_empty() {
        return Err(Error::Empty("sample set"));
    }
    let d = sample_a[0].dim();
    for p in sample_a.iter().chain(sample_b) {
        check_dim(d, p.dim())?;
    }
    let (a, b) = if canonical_before(sample_a, sample_b) {
        (sample_a, sample_b)
    } else {
        (sample_b, sample_a)
    };
    let a = subsample(a, cfg.max_points, cfg.subsample_seed, 0);
    let b = subsample(b, cfg.max_points, cfg.subsample_seed, 1);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let scales: Vec<f64> = cfg.bandwidths.iter().map(|h| 0.5 / (h * h)).collect();

    let unbiased = cfg.estimator == MmdEstimator::Unbiased;
    if unbiased && (a.len() < 2 || b.len() < 2) {
        return Err(invalid("sample set", "unbiased estimator needs at least 2 points per set"));
    }
    let kaa = kernel_sums(&a, &a, &scales, unbiased);
    let kbb = kernel_sums(&b, &b, &scales, unbiased);
    let kab = kernel_sums(&a, &b, &scales, false);
    let (na, nb) = if unbiased { (n * (n - 1.0), m * (m - 1.0)) } else { (n * n, m * m) };

    let total: f64 = (0..scales.len())
        .map(|h| (kaa[h] / na + kbb[h] / nb) - 2.0 * kab[h] / (n * m))
        .sum();
    Ok(total.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[f64]) -> Vec<Point> {
        v.iter().map(|x| Point::new(vec![*x]).unwrap()).collect()
    }

    #[test]
    fn identical_sets_are_zero() {
        let x = pts(&[0.1, -2.0, 3.5, 0.7]);
        assert_eq!(mmd(&x, &x, &MmdConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn two_point_hand_value() {
        let cfg = MmdConfig {
            bandwidths: vec![1.0],
            ..MmdConfig::default()
        };
        let v = mmd(&pts(&[0.0]), &pts(&[1.0]), &cfg).unwrap();
        let expected = 2.0 - 2.0 * (-0.5f64).exp();
        assert!((v * v - expected).abs() < 1e-15);
        assert!((v * v - 0.786_939).abs() < 1e-6);
    }

    #[test]
    fn unbiased_hand_value() {
        // a = {0, 1}, b = {0, 2}, h = 1
        let cfg = MmdConfig {
            bandwidths: vec![1.0],
            estimator: MmdEstimator::Unbiased,
            ..MmdConfig::default()
        };
        let k = |d: f64| (-d * d / 2.0).exp();
        let aa = k(1.0);
        let bb = k(2.0);
        let ab = (k(0.0) + k(2.0) + k(1.0) + k(1.0)) / 4.0;
        let expected = aa + bb - 2.0 * ab;
        let v = mmd(&pts(&[0.0, 1.0]), &pts(&[0.0, 2.0]), &cfg).unwrap();
        assert!((v - expected.max(0.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn symmetric_and_subsampled_deterministically() {
        let a = pts(&(0..50).map(|i| (i as f64 * 0.37).sin()).collect::<Vec<_>>());
        let b = pts(&(0..70).map(|i| (i as f64 * 0.11).cos() + 0.3).collect::<Vec<_>>());
        let cfg = MmdConfig {
            max_points: 20,
            ..MmdConfig::default()
        };
        assert_eq!(mmd(&a, &b, &cfg).unwrap(), mmd(&b, &a, &cfg).unwrap());
        assert_eq!(mmd(&a, &b, &cfg).unwrap(), mmd(&a, &b, &cfg).unwrap());
    }

    #[test]
    fn errors() {
        let a = pts(&[0.0]);
        assert!(mmd(&a, &[], &MmdConfig::default()).is_err());
        let b = vec![Point::new(vec![0.0, 1.0]).unwrap()];
        assert!(mmd(&a, &b, &MmdConfig::default()).is_err());
        let bad = MmdConfig {
            bandwidths: vec![],
            ..MmdConfig::default()
        };
        assert!(mmd(&a, &a, &bad).is_err());
    }

    #[test]
    fn kernel_plan_derives_integer_multiples() {
        let scales: Vec<f64> = default_bandwidths().iter().map(|h| 0.5 / (h * h)).collect();
        let plan = kernel_plan(&scales);
        assert_eq!(plan[0], (4, KernelStep::Exp));
        assert_eq!(&plan[1..], &[(3, KernelStep::Pow(4, 4)), (2, KernelStep::Pow(3, 4)), (1, KernelStep::Pow(2, 4)), (0, KernelStep::Pow(1, 4))]);
        assert_eq!(kernel_plan(&[1.0, 1.5]), vec![(0, KernelStep::Exp), (1, KernelStep::Exp)]);

        let (x, y) = (Point::new(vec![0.3, -1.2]).unwrap(), Point::new(vec![2.0, 0.7]).unwrap());
        let mut vals = vec![0.0; scales.len()];
        let mut acc = vec![0.0; scales.len()];
        accumulate(&x, &y, &scales, &plan, &mut vals, &mut acc);
        let (scale, exps) = as_chain(&scales, &plan).unwrap();
        assert_eq!(exps, vec![4; 4]);
        let mut chained = vec![0.0; scales.len()];
        accumulate_chain(&x, &y, scale, &exps, &mut chained);
        let d2 = 1.7f64.powi(2) + 1.9f64.powi(2);
        for (p, &(k, _)) in plan.iter().enumerate() {
            let exact = (-d2 * scales[k]).exp();
            assert!((acc[p] - exact).abs() <= 1e-12 * exact);
            assert_eq!(acc[p], chained[p]);
        }
        assert!(as_chain(&[1.0, 1.5], &kernel_plan(&[1.0, 1.5])).is_none());
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v.into_iter()), 2.0);
    }
}
