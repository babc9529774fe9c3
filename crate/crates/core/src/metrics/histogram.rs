use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::targets::Point;

/// Regular grid over one or two dimensions. Samples outside `ranges` are
/// counted in the nearest edge bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramSpec {
    pub bins: Vec<usize>,
    pub ranges: Vec<(f64, f64)>,
    /// Added to every bin before normalizing.
    pub pseudocount: f64,
}

impl HistogramSpec {
    pub fn validate(&self) -> Result<()> {
        if self.bins.is_empty() || self.bins.len() > 2 {
            return Err(invalid("bins", "one or two dimensions supported"));
        }
        check_dim(self.bins.len(), self.ranges.len())?;
        if self.bins.iter().any(|b| *b < 2) {
            return Err(invalid("bins", "need at least 2 bins per dimension"));
        }
        if self.ranges.iter().any(|(lo, hi)| !(lo < hi) || !lo.is_finite() || !hi.is_finite()) {
            return Err(invalid("ranges", "need finite lo < hi"));
        }
        if !(self.pseudocount > 0.0 && self.pseudocount.is_finite()) {
            return Err(invalid("pseudocount", "must be positive"));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.bins.iter().product()
    }

    fn cell(&self, x: &[f64]) -> usize {
        let mut idx = 0;
        for ((v, &n), &(lo, hi)) in x.iter().zip(&self.bins).zip(&self.ranges) {
            let f = ((v - lo) / (hi - lo) * n as f64).floor();
            let b = if f.is_nan() { 0 } else { f.clamp(0.0, (n - 1) as f64) as usize };
            idx = idx * n + b;
        }
        idx
    }
}

/// Raw counts, row-major over the grid.
pub fn histogram(samples: &[Point], spec: &HistogramSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut counts = vec![0.0; spec.n_cells()];
    for s in samples {
        check_dim(spec.bins.len(), s.dim())?;
        counts[spec.cell(s)] += 1.0;
    }
    Ok(counts)
}

fn smoothed(counts: &[f64], eps: f64) -> Vec<f64> {
    let total: f64 = counts.iter().map(|c| c + eps).sum();
    counts.iter().map(|c| (c + eps) / total).collect()
}

/// `KL(P̂ ‖ Q̂)` between pseudocount-smoothed histograms.
pub fn histogram_kl(samples_p: &[Point], samples_q: &[Point], spec: &HistogramSpec) -> Result<f64> {
    if samples_p.is_empty() || samples_q.is_empty() {
        return Err(Error::Empty("sample set"));
    }
    let p = smoothed(&histogram(samples_p, spec)?, spec.pseudocount);
    let q = smoothed(&histogram(samples_q, spec)?, spec.pseudocount);
    let kl: f64 = p.iter().zip(&q).map(|(a, b)| a * (a / b).ln()).sum();
    Ok(kl.max(0.0))
}

/// Counts as CSV: one line per bin of the first dimension.
pub fn histogram_csv(counts: &[f64], spec: &HistogramSpec) -> String {
    let cols = if spec.bins.len() == 2 { spec.bins[1] } else { 1 };
    let mut out = String::new();
    for row in counts.chunks(cols) {
        let line: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec1(bins: usize) -> HistogramSpec {
        HistogramSpec {
            bins: vec![bins],
            ranges: vec![(0.0, 1.0)],
            pseudocount: 1e-6,
        }
    }

    fn pts(v: &[f64]) -> Vec<Point> {
        v.iter().map(|x| Point::new(vec![*x]).unwrap()).collect()
    }

    #[test]
    fn identical_sets_have_zero_kl() {
        let p = pts(&[0.1, 0.2, 0.9]);
        assert_eq!(histogram_kl(&p, &p, &spec1(4)).unwrap(), 0.0);
    }

    #[test]
    fn two_bin_closed_form() {
        let p = pts(&[0.25; 100]);
        let q = pts(&[0.75; 100]);
        let e: f64 = 1e-6;
        let (hi, lo): (f64, f64) = ((100.0 + e) / (100.0 + 2.0 * e), e / (100.0 + 2.0 * e));
        let expected = hi * (hi / lo).ln() + lo * (lo / hi).ln();
        let kl = histogram_kl(&p, &q, &spec1(2)).unwrap();
        assert!((kl - expected).abs() < 1e-12);
        assert!((kl - (1e8f64 + 1.0).ln()).abs() < 1e-5);
    }

    #[test]
    fn edge_bins_absorb_outliers() {
        let c = histogram(&pts(&[-5.0, 0.5, 7.0, 1.0]), &spec1(2)).unwrap();
        assert_eq!(c, vec![1.0, 3.0]);
    }

    #[test]
    fn two_dimensional_layout_and_csv() {
        let spec = HistogramSpec {
            bins: vec![2, 3],
            ranges: vec![(0.0, 2.0), (0.0, 3.0)],
            pseudocount: 1.0,
        };
        let s = vec![Point::new(vec![1.5, 2.5]).unwrap(), Point::new(vec![0.5, 0.5]).unwrap()];
        let c = histogram(&s, &spec).unwrap();
        assert_eq!(c, vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(histogram_csv(&c, &spec), "1,0,0\n0,0,1\n");
    }

    #[test]
    fn validation() {
        assert!(spec1(1).validate().is_err());
        let mut s = spec1(4);
        s.pseudocount = 0.0;
        assert!(s.validate().is_err());
        s = spec1(4);
        s.bins = vec![2, 2, 2];
        s.ranges = vec![(0.0, 1.0); 3];
        assert!(s.validate().is_err());
    }
}
