use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BnnProblem, EnergyTarget, MixtureOfGaussians};
use crate::error::{invalid, Error, Result};
use crate::rng::stream;

/// JSON description of a target, tagged by `"type"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    /// Explicit mixture. Give either one `stddev` shared by all components
    /// or a per-component `stddevs` list.
    Mog {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stddev: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stddevs: Option<Vec<f64>>,
    },
    /// Equal-weight mixture with one component on every node of the grid
    /// `axis^dim`.
    MogGrid {
        axis: Vec<f64>,
        dim: usize,
        stddev: f64,
    },
    /// Equal-weight mixture whose means are drawn uniformly from
    /// `[low, high]^dim` by a seeded generator.
    MogUniform {
        n_components: usize,
        dim: usize,
        low: f64,
        high: f64,
        stddev: f64,
        seed: u64,
    },
    /// Synthetic ReLU-network regression posterior.
    Bnn {
        d_x: usize,
        d_h: usize,
        d_y: usize,
        n_train: usize,
        n_test: usize,
        noise_std: f64,
        seed: u64,
    },
}

/// A constructed target.
#[derive(Debug)]
pub enum BuiltTarget {
    Mog(MixtureOfGaussians),
    Bnn(BnnProblem),
}

impl BuiltTarget {
    pub fn energy(&self) -> &dyn EnergyTarget {
        match self {
            BuiltTarget::Mog(m) => m,
            BuiltTarget::Bnn(b) => &b.posterior,
        }
    }

    pub fn as_mog(&self) -> Option<&MixtureOfGaussians> {
        match self {
            BuiltTarget::Mog(m) => Some(m),
            BuiltTarget::Bnn(_) => None,
        }
    }

    pub fn as_bnn(&self) -> Option<&BnnProblem> {
        match self {
            BuiltTarget::Bnn(b) => Some(b),
            BuiltTarget::Mog(_) => None,
        }
    }
}

impl TargetSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Description(e.to_string()))
    }

    pub fn build(&self) -> Result<BuiltTarget> {
        match self {
            TargetSpec::Mog {
                weights,
                means,
                stddev,
                stddevs,
            } => {
                let sds = match (stddev, stddevs) {
                    (Some(s), None) => vec![*s; weights.len()],
                    (None, Some(v)) => v.clone(),
                    _ => {
                        return Err(invalid(
                            "stddev",
                            "give exactly one of `stddev` or `stddevs`",
                        ))
                    }
                };
                MixtureOfGaussians::new(weights.clone(), means.clone(), sds).map(BuiltTarget::Mog)
            }
            TargetSpec::MogGrid { axis, dim, stddev } => {
                if axis.is_empty() || *dim == 0 {
                    return Err(Error::Empty("grid"));
                }
                let mut means: Vec<Vec<f64>> = vec![vec![]];
                for _ in 0..*dim {
                    means = means
                        .into_iter()
                        .flat_map(|prefix| {
                            axis.iter().map(move |a| {
                                let mut p = prefix.clone();
                                p.push(*a);
                                p
                            })
                        })
                        .collect();
                }
                MixtureOfGaussians::equal_weights(means, *stddev).map(BuiltTarget::Mog)
            }
            TargetSpec::MogUniform {
                n_components,
                dim,
                low,
                high,
                stddev,
                seed,
            } => {
                if !(low < high) {
                    return Err(invalid("low/high", "need low < high"));
                }
                let mut rng = stream(*seed, 0);
                let means = (0..*n_components)
                    .map(|_| (0..*dim).map(|_| rng.random_range(*low..*high)).collect())
                    .collect();
                MixtureOfGaussians::equal_weights(means, *stddev).map(BuiltTarget::Mog)
            }
            TargetSpec::Bnn {
                d_x,
                d_h,
                d_y,
                n_train,
                n_test,
                noise_std,
                seed,
            } => {
                let mut rng = stream(*seed, 0);
                BnnProblem::generate(*d_x, *d_h, *d_y, *n_train, *n_test, *noise_std, &mut rng)
                    .map(BuiltTarget::Bnn)
            }
        }
    }
}
