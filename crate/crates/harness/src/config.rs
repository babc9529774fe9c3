//! Experiment descriptions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use digs::metrics::MmdConfig;
use digs::samplers::{DigsConfig, DigsSampler, McmcSampler, PtConfig, PtSampler, RdmcConfig, RdmcSampler, Sampler};
use digs::targets::TargetSpec;

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    /// Budgets reduced tenfold from the reference settings.
    #[default]
    Desk,
    Paper,
}

/// Sampler variants, tagged by `"type"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SamplerKind {
    Mcmc(McmcSampler),
    Pt(PtConfig),
    Digs(DigsConfig),
    Rdmc(RdmcConfig),
}

impl SamplerKind {
    pub fn build(&self) -> Result<Box<dyn Sampler>> {
        Ok(match self {
            SamplerKind::Mcmc(m) => Box::new(m.clone()),
            SamplerKind::Pt(c) => {
                c.validate()?;
                Box::new(PtSampler(c.clone()))
            }
            SamplerKind::Digs(c) => Box::new(DigsSampler::new(c.clone())?),
            SamplerKind::Rdmc(c) => {
                c.validate()?;
                Box::new(RdmcSampler(c.clone()))
            }
        })
    }
}

/// Step-size tuning before the run (MCMC samplers only).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneSpec {
    pub target_rate: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_pilot")]
    pub pilot_steps: usize,
}

fn default_tolerance() -> f64 {
    0.05
}

fn default_pilot() -> usize {
    2000
}

impl TuneSpec {
    pub fn mala() -> Self {
        Self {
            target_rate: 0.574,
            tolerance: default_tolerance(),
            pilot_steps: default_pilot(),
        }
    }

    pub fn hmc() -> Self {
        Self {
            target_rate: 0.65,
            ..Self::mala()
        }
    }
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSpec {
    pub label: String,
    pub sampler: SamplerKind,
    #[serde(default = "one")]
    pub n_chains: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_calls: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tune: Option<TuneSpec>,
}

/// Starting point shared by all chains of all samplers.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Start {
    #[default]
    Origin,
    Point { x: Vec<f64> },
    /// One draw from the network prior (BNN targets), fixed per seed.
    PriorDraw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSpec {
    /// MMD against exact draws from the target (mixture targets).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mmd: Option<MmdConfig>,
    /// Size of the exact reference set.
    #[serde(default = "default_reference")]
    pub reference_size: usize,
    #[serde(default)]
    pub mae: bool,
    /// Mode-coverage radius in units of the component standard deviation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode_radius: Option<f64>,
    /// Test predictive NLL (BNN targets).
    #[serde(default)]
    pub nll: bool,
}

fn default_reference() -> usize {
    1000
}

impl Default for MetricSpec {
    fn default() -> Self {
        Self {
            mmd: Some(MmdConfig::unbiased()),
            reference_size: default_reference(),
            mae: false,
            mode_radius: None,
            nll: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    #[serde(default)]
    pub tier: Tier,
    pub target: TargetSpec,
    pub samplers: Vec<SamplerSpec>,
    pub seeds: Vec<u64>,
    pub n_samples: usize,
    #[serde(default)]
    pub start: Start,
    #[serde(default)]
    pub metrics: MetricSpec,
    /// Short names for sweepable settings, each mapping to one or more
    /// dotted paths into this config.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub sweep_params: BTreeMap<String, Vec<String>>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HarnessError::config(e.to_string()))
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> Result<()> {
        if self.samplers.is_empty() {
            return Err(HarnessError::config("no samplers"));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::config("no seeds"));
        }
        if self.n_samples == 0 {
            return Err(HarnessError::config("n_samples must be positive"));
        }
        let built = self.target.build()?;
        let dim = built.energy().dim();
        if let Start::Point { x } = &self.start {
            if x.len() != dim {
                return Err(HarnessError::config(format!("start point has {} coordinates, target has {dim}", x.len())));
            }
        }
        if matches!(self.start, Start::PriorDraw) && built.as_bnn().is_none() {
            return Err(HarnessError::config("prior_draw start needs a bnn target"));
        }
        let mut labels = std::collections::BTreeSet::new();
        for s in &self.samplers {
            if !labels.insert(&s.label) {
                return Err(HarnessError::config(format!("duplicate sampler label `{}`", s.label)));
            }
            if s.n_chains == 0 {
                return Err(HarnessError::config(format!("{}: n_chains must be positive", s.label)));
            }
            if s.max_calls == Some(0) {
                return Err(HarnessError::config(format!("{}: max_calls must be positive", s.label)));
            }
            s.sampler.build()?.validate(dim)?;
            if s.tune.is_some() && !matches!(s.sampler, SamplerKind::Mcmc(_)) {
                return Err(HarnessError::config(format!("{}: tuning applies to mcmc samplers only", s.label)));
            }
        }
        let m = &self.metrics;
        if let Some(mmd) = &m.mmd {
            mmd.validate()?;
        }
        let needs_mog = m.mmd.is_some() || m.mae || m.mode_radius.is_some();
        if needs_mog && built.as_mog().is_none() {
            return Err(HarnessError::config("mmd, mae and mode coverage need a mixture target"));
        }
        if m.nll && built.as_bnn().is_none() {
            return Err(HarnessError::config("nll needs a bnn target"));
        }
        if m.reference_size < 2 {
            return Err(HarnessError::config("reference_size must be at least 2"));
        }
        if let Some(r) = m.mode_radius {
            if !(r > 0.0) {
                return Err(HarnessError::config("mode_radius must be positive"));
            }
        }
        Ok(())
    }

    /// Applies `key=value` where `key` is a sweep alias or a dotted path
    /// (`samplers.0.sampler.sweeps`). `value` is parsed as JSON, falling
    /// back to a plain string.
    pub fn with_override(&self, key: &str, value: &str) -> Result<Self> {
        let paths = self.sweep_params.get(key).cloned().unwrap_or_else(|| vec![key.to_string()]);
        let parsed: Value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
        let mut doc = serde_json::to_value(self).map_err(|e| HarnessError::config(e.to_string()))?;
        for path in &paths {
            set_path(&mut doc, path, parsed.clone())?;
        }
        let cfg: Self = serde_json::from_value(doc).map_err(|e| HarnessError::config(format!("override {key}={value}: {e}")))?;
        Ok(cfg)
    }
}

fn set_path(doc: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut node = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.get_mut(*part).ok_or_else(|| HarnessError::config(format!("unknown key `{part}` in `{path}`")))?
            }
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| HarnessError::config(format!("`{part}` in `{path}` is not an index")))?;
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| HarnessError::config(format!("index {idx} out of range in `{path}`")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(HarnessError::config(format!("`{path}` descends into a scalar"))),
        };
    }
    Err(HarnessError::config("empty override path"))
}
