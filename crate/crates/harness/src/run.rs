//! Executing experiments and sweeps.

use serde::Serialize;

use digs::metrics::{mae_quadratic, mmd, mode_coverage, MmdConfig};
use digs::rng::{stream, AUX_STREAM};
use digs::samplers::{run_sampler, tune_step_size, McmcSampler, RunOptions, SamplerRun, TuneResult};
use digs::targets::{BuiltTarget, MixtureOfGaussians, Point};

use crate::config::{ExperimentConfig, SamplerKind, Start, Tier};
use crate::error::{HarnessError, Result};

/// Version of the `report.json` layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Stream of a seed reserved for the starting point draw.
const START_STREAM: u64 = AUX_STREAM - 1;

/// Exact draws from a mixture: component by weight, then its Gaussian.
pub fn ground_truth(target: &MixtureOfGaussians, n: usize, seed: u64) -> Vec<Point> {
    target.sample(n, &mut stream(seed, AUX_STREAM))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CellMetrics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mmd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mae_percent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modes_covered: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode_mass: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nll: Option<f64>,
}

/// One sampler under one seed.
#[derive(Clone, Debug, Serialize)]
pub struct Cell {
    pub label: String,
    pub seed: u64,
    pub run: SamplerRun,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tuning: Option<TuneResult>,
    pub metrics: CellMetrics,
}

/// Mean and standard error over seeds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Some(Stat { mean, stderr, n })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SamplerSummary {
    pub label: String,
    pub calls_per_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mmd: Option<Stat>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mae_percent: Option<Stat>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modes_covered: Option<Stat>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nll: Option<Stat>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub experiment: String,
    pub tier: Tier,
    pub config: ExperimentConfig,
    pub cells: Vec<Cell>,
    pub summary: Vec<SamplerSummary>,
    /// Any sampler stopped early on its call budget.
    pub truncated: bool,
}

impl RunReport {
    pub fn summary_for(&self, label: &str) -> Option<&SamplerSummary> {
        self.summary.iter().find(|s| s.label == label)
    }

    pub fn cells_for<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a Cell> + 'a {
        self.cells.iter().filter(move |c| c.label == label)
    }
}

fn start_point(cfg: &ExperimentConfig, built: &BuiltTarget, seed: u64) -> Vec<f64> {
    let dim = built.energy().dim();
    match &cfg.start {
        Start::Origin => vec![0.0; dim],
        Start::Point { x } => x.clone(),
        Start::PriorDraw => {
            let bnn = built.as_bnn().expect("validated");
            bnn.posterior.sample_prior(&mut stream(seed, START_STREAM)).into_vec()
        }
    }
}

fn cell_metrics(cfg: &ExperimentConfig, built: &BuiltTarget, samples: &[Point], reference: &[Point], seed: u64) -> Result<CellMetrics> {
    let m = &cfg.metrics;
    let mut out = CellMetrics::default();
    if samples.is_empty() {
        return Ok(out);
    }
    if let Some(mog) = built.as_mog() {
        if let Some(mmd_cfg) = &m.mmd {
            let c = MmdConfig {
                subsample_seed: seed,
                ..mmd_cfg.clone()
            };
            out.mmd = Some(mmd(samples, reference, &c)?);
        }
        if m.mae {
            out.mae_percent = Some(mae_quadratic(samples, mog)?);
        }
        if let Some(r) = m.mode_radius {
            let sd = mog.stddevs().iter().cloned().fold(0.0, f64::max);
            let cov = mode_coverage(samples, &mog.means(), r * sd)?;
            out.modes_covered = Some(cov.count);
            out.mode_mass = Some(cov.per_mode_mass);
        }
    }
    if m.nll {
        if let Some(bnn) = built.as_bnn() {
            out.nll = Some(bnn.predictive_nll(samples)?);
        }
    }
    Ok(out)
}

/// Runs every sampler of `cfg` under every seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let mut cells = Vec::new();
    for &seed in &cfg.seeds {
        // fresh target per seed: counters start at zero
        let built = cfg.target.build()?;
        let target = built.energy();
        let x0 = start_point(cfg, &built, seed);
        let reference = match (built.as_mog(), cfg.metrics.mmd.is_some()) {
            (Some(mog), true) => ground_truth(mog, cfg.metrics.reference_size, seed),
            _ => Vec::new(),
        };
        for spec in &cfg.samplers {
            let mut kind = spec.sampler.clone();
            let mut tuning = None;
            if let (Some(t), SamplerKind::Mcmc(m)) = (&spec.tune, &kind) {
                let r = tune_step_size(&m.kernel, target, &x0, t.target_rate, t.tolerance, t.pilot_steps, seed)?;
                kind = SamplerKind::Mcmc(McmcSampler {
                    kernel: r.kernel,
                    steps_per_sample: m.steps_per_sample,
                });
                tuning = Some(r);
            }
            let sampler = kind.build()?;
            let opts = RunOptions {
                n_samples: cfg.n_samples,
                n_chains: spec.n_chains,
                seed,
                max_calls: spec.max_calls,
            };
            let run = run_sampler(sampler.as_ref(), target, &x0, &opts)?;
            let metrics = cell_metrics(cfg, &built, &run.samples, &reference, seed)?;
            cells.push(Cell {
                label: spec.label.clone(),
                seed,
                run,
                tuning,
                metrics,
            });
        }
    }
    let summary = cfg
        .samplers
        .iter()
        .map(|s| {
            let mine: Vec<&Cell> = cells.iter().filter(|c| c.label == s.label).collect();
            let collect = |f: &dyn Fn(&CellMetrics) -> Option<f64>| {
                let v: Vec<f64> = mine.iter().filter_map(|c| f(&c.metrics)).collect();
                Stat::of(&v)
            };
            SamplerSummary {
                label: s.label.clone(),
                calls_per_seed: mine.first().map(|c| c.run.evals.calls).unwrap_or(0),
                mmd: collect(&|m| m.mmd),
                mae_percent: collect(&|m| m.mae_percent),
                modes_covered: collect(&|m| m.modes_covered.map(|c| c as f64)),
                nll: collect(&|m| m.nll),
            }
        })
        .collect();
    let truncated = cells.iter().any(|c| c.run.truncated);
    Ok(RunReport {
        schema_version: SCHEMA_VERSION,
        experiment: cfg.id.clone(),
        tier: cfg.tier,
        config: cfg.clone(),
        cells,
        summary,
        truncated,
    })
}

/// One row of a sweep summary.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub value: String,
    pub label: String,
    pub mmd: Option<Stat>,
    pub calls_per_seed: u64,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub param: String,
    pub reports: Vec<(String, RunReport)>,
}

impl SweepResult {
    pub fn rows(&self) -> Vec<SweepRow> {
        self.reports
            .iter()
            .flat_map(|(v, r)| {
                r.summary.iter().map(move |s| SweepRow {
                    value: v.clone(),
                    label: s.label.clone(),
                    mmd: s.mmd,
                    calls_per_seed: s.calls_per_seed,
                })
            })
            .collect()
    }

    pub fn truncated(&self) -> bool {
        self.reports.iter().any(|(_, r)| r.truncated)
    }
}

/// Runs `cfg` once per value of `param`. All values are checked before any
/// run starts.
pub fn sweep(cfg: &ExperimentConfig, param: &str, values: &[String]) -> Result<SweepResult> {
    if values.is_empty() {
        return Err(HarnessError::config("no sweep values"));
    }
    let configs: Vec<(String, ExperimentConfig)> = values
        .iter()
        .map(|v| {
            let c = cfg.with_override(param, v)?;
            c.validate()?;
            Ok((v.clone(), c))
        })
        .collect::<Result<_>>()?;
    let reports = configs
        .into_iter()
        .map(|(v, c)| run_experiment(&c).map(|r| (v, r)))
        .collect::<Result<_>>()?;
    Ok(SweepResult {
        param: param.to_string(),
        reports,
    })
}
