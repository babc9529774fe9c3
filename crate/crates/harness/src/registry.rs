//! Shipped experiments.
//!
//! Each experiment exists at two tiers: `paper` uses the reference
//! settings, `desk` cuts the per-sample budget tenfold where the reference
//! budget is large.

use std::collections::BTreeMap;

use digs::kernels::ScheduleSpec;
use digs::metrics::MmdConfig;
use digs::samplers::{DigsConfig, HmcConfig, InitStrategy, McmcSampler, PtConfig, RdmcConfig, TransitionKernel};
use digs::targets::TargetSpec;

use crate::config::{ExperimentConfig, MetricSpec, SamplerKind, SamplerSpec, Start, Tier, TuneSpec};
use crate::error::{HarnessError, Result};

/// Canonical target descriptions, by name.
pub const TARGETS: [(&str, &str); 5] = [
    ("mog9", include_str!("../experiments/mog9.json")),
    ("mog4-unbalanced", include_str!("../experiments/mog4-unbalanced.json")),
    ("mog40", include_str!("../experiments/mog40.json")),
    ("mixture-of-deltas", include_str!("../experiments/mixture-of-deltas.json")),
    ("bnn-toy", include_str!("../experiments/bnn-toy.json")),
];

pub const EXPERIMENTS: [(&str, &str); 8] = [
    ("mog9-mala", "MALA from the origin on the 3x3 mixture; stays near the central modes"),
    ("init-comparison", "three denoising initializations on the unbalanced 4-mode mixture"),
    ("kernel-sweep", "single-level DiGS on the 3x3 mixture; sweep `alpha` or `sigma`"),
    ("vp-schedule", "multi-level VP DiGS on the 3x3 mixture; sweep `T`"),
    ("mixture-of-deltas", "DiGS against 5-temperature PT on near-delta modes"),
    ("rdmc-cost", "RDMC (T = 1..4) against DiGS (1..10 sweeps) per energy evaluation"),
    ("mog40", "MALA, HMC, PT and DiGS on the 40-mode mixture"),
    ("bnn", "MALA, HMC and DiGS on a small ReLU-network posterior"),
];

pub fn target(name: &str) -> Result<TargetSpec> {
    let text = TARGETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| HarnessError::config(format!("unknown target `{name}`")))?;
    Ok(TargetSpec::from_json(text)?)
}

fn spec(label: impl Into<String>, sampler: SamplerKind) -> SamplerSpec {
    SamplerSpec {
        label: label.into(),
        sampler,
        n_chains: 1,
        max_calls: None,
        tune: None,
    }
}

fn mala(step_size: f64, steps_per_sample: usize) -> SamplerKind {
    SamplerKind::Mcmc(McmcSampler {
        kernel: TransitionKernel::Mala { step_size },
        steps_per_sample,
    })
}

fn digs(schedule: ScheduleSpec, sweeps: usize, denoise_steps: usize, denoiser: TransitionKernel, init: InitStrategy) -> SamplerKind {
    SamplerKind::Digs(DigsConfig {
        schedule,
        sweeps,
        denoise_steps,
        denoiser,
        init,
        allow_extended: false,
    })
}

/// Reference budgets are stated as leapfrog steps per sample; they are
/// spent as [`TRANSITIONS_PER_SAMPLE`] HMC transitions of equal length.
const TRANSITIONS_PER_SAMPLE: usize = 10;

fn hmc_budget(step_size: f64, leapfrog_per_sample: usize) -> (TransitionKernel, usize) {
    let n = leapfrog_per_sample / TRANSITIONS_PER_SAMPLE;
    (TransitionKernel::Hmc(HmcConfig::new(step_size, n)), TRANSITIONS_PER_SAMPLE)
}

fn hmc(step_size: f64, leapfrog_per_sample: usize) -> SamplerKind {
    let (kernel, steps_per_sample) = hmc_budget(step_size, leapfrog_per_sample);
    SamplerKind::Mcmc(McmcSampler { kernel, steps_per_sample })
}

/// Five-temperature ladder with an HMC kernel on every chain and a swap
/// round after every transition.
fn pt(step_size: f64, leapfrog_per_sample: usize) -> SamplerKind {
    let (inner, steps_per_sample) = hmc_budget(step_size, leapfrog_per_sample);
    SamplerKind::Pt(PtConfig {
        temperatures: PtConfig::DEFAULT_LADDER.to_vec(),
        inner,
        steps_per_sample,
        swap_every: 1,
    })
}

fn desk_or(tier: Tier, desk: usize, paper: usize) -> usize {
    match tier {
        Tier::Desk => desk,
        Tier::Paper => paper,
    }
}

fn base(id: &str, tier: Tier, target_name: &str, samplers: Vec<SamplerSpec>, n_samples: usize) -> Result<ExperimentConfig> {
    Ok(ExperimentConfig {
        id: id.to_string(),
        tier,
        target: target(target_name)?,
        samplers,
        seeds: vec![0, 1, 2, 3, 4],
        n_samples,
        start: Start::Origin,
        metrics: MetricSpec::default(),
        sweep_params: BTreeMap::new(),
    })
}

fn aliases(pairs: &[(&str, &str)]) -> BTreeMap<String, Vec<String>> {
    pairs.iter().map(|(k, v)| (k.to_string(), vec![v.to_string()])).collect()
}

/// The configuration of a shipped experiment at `tier`.
pub fn experiment(id: &str, tier: Tier) -> Result<ExperimentConfig> {
    let mala_1e3 = TransitionKernel::Mala { step_size: 1e-3 };
    let cfg = match id {
        "mog9-mala" => {
            let mut c = base(id, tier, "mog9", vec![spec("mala", mala(1e-3, desk_or(tier, 100, 1000)))], 1000)?;
            c.seeds = vec![0];
            c
        }
        "init-comparison" => {
            // every sample is the end of its own 200-sweep chain from the origin
            let samplers = InitStrategy::ALL
                .iter()
                .map(|init| SamplerSpec {
                    n_chains: 1000,
                    ..spec(init.name(), digs(ScheduleSpec::single(1.0, 1.0), 200, 50, mala_1e3, *init))
                })
                .collect();
            base(id, tier, "mog4-unbalanced", samplers, 1000)?
        }
        "kernel-sweep" => {
            let d = DigsConfig {
                schedule: ScheduleSpec::single(1.0, 1.0),
                sweeps: desk_or(tier, 100, 1000),
                denoise_steps: 10,
                denoiser: mala_1e3,
                init: InitStrategy::Mh,
                allow_extended: true,
            };
            let mut c = base(id, tier, "mog9", vec![spec("digs", SamplerKind::Digs(d))], 1000)?;
            c.sweep_params = aliases(&[
                ("alpha", "samplers.0.sampler.schedule.levels.0.0"),
                ("sigma", "samplers.0.sampler.schedule.levels.0.1"),
            ]);
            c
        }
        "vp-schedule" => {
            let schedule = ScheduleSpec::VpLinear {
                steps: 5,
                alpha_1: 0.9,
                alpha_t: 0.1,
            };
            let mut c = base(id, tier, "mog9", vec![spec("digs", digs(schedule, desk_or(tier, 100, 1000), 10, mala_1e3, InitStrategy::Mh))], 1000)?;
            c.sweep_params = aliases(&[("T", "samplers.0.sampler.schedule.T")]);
            c
        }
        "mixture-of-deltas" => {
            let samplers = vec![
                // Mode hopping needs the full budget at both tiers; it is cheap here.
                spec("digs", digs(ScheduleSpec::single(1.0, 1.0), 1000, 5, mala_1e3, InitStrategy::Mh)),
                spec("pt", pt(1e-2, 1000)),
            ];
            let mut c = base(id, tier, "mixture-of-deltas", samplers, 1000)?;
            c.metrics = MetricSpec {
                mmd: None,
                mode_radius: Some(5.0),
                ..MetricSpec::default()
            };
            c
        }
        "rdmc-cost" => {
            let ula = TransitionKernel::Ula { step_size: 1e-2 };
            let mut samplers: Vec<SamplerSpec> = (1..=4)
                .map(|t| {
                    spec(
                        format!("rdmc-T{t}"),
                        SamplerKind::Rdmc(RdmcConfig {
                            steps: t,
                            gamma: 0.1,
                            posterior_samples: 5,
                            ula_steps: 5,
                            ula_step_size: 1e-2,
                            is_samples: 100,
                        }),
                    )
                })
                .collect();
            samplers.extend((1..=10).map(|s| spec(format!("digs-S{s}"), digs(ScheduleSpec::single(1.0, 1.0), s, 5, ula, InitStrategy::Mh))));
            let mut c = base(id, tier, "mog9", samplers, 1000)?;
            c.seeds = vec![0, 1, 2];
            c
        }
        "mog40" => {
            let n = desk_or(tier, 1000, 10_000);
            let samplers = vec![
                SamplerSpec {
                    tune: Some(TuneSpec::mala()),
                    ..spec("mala", mala(0.1, 1000))
                },
                SamplerSpec {
                    tune: Some(TuneSpec::hmc()),
                    ..spec("hmc", hmc(0.1, 1000))
                },
                spec("pt", pt(0.1, 200)),
                spec(
                    "digs",
                    digs(
                        ScheduleSpec::single(0.1, (1.0f64 - 0.01).sqrt()),
                        166,
                        5,
                        TransitionKernel::Mala { step_size: 0.1 },
                        InitStrategy::Mh,
                    ),
                ),
            ];
            let mut c = base(id, tier, "mog40", samplers, n)?;
            c.metrics = MetricSpec {
                mmd: Some(MmdConfig::unbiased()),
                reference_size: n,
                mae: true,
                mode_radius: Some(3.0),
                nll: false,
            };
            c
        }
        "bnn" => {
            let per = desk_or(tier, 500, 5000);
            let samplers = vec![
                SamplerSpec {
                    tune: Some(TuneSpec::mala()),
                    ..spec("mala", mala(1e-4, per))
                },
                SamplerSpec {
                    tune: Some(TuneSpec::hmc()),
                    ..spec("hmc", hmc(5e-4, per))
                },
                spec("pt", pt(5e-4, desk_or(tier, 100, 1000))),
                spec(
                    "digs",
                    digs(
                        ScheduleSpec::VpLinear {
                            steps: 5,
                            alpha_1: 0.9,
                            alpha_t: 0.1,
                        },
                        desk_or(tier, 10, 100),
                        10,
                        TransitionKernel::Mala { step_size: 1e-4 },
                        InitStrategy::Mh,
                    ),
                ),
            ];
            let mut c = base(id, tier, "bnn-toy", samplers, 150)?;
            c.seeds = vec![0, 1, 2];
            c.start = Start::PriorDraw;
            c.metrics = MetricSpec {
                mmd: None,
                nll: true,
                ..MetricSpec::default()
            };
            c
        }
        _ => return Err(HarnessError::config(format!("unknown experiment `{id}`"))),
    };
    Ok(cfg)
}
