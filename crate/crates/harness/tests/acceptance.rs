//! Acceptance suite. Runs every criterion at the desk tier, prints one
//! PASS/FAIL line per criterion and exits non-zero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use digs::gradcheck::gradient_relative_error;
use digs::kernels::{tweedie_mean, vp_linear, ConvolutionKernel, DenoisingPosterior, ScheduleSpec};
use digs::rng::{standard_normal_vec, stream};
use digs::samplers::{
    run_sampler, DigsConfig, DigsSampler, HmcConfig, InitStrategy, McmcSampler, PtConfig, PtSampler,
    RdmcConfig, RdmcSampler, RunOptions, Sampler, TransitionKernel,
};
use digs::targets::{tempered_log_density, EnergyTarget, MixtureOfGaussians};
use digs_harness::registry::{experiment, target, TARGETS};
use digs_harness::run::Stat;
use digs_harness::{run_experiment, sweep, RunReport, Tier};

type Check = Result<(bool, String), String>;

fn mean_mmd(report: &RunReport, label: &str) -> f64 {
    report.summary_for(label).and_then(|s| s.mmd).map_or(f64::NAN, |s| s.mean)
}

fn fmt_stat(s: Option<Stat>) -> String {
    s.map_or("n/a".into(), |s| format!("{:.4}±{:.4}", s.mean, s.stderr))
}

fn run(id: &str) -> Result<RunReport, String> {
    let cfg = experiment(id, Tier::Desk).map_err(|e| e.to_string())?;
    run_experiment(&cfg).map_err(|e| e.to_string())
}

fn init_strategies() -> Check {
    let r = run("init-comparison")?;
    let (mh, prev, scaled) = (mean_mmd(&r, "mh"), mean_mmd(&r, "prev_state"), mean_mmd(&r, "scaled_noisy"));
    let ok = mh <= 0.08 && (0.05..=0.5).contains(&prev) && scaled >= 0.5 && mh < prev && prev < scaled;
    Ok((ok, format!("MMD mh {mh:.4}, prev_state {prev:.4}, scaled_noisy {scaled:.4}")))
}

fn mog40() -> Check {
    let r = run("mog40")?;
    let m = |l: &str| mean_mmd(&r, l);
    let (digs, pt, hmc, mala) = (m("digs"), m("pt"), m("hmc"), m("mala"));
    let coverage: Vec<usize> = r.cells_for("digs").filter_map(|c| c.metrics.modes_covered).collect();
    let mae = r.summary_for("digs").and_then(|s| s.mae_percent);
    let calls: Vec<String> = r.summary.iter().map(|s| format!("{} {}", s.label, s.calls_per_seed)).collect();
    let ok = digs <= 1e-2
        && digs <= pt / 3.0
        && pt <= hmc / 10.0
        && hmc <= 2.0 * mala
        && mala <= 2.0 * hmc
        && !coverage.is_empty()
        && coverage.iter().all(|&c| c == 40)
        && mae.is_some_and(|s| s.mean <= 5.0);
    Ok((
        ok,
        format!(
            "MMD digs {digs:.4}, pt {pt:.4}, hmc {hmc:.4}, mala {mala:.4}; digs modes {coverage:?}, MAE% {}; calls/seed {}",
            fmt_stat(mae),
            calls.join(", ")
        ),
    ))
}

fn mixture_of_deltas() -> Check {
    let r = run("mixture-of-deltas")?;
    let built = r.config.target.build().map_err(|e| e.to_string())?;
    let mog = built.as_mog().ok_or("deltas target is not a mixture")?;
    let centre = (0..mog.n_components())
        .find(|&i| mog.mean(i).iter().all(|v| *v == 0.0))
        .ok_or("no central mode")?;
    let digs: Vec<usize> = r.cells_for("digs").filter_map(|c| c.metrics.modes_covered).collect();
    let pt: Vec<usize> = r.cells_for("pt").filter_map(|c| c.metrics.modes_covered).collect();
    let pt_central = r.cells_for("pt").all(|c| {
        c.metrics.mode_mass.as_ref().is_some_and(|m| {
            let best = (0..m.len()).max_by(|&i, &j| m[i].total_cmp(&m[j]));
            best == Some(centre)
        })
    });
    let n_ok = r.cells.iter().all(|c| c.run.samples.len() == 1000);
    let ok = !digs.is_empty() && digs.iter().all(|&c| c == 9) && pt.iter().all(|&c| c == 1) && pt_central && n_ok;
    Ok((ok, format!("modes per seed: digs {digs:?}, pt {pt:?} (central: {pt_central})")))
}

fn grid(values: &[&str]) -> Vec<String> {
    values.iter().map(|v| v.to_string()).collect()
}

fn plateau() -> Check {
    let cfg = experiment("kernel-sweep", Tier::Desk).map_err(|e| e.to_string())?;
    let mmds = |param: &str, values: &[String]| -> Result<Vec<f64>, String> {
        let s = sweep(&cfg, param, values).map_err(|e| e.to_string())?;
        Ok(s.reports.iter().map(|(_, r)| mean_mmd(r, "digs")).collect())
    };
    let alpha_plateau = grid(&["0.1", "0.2", "0.3", "0.4", "0.5", "0.6", "0.7", "0.8", "0.9"]);
    let sigma_plateau = grid(&["1", "2", "3", "4", "5", "6", "7", "8"]);
    let a = mmds("alpha", &alpha_plateau)?;
    let s = mmds("sigma", &sigma_plateau)?;
    let ends = mmds("alpha", &grid(&["0.01"]))?[0].max(mmds("sigma", &grid(&["20"]))?[0]);
    let all: Vec<f64> = a.iter().chain(&s).copied().collect();
    let plateau_mean = all.iter().sum::<f64>() / all.len() as f64;
    let worst = all.iter().copied().fold(0.0, f64::max);
    let ok = worst <= 0.05 && ends >= 10.0 * plateau_mean;
    Ok((
        ok,
        format!(
            "plateau max {worst:.4}, mean {plateau_mean:.4}; worst grid end {ends:.4} ({:.1}x); alpha {a:.3?}; sigma {s:.3?}",
            ends / plateau_mean
        ),
    ))
}

fn vp_schedule() -> Check {
    let cfg = experiment("vp-schedule", Tier::Desk).map_err(|e| e.to_string())?;
    let s = sweep(&cfg, "T", &grid(&["3", "4", "5"])).map_err(|e| e.to_string())?;
    let v: Vec<f64> = s.reports.iter().map(|(_, r)| mean_mmd(r, "digs")).collect();
    Ok((v.iter().all(|m| *m <= 0.05), format!("MMD at T = 3, 4, 5: {v:.4?}")))
}

fn rdmc_cost() -> Check {
    let r = run("rdmc-cost")?;
    let rdmc: Vec<(f64, u64, &str)> = r
        .summary
        .iter()
        .filter(|s| s.label.starts_with("rdmc"))
        .map(|s| (s.mmd.map_or(f64::NAN, |m| m.mean), s.calls_per_seed, s.label.as_str()))
        .collect();
    let &(best, best_calls, best_label) = rdmc.iter().min_by(|a, b| a.0.total_cmp(&b.0)).ok_or("no rdmc runs")?;
    let digs = r
        .summary
        .iter()
        .filter(|s| s.label.starts_with("digs") && s.mmd.is_some_and(|m| m.mean <= best))
        .min_by_key(|s| s.calls_per_seed);
    Ok(match digs {
        Some(d) => (
            d.calls_per_seed * 5 <= best_calls,
            format!(
                "best RDMC {best_label} MMD {best:.4} at {best_calls} calls; {} MMD {:.4} at {} calls ({:.0}x fewer)",
                d.label,
                d.mmd.map_or(f64::NAN, |m| m.mean),
                d.calls_per_seed,
                best_calls as f64 / d.calls_per_seed as f64
            ),
        ),
        None => (false, format!("no DiGS setting reaches RDMC's best MMD {best:.4}")),
    })
}

fn moment_suite() -> Vec<(String, Box<dyn Sampler>)> {
    let digs = |schedule: ScheduleSpec, init: InitStrategy| -> Box<dyn Sampler> {
        Box::new(
            DigsSampler::new(DigsConfig {
                schedule,
                sweeps: 2,
                denoise_steps: 10,
                denoiser: TransitionKernel::Mala { step_size: 0.2 },
                init,
                allow_extended: false,
            })
            .expect("valid config"),
        )
    };
    let mut out: Vec<(String, Box<dyn Sampler>)> = vec![
        ("ula".into(), Box::new(McmcSampler { kernel: TransitionKernel::Ula { step_size: 0.01 }, steps_per_sample: 200 })),
        ("mala".into(), Box::new(McmcSampler { kernel: TransitionKernel::Mala { step_size: 0.5 }, steps_per_sample: 10 })),
        ("hmc".into(), Box::new(McmcSampler { kernel: TransitionKernel::Hmc(HmcConfig::new(0.3, 8)), steps_per_sample: 2 })),
        (
            "pt".into(),
            Box::new(PtSampler(PtConfig {
                temperatures: PtConfig::DEFAULT_LADDER.to_vec(),
                inner: TransitionKernel::Hmc(HmcConfig::new(0.3, 8)),
                steps_per_sample: 2,
                swap_every: 1,
            })),
        ),
        (
            "rdmc".into(),
            Box::new(RdmcSampler(RdmcConfig {
                steps: 2,
                gamma: 0.1,
                posterior_samples: 5,
                ula_steps: 5,
                ula_step_size: 1e-2,
                is_samples: 100,
            })),
        ),
    ];
    let vp = ScheduleSpec::VpLinear { steps: 3, alpha_1: 0.9, alpha_t: 0.1 };
    for init in InitStrategy::ALL {
        out.push((format!("digs-{}", init.name()), digs(ScheduleSpec::single(1.0, 1.0), init)));
        out.push((format!("digs-vp-{}", init.name()), digs(vp.clone(), init)));
    }
    out
}

fn exactness() -> Check {
    let mut failures = Vec::new();
    let mut checked = 0;
    for (seed, (name, sampler)) in moment_suite().into_iter().enumerate() {
        for dim in [1, 5] {
            let target = MixtureOfGaussians::standard_normal(dim);
            let opts = RunOptions { n_chains: 20, ..RunOptions::new(20_000, seed as u64) };
            let run = run_sampler(sampler.as_ref(), &target, &vec![0.0; dim], &opts).map_err(|e| e.to_string())?;
            let n = run.samples.len() as f64;
            for j in 0..dim {
                let mean = run.samples.iter().map(|p| p[j]).sum::<f64>() / n;
                let var = run.samples.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / (n - 1.0);
                if mean.abs() > 0.05 || !(0.9..=1.1).contains(&var) {
                    failures.push(format!("{name} d={dim} coord {j}: mean {mean:.4} var {var:.4}"));
                }
            }
            if run.evals.calls != run.expected_calls {
                failures.push(format!("{name} d={dim}: {} calls, expected {}", run.evals.calls, run.expected_calls));
            }
            checked += 1;
        }
    }
    Ok((failures.is_empty(), format!("{checked} sampler/dimension pairs; failures {failures:?}")))
}

fn trapezoid(f: impl Fn(f64) -> f64) -> f64 {
    let (lo, hi, n) = (-20.0, 20.0, 20_001);
    let h = (hi - lo) / (n - 1) as f64;
    let inner: f64 = (1..n - 1).map(|i| f(lo + i as f64 * h)).sum();
    h * (inner + 0.5 * (f(lo) + f(hi)))
}

fn oracles() -> Check {
    let mut worst_grad: f64 = 0.0;
    let mut n_grad = 0;
    let mut kernels = vec![
        ConvolutionKernel::new(1.0, 1.0).unwrap(),
        ConvolutionKernel::new(0.1, 0.99_f64.sqrt()).unwrap(),
        ConvolutionKernel::new_extended(2.0, 8.0).unwrap(),
    ];
    kernels.extend_from_slice(vp_linear(5, 0.9, 0.1).unwrap().levels());
    for (name, _) in TARGETS {
        let built = target(name).and_then(|t| Ok(t.build()?)).map_err(|e| e.to_string())?;
        let energy = built.energy();
        let mut rng = stream(8, 0);
        let mut points = 0;
        while points < 40 {
            let x: Vec<f64> = match built.as_bnn() {
                Some(b) => b.posterior.sample_prior(&mut rng).into_vec(),
                None => standard_normal_vec(&mut rng, energy.dim()).iter().map(|v| 3.0 * v).collect(),
            };
            if built.as_bnn().is_some_and(|b| b.posterior.min_abs_preactivation(&x) < 1e-3) {
                continue;
            }
            worst_grad = worst_grad.max(gradient_relative_error(energy, &x));
            let k = kernels[points % kernels.len()];
            let x_tilde: Vec<f64> = x.iter().map(|v| k.alpha() * v + 0.3 * k.sigma()).collect();
            let dp = DenoisingPosterior::new(energy, k, x_tilde).map_err(|e| e.to_string())?;
            worst_grad = worst_grad.max(gradient_relative_error(&dp, &x));
            n_grad += 2;
            points += 1;
        }
    }

    let one_d = |w: &[f64], m: &[f64], s: &[f64]| {
        MixtureOfGaussians::new(w.to_vec(), m.iter().map(|v| vec![*v]).collect(), s.to_vec()).unwrap()
    };
    let cases = [
        (one_d(&[0.3, 0.7], &[-1.5, 1.5], &[0.3, 0.5]), ConvolutionKernel::new(1.0, 1.0).unwrap()),
        (one_d(&[0.1, 0.1, 0.1, 0.7], &[-3.0, -1.0, 1.0, 3.0], &[0.3; 4]), ConvolutionKernel::variance_preserving(0.3).unwrap()),
    ];
    let (mut worst_density, mut worst_tweedie): (f64, f64) = (0.0, 0.0);
    for (mog, kernel) in &cases {
        let noisy = mog.convolve(kernel);
        for i in 0..21 {
            let xt = -5.0 + 0.5 * i as f64;
            let joint = |x: f64| (mog.log_density(&[x]) + kernel.log_density(&[xt], &[x])).exp();
            let z = trapezoid(joint);
            worst_density = worst_density.max((noisy.log_density(&[xt]) - z.ln()).abs());
            let score: Vec<f64> = noisy.try_grad(&[xt]).map_err(|e| e.to_string())?.iter().map(|g| -g).collect();
            let mu = tweedie_mean(&score, &[xt], kernel).map_err(|e| e.to_string())?[0];
            worst_tweedie = worst_tweedie.max((mu - trapezoid(|x| x * joint(x)) / z).abs());
        }
    }

    let (mu, sigma_g, beta) = (1.0, 1e-4, 0.1);
    let deltas = one_d(&[0.5, 0.5], &[-mu, mu], &[sigma_g, sigma_g]);
    let tempered = tempered_log_density(&deltas, beta, &[0.0]).map_err(|e| e.to_string())?;
    let v = sigma_g * sigma_g + 1.0;
    let bound = -mu * mu / (2.0 * v) - 0.5 * (2.0 * std::f64::consts::PI * v).ln();
    let convolved = deltas.convolve(&ConvolutionKernel::new(1.0, 1.0).unwrap()).log_density(&[0.0]);

    let ok = worst_grad <= 1e-5 && worst_density <= 1e-6 && worst_tweedie <= 1e-6 && tempered < -1e6 && convolved >= bound - 1e-12;
    Ok((
        ok,
        format!(
            "{n_grad} gradient checks, worst rel {worst_grad:.1e}; convolved density {worst_density:.1e}; Tweedie {worst_tweedie:.1e}; tempered {tempered:.3e}, convolved {convolved:.4} vs bound {bound:.4}"
        ),
    ))
}

fn bnn() -> Check {
    let r = run("bnn")?;
    let per_seed = |label: &str| -> Vec<f64> { r.cells_for(label).filter_map(|c| c.metrics.nll).collect() };
    let (digs, hmc, mala, pt) = (per_seed("digs"), per_seed("hmc"), per_seed("mala"), per_seed("pt"));
    let ok = digs.len() == 3
        && digs.iter().zip(&hmc).zip(&mala).all(|((d, h), m)| d <= h && d <= m);
    Ok((ok, format!("test NLL per seed: digs {digs:.3?}, hmc {hmc:.3?}, mala {mala:.3?}, pt {pt:.3?}")))
}

fn main() -> ExitCode {
    let criteria: [(&str, f64, fn() -> Check); 9] = [
        ("init-strategy ordering", 600.0, init_strategies),
        ("MoG-40 ordering", 1800.0, mog40),
        ("mixture of deltas", 600.0, mixture_of_deltas),
        ("hyperparameter plateau", 1800.0, plateau),
        ("multi-level schedule", 900.0, vp_schedule),
        ("RDMC cost", 1200.0, rdmc_cost),
        ("exactness", 600.0, exactness),
        ("oracles", 120.0, oracles),
        ("BNN predictive NLL", 1800.0, bnn),
    ];
    let mut failed = 0;
    for (i, (name, limit, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
        let secs = start.elapsed().as_secs_f64();
        let pass = ok && secs <= *limit;
        failed += usize::from(!pass);
        println!("{} {} {name}: {detail} [{secs:.1} s of {limit:.0} s]", if pass { "PASS" } else { "FAIL" }, i + 1);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
