use std::path::{Path, PathBuf};
use std::time::Instant;

use laplace_core::adjoint::{finite_difference_gradient, marginal_gradient, AdjointOptions};
use laplace_core::models::{CovarianceModel, PkData, PoissonLikelihood, SeKernel, PK_TIMES};
use laplace_core::newton::{laplace_fit, BStrategy, NewtonSettings};
use laplace_core::posterior::{conditional_latent, sample_with};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;

use crate::config::{BenchConfig, ModelConfig, RunConfig, SimulateConfig};
use crate::diagnostics::{summarize, Summary};
use crate::error::CliError;
use crate::hmc::{run_chains, ChainOutput, HmcSettings};
use crate::output::{fmt_f64, write_csv, write_json};
use crate::problem::{Model, Problem};
use crate::targets::{FullTarget, MarginalTarget};
use crate::with_model;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Marginal,
    Full,
}

fn out_dir(cfg: &RunConfig) -> Result<&Path, CliError> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| CliError::Io(format!("{}: {e}", cfg.output_dir.display())))?;
    Ok(&cfg.output_dir)
}

fn named(problem: &Problem, values: &[f64]) -> Vec<(String, f64)> {
    problem.names.iter().cloned().zip(values.iter().copied()).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct FitReport {
    pub strategy: String,
    pub hyperparameters: Vec<(String, f64)>,
    pub log_marginal: f64,
    pub log_det_b: f64,
    pub psi: f64,
    pub iterations: usize,
    pub psi_trace: Vec<f64>,
    pub halvings: Vec<usize>,
    pub linesearch_exhausted: bool,
    pub self_consistency: f64,
    pub theta: Vec<f64>,
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<FitReport, CliError> {
    let problem = Problem::from_config(&cfg.model)?;
    let strategy = BStrategy::from(cfg.strategy);
    let fit = problem.fit(&problem.initial, &cfg.newton.settings(), strategy)?;
    let report = FitReport {
        strategy: strategy.to_string(),
        hyperparameters: named(&problem, &problem.initial),
        log_marginal: fit.log_marginal,
        log_det_b: fit.log_det_b,
        psi: fit.psi,
        iterations: fit.iterations,
        psi_trace: fit.psi_trace.clone(),
        halvings: fit.halvings.clone(),
        linesearch_exhausted: fit.linesearch_exhausted,
        self_consistency: fit.self_consistency(),
        theta: fit.theta.clone(),
    };
    let dir = out_dir(cfg)?;
    write_json(&dir.join("fit.json"), &report)?;
    let rows: Vec<Vec<String>> = (0..fit.n())
        .map(|i| {
            vec![
                i.to_string(),
                fmt_f64(fit.theta[i]),
                fmt_f64(fit.a[i]),
                fmt_f64(fit.grad_loglik[i]),
            ]
        })
        .collect();
    write_csv(
        &dir.join("fit_theta.csv"),
        &header(&["index", "theta", "a", "grad_loglik"]),
        &rows,
    )?;
    let rows: Vec<Vec<String>> = fit
        .psi_trace
        .iter()
        .zip(&fit.halvings)
        .enumerate()
        .map(|(i, (p, h))| vec![(i + 1).to_string(), fmt_f64(*p), h.to_string()])
        .collect();
    write_csv(
        &dir.join("fit_trace.csv"),
        &header(&["iteration", "psi", "halvings"]),
        &rows,
    )?;
    Ok(report)
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|c| c.to_string()).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct GradRow {
    pub component: String,
    pub adjoint: f64,
    pub finite_difference: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradcheckReport {
    pub strategy: String,
    pub log_marginal: f64,
    pub rows: Vec<GradRow>,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

/// Names of the coordinates the likelihood itself uses for η.
fn eta_names(problem: &Problem) -> Vec<String> {
    let rest = &problem.names[problem.n_phi..];
    match problem.model {
        Model::Gaussian { .. } | Model::Poisson { .. } => rest.to_vec(),
        Model::StudentT { .. } | Model::Pk { .. } => rest.iter().map(|n| format!("log_{n}")).collect(),
    }
}

pub fn cmd_gradcheck(cfg: &RunConfig) -> Result<GradcheckReport, CliError> {
    let problem = Problem::from_config(&cfg.model)?;
    let strategy = BStrategy::from(cfg.strategy);
    let gc = cfg.gradcheck.clone().unwrap_or_default();
    let settings = cfg.newton.settings();
    let (fit, g) = problem.fit_and_gradient(&problem.initial, &settings, strategy)?;
    let tight = NewtonSettings {
        tolerance: 1e-12,
        ..settings
    };
    let (phi, eta) = problem.split(&problem.initial);
    let (fd_phi, fd_eta) = with_model!(&problem.model, |cov, lik| finite_difference_gradient(
        cov,
        &phi,
        lik,
        &eta,
        &tight,
        strategy,
        gc.relative_step
    )?);
    let mut names = problem.names[..problem.n_phi].to_vec();
    names.extend(eta_names(&problem));
    let adj = g.grad_phi.iter().chain(&g.grad_eta);
    let fd = fd_phi.iter().chain(&fd_eta);
    let rows: Vec<GradRow> = names
        .into_iter()
        .zip(adj.zip(fd))
        .map(|(component, (a, f))| GradRow {
            component,
            adjoint: *a,
            finite_difference: *f,
            rel_error: (a - f).abs() / f.abs().max(1.0),
        })
        .collect();
    let max_rel_error = rows.iter().map(|r| r.rel_error).fold(0.0, f64::max);
    let report = GradcheckReport {
        strategy: strategy.to_string(),
        log_marginal: fit.log_marginal,
        rows,
        max_rel_error,
        tolerance: gc.tolerance,
    };
    let dir = out_dir(cfg)?;
    write_json(&dir.join("gradcheck.json"), &report)?;
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.component.clone(),
                fmt_f64(r.adjoint),
                fmt_f64(r.finite_difference),
                fmt_f64(r.rel_error),
            ]
        })
        .collect();
    write_csv(
        &dir.join("gradcheck.csv"),
        &header(&["component", "adjoint", "finite_difference", "rel_error"]),
        &rows,
    )?;
    if !(max_rel_error <= gc.tolerance) {
        return Err(CliError::GradcheckFailed {
            max_rel_error,
            tolerance: gc.tolerance,
        });
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub ess: f64,
    pub mcse: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SampleReport {
    pub method: Method,
    pub chains: usize,
    pub draws_per_chain: usize,
    pub parameters: Vec<ParamSummary>,
    pub acceptance_rate: f64,
    pub step_sizes: Vec<f64>,
    pub divergences: usize,
    pub failed_evaluations: usize,
    pub divergence_fraction: f64,
    pub warnings: Vec<String>,
    /// Hyperparameter draws on the natural scale, per chain.
    #[serde(skip)]
    pub hyper_draws: Vec<Vec<Vec<f64>>>,
}

impl SampleReport {
    pub fn summary(&self, name: &str) -> Option<&ParamSummary> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

const LATENT_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

pub fn cmd_sample(cfg: &RunConfig, method: Method) -> Result<SampleReport, CliError> {
    let sc = cfg
        .sampler
        .clone()
        .ok_or_else(|| CliError::Config("`sample` needs a `sampler` section".into()))?;
    let problem = Problem::from_config(&cfg.model)?;
    let strategy = BStrategy::from(cfg.strategy);
    let settings = cfg.newton.settings();
    let hmc = HmcSettings {
        step_size: sc.step_size,
        leapfrog_steps: sc.leapfrog_steps,
        warmup: sc.warmup,
        iterations: sc.iterations,
        target_accept: sc.target_accept,
        seed: sc.seed,
    };
    let h = problem.n_hyper();
    let z0: Vec<f64> = problem.initial.iter().map(|v| v.ln()).collect();
    let inits: Vec<Vec<f64>> = (0..sc.chains)
        .map(|c| {
            let mut r = ChaCha8Rng::seed_from_u64(sc.seed.wrapping_add(c as u64) ^ LATENT_STREAM.rotate_left(7));
            z0.iter().map(|v| v + r.random_range(-0.1..0.1)).collect()
        })
        .collect();

    let (outputs, latent): (Vec<ChainOutput>, Option<Vec<Vec<Vec<f64>>>>) = match method {
        Method::Marginal => {
            let target = MarginalTarget {
                problem: &problem,
                settings: settings.clone(),
                strategy,
            };
            let outputs = run_chains(&target, &inits, &hmc).map_err(CliError::Other)?;
            let latent = if sc.latent {
                Some(recover_latent(&problem, &outputs, &settings, strategy, sc.seed)?)
            } else {
                None
            };
            (outputs, latent)
        }
        Method::Full => {
            let theta0 = problem
                .fit(&problem.initial, &settings, strategy)
                .map(|f| f.theta)
                .unwrap_or_else(|_| vec![0.0; problem.n_latent()]);
            let full_inits: Vec<Vec<f64>> = inits
                .iter()
                .map(|z| z.iter().chain(&theta0).copied().collect())
                .collect();
            let target = FullTarget { problem: &problem };
            let outputs = run_chains(&target, &full_inits, &hmc).map_err(CliError::Other)?;
            let latent = outputs
                .iter()
                .map(|o| o.draws.iter().map(|x| x[h..].to_vec()).collect())
                .collect();
            (outputs, Some(latent))
        }
    };

    let hyper_draws: Vec<Vec<Vec<f64>>> = outputs
        .iter()
        .map(|o| {
            o.draws
                .iter()
                .map(|x| x[..h].iter().map(|v| v.exp()).collect())
                .collect()
        })
        .collect();
    let parameters = problem
        .names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let per_chain: Vec<Vec<f64>> = hyper_draws.iter().map(|c| c.iter().map(|d| d[j]).collect()).collect();
            let Summary { mean, sd, ess, mcse } = summarize(&per_chain);
            ParamSummary {
                name: name.clone(),
                mean,
                sd,
                ess,
                mcse,
            }
        })
        .collect();
    let total = (sc.chains * sc.iterations) as f64;
    let divergences: usize = outputs.iter().map(|o| o.divergences).sum();
    let failed: usize = outputs.iter().map(|o| o.failed_evaluations).sum();
    let divergence_fraction = (divergences + failed) as f64 / total;
    let mut warnings = Vec::new();
    if divergence_fraction > 0.2 {
        warnings.push(format!(
            "{:.1}% of transitions diverged or failed to evaluate",
            100.0 * divergence_fraction
        ));
    }
    let report = SampleReport {
        method,
        chains: sc.chains,
        draws_per_chain: sc.iterations,
        parameters,
        acceptance_rate: outputs.iter().flat_map(|o| &o.accept_prob).sum::<f64>() / total,
        step_sizes: outputs.iter().map(|o| o.step_size).collect(),
        divergences,
        failed_evaluations: failed,
        divergence_fraction,
        warnings,
        hyper_draws,
    };

    let dir = out_dir(cfg)?;
    let tag = match method {
        Method::Marginal => "marginal",
        Method::Full => "full",
    };
    let mut cols = vec!["chain".to_string(), "draw".to_string()];
    cols.extend(problem.names.iter().cloned());
    if latent.is_some() {
        cols.extend((1..=problem.n_latent()).map(|i| format!("theta_{i}")));
    }
    let mut rows = Vec::new();
    for (c, chain) in report.hyper_draws.iter().enumerate() {
        for (d, draw) in chain.iter().enumerate() {
            let mut row = vec![c.to_string(), d.to_string()];
            row.extend(draw.iter().map(|v| fmt_f64(*v)));
            if let Some(l) = &latent {
                row.extend(l[c][d].iter().map(|v| fmt_f64(*v)));
            }
            rows.push(row);
        }
    }
    write_csv(&dir.join(format!("draws_{tag}.csv")), &cols, &rows)?;
    write_json(&dir.join(format!("diagnostics_{tag}.json")), &report)?;
    Ok(report)
}

/// θ ~ N(θ̂, (K⁻¹ + W)⁻¹) at each hyperparameter draw.
fn recover_latent(
    problem: &Problem,
    outputs: &[ChainOutput],
    settings: &NewtonSettings,
    strategy: BStrategy,
    seed: u64,
) -> Result<Vec<Vec<Vec<f64>>>, CliError> {
    std::thread::scope(|s| {
        let handles: Vec<_> = outputs
            .iter()
            .enumerate()
            .map(|(c, out)| {
                s.spawn(move || -> Result<Vec<Vec<f64>>, CliError> {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(c as u64) ^ LATENT_STREAM);
                    out.draws
                        .iter()
                        .map(|z| {
                            let natural: Vec<f64> = z.iter().map(|v| v.exp()).collect();
                            let fit = problem.fit(&natural, settings, strategy)?;
                            let g = conditional_latent(&fit)?;
                            Ok(sample_with(&g, &mut rng, 1)?.remove(0))
                        })
                        .collect()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .map_err(|_| CliError::Other("latent recovery panicked".into()))?
            })
            .collect()
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub p: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub m: usize,
    pub fit_ms: f64,
    pub gradient_ms: f64,
    pub sweeps_forward: usize,
    pub sweeps_reverse: usize,
    pub logdet_sweeps_forward: usize,
    pub logdet_sweeps_reverse: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub strategy: String,
    pub rows: Vec<BenchRow>,
    /// Least-squares slope of log(gradient ms) on log n, one per p.
    pub gradient_slopes: Vec<(usize, f64)>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / k, ly.iter().sum::<f64>() / k);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Poisson counts on random inputs in [0, 4]^d.
pub fn synthetic_poisson(n: usize, d: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(0.0..4.0)).collect())
        .collect();
    let y = x
        .iter()
        .map(|xi| {
            let f = 0.5 + xi.iter().map(|v| v.sin()).sum::<f64>() / d as f64;
            Poisson::new(f.exp()).expect("positive rate").sample(&mut rng)
        })
        .collect();
    (x, y)
}

pub fn cmd_bench(cfg: &RunConfig) -> Result<BenchReport, CliError> {
    let bc: BenchConfig = cfg
        .bench
        .clone()
        .ok_or_else(|| CliError::Config("`bench` needs a `bench` section".into()))?;
    let strategy = BStrategy::from(cfg.strategy);
    let settings = cfg.newton.settings();
    let mut rows = Vec::new();
    for &d in &bc.dims {
        for &n in &bc.sizes {
            let (x, y) = synthetic_poisson(n, d, bc.seed);
            let kern = SeKernel::ard(x, 1e-6)?;
            let lik = PoissonLikelihood::new(&y)?;
            let phi = vec![1.0; 1 + d];
            let k = kern.matrix(&phi);
            let mut fit_ms = Vec::new();
            let mut grad_ms = Vec::new();
            let mut last = None;
            for _ in 0..bc.repetitions {
                let t = Instant::now();
                let fit = laplace_fit(&k, &lik, &[], &settings, strategy)?;
                fit_ms.push(t.elapsed().as_secs_f64() * 1e3);
                let t = Instant::now();
                let g = marginal_gradient(&fit, &kern, &phi, &lik, AdjointOptions::default())?;
                grad_ms.push(t.elapsed().as_secs_f64() * 1e3);
                last = Some(g);
            }
            let g = last.expect("at least one repetition");
            rows.push(BenchRow {
                n,
                p: 1 + d,
                t: 0,
                m: 1,
                fit_ms: median(fit_ms),
                gradient_ms: median(grad_ms),
                sweeps_forward: g.sweeps.forward,
                sweeps_reverse: g.sweeps.reverse,
                logdet_sweeps_forward: g.logdet_sweeps.forward,
                logdet_sweeps_reverse: g.logdet_sweeps.reverse,
            });
        }
    }
    let gradient_slopes = bc
        .dims
        .iter()
        .map(|d| {
            let sel: Vec<&BenchRow> = rows.iter().filter(|r| r.p == 1 + d).collect();
            let xs: Vec<f64> = sel.iter().map(|r| r.n as f64).collect();
            let ys: Vec<f64> = sel.iter().map(|r| r.gradient_ms).collect();
            (1 + d, if xs.len() > 1 { loglog_slope(&xs, &ys) } else { f64::NAN })
        })
        .collect();
    let report = BenchReport {
        strategy: strategy.to_string(),
        rows,
        gradient_slopes,
    };
    let dir = out_dir(cfg)?;
    let csv_rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                r.p.to_string(),
                r.t.to_string(),
                r.m.to_string(),
                fmt_f64(r.fit_ms),
                fmt_f64(r.gradient_ms),
                r.sweeps_forward.to_string(),
                r.sweeps_reverse.to_string(),
                r.logdet_sweeps_forward.to_string(),
                r.logdet_sweeps_reverse.to_string(),
            ]
        })
        .collect();
    write_csv(
        &dir.join("bench.csv"),
        &header(&[
            "n",
            "p",
            "T",
            "m",
            "fit_ms",
            "gradient_ms",
            "sweeps_forward",
            "sweeps_reverse",
            "logdet_sweeps_forward",
            "logdet_sweeps_reverse",
        ]),
        &csv_rows,
    )?;
    write_json(&dir.join("bench.json"), &report)?;
    Ok(report)
}

/// Writes `pk.csv` drawn from the hierarchical model and returns its path.
pub fn cmd_simulate(sim: &SimulateConfig, out: &Path) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let mut rng = ChaCha8Rng::seed_from_u64(sim.seed);
    let data = PkData::simulate(
        &mut rng,
        sim.patients,
        &PK_TIMES,
        (sim.k1pop, sim.k2pop),
        (sim.tau[0], sim.tau[1]),
        sim.sigma,
        sim.dose,
    )?;
    let rows: Vec<Vec<String>> = data
        .patients
        .iter()
        .flat_map(|p| {
            p.times
                .iter()
                .zip(&p.amounts)
                .map(|(t, a)| vec![p.id.clone(), fmt_f64(*t), fmt_f64(*a)])
                .collect::<Vec<_>>()
        })
        .collect();
    let path = out.join("pk.csv");
    write_csv(&path, &header(&["patient_id", "time", "amount"]), &rows)?;
    Ok(path)
}

/// Model kind as written in configs.
pub fn model_kind(m: &ModelConfig) -> &'static str {
    match m {
        ModelConfig::GaussianGp { .. } => "gaussian_gp",
        ModelConfig::PoissonGp { .. } => "poisson_gp",
        ModelConfig::StudentTGp { .. } => "student_t_gp",
        ModelConfig::Pk { .. } => "pk",
    }
}

pub fn covariance_size(problem: &Problem) -> usize {
    with_model!(&problem.model, |cov, _l| cov.n())
}
