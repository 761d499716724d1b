//! Static-trajectory HMC with a diagonal mass matrix. Warmup tunes the step
//! size by dual averaging and estimates the inverse mass from the middle
//! warmup window.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Log density and its gradient; `None` marks a point the model cannot
/// evaluate (treated as zero density).
pub trait Target: Sync {
    fn dim(&self) -> usize;
    fn log_density_grad(&self, z: &[f64]) -> Option<(f64, Vec<f64>)>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct HmcSettings {
    pub step_size: f64,
    pub leapfrog_steps: usize,
    pub warmup: usize,
    pub iterations: usize,
    pub target_accept: f64,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct ChainOutput {
    pub draws: Vec<Vec<f64>>,
    pub accept_prob: Vec<f64>,
    pub divergences: usize,
    pub failed_evaluations: usize,
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
}

const MAX_ENERGY_ERROR: f64 = 1000.0;

struct DualAveraging {
    mu: f64,
    log_eps_bar: f64,
    h_bar: f64,
    t: f64,
    target: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(eps: f64, target: f64) -> Self {
        Self {
            mu: (10.0 * eps).ln(),
            log_eps_bar: 0.0,
            h_bar: 0.0,
            t: 0.0,
            target,
        }
    }

    /// Returns the next step size to try.
    fn update(&mut self, accept: f64) -> f64 {
        self.t += 1.0;
        let w = 1.0 / (self.t + Self::T0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept);
        let log_eps = self.mu - self.t.sqrt() / Self::GAMMA * self.h_bar;
        let eta = self.t.powf(-Self::KAPPA);
        self.log_eps_bar = eta * log_eps + (1.0 - eta) * self.log_eps_bar;
        log_eps.exp()
    }

    fn final_step(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

struct State {
    z: Vec<f64>,
    logp: f64,
    grad: Vec<f64>,
}

enum Transition {
    Moved { accept: f64 },
    Divergent,
    Failed,
}

fn kinetic(p: &[f64], inv_metric: &[f64]) -> f64 {
    0.5 * p.iter().zip(inv_metric).map(|(pi, m)| pi * pi * m).sum::<f64>()
}

fn transition<T: Target, R: Rng>(
    target: &T,
    state: &mut State,
    eps: f64,
    steps: usize,
    inv_metric: &[f64],
    rng: &mut R,
) -> Transition {
    let d = state.z.len();
    let mut p: Vec<f64> = (0..d)
        .map(|i| rng.sample::<f64, _>(StandardNormal) / inv_metric[i].sqrt())
        .collect();
    let h0 = -state.logp + kinetic(&p, inv_metric);
    let mut z = state.z.clone();
    let mut grad = state.grad.clone();
    let mut logp = state.logp;
    for _ in 0..steps {
        for i in 0..d {
            p[i] += 0.5 * eps * grad[i];
            z[i] += eps * inv_metric[i] * p[i];
        }
        match target.log_density_grad(&z) {
            Some((lp, g)) if lp.is_finite() && g.iter().all(|v| v.is_finite()) => {
                logp = lp;
                grad = g;
            }
            _ => return Transition::Failed,
        }
        for i in 0..d {
            p[i] += 0.5 * eps * grad[i];
        }
    }
    let h1 = -logp + kinetic(&p, inv_metric);
    let delta = h0 - h1;
    if !delta.is_finite() || -delta > MAX_ENERGY_ERROR {
        return Transition::Divergent;
    }
    let accept = delta.exp().min(1.0);
    if rng.random::<f64>() < accept {
        *state = State { z, logp, grad };
    }
    Transition::Moved { accept }
}

/// Runs one chain from `init`, using `seed` for its own stream.
pub fn run_chain<T: Target>(
    target: &T,
    init: &[f64],
    settings: &HmcSettings,
    seed: u64,
) -> Result<ChainOutput, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = target.dim();
    let (logp, grad) = target
        .log_density_grad(init)
        .ok_or_else(|| "target cannot be evaluated at the initial point".to_string())?;
    let mut state = State {
        z: init.to_vec(),
        logp,
        grad,
    };
    let mut inv_metric = vec![1.0; d];
    let mut eps = settings.step_size;
    let mut da = DualAveraging::new(eps, settings.target_accept);

    let w = settings.warmup;
    let (slow_start, slow_end) = ((w as f64 * 0.15) as usize, (w as f64 * 0.85) as usize);
    let mut window: Vec<Vec<f64>> = Vec::new();
    let mut out = ChainOutput {
        draws: Vec::with_capacity(settings.iterations),
        accept_prob: Vec::with_capacity(settings.iterations),
        divergences: 0,
        failed_evaluations: 0,
        step_size: eps,
        inv_metric: inv_metric.clone(),
    };

    for it in 0..w + settings.iterations {
        let warm = it < w;
        let this_eps = if warm { eps } else { eps * rng.random_range(0.9..1.1) };
        let accept = match transition(
            target,
            &mut state,
            this_eps,
            settings.leapfrog_steps,
            &inv_metric,
            &mut rng,
        ) {
            Transition::Moved { accept } => accept,
            Transition::Divergent => {
                if !warm {
                    out.divergences += 1;
                }
                0.0
            }
            Transition::Failed => {
                if !warm {
                    out.failed_evaluations += 1;
                }
                0.0
            }
        };
        if warm {
            eps = da.update(accept);
            if it >= slow_start && it < slow_end {
                window.push(state.z.clone());
            }
            if it + 1 == slow_end && window.len() > 10 {
                let k = window.len() as f64;
                for i in 0..d {
                    let mean = window.iter().map(|z| z[i]).sum::<f64>() / k;
                    let var = window.iter().map(|z| (z[i] - mean).powi(2)).sum::<f64>() / (k - 1.0);
                    inv_metric[i] = (k / (k + 5.0)) * var + 1e-3 * (5.0 / (k + 5.0));
                }
                da = DualAveraging::new(eps, settings.target_accept);
            }
            if it + 1 == w {
                eps = da.final_step();
            }
        } else {
            out.draws.push(state.z.clone());
            out.accept_prob.push(accept);
        }
    }
    out.step_size = eps;
    out.inv_metric = inv_metric;
    Ok(out)
}

/// Runs `chains` chains in parallel threads; chain c is seeded with
/// `seed + c`.
pub fn run_chains<T: Target>(
    target: &T,
    inits: &[Vec<f64>],
    settings: &HmcSettings,
) -> Result<Vec<ChainOutput>, String> {
    std::thread::scope(|s| {
        let handles: Vec<_> = inits
            .iter()
            .enumerate()
            .map(|(c, init)| s.spawn(move || run_chain(target, init, settings, settings.seed.wrapping_add(c as u64))))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().map_err(|_| "chain thread panicked".to_string())?)
            .collect()
    })
}
