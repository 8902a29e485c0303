//! No-U-Turn Hamiltonian Monte Carlo with dual-averaging step-size
//! adaptation during burn-in.

use fpuq_numcore::RngStream;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{PosteriorError, Result};
use crate::likelihood::log_posterior_grad;
use crate::model::LatentModel;
use crate::observation::FieldObservations;

/// Log density (up to a constant) and its gradient.
pub trait LogDensity {
    fn dim(&self) -> usize;
    fn log_density_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

/// Latent posterior `P(ξ | D)` for a model and a set of observations.
pub struct LatentPosterior<'a, M: LatentModel + ?Sized> {
    pub model: &'a M,
    pub observations: &'a [FieldObservations],
}

impl<M: LatentModel + ?Sized> LogDensity for LatentPosterior<'_, M> {
    fn dim(&self) -> usize {
        self.model.latent_dim()
    }

    fn log_density_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        log_posterior_grad(self.model, x, self.observations)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NutsConfig {
    pub initial_step: f64,
    pub target_accept: f64,
    pub burn_in: usize,
    pub draws: usize,
    pub max_depth: usize,
    pub seed: u64,
}

impl Default for NutsConfig {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            target_accept: 0.6,
            burn_in: 2000,
            draws: 1000,
            max_depth: 10,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NutsResult {
    /// Post-burn-in draws, one per row.
    pub draws: Array2<f64>,
    /// Step size used after adaptation.
    pub step_size: f64,
    /// Mean acceptance statistic over retained draws.
    pub mean_accept: f64,
    pub divergences: usize,
    pub mean_tree_depth: f64,
}

const MAX_ENERGY_ERROR: f64 = 1000.0;

#[derive(Clone)]
struct Point {
    q: Vec<f64>,
    p: Vec<f64>,
    logp: f64,
    grad: Vec<f64>,
}

impl Point {
    fn hamiltonian(&self) -> f64 {
        -self.logp + 0.5 * dot(&self.p, &self.p)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One leapfrog step of size `eps` (negative to go backwards).
fn leapfrog<T: LogDensity + ?Sized>(target: &T, s: &Point, eps: f64) -> Result<Point> {
    let p_half: Vec<f64> = s.p.iter().zip(&s.grad).map(|(p, g)| p + 0.5 * eps * g).collect();
    let q: Vec<f64> = s.q.iter().zip(&p_half).map(|(q, p)| q + eps * p).collect();
    let (logp, grad) = target.log_density_grad(&q)?;
    let p = p_half.iter().zip(&grad).map(|(p, g)| p + 0.5 * eps * g).collect();
    Ok(Point { q, p, logp, grad })
}

/// Total energy `H` after `steps` leapfrog steps from `(q, p)`.
pub fn leapfrog_energy<T: LogDensity + ?Sized>(
    target: &T,
    q: &[f64],
    p: &[f64],
    eps: f64,
    steps: usize,
) -> Result<(f64, f64)> {
    let (logp, grad) = target.log_density_grad(q)?;
    let mut s = Point {
        q: q.to_vec(),
        p: p.to_vec(),
        logp,
        grad,
    };
    let h0 = s.hamiltonian();
    for _ in 0..steps {
        s = leapfrog(target, &s, eps)?;
    }
    Ok((h0, s.hamiltonian()))
}

struct Tree {
    minus: Point,
    plus: Point,
    proposal: Point,
    /// Points inside the slice.
    n: usize,
    keep_going: bool,
    accept_sum: f64,
    accept_count: usize,
    diverged: bool,
}

struct Sampler<'a, T: LogDensity + ?Sized> {
    target: &'a T,
    rng: RngStream,
}

impl<T: LogDensity + ?Sized> Sampler<'_, T> {
    fn no_u_turn(minus: &Point, plus: &Point) -> bool {
        let dq: Vec<f64> = plus.q.iter().zip(&minus.q).map(|(a, b)| a - b).collect();
        dot(&dq, &minus.p) >= 0.0 && dot(&dq, &plus.p) >= 0.0
    }

    fn build(&mut self, s: &Point, log_u: f64, dir: f64, depth: usize, eps: f64, h0: f64) -> Result<Tree> {
        if depth == 0 {
            let next = leapfrog(self.target, s, dir * eps)?;
            let h = next.hamiltonian();
            let h = if h.is_finite() { h } else { f64::INFINITY };
            let diverged = log_u - MAX_ENERGY_ERROR >= -h;
            return Ok(Tree {
                minus: next.clone(),
                plus: next.clone(),
                proposal: next,
                n: usize::from(log_u <= -h),
                keep_going: !diverged,
                accept_sum: (h0 - h).exp().min(1.0),
                accept_count: 1,
                diverged,
            });
        }
        let mut t = self.build(s, log_u, dir, depth - 1, eps, h0)?;
        if !t.keep_going {
            return Ok(t);
        }
        let edge = if dir < 0.0 { t.minus.clone() } else { t.plus.clone() };
        let o = self.build(&edge, log_u, dir, depth - 1, eps, h0)?;
        if dir < 0.0 {
            t.minus = o.minus;
        } else {
            t.plus = o.plus;
        }
        let total = t.n + o.n;
        if o.n > 0 && self.rng.uniform(0.0, 1.0) < o.n as f64 / total as f64 {
            t.proposal = o.proposal;
        }
        t.accept_sum += o.accept_sum;
        t.accept_count += o.accept_count;
        t.diverged |= o.diverged;
        t.keep_going = o.keep_going && Self::no_u_turn(&t.minus, &t.plus);
        t.n = total;
        Ok(t)
    }
}

/// Runs one chain from `start`. Burn-in transitions adapt the step size
/// towards `target_accept` and are discarded.
pub fn nuts_sample<T: LogDensity + ?Sized>(target: &T, start: &[f64], config: &NutsConfig) -> Result<NutsResult> {
    let d = target.dim();
    if start.len() != d {
        return Err(PosteriorError::Config(format!("start has {} entries, target dimension {d}", start.len())));
    }
    if !(config.initial_step > 0.0) || !(0.0..1.0).contains(&config.target_accept) || config.max_depth == 0 {
        return Err(PosteriorError::Config(format!("invalid NUTS settings {config:?}")));
    }
    let mut sampler = Sampler {
        target,
        rng: RngStream::new(config.seed, "nuts"),
    };
    let (logp, grad) = target.log_density_grad(start)?;
    if !logp.is_finite() {
        return Err(PosteriorError::NonFinite {
            what: "log density at the starting point",
            value: logp,
            step: 0,
        });
    }
    let mut current = Point {
        q: start.to_vec(),
        p: vec![0.0; d],
        logp,
        grad,
    };

    let (gamma, t0, kappa) = (0.05, 10.0, 0.75);
    let mu = (10.0 * config.initial_step).ln();
    let mut eps = config.initial_step;
    let mut h_bar = 0.0;
    let mut log_eps_bar = 0.0;

    let total = config.burn_in + config.draws;
    let mut draws = Array2::zeros((config.draws, d));
    let (mut accept_total, mut depth_total, mut divergences, mut diverged_all) = (0.0, 0usize, 0usize, 0usize);
    for m in 1..=total {
        current.p = (0..d).map(|_| sampler.rng.normal()).collect();
        let h0 = current.hamiltonian();
        let log_u = -h0 + sampler.rng.uniform(0.0, 1.0).ln();
        let mut minus = current.clone();
        let mut plus = current.clone();
        let mut n = 1usize;
        let mut depth = 0;
        let (mut accept_sum, mut accept_count) = (0.0, 0usize);
        let mut diverged = false;
        loop {
            let dir = if sampler.rng.uniform(0.0, 1.0) < 0.5 { -1.0 } else { 1.0 };
            let t = if dir < 0.0 {
                let t = sampler.build(&minus, log_u, dir, depth, eps, h0)?;
                minus = t.minus.clone();
                t
            } else {
                let t = sampler.build(&plus, log_u, dir, depth, eps, h0)?;
                plus = t.plus.clone();
                t
            };
            accept_sum += t.accept_sum;
            accept_count += t.accept_count;
            diverged |= t.diverged;
            if t.keep_going && t.n > 0 && sampler.rng.uniform(0.0, 1.0) < t.n as f64 / n as f64 {
                current.q = t.proposal.q.clone();
                current.logp = t.proposal.logp;
                current.grad = t.proposal.grad.clone();
            }
            n += t.n;
            depth += 1;
            if !t.keep_going || !Sampler::<T>::no_u_turn(&minus, &plus) || depth >= config.max_depth {
                break;
            }
        }
        let accept = accept_sum / accept_count as f64;
        if diverged {
            diverged_all += 1;
        }
        if m <= config.burn_in {
            let w = 1.0 / (m as f64 + t0);
            h_bar = (1.0 - w) * h_bar + w * (config.target_accept - accept);
            let log_eps = mu - (m as f64).sqrt() / gamma * h_bar;
            let eta = (m as f64).powf(-kappa);
            log_eps_bar = eta * log_eps + (1.0 - eta) * log_eps_bar;
            eps = if m == config.burn_in { log_eps_bar.exp() } else { log_eps.exp() };
        } else {
            let row = m - config.burn_in - 1;
            draws.row_mut(row).assign(&ndarray::ArrayView1::from(&current.q));
            accept_total += accept;
            depth_total += depth;
            divergences += usize::from(diverged);
        }
    }
    if diverged_all == total {
        return Err(PosteriorError::AllDivergent {
            transitions: total,
            step_size: eps,
        });
    }
    let kept = config.draws.max(1) as f64;
    Ok(NutsResult {
        draws,
        step_size: eps,
        mean_accept: accept_total / kept,
        divergences,
        mean_tree_depth: depth_total as f64 / kept,
    })
}

/// NUTS on the latent posterior, started at the origin.
pub fn nuts_latent<M: LatentModel + ?Sized>(
    model: &M,
    observations: &[FieldObservations],
    config: &NutsConfig,
) -> Result<NutsResult> {
    let target = LatentPosterior { model, observations };
    nuts_sample(&target, &vec![0.0; model.latent_dim()], config)
}
