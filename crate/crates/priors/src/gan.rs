//! Wasserstein GAN with gradient penalty.

use fpuq_nets::{Activation, Mlp, MlpSpec};
use fpuq_numcore::{adam_step, draw_normal, AdamConfig, AdamState, ParamVector, RngStream, Tape, Var};
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{PriorError, Result};
use crate::grid::FunctionDataset;
use crate::prior::GeneratorPrior;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanTrainConfig {
    /// Generator updates.
    pub steps: usize,
    /// Critic updates per generator update.
    pub critic_steps: usize,
    pub penalty_weight: f64,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub checkpoint_every: usize,
    /// Abort when a loss magnitude exceeds this.
    pub divergence_threshold: f64,
}

impl Default for GanTrainConfig {
    fn default() -> Self {
        Self {
            steps: 20_000,
            critic_steps: 5,
            penalty_weight: 0.1,
            batch_size: 64,
            adam: AdamConfig::default(),
            seed: 0,
            checkpoint_every: 1000,
            divergence_threshold: 1e6,
        }
    }
}

impl GanTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.critic_steps == 0 || self.batch_size == 0 {
            return Err(PriorError::Config(
                "steps, critic steps and batch size must be positive".into(),
            ));
        }
        if !(self.penalty_weight >= 0.0) {
            return Err(PriorError::Config("penalty weight must be non-negative".into()));
        }
        Ok(())
    }
}

/// Losses after one generator update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanRecord {
    pub step: usize,
    pub critic_loss: f64,
    pub penalty: f64,
    pub generator_loss: f64,
}

/// 128 × 3 leaky-ReLU critic with a scalar output.
pub fn standard_discriminator(input: usize, rng: &mut RngStream) -> Result<Mlp> {
    Ok(Mlp::new(
        MlpSpec::new(input, 128, 3, 1, Activation::leaky_relu()),
        rng,
    )?)
}

/// `weight · mean_i (‖∇D(t̂_i)‖ − 1)²` with the gradient taken at the rows of
/// `interp`. Differentiable in whatever `critic` closes over.
pub fn gradient_penalty_tape<'t>(
    critic: &dyn Fn(Var<'t>) -> Var<'t>,
    interp: Var<'t>,
    weight: f64,
) -> Var<'t> {
    let tape = interp.tape();
    let out = critic(interp).sum();
    let g = tape.grad(out, &[interp])[0];
    let norm = g.square().sum_cols().sqrt();
    norm.add_scalar(-1.0).square().mean().scale(weight)
}

fn interpolate(real: &Array2<f64>, fake: &Array2<f64>, eps: &[f64]) -> Array2<f64> {
    let mut out = fake.clone();
    for ((mut o, r), &e) in out.axis_iter_mut(Axis(0)).zip(real.axis_iter(Axis(0))).zip(eps) {
        o.zip_mut_with(&r, |f, &rv| *f = e * rv + (1.0 - e) * *f);
    }
    out
}

fn check_pair(real: &Array2<f64>, fake: &Array2<f64>) -> Result<()> {
    if real.dim() != fake.dim() || real.nrows() == 0 {
        return Err(PriorError::Config(format!(
            "real batch {:?} and fake batch {:?} must match and be nonempty",
            real.dim(),
            fake.dim()
        )));
    }
    Ok(())
}

/// Penalty at `ε·real + (1 − ε)·fake` with one `ε ~ U(0, 1)` per pair.
pub fn gradient_penalty(
    critic: impl for<'t> Fn(Var<'t>) -> Var<'t>,
    real: &Array2<f64>,
    fake: &Array2<f64>,
    rng: &mut RngStream,
    weight: f64,
) -> Result<f64> {
    check_pair(real, fake)?;
    let eps: Vec<f64> = (0..real.nrows()).map(|_| rng.uniform(0.0, 1.0)).collect();
    let tape = Tape::new();
    let interp = tape.var(interpolate(real, fake, &eps));
    Ok(gradient_penalty_tape(&|x| critic(x), interp, weight).item())
}

/// `(L_G, L_D)` for a critic given as a closure.
pub fn critic_losses(
    critic: impl for<'t> Fn(Var<'t>) -> Var<'t>,
    real: &Array2<f64>,
    fake: &Array2<f64>,
    rng: &mut RngStream,
    weight: f64,
) -> Result<(f64, f64)> {
    check_pair(real, fake)?;
    let tape = Tape::new();
    let d_fake = critic(tape.constant(fake.clone())).mean().item();
    let d_real = critic(tape.constant(real.clone())).mean().item();
    let gp = gradient_penalty(&critic, real, fake, rng, weight)?;
    let (lg, ld) = (-d_fake, d_fake - d_real + gp);
    if !lg.is_finite() || !ld.is_finite() {
        return Err(PriorError::Diverged {
            what: "adversarial loss",
            value: if ld.is_finite() { lg } else { ld },
            step: 0,
        });
    }
    Ok((lg, ld))
}

/// `L_G = −E[D(G(ξ))]`, `L_D = E[D(G(ξ))] − E[D(T)] + penalty`.
pub fn wgan_losses(
    prior: &GeneratorPrior,
    disc: &Mlp,
    real: &Array2<f64>,
    xi: &Array2<f64>,
    config: &GanTrainConfig,
    rng: &mut RngStream,
) -> Result<(f64, f64)> {
    let fake = prior.fake_sample(xi)?;
    critic_losses(
        |x| {
            let p = disc.params.constants(x.tape());
            disc.forward_tape(&p, x).expect("critic width checked by fake sample")
        },
        real,
        &fake,
        rng,
        config.penalty_weight,
    )
}

fn mlp_critic<'a, 't: 'a>(disc: &'a Mlp, params: &'a [Var<'t>]) -> impl Fn(Var<'t>) -> Var<'t> + 'a {
    move |x| disc.forward_tape(params, x).expect("critic width checked")
}

fn grads_to_params(template: &ParamVector, grads: &[Var<'_>]) -> ParamVector {
    let mut g = template.zeros_like();
    for (dst, v) in g.arrays_mut().zip(grads) {
        *dst = v.to_array();
    }
    g
}

/// Epoch-wise shuffled minibatches without replacement.
struct BatchSampler {
    order: Vec<usize>,
    cursor: usize,
}

impl BatchSampler {
    fn new(n: usize) -> Self {
        Self {
            order: (0..n).collect(),
            cursor: n,
        }
    }

    fn next(&mut self, size: usize, rng: &mut RngStream) -> Vec<usize> {
        let size = size.min(self.order.len());
        if self.cursor + size > self.order.len() {
            rng.shuffle(&mut self.order);
            self.cursor = 0;
        }
        let out = self.order[self.cursor..self.cursor + size].to_vec();
        self.cursor += size;
        out
    }
}

/// Alternating critic/generator training.
///
/// `on_checkpoint` receives `(generator step, prior, critic)` every
/// `checkpoint_every` generator steps, after the last step, and once more
/// before a divergence error is returned.
pub fn train_prior(
    mut prior: GeneratorPrior,
    mut disc: Mlp,
    data: &FunctionDataset,
    config: &GanTrainConfig,
    on_checkpoint: &mut dyn FnMut(usize, &GeneratorPrior, &Mlp) -> Result<()>,
) -> Result<(GeneratorPrior, Mlp, Vec<GanRecord>)> {
    config.validate()?;
    if data.fields != prior.data_fields() || data.grid != prior.grid {
        return Err(PriorError::Grid(
            "dataset fields or grid differ from the prior's".into(),
        ));
    }
    if data.is_empty() {
        return Err(PriorError::Config("empty dataset".into()));
    }
    if disc.spec.input != prior.sample_width() {
        return Err(PriorError::Config(format!(
            "critic input {} != sample width {}",
            disc.spec.input,
            prior.sample_width()
        )));
    }
    let root = RngStream::new(config.seed, "gan");
    let mut data_rng = root.child("data");
    let mut xi_rng = root.child("xi");
    let mut eps_rng = root.child("eps");
    let mut sampler = BatchSampler::new(data.len());
    let bs = config.batch_size;
    let d = prior.latent_dim();
    let mut gen_params = prior.params();
    let mut gen_adam = AdamState::new(&gen_params, config.adam);
    let mut disc_adam = AdamState::new(&disc.params, config.adam);
    let mut history = Vec::with_capacity(config.steps);
    let guard = |what: &'static str, value: f64, step: usize| -> Result<()> {
        if !value.is_finite() || value.abs() > config.divergence_threshold {
            return Err(PriorError::Diverged { what, value, step });
        }
        Ok(())
    };

    for step in 0..config.steps {
        let mut critic_loss = 0.0;
        let mut penalty = 0.0;
        for _ in 0..config.critic_steps {
            let real = data.rows(&sampler.next(bs, &mut data_rng));
            let n = real.nrows();
            let xi = draw_normal(&mut xi_rng, (n, d));
            let fake = prior.fake_sample(&xi)?;
            let eps: Vec<f64> = (0..n).map(|_| eps_rng.uniform(0.0, 1.0)).collect();
            let interp = interpolate(&real, &fake, &eps);

            let g = {
                let tape = Tape::new();
                let dp = disc.params.vars(&tape);
                let critic = mlp_critic(&disc, &dp);
                let d_real = critic(tape.constant(real)).mean();
                let d_fake = critic(tape.constant(fake)).mean();
                let gp = gradient_penalty_tape(&critic, tape.var(interp), config.penalty_weight);
                let loss = d_fake - d_real + gp;
                critic_loss = loss.item();
                penalty = gp.item();
                if let Err(e) = guard("critic loss", critic_loss, step) {
                    on_checkpoint(step, &prior, &disc)?;
                    return Err(e);
                }
                grads_to_params(&disc.params, &tape.grad(loss, &dp))
            };
            adam_step(&mut disc.params, &g, &mut disc_adam)?;
        }

        let xi = draw_normal(&mut xi_rng, (bs, d));
        let (g, generator_loss) = {
            let tape = Tape::new();
            let gv = gen_params.vars(&tape);
            let dc = disc.params.constants(&tape);
            let fake = prior.fake_sample_tape(&gv, tape.constant(xi))?;
            let loss = -disc.forward_tape(&dc, fake)?.mean();
            let value = loss.item();
            if let Err(e) = guard("generator loss", value, step) {
                on_checkpoint(step, &prior, &disc)?;
                return Err(e);
            }
            (grads_to_params(&gen_params, &tape.grad(loss, &gv)), value)
        };
        adam_step(&mut gen_params, &g, &mut gen_adam)?;
        prior.set_params(&gen_params)?;

        history.push(GanRecord {
            step,
            critic_loss,
            penalty,
            generator_loss,
        });
        let done = step + 1;
        if done == config.steps || (config.checkpoint_every > 0 && done % config.checkpoint_every == 0) {
            log::info!(
                "gan step {done}/{}: critic {critic_loss:.4e}, generator {generator_loss:.4e}",
                config.steps
            );
            on_checkpoint(done, &prior, &disc)?;
        }
    }
    Ok((prior, disc, history))
}
