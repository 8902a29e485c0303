//! Variational inference over the latent space with an inverse
//! autoregressive flow.

use fpuq_nets::{iaf::log_standard_normal, IafFlow, IafSpec};
use fpuq_numcore::{adam_step, draw_normal, AdamConfig, AdamState, RngStream, Tape, Var};
use fpuq_priors::FieldTag;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{PosteriorError, Result};
use crate::likelihood::{check_fields, field_log_likelihood_tape, log_prior_tape};
use crate::model::LatentModel;
use crate::observation::FieldObservations;

/// How many observations of each field enter one loss evaluation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub enum Batching {
    #[default]
    Full,
    /// Minibatch size per field; unlisted fields use all observations.
    PerField(Vec<(FieldTag, usize)>),
}

impl Batching {
    pub fn size_for(&self, obs: &FieldObservations) -> usize {
        match self {
            Batching::Full => obs.len(),
            Batching::PerField(sizes) => sizes
                .iter()
                .find(|(t, _)| *t == obs.field)
                .map_or(obs.len(), |&(_, m)| m),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViConfig {
    /// Flow samples `z` per loss evaluation.
    pub samples_per_step: usize,
    pub batching: Batching,
    pub steps: usize,
    pub adam: AdamConfig,
    /// Flow architecture; `dim` is replaced by the model's latent dimension.
    pub flow: IafSpec,
    pub seed: u64,
    pub checkpoint_every: usize,
}

impl Default for ViConfig {
    fn default() -> Self {
        Self {
            samples_per_step: 16,
            batching: Batching::Full,
            steps: 20_000,
            adam: AdamConfig::default(),
            flow: IafSpec::standard(1),
            seed: 0,
            checkpoint_every: 1000,
        }
    }
}

fn check_batches(observations: &[FieldObservations], batches: &[Vec<usize>]) -> Result<()> {
    if batches.len() != observations.len() {
        return Err(PosteriorError::Config(format!(
            "{} index sets for {} observed fields",
            batches.len(),
            observations.len()
        )));
    }
    for (o, idx) in observations.iter().zip(batches) {
        if idx.len() > o.len() || (idx.is_empty() && !o.is_empty()) {
            return Err(PosteriorError::Batch {
                field: o.field,
                requested: idx.len(),
                available: o.len(),
            });
        }
        let mut seen = vec![false; o.len()];
        for &i in idx {
            if i >= o.len() || std::mem::replace(&mut seen[i], true) {
                return Err(PosteriorError::Config(format!(
                    "minibatch index {i} of `{}` out of range or repeated",
                    o.field
                )));
            }
        }
    }
    Ok(())
}

/// Per-sample `log Q(ξ) − log P(ξ) − Σ_α (N_α/M_α) log P(D_α^batch | ξ)`,
/// `N_z × 1`.
fn vi_terms_tape<'t, M: LatentModel + ?Sized>(
    flow: &IafFlow,
    params: &[Var<'t>],
    model: &M,
    observations: &[FieldObservations],
    z: &Array2<f64>,
    batches: Option<&[Vec<usize>]>,
) -> Result<Var<'t>> {
    check_fields(model, observations)?;
    if z.ncols() != model.latent_dim() || z.nrows() == 0 {
        return Err(PosteriorError::Config(format!(
            "base samples {:?} incompatible with latent dimension {}",
            z.dim(),
            model.latent_dim()
        )));
    }
    let tape = params[0].tape();
    let (xi, log_det) = flow.transform_tape(params, tape.constant(z.clone()))?;
    let base = log_standard_normal(z).insert_axis(ndarray::Axis(1));
    let mut terms = tape.constant(base) - log_det - log_prior_tape(xi);
    for (k, o) in observations.iter().enumerate() {
        let ll = match batches {
            None => field_log_likelihood_tape(model, xi, o, 1.0)?,
            Some(b) if b[k].len() == o.len() => field_log_likelihood_tape(model, xi, o, 1.0)?,
            Some(b) => {
                let scale = o.len() as f64 / b[k].len() as f64;
                field_log_likelihood_tape(model, xi, &o.subset(&b[k]), scale)?
            }
        };
        terms = terms - ll;
    }
    Ok(terms)
}

fn finite(value: f64, what: &'static str, step: usize) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(PosteriorError::NonFinite { what, value, step })
    }
}

/// Monte Carlo KL objective with every observation, averaged over the rows
/// of `z`.
pub fn vi_loss_full<M: LatentModel + ?Sized>(
    flow: &IafFlow,
    model: &M,
    observations: &[FieldObservations],
    z: &Array2<f64>,
) -> Result<f64> {
    let tape = Tape::new();
    let params = flow.params.constants(&tape);
    let loss = vi_terms_tape(flow, &params, model, observations, z, None)?.mean().item();
    finite(loss, "variational loss", 0)
}

/// As [`vi_loss_full`] with each field's data term restricted to
/// `batches[k]` and scaled by `N_k / M_k`.
pub fn vi_loss_minibatch<M: LatentModel + ?Sized>(
    flow: &IafFlow,
    model: &M,
    observations: &[FieldObservations],
    z: &Array2<f64>,
    batches: &[Vec<usize>],
) -> Result<f64> {
    check_batches(observations, batches)?;
    let tape = Tape::new();
    let params = flow.params.constants(&tape);
    let loss = vi_terms_tape(flow, &params, model, observations, z, Some(batches))?
        .mean()
        .item();
    finite(loss, "variational loss", 0)
}

/// Per-field sampling without replacement, reshuffled every epoch.
struct FieldSampler {
    order: Vec<usize>,
    cursor: usize,
    size: usize,
}

impl FieldSampler {
    fn new(n: usize, size: usize) -> Self {
        Self {
            order: (0..n).collect(),
            cursor: n,
            size,
        }
    }

    fn next(&mut self, rng: &mut RngStream) -> Vec<usize> {
        if self.size == self.order.len() {
            return self.order.clone();
        }
        if self.cursor + self.size > self.order.len() {
            rng.shuffle(&mut self.order);
            self.cursor = 0;
        }
        let out = self.order[self.cursor..self.cursor + self.size].to_vec();
        self.cursor += self.size;
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViResult {
    pub flow: IafFlow,
    pub history: Vec<f64>,
}

/// Adam on the flow parameters, drawing fresh `z` (and minibatches) every
/// step. `on_checkpoint` sees `(step, flow)` on the checkpoint schedule,
/// after the last step, and with the last finite flow before a
/// non-finite loss aborts training.
pub fn vi_train<M: LatentModel + ?Sized>(
    model: &M,
    observations: &[FieldObservations],
    config: &ViConfig,
    on_checkpoint: &mut dyn FnMut(usize, &IafFlow) -> Result<()>,
) -> Result<ViResult> {
    if config.samples_per_step == 0 {
        return Err(PosteriorError::Config("samples per step must be at least 1".into()));
    }
    check_fields(model, observations)?;
    let d = model.latent_dim();
    let root = RngStream::new(config.seed, "vi");
    let spec = IafSpec { dim: d, ..config.flow };
    let mut flow = IafFlow::new(spec, &mut root.child("flow"))?;
    let mut z_rng = root.child("z");
    let mut batch_rng = root.child("batch");
    let mut samplers = Vec::with_capacity(observations.len());
    for o in observations {
        let m = config.batching.size_for(o);
        if m > o.len() || (m == 0 && !o.is_empty()) {
            return Err(PosteriorError::Batch {
                field: o.field,
                requested: m,
                available: o.len(),
            });
        }
        samplers.push(FieldSampler::new(o.len(), m));
    }
    let mut adam = AdamState::new(&flow.params, config.adam);
    let mut history = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let z = draw_normal(&mut z_rng, (config.samples_per_step, d));
        let batches: Vec<Vec<usize>> = samplers.iter_mut().map(|s| s.next(&mut batch_rng)).collect();
        let (value, grads) = {
            let tape = Tape::new();
            let vars = flow.params.vars(&tape);
            let loss = vi_terms_tape(&flow, &vars, model, observations, &z, Some(&batches))?.mean();
            let value = loss.item();
            let mut g = flow.params.zeros_like();
            if value.is_finite() {
                for (dst, v) in g.arrays_mut().zip(tape.grad(loss, &vars)) {
                    *dst = v.to_array();
                }
            }
            (value, g)
        };
        if let Err(e) = finite(value, "variational loss", step) {
            on_checkpoint(step, &flow)?;
            return Err(e);
        }
        adam_step(&mut flow.params, &grads, &mut adam)?;
        history.push(value);
        let done = step + 1;
        if done == config.steps || (config.checkpoint_every > 0 && done % config.checkpoint_every == 0) {
            log::info!("vi step {done}/{}: loss {value:.4e}", config.steps);
            on_checkpoint(done, &flow)?;
        }
    }
    Ok(ViResult { flow, history })
}

/// `count` posterior draws of `ξ` pushed through the flow.
pub fn flow_draws(flow: &IafFlow, count: usize, rng: &mut RngStream) -> Result<Array2<f64>> {
    let z = draw_normal(rng, (count, flow.dim()));
    Ok(flow.transform(&z)?.0)
}
