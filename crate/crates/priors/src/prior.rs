//! Trained generators and the surrogates derived from them.

use fpuq_nets::{Checkpoint, DeepOnet, GeneratorNet, Mlp, MlpSpec};
use fpuq_numcore::{ParamVector, Tape, Var};
use ndarray::Array2;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::{PriorError, Result};
use crate::grid::{FieldTag, SensorGrid};

#[derive(Clone, Debug, PartialEq)]
pub enum PriorKind {
    /// One generator for one field.
    Plain { field: FieldTag, gen: GeneratorNet },
    /// Solution and reaction-rate generators; the source is
    /// `diffusion · u'' − k · u³`.
    Reaction {
        u: GeneratorNet,
        k: GeneratorNet,
        diffusion: f64,
    },
    /// Parameter generator plus a trained operator `λ ↦ u`.
    Operator { lambda: GeneratorNet, op: DeepOnet },
}

/// Functional prior: generators sharing one latent vector `ξ`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorPrior {
    pub grid: SensorGrid,
    pub kind: PriorKind,
}

impl GeneratorPrior {
    pub fn plain(grid: SensorGrid, field: FieldTag, gen: GeneratorNet) -> Result<Self> {
        Self::checked(grid, PriorKind::Plain { field, gen })
    }

    pub fn reaction(grid: SensorGrid, u: GeneratorNet, k: GeneratorNet, diffusion: f64) -> Result<Self> {
        if u.latent_dim != k.latent_dim {
            return Err(PriorError::Config("generators must share the latent dimension".into()));
        }
        if grid.dim() != 1 {
            return Err(PriorError::Grid("reaction prior lives on a 1-D grid".into()));
        }
        Self::checked(grid, PriorKind::Reaction { u, k, diffusion })
    }

    fn checked(grid: SensorGrid, kind: PriorKind) -> Result<Self> {
        let p = Self { grid, kind };
        for g in p.generators() {
            if g.coord_dim != p.grid.dim() {
                return Err(PriorError::Grid(format!(
                    "generator takes {} coordinates, grid has {}",
                    g.coord_dim,
                    p.grid.dim()
                )));
            }
        }
        Ok(p)
    }

    fn generators(&self) -> Vec<&GeneratorNet> {
        match &self.kind {
            PriorKind::Plain { gen, .. } => vec![gen],
            PriorKind::Reaction { u, k, .. } => vec![u, k],
            PriorKind::Operator { lambda, .. } => vec![lambda],
        }
    }

    fn generators_mut(&mut self) -> Vec<&mut GeneratorNet> {
        match &mut self.kind {
            PriorKind::Plain { gen, .. } => vec![gen],
            PriorKind::Reaction { u, k, .. } => vec![u, k],
            PriorKind::Operator { lambda, .. } => vec![lambda],
        }
    }

    fn generator_names(&self) -> &'static [&'static str] {
        match &self.kind {
            PriorKind::Plain { .. } => &["gen"],
            PriorKind::Reaction { .. } => &["u", "k"],
            PriorKind::Operator { .. } => &["lambda"],
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.generators()[0].latent_dim
    }

    /// Fields this prior can evaluate.
    pub fn fields(&self) -> Vec<FieldTag> {
        match &self.kind {
            PriorKind::Plain { field, .. } => {
                if *field == FieldTag::U {
                    vec![FieldTag::U, FieldTag::B]
                } else {
                    vec![*field]
                }
            }
            PriorKind::Reaction { .. } => vec![FieldTag::U, FieldTag::B, FieldTag::F, FieldTag::Lambda],
            PriorKind::Operator { .. } => vec![FieldTag::U, FieldTag::B, FieldTag::Lambda],
        }
    }

    pub fn has_field(&self, tag: FieldTag) -> bool {
        self.fields().contains(&tag)
    }

    /// Fields that make up one adversarial sample, in discriminator order.
    pub fn data_fields(&self) -> Vec<FieldTag> {
        match &self.kind {
            PriorKind::Plain { field, .. } => vec![*field],
            PriorKind::Reaction { .. } => vec![FieldTag::Lambda, FieldTag::F],
            PriorKind::Operator { .. } => vec![FieldTag::Lambda],
        }
    }

    /// Width of one adversarial sample.
    pub fn sample_width(&self) -> usize {
        self.data_fields().len() * self.grid.len()
    }

    /// Trainable generator parameters, blocks prefixed by generator name.
    pub fn params(&self) -> ParamVector {
        let mut p = ParamVector::new();
        for (name, g) in self.generator_names().iter().zip(self.generators()) {
            for (b, a) in g.mlp.params.blocks() {
                p.push(format!("{name}.{b}"), a.clone()).expect("unique names");
            }
        }
        p
    }

    pub fn set_params(&mut self, p: &ParamVector) -> Result<()> {
        if !p.same_layout(&self.params()) {
            return Err(PriorError::Config("prior parameter layout mismatch".into()));
        }
        let mut src = p.arrays();
        for g in self.generators_mut() {
            for dst in g.mlp.params.arrays_mut() {
                *dst = src.next().expect("layout checked").clone();
            }
        }
        Ok(())
    }

    fn split<'a, 't>(&self, params: &'a [Var<'t>]) -> Vec<&'a [Var<'t>]> {
        let mut out = Vec::new();
        let mut offset = 0;
        for g in self.generators() {
            let n = g.mlp.params.len();
            out.push(&params[offset..offset + n]);
            offset += n;
        }
        out
    }

    fn check_latent(&self, width: usize) -> Result<()> {
        if width != self.latent_dim() {
            return Err(fpuq_nets::NetError::Width {
                context: "prior latent",
                expected: self.latent_dim(),
                actual: width,
            }
            .into());
        }
        Ok(())
    }

    /// Field `tag` at `points` for every latent row: `xi` is `N × d_ξ`,
    /// the result `N × q`. `params` follow [`GeneratorPrior::params`].
    pub fn eval_tape<'t>(
        &self,
        params: &[Var<'t>],
        xi: Var<'t>,
        tag: FieldTag,
        points: &Array2<f64>,
    ) -> Result<Var<'t>> {
        self.check_latent(xi.shape().1)?;
        if points.ncols() != self.grid.dim() {
            return Err(PriorError::Grid(format!(
                "points have {} coordinates, prior expects {}",
                points.ncols(),
                self.grid.dim()
            )));
        }
        let parts = self.split(params);
        match (&self.kind, tag) {
            (PriorKind::Plain { field, gen }, t)
                if t == *field || (*field == FieldTag::U && t == FieldTag::B) =>
            {
                Ok(gen.eval_grid_tape(parts[0], points, xi)?)
            }
            (PriorKind::Reaction { u, .. }, FieldTag::U | FieldTag::B) => {
                Ok(u.eval_grid_tape(parts[0], points, xi)?)
            }
            (PriorKind::Reaction { k, .. }, FieldTag::Lambda) => {
                Ok(k.eval_grid_tape(parts[1], points, xi)?)
            }
            (PriorKind::Reaction { u, k, diffusion }, FieldTag::F) => {
                let (u0, _, u2) = u.eval_grid_jet(parts[0], points, xi, 0)?;
                let kv = k.eval_grid_tape(parts[1], points, xi)?;
                Ok(u2.scale(*diffusion) - kv * u0 * u0 * u0)
            }
            (PriorKind::Operator { lambda, .. }, FieldTag::Lambda) => {
                Ok(lambda.eval_grid_tape(parts[0], points, xi)?)
            }
            (PriorKind::Operator { lambda, op }, FieldTag::U | FieldTag::B) => {
                let sensors = lambda.eval_grid_tape(parts[0], self.grid.points(), xi)?;
                let op_params = op.params().constants(xi.tape());
                Ok(op.forward_tape(&op_params, sensors, points)?)
            }
            (_, t) => Err(PriorError::UnsupportedField(t)),
        }
    }

    /// Plain-array evaluation with the stored parameters.
    pub fn eval(&self, xi: &Array2<f64>, tag: FieldTag, points: &Array2<f64>) -> Result<Array2<f64>> {
        let tape = Tape::new();
        let params = self.params().constants(&tape);
        Ok(self.eval_tape(&params, tape.constant(xi.clone()), tag, points)?.to_array())
    }

    /// Adversarial sample for every latent row: data fields on the sensor
    /// grid, concatenated.
    pub fn fake_sample_tape<'t>(&self, params: &[Var<'t>], xi: Var<'t>) -> Result<Var<'t>> {
        let blocks = self
            .data_fields()
            .into_iter()
            .map(|t| self.eval_tape(params, xi, t, self.grid.points()))
            .collect::<Result<Vec<_>>>()?;
        Ok(if blocks.len() == 1 { blocks[0] } else { Var::concat_cols(&blocks) })
    }

    pub fn fake_sample(&self, xi: &Array2<f64>) -> Result<Array2<f64>> {
        let tape = Tape::new();
        let params = self.params().constants(&tape);
        Ok(self.fake_sample_tape(&params, tape.constant(xi.clone()))?.to_array())
    }

    /// Serializes structure into the checkpoint header and parameters into
    /// named groups.
    pub fn to_checkpoint(&self, extra: Value) -> Checkpoint {
        let gens: Vec<Value> = self
            .generator_names()
            .iter()
            .zip(self.generators())
            .map(|(n, g)| json!({"name": n, "spec": g.mlp.spec, "coord_dim": g.coord_dim, "latent_dim": g.latent_dim}))
            .collect();
        let kind = match &self.kind {
            PriorKind::Plain { field, .. } => json!({"type": "plain", "field": field}),
            PriorKind::Reaction { diffusion, .. } => json!({"type": "reaction", "diffusion": diffusion}),
            PriorKind::Operator { op, .. } => json!({
                "type": "operator",
                "branch": op.branch.spec,
                "trunk": op.trunk.spec,
            }),
        };
        let meta = json!({
            "prior": {"kind": kind, "generators": gens, "grid": self.grid, "latent_dim": self.latent_dim()},
            "extra": extra,
        });
        let mut ck = Checkpoint::new(meta);
        for (n, g) in self.generator_names().iter().zip(self.generators()) {
            ck = ck.with_group(n, &g.mlp.params);
        }
        if let PriorKind::Operator { op, .. } = &self.kind {
            ck = ck
                .with_group("branch", &op.branch.params)
                .with_group("trunk", &op.trunk.params);
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        #[derive(Deserialize)]
        struct GenHeader {
            name: String,
            spec: MlpSpec,
            coord_dim: usize,
            latent_dim: usize,
        }
        #[derive(Deserialize)]
        struct Header {
            kind: Value,
            generators: Vec<GenHeader>,
            grid: SensorGrid,
        }
        let bad = |e: &dyn std::fmt::Display| PriorError::Checkpoint(e.to_string());
        let header: Header =
            serde_json::from_value(ck.meta["prior"].clone()).map_err(|e| bad(&e))?;
        let grid = SensorGrid::new(header.grid.points().clone())?;
        let gen = |name: &str| -> Result<GeneratorNet> {
            let h = header
                .generators
                .iter()
                .find(|g| g.name == name)
                .ok_or_else(|| PriorError::Checkpoint(format!("missing generator `{name}`")))?;
            let mlp = Mlp::from_params(h.spec, ck.group(name)?.clone())?;
            Ok(GeneratorNet::from_mlp(mlp, h.coord_dim, h.latent_dim)?)
        };
        match header.kind["type"].as_str() {
            Some("plain") => {
                let field: FieldTag =
                    serde_json::from_value(header.kind["field"].clone()).map_err(|e| bad(&e))?;
                Self::plain(grid, field, gen("gen")?)
            }
            Some("reaction") => {
                let diffusion = header.kind["diffusion"]
                    .as_f64()
                    .ok_or_else(|| PriorError::Checkpoint("missing diffusion".into()))?;
                Self::reaction(grid, gen("u")?, gen("k")?, diffusion)
            }
            Some("operator") => {
                let spec = |k: &str| -> Result<MlpSpec> {
                    serde_json::from_value(header.kind[k].clone()).map_err(|e| bad(&e))
                };
                let op = DeepOnet::from_parts(
                    Mlp::from_params(spec("branch")?, ck.group("branch")?.clone())?,
                    Mlp::from_params(spec("trunk")?, ck.group("trunk")?.clone())?,
                )?;
                let lambda = Self::plain(grid, FieldTag::Lambda, gen("lambda")?)?;
                compose_operator_prior(&lambda, op)
            }
            other => Err(PriorError::Checkpoint(format!("unknown prior kind {other:?}"))),
        }
    }
}

/// `(k, f)` pairs on the sensor grid, concatenated per row.
pub fn pigan_fake_sample(prior: &GeneratorPrior, xi: &Array2<f64>) -> Result<Array2<f64>> {
    if !matches!(prior.kind, PriorKind::Reaction { .. }) {
        return Err(PriorError::MissingOperator);
    }
    prior.fake_sample(xi)
}

/// Attaches an operator to a parameter prior: `u(x, ξ) = op[λ(·, ξ)](x)`.
pub fn compose_operator_prior(lambda_prior: &GeneratorPrior, op: DeepOnet) -> Result<GeneratorPrior> {
    let lambda = match &lambda_prior.kind {
        PriorKind::Plain {
            field: FieldTag::Lambda,
            gen,
        } => gen.clone(),
        PriorKind::Operator { lambda, .. } => lambda.clone(),
        _ => {
            return Err(PriorError::Config(
                "operator composition needs a parameter (lambda) prior".into(),
            ))
        }
    };
    let grid = &lambda_prior.grid;
    if op.sensors() != grid.len() || op.coord_dim() != grid.dim() {
        return Err(PriorError::Grid(format!(
            "operator expects {} sensors in {}-D, prior grid has {} points in {}-D",
            op.sensors(),
            op.coord_dim(),
            grid.len(),
            grid.dim()
        )));
    }
    GeneratorPrior::checked(grid.clone(), PriorKind::Operator { lambda, op })
}
