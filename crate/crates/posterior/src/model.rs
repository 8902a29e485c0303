//! Latent-variable surrogates that map `ξ` to field values.

use std::fmt;
use std::sync::Arc;

use fpuq_numcore::{Tape, Var};
use fpuq_priors::{FieldTag, GeneratorPrior};
use ndarray::Array2;

use crate::error::{PosteriorError, Result};

pub trait LatentModel {
    fn latent_dim(&self) -> usize;

    fn supports(&self, tag: FieldTag) -> bool;

    /// Field `tag` at `points` for every row of `xi` (`N × d_ξ`); the
    /// result is `N × q` and differentiable in `xi`.
    fn predict_tape<'t>(&self, xi: Var<'t>, tag: FieldTag, points: &Array2<f64>) -> Result<Var<'t>>;

    fn predict(&self, xi: &Array2<f64>, tag: FieldTag, points: &Array2<f64>) -> Result<Array2<f64>> {
        let tape = Tape::new();
        Ok(self.predict_tape(tape.constant(xi.clone()), tag, points)?.to_array())
    }
}

impl LatentModel for GeneratorPrior {
    fn latent_dim(&self) -> usize {
        GeneratorPrior::latent_dim(self)
    }

    fn supports(&self, tag: FieldTag) -> bool {
        self.has_field(tag)
    }

    fn predict_tape<'t>(&self, xi: Var<'t>, tag: FieldTag, points: &Array2<f64>) -> Result<Var<'t>> {
        let params = self.params().constants(xi.tape());
        Ok(self.eval_tape(&params, xi, tag, points)?)
    }
}

type Basis = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// `field(x) = φ(x) · ξ` for a fixed feature map `φ`; the posterior under a
/// standard-normal latent and Gaussian noise is Gaussian in closed form.
#[derive(Clone)]
pub struct LinearModel {
    pub field: FieldTag,
    pub latent_dim: usize,
    basis: Arc<Basis>,
}

impl fmt::Debug for LinearModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearModel")
            .field("field", &self.field)
            .field("latent_dim", &self.latent_dim)
            .finish_non_exhaustive()
    }
}

impl LinearModel {
    pub fn new(field: FieldTag, latent_dim: usize, basis: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Self {
            field,
            latent_dim,
            basis: Arc::new(basis),
        }
    }

    /// Observes latent coordinate `round(x)` directly.
    pub fn coordinates(field: FieldTag, latent_dim: usize) -> Self {
        Self::new(field, latent_dim, move |x| {
            let k = x[0].round() as usize;
            (0..latent_dim).map(|j| f64::from(u8::from(j == k))).collect()
        })
    }

    /// `q × d_ξ` feature matrix.
    pub fn design(&self, points: &Array2<f64>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((points.nrows(), self.latent_dim));
        for (i, p) in points.rows().into_iter().enumerate() {
            let row = (self.basis)(p.as_slice().expect("standard layout"));
            if row.len() != self.latent_dim {
                return Err(PosteriorError::Config(format!(
                    "feature map returned {} values for latent dimension {}",
                    row.len(),
                    self.latent_dim
                )));
            }
            out.row_mut(i).assign(&ndarray::Array1::from(row));
        }
        Ok(out)
    }
}

impl LatentModel for LinearModel {
    fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn supports(&self, tag: FieldTag) -> bool {
        tag == self.field
    }

    fn predict_tape<'t>(&self, xi: Var<'t>, tag: FieldTag, points: &Array2<f64>) -> Result<Var<'t>> {
        if tag != self.field {
            return Err(PosteriorError::UnsupportedField(tag));
        }
        let phi = self.design(points)?;
        Ok(xi.matmul(xi.tape().constant(phi.reversed_axes().as_standard_layout().to_owned())))
    }
}
