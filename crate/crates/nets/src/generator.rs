use fpuq_numcore::{RngStream, Scalar, Tape, Var};
use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{NetError, Result};
use crate::mlp::{Activation, Mlp, MlpSpec};

/// `G(x, ξ)`: one MLP on the concatenated `[x, ξ]` row, scalar output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorNet {
    pub mlp: Mlp,
    pub coord_dim: usize,
    pub latent_dim: usize,
}

impl GeneratorNet {
    pub fn new(
        coord_dim: usize,
        latent_dim: usize,
        hidden: usize,
        depth: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let spec = MlpSpec::new(coord_dim + latent_dim, hidden, depth, 1, Activation::Tanh);
        Ok(Self {
            mlp: Mlp::new(spec, rng)?,
            coord_dim,
            latent_dim,
        })
    }

    pub fn from_mlp(mlp: Mlp, coord_dim: usize, latent_dim: usize) -> Result<Self> {
        if mlp.spec.input != coord_dim + latent_dim || mlp.spec.output != 1 {
            return Err(NetError::Spec(format!(
                "generator MLP {:?} incompatible with coord {coord_dim} + latent {latent_dim}",
                mlp.spec
            )));
        }
        Ok(Self {
            mlp,
            coord_dim,
            latent_dim,
        })
    }

    fn check(&self, x_cols: usize, xi_cols: usize) -> Result<()> {
        if x_cols != self.coord_dim {
            return Err(NetError::Width {
                context: "generator coordinates",
                expected: self.coord_dim,
                actual: x_cols,
            });
        }
        if xi_cols != self.latent_dim {
            return Err(NetError::Width {
                context: "generator latent",
                expected: self.latent_dim,
                actual: xi_cols,
            });
        }
        Ok(())
    }

    /// Field values for paired rows of `x` and `xi`, as an `n × 1` column.
    pub fn eval(&self, x: &Array2<f64>, xi: &Array2<f64>) -> Result<Array2<f64>> {
        self.check(x.ncols(), xi.ncols())?;
        if x.nrows() != xi.nrows() {
            return Err(NetError::Width {
                context: "generator batch rows",
                expected: x.nrows(),
                actual: xi.nrows(),
            });
        }
        let input = concatenate(Axis(1), &[x.view(), xi.view()]).expect("row counts checked");
        self.mlp.forward(&input)
    }

    /// Evaluates the generator on every `(ξ_j, x_i)` pair; result is
    /// `n_latent × n_points`.
    pub fn eval_grid(&self, points: &Array2<f64>, xi: &Array2<f64>) -> Result<Array2<f64>> {
        self.check(points.ncols(), xi.ncols())?;
        let (n, q) = (xi.nrows(), points.nrows());
        let mut input = Array2::zeros((n * q, self.coord_dim + self.latent_dim));
        for j in 0..n {
            for i in 0..q {
                let mut row = input.row_mut(j * q + i);
                for c in 0..self.coord_dim {
                    row[c] = points[[i, c]];
                }
                for c in 0..self.latent_dim {
                    row[self.coord_dim + c] = xi[[j, c]];
                }
            }
        }
        let out = self.mlp.forward(&input)?;
        Ok(out.into_shape_with_order((n, q)).expect("n*q outputs"))
    }

    /// Tape version of [`GeneratorNet::eval_grid`]: `xi` is `n × d_ξ`, the
    /// result is `n × q` with row `j` holding `G(points, ξ_j)`.
    pub fn eval_grid_tape<'t>(
        &self,
        params: &[Var<'t>],
        points: &Array2<f64>,
        xi: Var<'t>,
    ) -> Result<Var<'t>> {
        let (n, d) = xi.shape();
        self.check(points.ncols(), d)?;
        let input = self.grid_input(points, xi, n);
        let out = self.mlp.forward_tape(params, input)?;
        Ok(out.reshape((n, points.nrows())))
    }

    fn grid_input<'t>(&self, points: &Array2<f64>, xi: Var<'t>, n: usize) -> Var<'t> {
        let tape = xi.tape();
        let q = points.nrows();
        let rows: Vec<usize> = (0..n).flat_map(|j| std::iter::repeat(j).take(q)).collect();
        let xi_rep = xi.gather_rows(&rows);
        let mut tiled = Array2::zeros((n * q, self.coord_dim));
        for j in 0..n {
            tiled
                .slice_mut(ndarray::s![j * q..(j + 1) * q, ..])
                .assign(points);
        }
        Var::concat_cols(&[tape.constant(tiled), xi_rep])
    }

    /// Value, first and second derivative along coordinate `axis` at every
    /// `(ξ_j, x_i)` pair, each `n × q`.
    pub fn eval_grid_jet<'t>(
        &self,
        params: &[Var<'t>],
        points: &Array2<f64>,
        xi: Var<'t>,
        axis: usize,
    ) -> Result<(Var<'t>, Var<'t>, Var<'t>)> {
        let (n, d) = xi.shape();
        self.check(points.ncols(), d)?;
        if axis >= self.coord_dim {
            return Err(NetError::Spec(format!("derivative axis {axis} out of range")));
        }
        let tape: &Tape = xi.tape();
        let q = points.nrows();
        let input = self.grid_input(points, xi, n);
        let width = self.coord_dim + self.latent_dim;
        let mut dir = Array2::zeros((n * q, width));
        dir.column_mut(axis).fill(1.0);
        let (y, y1, y2) = self.mlp.forward_jet(
            params,
            input,
            tape.constant(dir),
            tape.constant(Array2::zeros((n * q, width))),
        )?;
        Ok((y.reshape((n, q)), y1.reshape((n, q)), y2.reshape((n, q))))
    }

    /// Single-point evaluation with a generic scalar in the coordinates.
    pub fn eval_point<S: Scalar>(&self, x: &[S], xi: &[f64]) -> Result<S> {
        self.check(x.len(), xi.len())?;
        let mut input: Vec<S> = x.to_vec();
        input.extend(xi.iter().map(|&v| S::from_f64(v)));
        Ok(self.mlp.eval_point(&input)?[0])
    }
}
