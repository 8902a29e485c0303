//! Inverse autoregressive flow.
//!
//! Each block maps `x ↦ μ(x) + σ(x) ⊙ x` where `μ_k`, `σ_k` depend only on
//! `x_{<k}` through a masked autoregressive MLP. The Jacobian is triangular
//! with diagonal `σ`, so `log|det| = Σ_k log σ_k`. Coordinates are reversed
//! between consecutive blocks.

use std::f64::consts::PI;

use fpuq_numcore::{ParamVector, RngStream, Tape, Var};
use ndarray::{s, Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{NetError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IafSpec {
    pub dim: usize,
    pub blocks: usize,
    pub hidden: usize,
    pub depth: usize,
    /// Bound on the raw log-scale output.
    pub log_scale_clamp: f64,
}

impl IafSpec {
    /// 4 blocks of 256×2 tanh conditioners.
    pub fn standard(dim: usize) -> Self {
        Self {
            dim,
            blocks: 4,
            hidden: 256,
            depth: 2,
            log_scale_clamp: 7.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.blocks == 0 || self.hidden == 0 || self.depth == 0 {
            return Err(NetError::Spec(format!("invalid flow spec {self:?}")));
        }
        if !(self.log_scale_clamp > 0.0) {
            return Err(NetError::Spec("log-scale clamp must be positive".into()));
        }
        Ok(())
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![(self.dim, self.hidden)];
        dims.extend(std::iter::repeat((self.hidden, self.hidden)).take(self.depth - 1));
        dims.push((self.hidden, 2 * self.dim));
        dims
    }
}

/// Connectivity masks of the autoregressive conditioner, one per layer.
fn made_masks(spec: &IafSpec) -> Vec<Array2<f64>> {
    let d = spec.dim;
    let deg_in: Vec<usize> = (1..=d).collect();
    let span = (d.max(2)) - 1;
    let deg_h: Vec<usize> = (0..spec.hidden).map(|j| j % span + 1).collect();
    let deg_out: Vec<usize> = (1..=d).chain(1..=d).collect();
    let mut masks = Vec::with_capacity(spec.depth + 1);
    masks.push(Array2::from_shape_fn((d, spec.hidden), |(i, j)| {
        f64::from(u8::from(deg_h[j] >= deg_in[i]))
    }));
    for _ in 1..spec.depth {
        masks.push(Array2::from_shape_fn((spec.hidden, spec.hidden), |(i, j)| {
            f64::from(u8::from(deg_h[j] >= deg_h[i]))
        }));
    }
    masks.push(Array2::from_shape_fn((spec.hidden, 2 * d), |(i, o)| {
        f64::from(u8::from(deg_out[o] > deg_h[i]))
    }));
    masks
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IafFlow {
    pub spec: IafSpec,
    pub params: ParamVector,
    #[serde(skip)]
    masks: Vec<Array2<f64>>,
}

impl IafFlow {
    /// Glorot-initialized hidden layers; the output layer starts at zero so
    /// every block is the identity (`μ = 0`, `σ = 1`).
    pub fn new(spec: IafSpec, rng: &mut RngStream) -> Result<Self> {
        spec.validate()?;
        let mut params = ParamVector::new();
        let dims = spec.layer_dims();
        let last = dims.len() - 1;
        for b in 0..spec.blocks {
            for (k, &(fan_in, fan_out)) in dims.iter().enumerate() {
                let w = if k == last {
                    Array2::zeros((fan_in, fan_out))
                } else {
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    Array2::from_shape_simple_fn((fan_in, fan_out), || rng.uniform(-limit, limit))
                };
                params.push(format!("blk{b}.w{k}"), w)?;
                params.push(format!("blk{b}.b{k}"), Array2::zeros((1, fan_out)))?;
            }
        }
        Ok(Self {
            masks: made_masks(&spec),
            spec,
            params,
        })
    }

    pub fn from_params(spec: IafSpec, params: ParamVector) -> Result<Self> {
        spec.validate()?;
        let expected: Vec<(usize, usize)> = (0..spec.blocks)
            .flat_map(|_| spec.layer_dims())
            .flat_map(|(i, o)| [(i, o), (1, o)])
            .collect();
        if params.shapes() != expected {
            return Err(NetError::Spec("flow parameter shapes do not match spec".into()));
        }
        Ok(Self {
            masks: made_masks(&spec),
            spec,
            params,
        })
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    fn per_block(&self) -> usize {
        2 * (self.spec.depth + 1)
    }

    fn check(&self, width: usize) -> Result<()> {
        if width != self.spec.dim {
            return Err(NetError::Width {
                context: "flow input",
                expected: self.spec.dim,
                actual: width,
            });
        }
        Ok(())
    }

    /// One block on the tape: returns `(y, log σ)`.
    fn block_tape<'t>(&self, params: &[Var<'t>], x: Var<'t>) -> (Var<'t>, Var<'t>) {
        let tape = x.tape();
        let d = self.spec.dim;
        let last = self.spec.depth;
        let mut h = x;
        for k in 0..=last {
            let w = params[2 * k] * tape.constant(self.masks[k].clone());
            let z = h.matmul(w).add_row(params[2 * k + 1]);
            h = if k < last { z.tanh() } else { z };
        }
        let shift = h.slice_cols(0, d);
        let c = self.spec.log_scale_clamp;
        let log_scale = h.slice_cols(d, 2 * d).clamp(-c, c);
        (shift + log_scale.exp() * x, log_scale)
    }

    /// An odd number of inter-block reversals is undone at the output so
    /// that a zero-initialized flow is the identity.
    fn ends_reversed(&self) -> bool {
        self.spec.blocks % 2 == 0
    }

    fn reversal<'t>(&self, tape: &'t Tape) -> Var<'t> {
        let d = self.spec.dim;
        tape.constant(Array2::from_shape_fn((d, d), |(i, j)| {
            f64::from(u8::from(i + j == d - 1))
        }))
    }

    /// `z` (`N × d`) to `(z_n, log_det)` with `log_det` an `N × 1` column.
    pub fn transform_tape<'t>(
        &self,
        params: &[Var<'t>],
        z: Var<'t>,
    ) -> Result<(Var<'t>, Var<'t>)> {
        self.check(z.shape().1)?;
        let per = self.per_block();
        let mut x = z;
        let mut log_det: Option<Var<'t>> = None;
        for b in 0..self.spec.blocks {
            if b > 0 {
                x = x.matmul(self.reversal(z.tape()));
            }
            let (y, ls) = self.block_tape(&params[b * per..(b + 1) * per], x);
            let ld = ls.sum_cols();
            log_det = Some(match log_det {
                None => ld,
                Some(acc) => acc + ld,
            });
            x = y;
        }
        if self.ends_reversed() {
            x = x.matmul(self.reversal(z.tape()));
        }
        Ok((x, log_det.expect("at least one block")))
    }

    /// Plain-array transform; fails if any scale is not strictly positive.
    pub fn transform(&self, z: &Array2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
        self.check(z.ncols())?;
        let tape = Tape::new();
        let params = self.params.constants(&tape);
        let per = self.per_block();
        let mut x = tape.constant(z.clone());
        let mut log_det = Array1::zeros(z.nrows());
        for b in 0..self.spec.blocks {
            if b > 0 {
                x = x.matmul(self.reversal(&tape));
            }
            let (y, ls) = self.block_tape(&params[b * per..(b + 1) * per], x);
            let ls = ls.to_array();
            if ls.iter().any(|v| !v.is_finite() || v.exp() <= 0.0) {
                return Err(NetError::NonPositiveScale(b));
            }
            log_det += &ls.sum_axis(ndarray::Axis(1));
            x = y;
        }
        if self.ends_reversed() {
            x = x.matmul(self.reversal(&tape));
        }
        Ok((x.to_array(), log_det))
    }

    /// Inverse map `z_n ↦ z`, solving each block's triangular system one
    /// coordinate at a time.
    pub fn inverse(&self, zn: &Array2<f64>) -> Result<Array2<f64>> {
        self.check(zn.ncols())?;
        let per = self.per_block();
        let d = self.spec.dim;
        let mut y = if self.ends_reversed() {
            zn.slice(s![.., ..;-1]).to_owned()
        } else {
            zn.clone()
        };
        for b in (0..self.spec.blocks).rev() {
            // After d fixed-point sweeps coordinate k only depends on
            // already-exact coordinates < k.
            let mut x = Array2::zeros(y.dim());
            for _ in 0..d {
                let tape = Tape::new();
                let all = self.params.constants(&tape);
                let params = &all[b * per..(b + 1) * per];
                let (yx, ls) = self.block_tape(params, tape.constant(x.clone()));
                let sigma = ls.to_array().mapv(f64::exp);
                // shift(x) = block(x) - σ(x) ⊙ x
                let shift = &yx.to_array() - &(&sigma * &x);
                x = (&y - &shift) / &sigma;
            }
            y = x;
            if b > 0 {
                y = y.slice(s![.., ..;-1]).to_owned();
            }
        }
        Ok(y)
    }
}

/// Standard-normal log-density of each row.
pub fn log_standard_normal(z: &Array2<f64>) -> Array1<f64> {
    let d = z.ncols() as f64;
    z.rows()
        .into_iter()
        .map(|r| -0.5 * d * (2.0 * PI).ln() - 0.5 * r.dot(&r))
        .collect()
}

/// `log Q(z_n) = log N(z; 0, I) − log_det`, per sample.
pub fn iaf_log_density(z: &Array2<f64>, log_det: &Array1<f64>) -> Array1<f64> {
    log_standard_normal(z) - log_det
}

#[cfg(test)]
mod tests {
    use super::*;
    use fpuq_numcore::draw_normal;
    use ndarray::array;

    pub(crate) fn random_flow(spec: IafSpec, seed: u64, scale: f64) -> IafFlow {
        let mut flow = IafFlow::new(spec, &mut RngStream::new(seed, "flow")).unwrap();
        let mut rng = RngStream::new(seed, "perturb");
        for a in flow.params.arrays_mut() {
            a.mapv_inplace(|_| rng.uniform(-scale, scale));
        }
        flow
    }

    fn small(dim: usize, blocks: usize) -> IafSpec {
        IafSpec {
            dim,
            blocks,
            hidden: 12,
            depth: 2,
            log_scale_clamp: 7.0,
        }
    }

    #[test]
    fn identity_at_initialization() {
        let z = draw_normal(&mut RngStream::new(1, "z"), (5, 3));
        for blocks in [1, 2, 3, 4] {
            let flow = IafFlow::new(small(3, blocks), &mut RngStream::new(0, "f")).unwrap();
            let (zn, ld) = flow.transform(&z).unwrap();
            assert_eq!(zn, z);
            assert!(ld.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn single_affine_block() {
        let mut flow = IafFlow::new(small(1, 1), &mut RngStream::new(0, "f")).unwrap();
        let (a, b) = (2.0f64, 0.5);
        *flow.params.get_mut("blk0.b2").unwrap() = array![[b, a.ln()]];
        let z = array![[0.0], [1.0], [-2.0]];
        let (zn, ld) = flow.transform(&z).unwrap();
        for r in 0..3 {
            assert!((zn[[r, 0]] - (a * z[[r, 0]] + b)).abs() < 1e-14);
            assert!((ld[r] - a.ln()).abs() < 1e-14);
        }
        let dens = iaf_log_density(&array![[0.0]], &array![a.ln()]);
        assert!((dens[0] - (-0.5 * (2.0 * PI).ln() - 2f64.ln())).abs() < 1e-14);
    }

    #[test]
    fn identity_density_at_origin() {
        let d = iaf_log_density(&Array2::zeros((1, 2)), &array![0.0]);
        assert!((d[0] + (2.0 * PI).ln()).abs() < 1e-14);
    }

    #[test]
    fn autoregressive_structure_gives_triangular_jacobian() {
        let flow = random_flow(small(4, 1), 3, 0.5);
        let z0 = array![[0.3, -0.1, 0.8, -0.6]];
        let (y0, _) = flow.transform(&z0).unwrap();
        for j in 0..4 {
            let mut z = z0.clone();
            z[[0, j]] += 0.37;
            let (y, _) = flow.transform(&z).unwrap();
            for k in 0..j {
                assert_eq!(y[[0, k]], y0[[0, k]], "output {k} depends on input {j}");
            }
        }
    }

    #[test]
    fn inverse_recovers_base_sample() {
        let flow = random_flow(small(3, 4), 5, 0.4);
        let z = draw_normal(&mut RngStream::new(6, "z"), (7, 3));
        let (zn, _) = flow.transform(&z).unwrap();
        let back = flow.inverse(&zn).unwrap();
        assert!((&back - &z).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b)) < 1e-10);
    }

    #[test]
    fn log_det_is_additive_over_blocks() {
        let spec = small(3, 2);
        let flow = random_flow(spec, 8, 0.5);
        let z = draw_normal(&mut RngStream::new(9, "z"), (6, 3));
        let (_, total) = flow.transform(&z).unwrap();
        let per = flow.per_block();
        let blocks = flow.params.blocks();
        let one = |range: std::ops::Range<usize>| {
            let mut p = ParamVector::new();
            for (n, a) in &blocks[range] {
                p.push(n.replace("blk1.", "blk0."), a.clone()).unwrap();
            }
            IafFlow::from_params(small(3, 1), p).unwrap()
        };
        let (a, b) = (one(0..per), one(per..2 * per));
        let (ya, lda) = a.transform(&z).unwrap();
        let (_, ldb) = b.transform(&ya.slice(s![.., ..;-1]).to_owned()).unwrap();
        assert!((&(&lda + &ldb) - &total).mapv(f64::abs).sum() < 1e-12);
    }

    #[test]
    fn width_mismatch() {
        let flow = IafFlow::new(small(3, 1), &mut RngStream::new(0, "f")).unwrap();
        assert!(flow.transform(&Array2::zeros((1, 2))).is_err());
    }
}
