use fpuq_numcore::RngStream;
use nalgebra::{Cholesky, DMatrix, Dyn};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{PhysicsError, Result};

/// Isotropic squared-exponential kernel `exp(-|x - x'|² / 2l²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeKernel {
    pub length_scale: f64,
}

impl SeKernel {
    pub fn new(length_scale: f64) -> Result<Self> {
        if !(length_scale > 0.0) {
            return Err(PhysicsError::Invalid(format!(
                "length scale must be positive, got {length_scale}"
            )));
        }
        Ok(Self { length_scale })
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
        (-0.5 * r2 / (self.length_scale * self.length_scale)).exp()
    }

    /// Gram matrix over the rows of `points`.
    pub fn gram(&self, points: &Array2<f64>) -> DMatrix<f64> {
        let n = points.nrows();
        let rows: Vec<Vec<f64>> = points.rows().into_iter().map(|r| r.to_vec()).collect();
        DMatrix::from_fn(n, n, |i, j| self.eval(&rows[i], &rows[j]))
    }
}

/// Cholesky factor of `k + jitter·I`, trying jitter 0, 1e-10, 1e-9, ..., 1e-6.
/// Returns the factor and the jitter that succeeded.
pub fn cholesky_with_jitter(k: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = k.nrows();
    let mut jitter = 0.0;
    loop {
        let shifted = k + DMatrix::<f64>::identity(n, n) * jitter;
        if let Some(c) = Cholesky::new(shifted) {
            return Ok((c, jitter));
        }
        jitter = if jitter == 0.0 { 1e-10 } else { jitter * 10.0 };
        if jitter > 1e-6 * 1.0001 {
            return Err(PhysicsError::Cholesky { max_jitter: 1e-6 });
        }
    }
}

/// `count` zero-mean GP draws at `points`, returned as `count × n`.
pub fn gp_sample(
    kernel: &SeKernel,
    points: &Array2<f64>,
    count: usize,
    rng: &mut RngStream,
) -> Result<Array2<f64>> {
    if count == 0 || points.nrows() == 0 {
        return Err(PhysicsError::Invalid("gp_sample needs points and count ≥ 1".into()));
    }
    let (chol, _) = cholesky_with_jitter(&kernel.gram(points))?;
    let l = chol.l();
    let n = points.nrows();
    let mut out = Array2::zeros((count, n));
    let mut z = vec![0.0; n];
    for s in 0..count {
        for v in z.iter_mut() {
            *v = rng.normal();
        }
        for i in 0..n {
            let mut acc = 0.0;
            for (j, zj) in z.iter().enumerate().take(i + 1) {
                acc += l[(i, j)] * zj;
            }
            out[[s, i]] = acc;
        }
    }
    Ok(out)
}

/// Adds i.i.d. `N(0, std²)` noise.
pub fn add_gaussian_noise(values: &[f64], std: f64, rng: &mut RngStream) -> Vec<f64> {
    values.iter().map(|v| v + std * rng.normal()).collect()
}
