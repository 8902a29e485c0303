//! Discrete Karhunen–Loève expansion of a kernel on a fixed point set.

use nalgebra::SymmetricEigen;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{PhysicsError, Result};
use crate::kernel::SeKernel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlField {
    pub points: Array2<f64>,
    /// Full spectrum, nonincreasing.
    pub eigenvalues: Vec<f64>,
    /// `n × d` leading eigenvectors, unit Euclidean norm.
    pub modes: Array2<f64>,
}

impl KlField {
    pub fn truncation(&self) -> usize {
        self.modes.ncols()
    }

    pub fn grid_size(&self) -> usize {
        self.points.nrows()
    }

    /// Fraction of the total variance kept by the leading `d` modes.
    pub fn retained_fraction(&self, d: usize) -> f64 {
        let total: f64 = self.eigenvalues.iter().map(|v| v.max(0.0)).sum();
        let kept: f64 = self.eigenvalues.iter().take(d).map(|v| v.max(0.0)).sum();
        kept / total
    }

    /// `Σ_i λ_i φ_i(p)²` over the retained modes.
    pub fn pointwise_variance(&self) -> Array1<f64> {
        let mut var = Array1::zeros(self.grid_size());
        for (k, col) in self.modes.columns().into_iter().enumerate() {
            let lam = self.eigenvalues[k].max(0.0);
            var.zip_mut_with(&col, |v, &phi| *v += lam * phi * phi);
        }
        var
    }
}

/// Eigendecomposition of the kernel Gram matrix on `points`, keeping the
/// `truncation` largest modes.
pub fn kl_decompose(kernel: &SeKernel, points: &Array2<f64>, truncation: usize) -> Result<KlField> {
    let n = points.nrows();
    if truncation == 0 || truncation > n {
        return Err(PhysicsError::Invalid(format!(
            "truncation {truncation} outside 1..={n}"
        )));
    }
    let eig = SymmetricEigen::try_new(kernel.gram(points), 1e-14, 10_000)
        .ok_or_else(|| PhysicsError::Eigen("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut modes = Array2::zeros((n, truncation));
    for (k, &i) in order.iter().take(truncation).enumerate() {
        let col = eig.eigenvectors.column(i);
        // Fix the sign so the largest-magnitude entry is positive.
        let pivot = col.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for p in 0..n {
            modes[[p, k]] = sign * col[p];
        }
    }
    Ok(KlField {
        points: points.clone(),
        eigenvalues,
        modes,
    })
}

/// `λ̄ = Σ_i √λ_i ζ_i φ_i` on the field's points.
pub fn kl_sample(field: &KlField, zeta: &[f64]) -> Result<Array1<f64>> {
    let d = field.truncation();
    if zeta.len() != d {
        return Err(PhysicsError::Invalid(format!(
            "expected {d} KL coefficients, got {}",
            zeta.len()
        )));
    }
    let mut out = Array1::zeros(field.grid_size());
    for (k, col) in field.modes.columns().into_iter().enumerate() {
        let c = field.eigenvalues[k].max(0.0).sqrt() * zeta[k];
        out.scaled_add(c, &col);
    }
    Ok(out)
}
