//! Noisy point measurements grouped by field.

use fpuq_priors::FieldTag;
use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{PosteriorError, Result};

/// One measurement `value ≈ field(coord)` with Gaussian noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub field: FieldTag,
    pub coord: Vec<f64>,
    pub value: f64,
    pub noise_std: f64,
}

/// All measurements of one field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldObservations {
    pub field: FieldTag,
    /// `N × D` coordinates.
    pub points: Array2<f64>,
    pub values: Array1<f64>,
    pub noise_std: Array1<f64>,
}

impl FieldObservations {
    pub fn new(field: FieldTag, points: Array2<f64>, values: Array1<f64>, noise_std: Array1<f64>) -> Result<Self> {
        let n = points.nrows();
        if values.len() != n || noise_std.len() != n {
            return Err(PosteriorError::Observation(format!(
                "`{field}`: {n} points, {} values, {} noise levels",
                values.len(),
                noise_std.len()
            )));
        }
        if let Some(s) = noise_std.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(PosteriorError::Observation(format!("`{field}`: noise std {s} must be positive")));
        }
        if points.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(PosteriorError::Observation(format!("`{field}`: non-finite coordinate or value")));
        }
        Ok(Self {
            field,
            points,
            values,
            noise_std,
        })
    }

    /// Same noise level everywhere.
    pub fn with_noise(field: FieldTag, points: Array2<f64>, values: Array1<f64>, noise_std: f64) -> Result<Self> {
        let n = values.len();
        Self::new(field, points, values, Array1::from_elem(n, noise_std))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            field: self.field,
            points: self.points.select(Axis(0), idx),
            values: self.values.select(Axis(0), idx),
            noise_std: self.noise_std.select(Axis(0), idx),
        }
    }

    /// `Σ_i −½ ln(2πσ_i²)`.
    pub fn normalizer(&self) -> f64 {
        self.noise_std
            .iter()
            .map(|s| -0.5 * (2.0 * std::f64::consts::PI * s * s).ln())
            .sum()
    }
}

/// Groups loose observations by field, in [`FieldTag::ALL`] order.
pub fn group_observations(obs: &[Observation]) -> Result<Vec<FieldObservations>> {
    let mut out = Vec::new();
    for tag in FieldTag::ALL {
        let of: Vec<&Observation> = obs.iter().filter(|o| o.field == tag).collect();
        if of.is_empty() {
            continue;
        }
        let dim = of[0].coord.len();
        if of.iter().any(|o| o.coord.len() != dim) || dim == 0 {
            return Err(PosteriorError::Observation(format!("`{tag}`: inconsistent coordinate dimension")));
        }
        let points = Array2::from_shape_fn((of.len(), dim), |(i, c)| of[i].coord[c]);
        let values = of.iter().map(|o| o.value).collect();
        let stds = of.iter().map(|o| o.noise_std).collect();
        out.push(FieldObservations::new(tag, points, values, stds)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn noise_must_be_positive() {
        let p = array![[0.0], [1.0]];
        let v = array![1.0, 2.0];
        assert!(FieldObservations::with_noise(FieldTag::U, p.clone(), v.clone(), 0.0).is_err());
        assert!(FieldObservations::with_noise(FieldTag::U, p.clone(), v.clone(), -0.1).is_err());
        assert!(FieldObservations::with_noise(FieldTag::U, p, v, 0.1).is_ok());
    }

    #[test]
    fn grouping_orders_fields() {
        let obs = vec![
            Observation { field: FieldTag::F, coord: vec![0.5], value: 1.0, noise_std: 0.1 },
            Observation { field: FieldTag::U, coord: vec![0.1], value: 2.0, noise_std: 0.2 },
            Observation { field: FieldTag::F, coord: vec![0.7], value: 3.0, noise_std: 0.1 },
        ];
        let g = group_observations(&obs).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].field, FieldTag::U);
        assert_eq!(g[1].values, array![1.0, 3.0]);
        assert_eq!(g[1].points, array![[0.5], [0.7]]);
    }

    #[test]
    fn normalizer_sums_terms() {
        let o = FieldObservations::with_noise(FieldTag::U, array![[0.0], [0.1], [0.2]], array![0.0, 0.0, 0.0], 0.1)
            .unwrap();
        let expected = -3.0 * 0.5 * (2.0 * std::f64::consts::PI * 0.01).ln();
        assert!((o.normalizer() - expected).abs() < 1e-12);
    }
}
