//! Pointwise posterior statistics.

use fpuq_priors::FieldTag;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{PosteriorError, Result};
use crate::model::LatentModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub field: FieldTag,
    pub points: Array2<f64>,
    pub mean: Array1<f64>,
    /// Population standard deviation over the draws.
    pub std: Array1<f64>,
    pub draws: usize,
}

/// Mean and population std of each column of `values` (`M × q`).
pub fn column_moments(values: &Array2<f64>) -> (Array1<f64>, Array1<f64>) {
    let q = values.ncols();
    let mut mean = Array1::zeros(q);
    let mut m2 = Array1::<f64>::zeros(q);
    for (k, row) in values.rows().into_iter().enumerate() {
        let k = (k + 1) as f64;
        for ((m, s), &x) in mean.iter_mut().zip(m2.iter_mut()).zip(row) {
            let delta = x - *m;
            *m += delta / k;
            *s += delta * (x - *m);
        }
    }
    let n = values.nrows().max(1) as f64;
    (mean, m2.mapv(|s| (s.max(0.0) / n).sqrt()))
}

/// Pushes every draw of `ξ` (`M × d_ξ`) through field `tag` at `points`.
pub fn posterior_summary<M: LatentModel + ?Sized>(
    model: &M,
    draws: &Array2<f64>,
    tag: FieldTag,
    points: &Array2<f64>,
) -> Result<PosteriorSummary> {
    if draws.nrows() == 0 {
        return Err(PosteriorError::Config("no posterior draws".into()));
    }
    let values = model.predict(draws, tag, points)?;
    let (mean, std) = column_moments(&values);
    Ok(PosteriorSummary {
        field: tag,
        points: points.clone(),
        mean,
        std,
        draws: draws.nrows(),
    })
}

/// Fraction of points where `|mean − reference| ≤ k · std`.
pub fn coverage_fraction(summary: &PosteriorSummary, reference: &Array1<f64>, k: f64) -> Result<f64> {
    if reference.len() != summary.mean.len() {
        return Err(PosteriorError::Config(format!(
            "reference has {} values for {} query points",
            reference.len(),
            summary.mean.len()
        )));
    }
    if summary.mean.is_empty() {
        return Ok(0.0);
    }
    let inside = summary
        .mean
        .iter()
        .zip(&summary.std)
        .zip(reference)
        .filter(|((m, s), r)| (*m - *r).abs() <= k * **s)
        .count();
    Ok(inside as f64 / summary.mean.len() as f64)
}

/// Root mean square of `a − b`.
pub fn rms_difference(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    ((a - b).mapv(|v| v * v).mean().unwrap_or(0.0)).sqrt()
}
