//! Standard-normal latent prior and Gaussian measurement likelihood.

use std::f64::consts::PI;

use fpuq_numcore::{Tape, Var};
use ndarray::Array2;

use crate::error::{PosteriorError, Result};
use crate::model::LatentModel;
use crate::observation::FieldObservations;

/// `log N(ξ; 0, I)`.
pub fn log_prior_xi(xi: &[f64]) -> f64 {
    let d = xi.len() as f64;
    -0.5 * d * (2.0 * PI).ln() - 0.5 * xi.iter().map(|v| v * v).sum::<f64>()
}

/// Row-wise [`log_prior_xi`] on the tape, `N × 1`.
pub fn log_prior_tape(xi: Var<'_>) -> Var<'_> {
    let d = xi.shape().1 as f64;
    xi.square().sum_cols().scale(-0.5).add_scalar(-0.5 * d * (2.0 * PI).ln())
}

pub(crate) fn check_fields<M: LatentModel + ?Sized>(model: &M, observations: &[FieldObservations]) -> Result<()> {
    for o in observations {
        if !model.supports(o.field) {
            return Err(PosteriorError::UnsupportedField(o.field));
        }
    }
    Ok(())
}

/// Log-likelihood of one field's measurements for every row of `xi`
/// (`N × 1`), multiplied by `scale`.
pub fn field_log_likelihood_tape<'t, M: LatentModel + ?Sized>(
    model: &M,
    xi: Var<'t>,
    obs: &FieldObservations,
    scale: f64,
) -> Result<Var<'t>> {
    let tape = xi.tape();
    let n = xi.shape().0;
    if obs.is_empty() {
        return Ok(tape.constant(Array2::zeros((n, 1))));
    }
    let pred = model.predict_tape(xi, obs.field, &obs.points)?;
    let values = obs.values.view().insert_axis(ndarray::Axis(0)).to_owned();
    let precision = obs.noise_std.mapv(|s| -0.5 / (s * s)).insert_axis(ndarray::Axis(0));
    let r = pred - tape.constant(values).broadcast_rows(n);
    let quad = (r.square() * tape.constant(precision).broadcast_rows(n)).sum_cols();
    Ok(quad.add_scalar(obs.normalizer()).scale(scale))
}

/// `Σ_fields Σ_i log N(value_i; field(x_i; ξ), σ_i²)` for every row of `xi`.
pub fn log_likelihood_tape<'t, M: LatentModel + ?Sized>(
    model: &M,
    xi: Var<'t>,
    observations: &[FieldObservations],
) -> Result<Var<'t>> {
    check_fields(model, observations)?;
    let mut total = xi.tape().constant(Array2::zeros((xi.shape().0, 1)));
    for o in observations {
        total = total + field_log_likelihood_tape(model, xi, o, 1.0)?;
    }
    Ok(total)
}

/// Log-likelihood of `observations` at a single latent vector.
pub fn log_likelihood<M: LatentModel + ?Sized>(
    model: &M,
    xi: &[f64],
    observations: &[FieldObservations],
) -> Result<f64> {
    check_latent(model, xi.len())?;
    let tape = Tape::new();
    let x = tape.constant(Array2::from_shape_vec((1, xi.len()), xi.to_vec()).expect("row"));
    Ok(log_likelihood_tape(model, x, observations)?.item())
}

pub(crate) fn check_latent<M: LatentModel + ?Sized>(model: &M, width: usize) -> Result<()> {
    if width != model.latent_dim() {
        return Err(PosteriorError::Config(format!(
            "latent vector has {width} entries, model expects {}",
            model.latent_dim()
        )));
    }
    Ok(())
}

/// Unnormalized log posterior of `ξ` and its gradient.
pub fn log_posterior_grad<M: LatentModel + ?Sized>(
    model: &M,
    xi: &[f64],
    observations: &[FieldObservations],
) -> Result<(f64, Vec<f64>)> {
    check_latent(model, xi.len())?;
    let tape = Tape::new();
    let x = tape.var(Array2::from_shape_vec((1, xi.len()), xi.to_vec()).expect("row"));
    let lp = log_prior_tape(x) + log_likelihood_tape(model, x, observations)?;
    let value = lp.item();
    let g = tape.grad(lp, &[x])[0].to_array();
    Ok((value, g.into_raw_vec_and_offset().0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LinearModel;
    use fpuq_priors::FieldTag;
    use ndarray::array;
    use proptest::prelude::*;

    fn identity_model(d: usize) -> LinearModel {
        LinearModel::coordinates(FieldTag::U, d)
    }

    #[test]
    fn prior_at_origin() {
        assert!((log_prior_xi(&[0.0, 0.0]) + (2.0 * PI).ln()).abs() < 1e-15);
        let v = log_prior_xi(&[2f64.sqrt()]);
        assert!((v - (-0.5 * (2.0 * PI).ln() - 1.0)).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn prior_factorizes(xi in proptest::collection::vec(-5.0f64..5.0, 1..12)) {
            let sum: f64 = xi.iter().map(|&v| log_prior_xi(&[v])).sum();
            prop_assert!((log_prior_xi(&xi) - sum).abs() < 1e-12);
            let tape = Tape::new();
            let row = tape.constant(Array2::from_shape_vec((1, xi.len()), xi.clone()).unwrap());
            prop_assert!((log_prior_tape(row).item() - sum).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_fit() {
        let m = identity_model(3);
        let obs = FieldObservations::with_noise(FieldTag::U, array![[0.0], [1.0], [2.0]], array![0.3, -1.0, 2.0], 0.1)
            .unwrap();
        let ll = log_likelihood(&m, &[0.3, -1.0, 2.0], &[obs]).unwrap();
        let expected = -3.0 * 0.5 * (2.0 * PI * 0.01).ln();
        assert!((ll - expected).abs() < 1e-12);
    }

    #[test]
    fn one_sigma_residual() {
        let m = identity_model(1);
        let s = 0.25;
        let obs = FieldObservations::with_noise(FieldTag::U, array![[0.0]], array![1.0 + s], s).unwrap();
        let ll = log_likelihood(&m, &[1.0], &[obs]).unwrap();
        assert!((ll - (-0.5 * (2.0 * PI * s * s).ln() - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn fields_add_up() {
        let m = LinearModel::new(FieldTag::U, 2, |x| vec![1.0, x[0]]);
        let a = FieldObservations::with_noise(FieldTag::U, array![[0.1], [0.5]], array![0.2, 0.9], 0.1).unwrap();
        let b = FieldObservations::with_noise(FieldTag::U, array![[0.9]], array![1.4], 0.3).unwrap();
        let xi = [0.4, 1.1];
        let both = log_likelihood(&m, &xi, &[a.clone(), b.clone()]).unwrap();
        let sep = log_likelihood(&m, &xi, &[a]).unwrap() + log_likelihood(&m, &xi, &[b]).unwrap();
        assert!((both - sep).abs() < 1e-12);
    }

    #[test]
    fn unsupported_field_is_rejected() {
        let m = identity_model(1);
        let obs = FieldObservations::with_noise(FieldTag::F, array![[0.0]], array![1.0], 0.1).unwrap();
        assert!(matches!(log_likelihood(&m, &[0.0], &[obs]), Err(PosteriorError::UnsupportedField(FieldTag::F))));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = LinearModel::new(FieldTag::U, 3, |x| vec![x[0].sin(), x[0] * x[0], 1.0]);
        let obs = FieldObservations::with_noise(
            FieldTag::U,
            array![[0.1], [0.4], [0.8], [1.3]],
            array![0.2, -0.1, 0.5, 0.3],
            0.2,
        )
        .unwrap();
        let obs = [obs];
        let xi = [0.3, -0.6, 0.9];
        let (_, g) = log_posterior_grad(&m, &xi, &obs).unwrap();
        let h = 1e-6;
        for k in 0..3 {
            let mut p = xi;
            let mut q = xi;
            p[k] += h;
            q[k] -= h;
            let f = |x: &[f64]| log_prior_xi(x) + log_likelihood(&m, x, &obs).unwrap();
            let fd = (f(&p) - f(&q)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-6 * (1.0 + fd.abs()));
        }
    }
}
