use serde::{Deserialize, Serialize};

use crate::error::{NumError, Result};
use crate::params::ParamVector;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Moment estimates shaped like the parameters they update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: ParamVector,
    pub v: ParamVector,
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(params: &ParamVector, config: AdamConfig) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
            config,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut ParamVector, grads: &ParamVector, state: &mut AdamState) -> Result<()> {
    if !params.same_layout(grads) || !params.same_layout(&state.m) {
        return Err(NumError::Shape {
            context: "adam_step",
            expected: params.shapes().iter().flat_map(|&(a, b)| [a, b]).collect(),
            actual: grads.shapes().iter().flat_map(|&(a, b)| [a, b]).collect(),
        });
    }
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (((p, g), m), v) in params
        .arrays_mut()
        .zip(grads.arrays())
        .zip(state.m.arrays_mut())
        .zip(state.v.arrays_mut())
    {
        ndarray::Zip::from(p)
            .and(g)
            .and(m)
            .and(v)
            .for_each(|p, &g, m, v| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let mhat = *m / c1;
                let vhat = *v / c2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn single(v: f64) -> ParamVector {
        let mut p = ParamVector::new();
        p.push("x", array![[v]]).unwrap();
        p
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = single(0.5);
        let g = single(0.0);
        let mut s = AdamState::new(&p, AdamConfig::default());
        adam_step(&mut p, &g, &mut s).unwrap();
        assert_eq!(p.flatten(), vec![0.5]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = single(0.0);
        let g = single(1.0);
        let mut s = AdamState::new(&p, AdamConfig::with_lr(1e-4));
        adam_step(&mut p, &g, &mut s).unwrap();
        assert!((p.flatten()[0] + 1e-4).abs() < 1e-11);
    }

    #[test]
    fn matches_hand_rolled_trajectory_on_quadratic_bowl() {
        // Independent scalar Adam on f(x, y) = x^2 + 3 y^2.
        let cfg = AdamConfig::with_lr(0.05);
        let mut oracle = [1.0f64, -2.0];
        let mut m = [0.0f64; 2];
        let mut v = [0.0f64; 2];
        let mut p = ParamVector::new();
        p.push("xy", array![[1.0, -2.0]]).unwrap();
        let mut s = AdamState::new(&p, cfg);
        for step in 1..=10 {
            let go = [2.0 * oracle[0], 6.0 * oracle[1]];
            for k in 0..2 {
                m[k] = 0.9 * m[k] + 0.1 * go[k];
                v[k] = 0.999 * v[k] + 0.001 * go[k] * go[k];
                let mh = m[k] / (1.0 - 0.9f64.powi(step));
                let vh = v[k] / (1.0 - 0.999f64.powi(step));
                oracle[k] -= 0.05 * mh / (vh.sqrt() + 1e-8);
            }
            let cur = p.flatten();
            let mut g = ParamVector::new();
            g.push("xy", array![[2.0 * cur[0], 6.0 * cur[1]]]).unwrap();
            adam_step(&mut p, &g, &mut s).unwrap();
            let got = p.flatten();
            assert!((got[0] - oracle[0]).abs() < 1e-12);
            assert!((got[1] - oracle[1]).abs() < 1e-12);
        }
        assert_eq!(s.t, 10);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut p = single(0.0);
        let mut g = ParamVector::new();
        g.push("x", array![[1.0, 2.0]]).unwrap();
        let mut s = AdamState::new(&p, AdamConfig::default());
        assert!(adam_step(&mut p, &g, &mut s).is_err());
        assert_eq!(s.t, 0);
    }
}
