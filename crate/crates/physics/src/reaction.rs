//! Steady nonlinear diffusion-reaction `D u'' − k(u) u³ = f` on `[−1, 1]`.

use std::f64::consts::PI;

use fpuq_numcore::{input_derivative, Dual2, RngStream, Scalar};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReactionProblem {
    pub diffusion: f64,
    /// `k(u) = rate_scale · exp(−u)`.
    pub rate_scale: f64,
}

impl Default for ReactionProblem {
    fn default() -> Self {
        Self {
            diffusion: 0.01,
            rate_scale: 0.4,
        }
    }
}

impl ReactionProblem {
    pub fn reaction_rate<S: Scalar>(&self, u: S) -> S {
        S::from_f64(self.rate_scale) * (-u).exp()
    }
}

/// Eight coefficients drawn from `U[0, 1)`.
pub fn draw_reaction_coefficients(rng: &mut RngStream) -> [f64; 8] {
    std::array::from_fn(|_| rng.uniform(0.0, 1.0))
}

/// `u(x) = (x² − 1) Σ_{i=1..4} [ω_{2i−1} sin(iπx) + ω_{2i} cos(iπx)]`.
pub fn exact_reaction_solution<S: Scalar>(omega: &[f64; 8], x: S) -> S {
    let mut s = S::from_f64(0.0);
    for i in 1..=4 {
        let arg = x * S::from_f64(i as f64 * PI);
        s = s
            + S::from_f64(omega[2 * i - 2]) * arg.sin()
            + S::from_f64(omega[2 * i - 1]) * arg.cos();
    }
    (x * x - S::from_f64(1.0)) * s
}

/// `(u, u', u'')` of the exact solution, differentiated by hand.
pub fn exact_reaction_derivatives(omega: &[f64; 8], x: f64) -> (f64, f64, f64) {
    let (mut s, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for i in 1..=4 {
        let w = i as f64 * PI;
        let (a, b) = (omega[2 * i - 2], omega[2 * i - 1]);
        let (sn, cs) = (w * x).sin_cos();
        s += a * sn + b * cs;
        s1 += w * (a * cs - b * sn);
        s2 -= w * w * (a * sn + b * cs);
    }
    let p = x * x - 1.0;
    (p * s, 2.0 * x * s + p * s1, 2.0 * s + 4.0 * x * s1 + p * s2)
}

/// Source term consistent with the exact solution.
pub fn reaction_forcing(problem: &ReactionProblem, omega: &[f64; 8], x: f64) -> f64 {
    let (u, _, u2) = exact_reaction_derivatives(omega, x);
    problem.diffusion * u2 - problem.reaction_rate(u) * u.powi(3)
}

/// `D u'' − k u³ − f` at `x`, with `u''` from forward-mode differentiation.
pub fn reaction_residual(
    problem: &ReactionProblem,
    u: impl Fn(Dual2) -> Dual2,
    k: impl Fn(f64) -> f64,
    f: impl Fn(f64) -> f64,
    x: f64,
) -> f64 {
    let u_xx = input_derivative(&u, x, 2).expect("order 2 is supported");
    let u0 = u(Dual2::from_f64(x)).re();
    problem.diffusion * u_xx - k(x) * u0.powi(3) - f(x)
}
