//! Ground-truth data generators and physical operators.

pub mod darcy;
pub mod error;
pub mod grid;
pub mod kernel;
pub mod kl;
pub mod reaction;

pub use darcy::{darcy_solve, darcy_solve_fn, DarcyProblem, DarcySolution, DARCY_DEFAULT_RESOLUTION};
pub use error::{PhysicsError, Result};
pub use grid::{tensor_grid, uniform_points};
pub use kernel::{add_gaussian_noise, cholesky_with_jitter, gp_sample, SeKernel};
pub use kl::{kl_decompose, kl_sample, KlField};
pub use reaction::{
    draw_reaction_coefficients, exact_reaction_derivatives, exact_reaction_solution,
    reaction_forcing, reaction_residual, ReactionProblem,
};
