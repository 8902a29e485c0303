//! `∇·(λ∇u) = f` on the unit square with `u = 1` at `x = 0`, `u = 0` at
//! `x = 1` and zero flux through `y = 0, 1`.
//!
//! Vertex-centred conservative finite differences on an `n × n` cell grid:
//! face conductivities are arithmetic means of the nodal values, and
//! boundary rows at `y = 0, 1` use half control volumes so the system stays
//! symmetric positive definite. The banded system is factored directly.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{PhysicsError, Result};

/// Default fine-grid cell count; a multiple of 19 so a 20 × 20 data grid
/// coincides with solver nodes.
pub const DARCY_DEFAULT_RESOLUTION: usize = 95;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DarcyProblem {
    pub forcing: f64,
    pub left_value: f64,
    pub right_value: f64,
}

impl Default for DarcyProblem {
    fn default() -> Self {
        Self {
            forcing: 50.0,
            left_value: 1.0,
            right_value: 0.0,
        }
    }
}

/// Nodal solution, `u[[i, j]]` at `(i/n, j/n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DarcySolution {
    pub cells: usize,
    pub u: Array2<f64>,
    /// Max-norm residual of the scaled linear system.
    pub residual: f64,
}

impl DarcySolution {
    /// Values on an `m × m` uniform grid including the boundary, by
    /// injection when the grids nest and bilinear interpolation otherwise.
    pub fn restrict(&self, m: usize) -> Array2<f64> {
        let n = self.cells;
        Array2::from_shape_fn((m, m), |(a, b)| {
            let x = a as f64 / (m - 1) as f64;
            let y = b as f64 / (m - 1) as f64;
            bilinear(&self.u, n, x, y)
        })
    }
}

/// Bilinear interpolation of nodal values on `[0,1]²` with `n` cells per side.
fn bilinear(vals: &Array2<f64>, n: usize, x: f64, y: f64) -> f64 {
    let gx = (x * n as f64).clamp(0.0, n as f64);
    let gy = (y * n as f64).clamp(0.0, n as f64);
    let (i0, j0) = ((gx.floor() as usize).min(n - 1), (gy.floor() as usize).min(n - 1));
    let (tx, ty) = (gx - i0 as f64, gy - j0 as f64);
    let exact = |t: f64| t.abs() < 1e-12 || (t - 1.0).abs() < 1e-12;
    if exact(tx) && exact(ty) {
        return vals[[i0 + tx.round() as usize, j0 + ty.round() as usize]];
    }
    (1.0 - tx) * (1.0 - ty) * vals[[i0, j0]]
        + tx * (1.0 - ty) * vals[[i0 + 1, j0]]
        + (1.0 - tx) * ty * vals[[i0, j0 + 1]]
        + tx * ty * vals[[i0 + 1, j0 + 1]]
}

/// Solves with conductivity and forcing given as functions of `(x, y)`.
pub fn darcy_solve_fn(
    problem: &DarcyProblem,
    cells: usize,
    conductivity: impl Fn(f64, f64) -> f64,
    forcing: impl Fn(f64, f64) -> f64,
) -> Result<DarcySolution> {
    let n = cells;
    if n < 2 {
        return Err(PhysicsError::Invalid(format!("need at least 2 cells, got {n}")));
    }
    let h = 1.0 / n as f64;
    let lam = Array2::from_shape_fn((n + 1, n + 1), |(i, j)| conductivity(i as f64 * h, j as f64 * h));
    if let Some(v) = lam.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(PhysicsError::Invalid(format!("conductivity must be positive, found {v}")));
    }
    let ny = n + 1;
    let unknowns = (n - 1) * ny;
    let idx = |i: usize, j: usize| (i - 1) * ny + j;
    let bw = ny;
    let mut band = BandMatrix::zeros(unknowns, bw);
    let mut rhs = vec![0.0; unknowns];
    for i in 1..n {
        for j in 0..=n {
            let r = idx(i, j);
            let w = if j == 0 || j == n { 0.5 } else { 1.0 };
            rhs[r] = -h * h * w * forcing(i as f64 * h, j as f64 * h);
            for (ni, _) in [(i - 1, 0), (i + 1, 0)] {
                let c = 0.5 * (lam[[i, j]] + lam[[ni, j]]) * w;
                band.add(r, r, c);
                if ni == 0 {
                    rhs[r] += c * problem.left_value;
                } else if ni == n {
                    rhs[r] += c * problem.right_value;
                } else if ni > i {
                    band.add(r, idx(ni, j), -c);
                }
            }
            if j + 1 <= n {
                let c = 0.5 * (lam[[i, j]] + lam[[i, j + 1]]);
                band.add(r, r, c);
                band.add(r, idx(i, j + 1), -c);
            }
            if j >= 1 {
                let c = 0.5 * (lam[[i, j]] + lam[[i, j - 1]]);
                band.add(r, r, c);
            }
        }
    }
    let system = band.clone();
    band.cholesky()?;
    let mut sol = band.solve(&rhs);
    let scale = rhs.iter().fold(1.0f64, |a, b| a.max(b.abs()));
    let mut residual = f64::INFINITY;
    for _ in 0..3 {
        let r: Vec<f64> = system.apply(&sol).iter().zip(&rhs).map(|(a, b)| b - a).collect();
        residual = r.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if residual <= 1e-12 * scale {
            break;
        }
        let corr = band.solve(&r);
        sol.iter_mut().zip(corr).for_each(|(s, c)| *s += c);
    }
    if !(residual <= 1e-10 * scale) {
        return Err(PhysicsError::Solver(format!(
            "residual {residual:e} above tolerance after refinement ({unknowns} unknowns)"
        )));
    }
    let mut u = Array2::zeros((n + 1, n + 1));
    for j in 0..=n {
        u[[0, j]] = problem.left_value;
        u[[n, j]] = problem.right_value;
        for i in 1..n {
            u[[i, j]] = sol[idx(i, j)];
        }
    }
    Ok(DarcySolution { cells: n, u, residual })
}

/// Solves for conductivity given on an `m × m` data grid (`[[ix, iy]]`),
/// log-bilinearly interpolated to the solver grid, and returns `u` on the
/// same data grid.
pub fn darcy_solve(
    problem: &DarcyProblem,
    conductivity: &Array2<f64>,
    resolution: usize,
) -> Result<Array2<f64>> {
    let m = conductivity.nrows();
    if conductivity.ncols() != m || m < 2 {
        return Err(PhysicsError::Invalid("conductivity must be a square grid".into()));
    }
    if resolution < 20 {
        return Err(PhysicsError::Invalid(format!("resolution {resolution} below 20")));
    }
    if conductivity.iter().any(|v| !(*v > 0.0)) {
        return Err(PhysicsError::Invalid("conductivity must be positive".into()));
    }
    let log_lam = conductivity.mapv(f64::ln);
    let f = problem.forcing;
    let sol = darcy_solve_fn(
        problem,
        resolution,
        |x, y| bilinear(&log_lam, m - 1, x, y).exp(),
        |_, _| f,
    )?;
    Ok(sol.restrict(m))
}

/// Symmetric band matrix storing the lower band row-wise.
#[derive(Clone)]
struct BandMatrix {
    n: usize,
    bw: usize,
    /// `data[r * (bw + 1) + (c + bw - r)]` holds entry `(r, c)` for `r - bw ≤ c ≤ r`.
    data: Vec<f64>,
}

impl BandMatrix {
    fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    fn at(&self, r: usize, c: usize) -> usize {
        debug_assert!(c <= r && r - c <= self.bw);
        r * (self.bw + 1) + (c + self.bw - r)
    }

    /// Adds `v` to the symmetric pair `(r, c)`, `(c, r)`.
    fn add(&mut self, r: usize, c: usize, v: f64) {
        let k = self.at(r.max(c), r.min(c));
        self.data[k] += v;
    }

    fn get(&self, r: usize, c: usize) -> f64 {
        let (hi, lo) = (r.max(c), r.min(c));
        if hi - lo > self.bw {
            0.0
        } else {
            self.data[self.at(hi, lo)]
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|r| {
                let lo = r.saturating_sub(self.bw);
                let hi = (r + self.bw).min(self.n - 1);
                (lo..=hi).map(|c| self.get(r, c) * x[c]).sum()
            })
            .collect()
    }

    fn cholesky(&mut self) -> Result<()> {
        let bw = self.bw;
        for r in 0..self.n {
            let lo = r.saturating_sub(bw);
            for c in lo..=r {
                let mut s = self.data[self.at(r, c)];
                let kstart = lo.max(c.saturating_sub(bw));
                for k in kstart..c {
                    s -= self.data[self.at(r, k)] * self.data[self.at(c, k)];
                }
                if c == r {
                    if !(s > 0.0) {
                        return Err(PhysicsError::Solver(format!(
                            "matrix not positive definite at row {r} (pivot {s:e})"
                        )));
                    }
                    let k = self.at(r, r);
                    self.data[k] = s.sqrt();
                } else {
                    let k = self.at(r, c);
                    self.data[k] = s / self.data[self.at(c, c)];
                }
            }
        }
        Ok(())
    }

    /// Solves with the factor produced by [`BandMatrix::cholesky`].
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let bw = self.bw;
        let mut y = b.to_vec();
        for r in 0..self.n {
            let lo = r.saturating_sub(bw);
            let mut s = y[r];
            for c in lo..r {
                s -= self.data[self.at(r, c)] * y[c];
            }
            y[r] = s / self.data[self.at(r, r)];
        }
        for r in (0..self.n).rev() {
            let hi = (r + bw).min(self.n - 1);
            let mut s = y[r];
            for c in r + 1..=hi {
                s -= self.data[self.at(c, r)] * y[c];
            }
            y[r] = s / self.data[self.at(r, r)];
        }
        y
    }
}
