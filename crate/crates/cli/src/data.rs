//! Historical datasets and test tasks for each problem.

use fpuq_numcore::RngStream;
use fpuq_physics::{
    darcy_solve, draw_reaction_coefficients, exact_reaction_solution, gp_sample, kl_decompose, kl_sample,
    reaction_forcing, uniform_points, DarcyProblem, KlField, ReactionProblem, SeKernel,
};
use fpuq_posterior::FieldObservations;
use fpuq_priors::{FieldTag, FunctionDataset, SensorGrid};
use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Layout, Problem};
use crate::error::{CliError, Result};

/// Exact field values on the report grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldReference {
    pub field: FieldTag,
    pub values: Array1<f64>,
}

/// Noisy measurements of a new task plus the ground truth used for scoring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskFile {
    pub seed: u64,
    pub observations: Vec<FieldObservations>,
    pub report_points: Array2<f64>,
    pub reference: Vec<FieldReference>,
}

impl TaskFile {
    pub fn reference(&self, field: FieldTag) -> Option<&Array1<f64>> {
        self.reference.iter().find(|r| r.field == field).map(|r| &r.values)
    }
}

pub fn target_function(x: f64) -> f64 {
    let s = (3.0 * x).sin();
    s * s * s
}

pub fn sensor_grid(config: &ExperimentConfig) -> Result<SensorGrid> {
    let n = config.data.sensors;
    Ok(match config.problem {
        Problem::Function1d | Problem::Reaction1d => SensorGrid::line(-1.0, 1.0, n)?,
        Problem::Darcy2d => SensorGrid::unit_square(n)?,
    })
}

fn report_points(config: &ExperimentConfig, grid: &SensorGrid) -> Array2<f64> {
    match config.problem {
        Problem::Darcy2d => grid.points().clone(),
        _ => uniform_points(-1.0, 1.0, config.task.report_points),
    }
}

fn reaction_problem(config: &ExperimentConfig) -> ReactionProblem {
    ReactionProblem {
        diffusion: config.data.diffusion,
        rate_scale: config.data.rate_scale,
    }
}

fn darcy_problem(config: &ExperimentConfig) -> DarcyProblem {
    DarcyProblem {
        forcing: config.data.darcy_forcing,
        ..DarcyProblem::default()
    }
}

fn kl_field(config: &ExperimentConfig, grid: &SensorGrid) -> Result<KlField> {
    let kernel = SeKernel::new(config.data.length_scale)?;
    Ok(kl_decompose(&kernel, grid.points(), config.data.kl_terms)?)
}

/// `(λ̄, u)` on the `n × n` grid for one set of KL coefficients.
fn darcy_pair(config: &ExperimentConfig, kl: &KlField, zeta: &[f64]) -> Result<(Array1<f64>, Array1<f64>)> {
    let n = config.data.sensors;
    let log_k = kl_sample(kl, zeta)?;
    let cond = log_k.mapv(f64::exp).into_shape_with_order((n, n)).expect("n² values");
    let u = darcy_solve(&darcy_problem(config), &cond, config.data.darcy_resolution)?;
    Ok((log_k, Array1::from_iter(u.iter().copied())))
}

/// Historical function samples.
pub fn generate_history(config: &ExperimentConfig) -> Result<FunctionDataset> {
    let grid = sensor_grid(config)?;
    let mut rng = RngStream::new(config.seed, "data/history");
    let count = config.data.samples;
    Ok(match config.problem {
        Problem::Function1d => {
            let kernel = SeKernel::new(config.data.length_scale)?;
            let values = gp_sample(&kernel, grid.points(), count, &mut rng)?;
            FunctionDataset::new(grid, vec![FieldTag::U], values)?
        }
        Problem::Reaction1d => {
            let problem = reaction_problem(config);
            let n = grid.len();
            let mut values = Array2::zeros((count, 2 * n));
            for mut row in values.rows_mut() {
                let omega = draw_reaction_coefficients(&mut rng);
                for (i, x) in grid.points().column(0).iter().enumerate() {
                    let u: f64 = exact_reaction_solution(&omega, *x);
                    row[i] = problem.reaction_rate(u);
                    row[n + i] = reaction_forcing(&problem, &omega, *x);
                }
            }
            FunctionDataset::new(grid, vec![FieldTag::Lambda, FieldTag::F], values)?
        }
        Problem::Darcy2d => {
            let kl = kl_field(config, &grid)?;
            let d = kl.truncation();
            let zetas: Vec<Vec<f64>> = (0..count).map(|_| (0..d).map(|_| rng.normal()).collect()).collect();
            let pairs: Vec<(Array1<f64>, Array1<f64>)> = zetas
                .par_iter()
                .map(|z| darcy_pair(config, &kl, z))
                .collect::<Result<_>>()?;
            let n = grid.len();
            let mut values = Array2::zeros((count, 2 * n));
            for (mut row, (lam, u)) in values.rows_mut().into_iter().zip(&pairs) {
                row.slice_mut(ndarray::s![..n]).assign(lam);
                row.slice_mut(ndarray::s![n..]).assign(u);
            }
            FunctionDataset::new(grid, vec![FieldTag::Lambda, FieldTag::U], values)?
        }
    })
}

fn layout_points(layout: &Layout, grid: &SensorGrid, rng: &mut RngStream) -> Result<Array2<f64>> {
    match layout {
        Layout::Intervals { intervals, count } => {
            if grid.dim() != 1 {
                return Err(CliError::Config("interval layouts are 1-D only".into()));
            }
            let blocks: Vec<Array2<f64>> = intervals.iter().map(|[lo, hi]| uniform_points(*lo, *hi, *count)).collect();
            let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
            Ok(ndarray::concatenate(Axis(0), &views).expect("one column"))
        }
        Layout::Points { points } => {
            let d = grid.dim();
            if points.iter().any(|p| p.len() != d) {
                return Err(CliError::Config(format!("observation points must have {d} coordinates")));
            }
            Ok(Array2::from_shape_fn((points.len(), d), |(i, j)| points[i][j]))
        }
        Layout::RandomNodes { count } => {
            if *count > grid.len() {
                return Err(CliError::Config(format!("{count} nodes requested, grid has {}", grid.len())));
            }
            let mut idx: Vec<usize> = (0..grid.len()).collect();
            rng.shuffle(&mut idx);
            let mut chosen = idx[..*count].to_vec();
            chosen.sort_unstable();
            Ok(grid.points().select(Axis(0), &chosen))
        }
    }
}

/// Test task: measurements of a fresh function plus exact fields on the
/// report grid.
pub fn generate_task(config: &ExperimentConfig) -> Result<TaskFile> {
    let grid = sensor_grid(config)?;
    let root = RngStream::new(config.seed, "task");
    let report = report_points(config, &grid);
    let truth: Box<dyn Fn(FieldTag, &[f64]) -> Result<f64>> = match config.problem {
        Problem::Function1d => Box::new(|tag, p: &[f64]| match tag {
            FieldTag::U => Ok(target_function(p[0])),
            _ => Err(CliError::Config(format!("function-1d cannot observe `{tag}`"))),
        }),
        Problem::Reaction1d => {
            let omega = draw_reaction_coefficients(&mut root.child("omega"));
            let problem = reaction_problem(config);
            Box::new(move |tag, p: &[f64]| {
                let u: f64 = exact_reaction_solution(&omega, p[0]);
                match tag {
                    FieldTag::U | FieldTag::B => Ok(u),
                    FieldTag::F => Ok(reaction_forcing(&problem, &omega, p[0])),
                    FieldTag::Lambda => Ok(problem.reaction_rate(u)),
                }
            })
        }
        Problem::Darcy2d => {
            let kl = kl_field(config, &grid)?;
            let mut z_rng = root.child("field");
            let zeta: Vec<f64> = (0..kl.truncation()).map(|_| z_rng.normal()).collect();
            let (lam, u) = darcy_pair(config, &kl, &zeta)?;
            let n = config.data.sensors;
            Box::new(move |tag, p: &[f64]| {
                let node = |c: f64| {
                    let t = c * (n - 1) as f64;
                    let r = t.round();
                    ((t - r).abs() < 1e-9 && (0.0..=(n - 1) as f64).contains(&r)).then_some(r as usize)
                };
                let k = match (node(p[0]), node(p[1])) {
                    (Some(i), Some(j)) => i * n + j,
                    _ => return Err(CliError::Config(format!("darcy-2d observes grid nodes only, got {p:?}"))),
                };
                match tag {
                    FieldTag::Lambda => Ok(lam[k]),
                    FieldTag::U | FieldTag::B => Ok(u[k]),
                    FieldTag::F => Err(CliError::Config("darcy-2d forcing is not observed".into())),
                }
            })
        }
    };
    let mut observations = Vec::new();
    for spec in &config.task.observations {
        let mut rng = root.child(&format!("points/{}", spec.field));
        let points = layout_points(&spec.layout, &grid, &mut rng)?;
        let mut noise = root.child(&format!("noise/{}", spec.field));
        let values = points
            .rows()
            .into_iter()
            .map(|p| Ok(truth(spec.field, p.as_slice().expect("contiguous"))? + config.task.noise_std * noise.normal()))
            .collect::<Result<Array1<f64>>>()?;
        observations.push(FieldObservations::with_noise(spec.field, points, values, config.task.noise_std)?);
    }
    observations.sort_by_key(|o| o.field);
    let reference = config
        .problem
        .report_fields()
        .iter()
        .map(|&field| {
            let values = report
                .rows()
                .into_iter()
                .map(|p| truth(field, p.as_slice().expect("contiguous")))
                .collect::<Result<Array1<f64>>>()?;
            Ok(FieldReference { field, values })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TaskFile {
        seed: config.seed,
        observations,
        report_points: report,
        reference,
    })
}
