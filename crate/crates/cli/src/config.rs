//! Experiment presets and configuration files.

use std::path::Path;

use fpuq_nets::{DeepOnetTrainConfig, IafSpec};
use fpuq_numcore::AdamConfig;
use fpuq_posterior::NutsConfig;
use fpuq_priors::{FieldTag, GanTrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{format_err, io_err, CliError, Result};

/// Data-generating problem behind an experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Problem {
    /// GP functions on [−1, 1], observations of `sin³(3x)`.
    #[value(name = "function-1d")]
    Function1d,
    /// Nonlinear diffusion-reaction with unknown reaction rate.
    #[value(name = "reaction-1d")]
    Reaction1d,
    /// Darcy flow with log-normal conductivity and an operator surrogate.
    #[value(name = "darcy-2d")]
    Darcy2d,
}

impl Problem {
    pub fn as_str(self) -> &'static str {
        match self {
            Problem::Function1d => "function-1d",
            Problem::Reaction1d => "reaction-1d",
            Problem::Darcy2d => "darcy-2d",
        }
    }

    /// Fields summarized on the report grid.
    pub fn report_fields(self) -> &'static [FieldTag] {
        match self {
            Problem::Function1d => &[FieldTag::U],
            Problem::Reaction1d => &[FieldTag::U, FieldTag::F, FieldTag::Lambda],
            Problem::Darcy2d => &[FieldTag::U, FieldTag::Lambda],
        }
    }

    pub fn needs_operator(self) -> bool {
        self == Problem::Darcy2d
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    /// Historical samples.
    pub samples: usize,
    /// Sensors per axis.
    pub sensors: usize,
    /// GP length scale of the prior functions or of the log-conductivity.
    pub length_scale: f64,
    /// Karhunen–Loève terms of the log-conductivity.
    pub kl_terms: usize,
    pub darcy_resolution: usize,
    pub darcy_forcing: f64,
    pub diffusion: f64,
    pub rate_scale: f64,
}

/// Where one field is measured in the test task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// `count` equidistant points in each interval.
    Intervals { intervals: Vec<[f64; 2]>, count: usize },
    /// Explicit coordinates.
    Points { points: Vec<Vec<f64>> },
    /// Distinct sensor-grid nodes drawn at random.
    RandomNodes { count: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationSpec {
    pub field: FieldTag,
    pub layout: Layout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub noise_std: f64,
    pub observations: Vec<ObservationSpec>,
    /// Report-grid points per axis in 1-D; the sensor grid is used in 2-D.
    pub report_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub latent_dim: usize,
    pub hidden: usize,
    pub depth: usize,
    pub gan: GanTrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorConfig {
    pub width: usize,
    pub hidden: usize,
    pub depth: usize,
    pub train: DeepOnetTrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub steps: usize,
    pub samples_per_step: usize,
    pub adam: AdamConfig,
    pub blocks: usize,
    pub hidden: usize,
    pub depth: usize,
    pub log_scale_clamp: f64,
    pub checkpoint_every: usize,
}

impl FlowConfig {
    pub fn spec(&self, dim: usize) -> IafSpec {
        IafSpec {
            dim,
            blocks: self.blocks,
            hidden: self.hidden,
            depth: self.depth,
            log_scale_clamp: self.log_scale_clamp,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Free-form identifier; presets use the problem name.
    pub id: String,
    pub problem: Problem,
    /// Root seed; every stage derives its random streams from it.
    pub seed: u64,
    pub data: DataConfig,
    pub task: TaskConfig,
    pub prior: PriorConfig,
    pub operator: Option<OperatorConfig>,
    pub flow: FlowConfig,
    pub hmc: NutsConfig,
    /// Posterior draws kept for summaries.
    pub draws: usize,
}

fn gan(steps: usize, lr: f64) -> GanTrainConfig {
    GanTrainConfig {
        steps,
        adam: AdamConfig::with_lr(lr),
        checkpoint_every: (steps / 10).max(1),
        ..GanTrainConfig::default()
    }
}

fn flow(steps: usize, lr: f64) -> FlowConfig {
    let spec = IafSpec::standard(1);
    FlowConfig {
        steps,
        samples_per_step: 16,
        adam: AdamConfig::with_lr(lr),
        blocks: spec.blocks,
        hidden: spec.hidden,
        depth: spec.depth,
        log_scale_clamp: spec.log_scale_clamp,
        checkpoint_every: (steps / 10).max(1),
    }
}

impl ExperimentConfig {
    /// Desk-scale preset, or the full published budgets when `full`.
    pub fn preset(problem: Problem, full: bool) -> Self {
        let data = DataConfig {
            samples: 2000,
            sensors: 30,
            length_scale: 0.2,
            kl_terms: 100,
            darcy_resolution: fpuq_physics::DARCY_DEFAULT_RESOLUTION,
            darcy_forcing: 50.0,
            diffusion: 0.01,
            rate_scale: 0.4,
        };
        let mut c = Self {
            id: problem.as_str().into(),
            problem,
            seed: 0,
            data,
            task: TaskConfig {
                noise_std: 0.1,
                observations: Vec::new(),
                report_points: 201,
            },
            prior: PriorConfig {
                latent_dim: 10,
                hidden: 64,
                depth: 2,
                gan: gan(20_000, 1e-3),
            },
            operator: None,
            flow: flow(5000, 1e-3),
            hmc: NutsConfig::default(),
            draws: 1000,
        };
        match problem {
            Problem::Function1d => {
                c.task.observations = vec![ObservationSpec {
                    field: FieldTag::U,
                    layout: Layout::Intervals {
                        intervals: vec![[-0.8, -0.2], [0.2, 0.8]],
                        count: 64,
                    },
                }];
                if full {
                    c.data.samples = 10_000;
                }
            }
            Problem::Reaction1d => {
                c.data.sensors = 40;
                c.prior.latent_dim = 40;
                c.prior.gan = gan(5000, 1e-3);
                c.task.observations = vec![
                    ObservationSpec {
                        field: FieldTag::F,
                        layout: Layout::Intervals {
                            intervals: vec![[-1.0, 1.0]],
                            count: 10,
                        },
                    },
                    ObservationSpec {
                        field: FieldTag::U,
                        layout: Layout::Points {
                            points: vec![vec![-1.0], vec![1.0]],
                        },
                    },
                ];
                if full {
                    c.data.samples = 10_000;
                }
            }
            Problem::Darcy2d => {
                c.data.samples = 1000;
                c.data.sensors = 20;
                c.data.length_scale = 0.25;
                c.prior.latent_dim = 16;
                c.prior.gan = gan(2000, 1e-3);
                c.flow = flow(3000, 1e-3);
                c.operator = Some(OperatorConfig {
                    width: 64,
                    hidden: 128,
                    depth: 2,
                    train: DeepOnetTrainConfig {
                        adam: AdamConfig::with_lr(1e-3),
                        steps: 5000,
                        ..DeepOnetTrainConfig::default()
                    },
                });
                c.task.observations = vec![
                    ObservationSpec {
                        field: FieldTag::Lambda,
                        layout: Layout::RandomNodes { count: 20 },
                    },
                    ObservationSpec {
                        field: FieldTag::U,
                        layout: Layout::RandomNodes { count: 10 },
                    },
                ];
                if full {
                    c.data.samples = 9900;
                    c.prior.latent_dim = 100;
                    if let Some(op) = c.operator.as_mut() {
                        op.train.steps = 50_000;
                    }
                }
            }
        }
        if full {
            c.prior.gan = gan(500_000, 1e-4);
            c.flow = flow(200_000, 1e-4);
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CliError::Config(m.into()));
        if self.data.samples == 0 {
            return bad("data.samples must be positive");
        }
        if self.data.sensors < 2 {
            return bad("data.sensors must be at least 2");
        }
        if !(self.task.noise_std > 0.0) {
            return bad("task.noise_std must be positive");
        }
        if self.prior.latent_dim == 0 || self.draws == 0 {
            return bad("latent dimension and draw count must be positive");
        }
        if self.task.observations.is_empty() {
            return bad("task needs at least one observed field");
        }
        if self.problem.needs_operator() && self.operator.is_none() {
            return bad("darcy-2d needs an operator section");
        }
        if self.problem == Problem::Darcy2d && self.data.kl_terms > self.data.sensors.pow(2) {
            return bad("more KL terms than grid nodes");
        }
        self.prior.gan.validate()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(CliError::Missing(path.into()));
        }
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let c: Self = serde_json::from_str(&text).map_err(|e| format_err(path, e))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_encode_setups() {
        let f = ExperimentConfig::preset(Problem::Function1d, false);
        assert_eq!((f.data.samples, f.data.sensors, f.prior.latent_dim), (2000, 30, 10));
        assert_eq!(f.prior.gan.steps, 20_000);
        assert_eq!(ExperimentConfig::preset(Problem::Function1d, true).data.samples, 10_000);
        let r = ExperimentConfig::preset(Problem::Reaction1d, true);
        assert_eq!((r.data.samples, r.data.sensors, r.prior.latent_dim), (10_000, 40, 40));
        let d = ExperimentConfig::preset(Problem::Darcy2d, false);
        assert_eq!((d.prior.latent_dim, d.data.kl_terms), (16, 100));
        let d = ExperimentConfig::preset(Problem::Darcy2d, true);
        assert_eq!((d.data.samples, d.prior.latent_dim), (9900, 100));
        assert_eq!((d.prior.gan.steps, d.flow.steps), (500_000, 200_000));
        for p in [Problem::Function1d, Problem::Reaction1d, Problem::Darcy2d] {
            let c = ExperimentConfig::preset(p, false);
            c.validate().unwrap();
            assert_eq!((c.prior.hidden, c.prior.depth), (64, 2));
            assert_eq!(c.hmc, NutsConfig::default());
            assert_eq!(c.draws, 1000);
        }
    }

    #[test]
    fn json_round_trip() {
        for p in [Problem::Function1d, Problem::Reaction1d, Problem::Darcy2d] {
            let c = ExperimentConfig::preset(p, false);
            let back: ExperimentConfig = serde_json::from_str(&c.to_json()).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn invalid_configs() {
        let mut c = ExperimentConfig::preset(Problem::Function1d, false);
        c.task.noise_std = 0.0;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::preset(Problem::Darcy2d, false);
        c.operator = None;
        assert!(c.validate().is_err());
    }
}
