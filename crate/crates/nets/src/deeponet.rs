//! Branch/trunk operator network: `u(λ)(x) = Σ_j b_j(λ) t_j(x)`.

use fpuq_numcore::{adam_step, AdamConfig, AdamState, ParamVector, RngStream, Tape, Var};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{NetError, Result};
use crate::mlp::{Activation, Mlp, MlpSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeepOnet {
    pub branch: Mlp,
    pub trunk: Mlp,
}

impl DeepOnet {
    /// Tanh branch (`sensors → width`) and trunk (`coord_dim → width`) nets.
    pub fn new(
        sensors: usize,
        coord_dim: usize,
        width: usize,
        hidden: usize,
        depth: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let branch = Mlp::new(
            MlpSpec::new(sensors, hidden, depth, width, Activation::Tanh),
            &mut rng.child("branch"),
        )?;
        let trunk = Mlp::new(
            MlpSpec::new(coord_dim, hidden, depth, width, Activation::Tanh),
            &mut rng.child("trunk"),
        )?;
        Self::from_parts(branch, trunk)
    }

    pub fn from_parts(branch: Mlp, trunk: Mlp) -> Result<Self> {
        if branch.spec.output != trunk.spec.output {
            return Err(NetError::Spec(format!(
                "branch width {} != trunk width {}",
                branch.spec.output, trunk.spec.output
            )));
        }
        Ok(Self { branch, trunk })
    }

    pub fn sensors(&self) -> usize {
        self.branch.spec.input
    }

    pub fn coord_dim(&self) -> usize {
        self.trunk.spec.input
    }

    pub fn width(&self) -> usize {
        self.branch.spec.output
    }

    fn check_sensors(&self, m: usize) -> Result<()> {
        if m != self.sensors() {
            return Err(NetError::Width {
                context: "deeponet sensors",
                expected: self.sensors(),
                actual: m,
            });
        }
        Ok(())
    }

    /// Single input function, single query point.
    pub fn forward_point(&self, sensors: &[f64], x: &[f64]) -> Result<f64> {
        self.check_sensors(sensors.len())?;
        let b = self
            .branch
            .forward(&Array2::from_shape_vec((1, sensors.len()), sensors.to_vec()).unwrap())?;
        let t = self
            .trunk
            .forward(&Array2::from_shape_vec((1, x.len()), x.to_vec()).unwrap())?;
        Ok(b.row(0).dot(&t.row(0)))
    }

    /// All pairs: `sensors` is `B × m`, `points` is `Q × D`; result `B × Q`.
    pub fn forward(&self, sensors: &Array2<f64>, points: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_sensors(sensors.ncols())?;
        let b = self.branch.forward(sensors)?;
        let t = self.trunk.forward(points)?;
        Ok(b.dot(&t.t()))
    }

    /// Combined parameter list: branch blocks then trunk blocks.
    pub fn params(&self) -> ParamVector {
        let mut p = ParamVector::new();
        for (n, a) in self.branch.params.blocks() {
            p.push(format!("branch.{n}"), a.clone()).expect("unique");
        }
        for (n, a) in self.trunk.params.blocks() {
            p.push(format!("trunk.{n}"), a.clone()).expect("unique");
        }
        p
    }

    pub fn set_params(&mut self, p: &ParamVector) -> Result<()> {
        let nb = self.branch.params.len();
        let blocks = p.blocks();
        if blocks.len() != nb + self.trunk.params.len() {
            return Err(NetError::Spec("deeponet parameter count mismatch".into()));
        }
        for (dst, (_, src)) in self.branch.params.arrays_mut().zip(&blocks[..nb]) {
            *dst = src.clone();
        }
        for (dst, (_, src)) in self.trunk.params.arrays_mut().zip(&blocks[nb..]) {
            *dst = src.clone();
        }
        Ok(())
    }

    /// Tape version of [`DeepOnet::forward`]. `params` follows
    /// [`DeepOnet::params`] order.
    pub fn forward_tape<'t>(
        &self,
        params: &[Var<'t>],
        sensors: Var<'t>,
        points: &Array2<f64>,
    ) -> Result<Var<'t>> {
        self.check_sensors(sensors.shape().1)?;
        let nb = self.branch.params.len();
        let b = self.branch.forward_tape(&params[..nb], sensors)?;
        let t = self
            .trunk
            .forward_tape(&params[nb..], sensors.tape().constant(points.clone()))?;
        Ok(b.matmul_t(t, false, true))
    }
}

/// Paired operator data on a shared query grid.
#[derive(Clone, Debug)]
pub struct DeepOnetData {
    /// `N × m` input-function values at the sensors.
    pub sensors: Array2<f64>,
    /// `Q × D` query coordinates shared by every sample.
    pub points: Array2<f64>,
    /// `N × Q` output-function values.
    pub targets: Array2<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeepOnetTrainConfig {
    pub adam: AdamConfig,
    pub steps: usize,
    pub batch_size: usize,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for DeepOnetTrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            steps: 20_000,
            batch_size: 64,
            holdout_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeepOnetTrainReport {
    pub loss_history: Vec<f64>,
    pub test_mse: f64,
    pub test_rel_l2: f64,
    pub train_count: usize,
    pub test_count: usize,
}

/// Minimizes the mean squared error between predicted and given outputs
/// with Adam, holding out a fraction of the samples for evaluation.
pub fn deeponet_train(
    mut net: DeepOnet,
    data: &DeepOnetData,
    config: &DeepOnetTrainConfig,
) -> Result<(DeepOnet, DeepOnetTrainReport)> {
    let n = data.sensors.nrows();
    if n == 0 || data.points.nrows() == 0 {
        return Err(NetError::EmptyData);
    }
    net.check_sensors(data.sensors.ncols())?;
    if data.targets.dim() != (n, data.points.nrows()) {
        return Err(NetError::Width {
            context: "deeponet targets",
            expected: data.points.nrows(),
            actual: data.targets.ncols(),
        });
    }
    let rng = RngStream::new(config.seed, "deeponet");
    let mut order: Vec<usize> = (0..n).collect();
    rng.child("split").shuffle(&mut order);
    let n_test = if n > 1 {
        ((n as f64 * config.holdout_fraction).round() as usize).clamp(1, n - 1)
    } else {
        0
    };
    let (test_idx, train_idx) = order.split_at(n_test);
    let train_idx = train_idx.to_vec();
    let test_idx = if test_idx.is_empty() { train_idx.clone() } else { test_idx.to_vec() };

    let mut params = net.params();
    let mut adam = AdamState::new(&params, config.adam);
    let mut batch_rng = rng.child("batches");
    let mut perm = train_idx.clone();
    let mut cursor = perm.len();
    let bs = config.batch_size.clamp(1, train_idx.len());
    let mut history = Vec::with_capacity(config.steps);

    for step in 0..config.steps {
        if cursor + bs > perm.len() {
            batch_rng.shuffle(&mut perm);
            cursor = 0;
        }
        let batch = &perm[cursor..cursor + bs];
        cursor += bs;
        let x = data.sensors.select(ndarray::Axis(0), batch);
        let y = data.targets.select(ndarray::Axis(0), batch);

        let tape = Tape::new();
        let vars = params.vars(&tape);
        let pred = net.forward_tape(&vars, tape.constant(x), &data.points)?;
        let loss = (pred - tape.constant(y)).square().mean();
        let value = loss.item();
        if !value.is_finite() {
            return Err(NetError::NonFinite {
                what: "deeponet loss",
                step,
            });
        }
        history.push(value);
        let grads = tape.grad(loss, &vars);
        let mut g = params.zeros_like();
        for (dst, gv) in g.arrays_mut().zip(&grads) {
            *dst = gv.to_array();
        }
        drop(tape);
        adam_step(&mut params, &g, &mut adam)?;
        net.set_params(&params)?;
    }

    let x = data.sensors.select(ndarray::Axis(0), &test_idx);
    let y = data.targets.select(ndarray::Axis(0), &test_idx);
    let pred = net.forward(&x, &data.points)?;
    let err = &pred - &y;
    let test_mse = err.mapv(|v| v * v).mean().unwrap_or(0.0);
    let denom = y.mapv(|v| v * v).sum();
    let test_rel_l2 = if denom > 0.0 {
        (err.mapv(|v| v * v).sum() / denom).sqrt()
    } else {
        test_mse.sqrt()
    };
    log::info!("deeponet trained: test mse {test_mse:.3e}, rel l2 {test_rel_l2:.3e}");
    Ok((
        net,
        DeepOnetTrainReport {
            loss_history: history,
            test_mse,
            test_rel_l2,
            train_count: train_idx.len(),
            test_count: test_idx.len(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn net(seed: u64) -> DeepOnet {
        DeepOnet::new(5, 1, 4, 16, 2, &mut RngStream::new(seed, "don")).unwrap()
    }

    #[test]
    fn inner_product_of_branch_and_trunk() {
        let mut d = DeepOnet::new(2, 1, 2, 3, 1, &mut RngStream::new(0, "don")).unwrap();
        // Zero hidden weights, output biases give constant branch/trunk outputs.
        for m in [&mut d.branch, &mut d.trunk] {
            for a in m.params.arrays_mut() {
                a.fill(0.0);
            }
        }
        *d.branch.params.get_mut("b1").unwrap() = array![[1.0, 2.0]];
        *d.trunk.params.get_mut("b1").unwrap() = array![[3.0, 4.0]];
        assert_eq!(d.forward_point(&[0.3, 0.1], &[0.5]).unwrap(), 11.0);

        *d.branch.params.get_mut("b1").unwrap() = array![[0.0, 0.0]];
        for x in [-1.0, 0.0, 2.0] {
            assert_eq!(d.forward_point(&[0.3, 0.1], &[x]).unwrap(), 0.0);
        }
    }

    #[test]
    fn matches_manual_branch_trunk_dot() {
        let d = net(3);
        let lam = array![[0.1, -0.2, 0.3, 0.7, -0.5], [1.0, 0.2, 0.0, -0.3, 0.4]];
        let pts = array![[-0.5], [0.25], [0.9]];
        let all = d.forward(&lam, &pts).unwrap();
        for r in 0..2 {
            let b = d.branch.forward(&lam.row(r).insert_axis(ndarray::Axis(0)).to_owned()).unwrap();
            for q in 0..3 {
                let t = d.trunk.forward(&array![[pts[[q, 0]]]]).unwrap();
                let manual: f64 = (0..4).map(|j| b[[0, j]] * t[[0, j]]).sum();
                assert!((all[[r, q]] - manual).abs() < 1e-12);
                let single = d.forward_point(lam.row(r).as_slice().unwrap(), &[pts[[q, 0]]]).unwrap();
                assert!((single - manual).abs() < 1e-12);
            }
        }
        let tape = Tape::new();
        let p = d.params().constants(&tape);
        let t = d.forward_tape(&p, tape.constant(lam.clone()), &pts).unwrap();
        assert!((&*t.value() - &all).mapv(f64::abs).sum() < 1e-12);
    }

    #[test]
    fn output_is_bilinear_in_branch_and_trunk() {
        // Scaling the last branch (or trunk) layer scales the output.
        let mut d = net(4);
        let lam = array![[0.1, -0.2, 0.3, 0.7, -0.5]];
        let pts = array![[0.3]];
        let base = d.forward(&lam, &pts).unwrap()[[0, 0]];
        for name in ["w2", "b2"] {
            d.branch.params.get_mut(name).unwrap().mapv_inplace(|v| 2.5 * v);
        }
        let scaled = d.forward(&lam, &pts).unwrap()[[0, 0]];
        assert!((scaled - 2.5 * base).abs() < 1e-12);
        for name in ["w2", "b2"] {
            d.trunk.params.get_mut(name).unwrap().mapv_inplace(|v| -0.5 * v);
        }
        let both = d.forward(&lam, &pts).unwrap()[[0, 0]];
        assert!((both + 1.25 * base).abs() < 1e-12);
    }

    #[test]
    fn sensor_mismatch_and_empty_data() {
        let d = net(0);
        assert!(d.forward_point(&[0.0; 4], &[0.0]).is_err());
        let data = DeepOnetData {
            sensors: Array2::zeros((0, 5)),
            points: Array2::zeros((3, 1)),
            targets: Array2::zeros((0, 3)),
        };
        assert!(matches!(
            deeponet_train(d, &data, &DeepOnetTrainConfig::default()),
            Err(NetError::EmptyData)
        ));
    }

    #[test]
    fn nan_loss_aborts() {
        let d = net(0);
        let mut targets = Array2::zeros((4, 2));
        targets[[0, 0]] = f64::NAN;
        let data = DeepOnetData {
            sensors: Array2::zeros((4, 5)),
            points: array![[0.0], [1.0]],
            targets,
        };
        let cfg = DeepOnetTrainConfig {
            steps: 10,
            batch_size: 64,
            holdout_fraction: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            deeponet_train(d, &data, &cfg),
            Err(NetError::NonFinite { .. })
        ));
    }

    #[test]
    fn constant_operator_is_learned() {
        let d = net(7);
        let mut rng = RngStream::new(1, "data");
        let sensors = fpuq_numcore::draw_normal(&mut rng, (512, 5));
        let points = Array2::from_shape_fn((8, 1), |(i, _)| -1.0 + 2.0 * i as f64 / 7.0);
        let targets = Array2::from_elem((512, 8), 0.7);
        let data = DeepOnetData {
            sensors,
            points,
            targets,
        };
        let cfg = DeepOnetTrainConfig {
            adam: AdamConfig::with_lr(1e-3),
            steps: 8000,
            batch_size: 64,
            holdout_fraction: 0.25,
            seed: 2,
        };
        let (_, report) = deeponet_train(d, &data, &cfg).unwrap();
        assert!(report.test_mse < 1e-4, "mse {}", report.test_mse);
        let early: f64 = report.loss_history[..100].iter().sum::<f64>() / 100.0;
        let late: f64 = report.loss_history[7900..].iter().sum::<f64>() / 100.0;
        assert!(late < early);
    }
}
