use fpuq_numcore::{ParamVector, RngStream, Scalar, Var};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{NetError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    LeakyRelu { slope: f64 },
}

impl Activation {
    pub fn leaky_relu() -> Self {
        Activation::LeakyRelu { slope: 0.2 }
    }

    fn apply<'t>(&self, z: Var<'t>) -> Var<'t> {
        match *self {
            Activation::Tanh => z.tanh(),
            Activation::LeakyRelu { slope } => z.leaky_relu(slope),
        }
    }

    fn apply_scalar<S: Scalar>(&self, z: S) -> S {
        match *self {
            Activation::Tanh => z.tanh(),
            Activation::LeakyRelu { slope } => z.leaky_relu(slope),
        }
    }
}

/// Fully connected layout: `depth` hidden layers of equal `hidden` width,
/// linear output layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input: usize,
    pub hidden: usize,
    pub depth: usize,
    pub output: usize,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(input: usize, hidden: usize, depth: usize, output: usize, activation: Activation) -> Self {
        Self {
            input,
            hidden,
            depth,
            output,
            activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.output == 0 || self.hidden == 0 || self.depth == 0 {
            return Err(NetError::Spec(format!("all MLP widths must be positive: {self:?}")));
        }
        if let Activation::LeakyRelu { slope } = self.activation {
            if !slope.is_finite() || !(0.0..1.0).contains(&slope) {
                return Err(NetError::Spec(format!("leaky relu slope {slope} outside [0, 1)")));
            }
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of each affine layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![(self.input, self.hidden)];
        dims.extend(std::iter::repeat((self.hidden, self.hidden)).take(self.depth - 1));
        dims.push((self.hidden, self.output));
        dims
    }

    pub fn num_layers(&self) -> usize {
        self.depth + 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub params: ParamVector,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new(spec: MlpSpec, rng: &mut RngStream) -> Result<Self> {
        spec.validate()?;
        let mut params = ParamVector::new();
        for (k, (fan_in, fan_out)) in spec.layer_dims().into_iter().enumerate() {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.uniform(-limit, limit));
            params.push(format!("w{k}"), w)?;
            params.push(format!("b{k}"), Array2::zeros((1, fan_out)))?;
        }
        Ok(Self { spec, params })
    }

    pub fn from_params(spec: MlpSpec, params: ParamVector) -> Result<Self> {
        spec.validate()?;
        let expected: Vec<(usize, usize)> = spec
            .layer_dims()
            .into_iter()
            .flat_map(|(i, o)| [(i, o), (1, o)])
            .collect();
        if params.shapes() != expected {
            return Err(NetError::Spec(format!(
                "parameter shapes {:?} do not match spec {:?}",
                params.shapes(),
                expected
            )));
        }
        Ok(Self { spec, params })
    }

    fn check_width(&self, width: usize) -> Result<()> {
        if width != self.spec.input {
            return Err(NetError::Width {
                context: "mlp input",
                expected: self.spec.input,
                actual: width,
            });
        }
        Ok(())
    }

    /// Row-wise forward pass on plain arrays.
    pub fn forward(&self, input: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_width(input.ncols())?;
        let blocks = self.params.blocks();
        let last = self.spec.num_layers() - 1;
        let mut h = input.clone();
        for k in 0..=last {
            let w = &blocks[2 * k].1;
            let b = &blocks[2 * k + 1].1;
            let mut z = h.dot(w) + &b.row(0);
            if k < last {
                z.mapv_inplace(|v| self.spec.activation.apply_scalar(v));
            }
            h = z;
        }
        Ok(h)
    }

    /// Forward pass recorded on a tape; `params` are leaves in block order
    /// (from [`ParamVector::vars`] or [`ParamVector::constants`]).
    pub fn forward_tape<'t>(&self, params: &[Var<'t>], input: Var<'t>) -> Result<Var<'t>> {
        self.check_width(input.shape().1)?;
        Ok(Self::forward_with(&self.spec, params, input))
    }

    pub(crate) fn forward_with<'t>(spec: &MlpSpec, params: &[Var<'t>], input: Var<'t>) -> Var<'t> {
        let last = spec.num_layers() - 1;
        let mut h = input;
        for k in 0..=last {
            let z = h.matmul(params[2 * k]).add_row(params[2 * k + 1]);
            h = if k < last { spec.activation.apply(z) } else { z };
        }
        h
    }

    /// Propagates a value together with its first and second directional
    /// derivatives (a second-order Taylor jet) through the network.
    ///
    /// `d1`/`d2` are the derivatives of `input` along the chosen input
    /// direction. All three outputs are differentiable tape nodes.
    pub fn forward_jet<'t>(
        &self,
        params: &[Var<'t>],
        input: Var<'t>,
        d1: Var<'t>,
        d2: Var<'t>,
    ) -> Result<(Var<'t>, Var<'t>, Var<'t>)> {
        self.check_width(input.shape().1)?;
        let spec = &self.spec;
        let last = spec.num_layers() - 1;
        let (mut h, mut h1, mut h2) = (input, d1, d2);
        for k in 0..=last {
            let w = params[2 * k];
            let z = h.matmul(w).add_row(params[2 * k + 1]);
            let z1 = h1.matmul(w);
            let z2 = h2.matmul(w);
            if k == last {
                return Ok((z, z1, z2));
            }
            match spec.activation {
                Activation::Tanh => {
                    let a = z.tanh();
                    let da = (a * a).scale(-1.0).add_scalar(1.0);
                    // tanh'' = -2 tanh (1 - tanh^2)
                    let dda = (a * da).scale(-2.0);
                    h1 = da * z1;
                    h2 = da * z2 + dda * z1 * z1;
                    h = a;
                }
                Activation::LeakyRelu { slope } => {
                    let mask = z.value().mapv(|v| if v > 0.0 { 1.0 } else { slope });
                    let mask = input.tape().constant(mask);
                    h = z.leaky_relu(slope);
                    h1 = mask * z1;
                    h2 = mask * z2;
                }
            }
        }
        unreachable!("loop returns at the output layer")
    }

    /// Evaluates a single input point with any [`Scalar`] type, e.g. dual
    /// numbers for exact input derivatives.
    pub fn eval_point<S: Scalar>(&self, input: &[S]) -> Result<Vec<S>> {
        self.check_width(input.len())?;
        let blocks = self.params.blocks();
        let last = self.spec.num_layers() - 1;
        let mut h: Vec<S> = input.to_vec();
        for k in 0..=last {
            let w = &blocks[2 * k].1;
            let b = &blocks[2 * k + 1].1;
            let mut z: Vec<S> = (0..w.ncols()).map(|j| S::from_f64(b[[0, j]])).collect();
            for (i, hi) in h.iter().enumerate() {
                for (j, zj) in z.iter_mut().enumerate() {
                    *zj = *zj + *hi * S::from_f64(w[[i, j]]);
                }
            }
            if k < last {
                for zj in z.iter_mut() {
                    *zj = self.spec.activation.apply_scalar(*zj);
                }
            }
            h = z;
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fpuq_numcore::Tape;
    use fpuq_numcore::{grad_params, input_derivative, Dual2};
    use ndarray::array;

    fn random_mlp(spec: MlpSpec, seed: u64) -> Mlp {
        Mlp::new(spec, &mut RngStream::new(seed, "mlp-test")).unwrap()
    }

    #[test]
    fn zero_weights_output_bias() {
        let spec = MlpSpec::new(3, 4, 2, 2, Activation::Tanh);
        let mut m = random_mlp(spec, 0);
        for (name, a) in m.params.blocks().to_vec() {
            let v = if name == "b2" { array![[0.5, -1.5]] } else { Array2::zeros(a.dim()) };
            *m.params.get_mut(&name).unwrap() = v;
        }
        let out = m.forward(&array![[1.0, 2.0, 3.0], [-4.0, 0.0, 9.0]]).unwrap();
        assert_eq!(out, array![[0.5, -1.5], [0.5, -1.5]]);
    }

    #[test]
    fn identity_linear_layer() {
        // Identity weights through a ReLU act linearly on positive inputs.
        let spec = MlpSpec::new(2, 2, 1, 2, Activation::LeakyRelu { slope: 0.0 });
        let mut m = random_mlp(spec, 0);
        *m.params.get_mut("w0").unwrap() = Array2::eye(2);
        *m.params.get_mut("w1").unwrap() = Array2::eye(2);
        let v = array![[0.25, 3.0]];
        assert_eq!(m.forward(&v).unwrap(), v);
    }

    #[test]
    fn matches_hand_written_matrix_arithmetic() {
        let spec = MlpSpec::new(3, 5, 2, 2, Activation::Tanh);
        let m = random_mlp(spec, 42);
        let x = array![[0.1, -0.4, 0.9], [1.2, 0.3, -0.7]];
        let p = &m.params;
        let (w0, b0) = (p.get("w0").unwrap(), p.get("b0").unwrap());
        let (w1, b1) = (p.get("w1").unwrap(), p.get("b1").unwrap());
        let (w2, b2) = (p.get("w2").unwrap(), p.get("b2").unwrap());
        for r in 0..2 {
            let mut h0 = [0.0; 5];
            for j in 0..5 {
                let mut s = b0[[0, j]];
                for i in 0..3 {
                    s += x[[r, i]] * w0[[i, j]];
                }
                h0[j] = s.tanh();
            }
            let mut h1 = [0.0; 5];
            for j in 0..5 {
                let mut s = b1[[0, j]];
                for i in 0..5 {
                    s += h0[i] * w1[[i, j]];
                }
                h1[j] = s.tanh();
            }
            let out = m.forward(&x).unwrap();
            for j in 0..2 {
                let mut s = b2[[0, j]];
                for i in 0..5 {
                    s += h1[i] * w2[[i, j]];
                }
                assert!((out[[r, j]] - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn width_mismatch_errors() {
        let m = random_mlp(MlpSpec::new(3, 4, 1, 1, Activation::Tanh), 0);
        assert!(matches!(
            m.forward(&Array2::zeros((1, 2))),
            Err(NetError::Width { expected: 3, actual: 2, .. })
        ));
        assert!(m.eval_point(&[0.0f64; 4]).is_err());
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        for act in [Activation::Tanh, Activation::leaky_relu()] {
            let m = random_mlp(MlpSpec::new(3, 8, 2, 2, act), 9);
            let x = array![[0.3, -0.2, 0.5], [0.9, 0.1, -0.6], [-0.4, 0.7, 0.2]];
            let loss = |p: &ParamVector| {
                let mm = Mlp::from_params(m.spec, p.clone()).unwrap();
                mm.forward(&x).unwrap().mapv(|v| v * v).sum()
            };
            let (_, g) = grad_params(&m.params, |t, v| {
                Mlp::forward_with(&m.spec, v, t.constant(x.clone())).square().sum()
            })
            .unwrap();
            let flat = m.params.flatten();
            let gflat = g.flatten();
            let h = 1e-5;
            for i in 0..flat.len() {
                let mut fp = flat.clone();
                let mut fm = flat.clone();
                fp[i] += h;
                fm[i] -= h;
                let fd = (loss(&m.params.unflatten(&fp).unwrap())
                    - loss(&m.params.unflatten(&fm).unwrap()))
                    / (2.0 * h);
                let rel = (fd - gflat[i]).abs() / fd.abs().max(1e-3);
                assert!(rel < 1e-5, "{act:?} param {i}: fd {fd} vs {}", gflat[i]);
            }
        }
    }

    #[test]
    fn jet_matches_dual_numbers() {
        let m = random_mlp(MlpSpec::new(3, 16, 2, 1, Activation::Tanh), 5);
        let pts = array![[0.2, 0.5, -0.3], [-0.7, 0.1, 0.8]];
        let tape = Tape::new();
        let params = m.params.constants(&tape);
        let dir = array![[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
        let (y, y1, y2) = m
            .forward_jet(
                &params,
                tape.constant(pts.clone()),
                tape.constant(dir),
                tape.constant(Array2::zeros((2, 3))),
            )
            .unwrap();
        for r in 0..2 {
            let f = |x: Dual2| {
                let inp = [x, Dual2::from_f64(pts[[r, 1]]), Dual2::from_f64(pts[[r, 2]])];
                m.eval_point(&inp).unwrap()[0]
            };
            let d1 = input_derivative(f, pts[[r, 0]], 1).unwrap();
            let d2 = input_derivative(f, pts[[r, 0]], 2).unwrap();
            assert!((y.value()[[r, 0]] - m.forward(&pts).unwrap()[[r, 0]]).abs() < 1e-14);
            assert!((y1.value()[[r, 0]] - d1).abs() < 1e-13);
            assert!((y2.value()[[r, 0]] - d2).abs() < 1e-13);
        }
    }

    #[test]
    fn second_input_derivative_matches_central_differences() {
        let m = random_mlp(MlpSpec::new(1, 32, 2, 1, Activation::Tanh), 77);
        let f64_eval = |x: f64| m.eval_point(&[x]).unwrap()[0];
        let h = 1e-3;
        for &x in &[-0.8, -0.1, 0.4, 0.95] {
            let d2 = input_derivative(|t: Dual2| m.eval_point(&[t]).unwrap()[0], x, 2).unwrap();
            let fd = (f64_eval(x + h) - 2.0 * f64_eval(x) + f64_eval(x - h)) / (h * h);
            assert!((d2 - fd).abs() / d2.abs().max(1e-2) < 1e-4, "x={x}: {d2} vs {fd}");
        }
    }
}
