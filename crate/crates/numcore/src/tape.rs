//! Matrix-valued reverse-mode automatic differentiation.
//!
//! Every value on a [`Tape`] is an `Array2<f64>`. Operations are evaluated
//! eagerly and recorded; [`Tape::grad`] walks the record backwards and
//! expresses each vector-Jacobian product with the same recorded operations,
//! so the returned gradients are ordinary [`Var`]s that can be differentiated
//! again.
//!
//! ```
//! use fpuq_numcore::Tape;
//! use ndarray::array;
//!
//! let tape = Tape::new();
//! let x = tape.var(array![[1.0, 2.0]]);
//! let y = (x * x).sum();
//! let g = tape.grad(y, &[x]);
//! assert_eq!(*g[0].value(), array![[2.0, 4.0]]);
//! ```

use std::cell::{Ref, RefCell};
use std::ops::{Add, Mul, Neg, Sub};
use std::rc::Rc;

use ndarray::{concatenate, s, Array2, Axis};

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    AddScalar(usize),
    MatMul { a: usize, b: usize, ta: bool, tb: bool },
    AddRow(usize, usize),
    BroadcastRows(usize),
    SumRows(usize),
    BroadcastCols(usize),
    SumCols(usize),
    Sum(usize),
    BroadcastScalar(usize),
    Tanh(usize),
    LeakyRelu(usize, f64),
    Exp(usize),
    Log(usize),
    Sqrt(usize),
    Recip(usize),
    Clamp(usize, f64, f64),
    ConcatCols(Vec<usize>),
    SliceCols(usize, usize),
    PadCols(usize, usize),
    GatherRows(usize, Rc<[usize]>),
    ScatterRows(usize, Rc<[usize]>),
    Reshape(usize),
}

impl Op {
    fn parents(&self) -> Vec<usize> {
        use Op::*;
        match self {
            Leaf => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | AddRow(a, b) => vec![*a, *b],
            MatMul { a, b, .. } => vec![*a, *b],
            Neg(a)
            | Scale(a, _)
            | AddScalar(a)
            | BroadcastRows(a)
            | SumRows(a)
            | BroadcastCols(a)
            | SumCols(a)
            | Sum(a)
            | BroadcastScalar(a)
            | Tanh(a)
            | LeakyRelu(a, _)
            | Exp(a)
            | Log(a)
            | Sqrt(a)
            | Recip(a)
            | Clamp(a, _, _)
            | SliceCols(a, _)
            | PadCols(a, _)
            | GatherRows(a, _)
            | ScatterRows(a, _)
            | Reshape(a) => vec![*a],
            ConcatCols(v) => v.clone(),
        }
    }
}

struct Node {
    value: Array2<f64>,
    op: Op,
    needs_grad: bool,
}

/// Operation record. Single-threaded; build one per loss evaluation.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("idx", &self.idx)
            .field("shape", &self.shape())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Differentiable leaf.
    pub fn var(&self, value: Array2<f64>) -> Var<'_> {
        self.push_raw(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&self, value: Array2<f64>) -> Var<'_> {
        self.push_raw(value, Op::Leaf, false)
    }

    pub fn scalar_constant(&self, value: f64) -> Var<'_> {
        self.constant(Array2::from_elem((1, 1), value))
    }

    fn push_raw(&self, value: Array2<f64>, op: Op, needs_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var {
            tape: self,
            idx: nodes.len() - 1,
        }
    }

    fn push(&self, value: Array2<f64>, op: Op) -> Var<'_> {
        let needs_grad = {
            let nodes = self.nodes.borrow();
            op.parents().iter().any(|&p| nodes[p].needs_grad)
        };
        self.push_raw(value, op, needs_grad)
    }

    fn get(&self, idx: usize) -> Var<'_> {
        Var { tape: self, idx }
    }

    /// Gradients of `sum(output)` with respect to each of `wrt`.
    ///
    /// The result is recorded on this tape, so it can be fed back into
    /// further computation and differentiated again. Entries of `wrt` that do
    /// not influence `output` get a zero constant of matching shape.
    pub fn grad<'t>(&'t self, output: Var<'t>, wrt: &[Var<'t>]) -> Vec<Var<'t>> {
        let out = output.idx;
        let n = out + 1;
        // Nodes on some path from a `wrt` leaf to `output`.
        let mut relevant = vec![false; n];
        {
            let nodes = self.nodes.borrow();
            for w in wrt {
                if w.idx < n {
                    relevant[w.idx] = true;
                }
            }
            for i in 0..n {
                if !relevant[i] && nodes[i].op.parents().iter().any(|&p| relevant[p]) {
                    relevant[i] = true;
                }
            }
        }
        let mut adj: Vec<Option<Var<'t>>> = vec![None; n];
        if relevant[out] {
            let shape = output.shape();
            adj[out] = Some(self.constant(Array2::ones(shape)));
        }
        for i in (0..n).rev() {
            let g = match adj[i] {
                Some(g) if relevant[i] => g,
                _ => continue,
            };
            let (op, needs_grad) = {
                let nodes = self.nodes.borrow();
                (nodes[i].op.clone(), nodes[i].needs_grad)
            };
            if !needs_grad {
                continue;
            }
            for (p, contrib) in self.vjp(i, &op, g, &relevant) {
                adj[p] = Some(match adj[p] {
                    None => contrib,
                    Some(prev) => prev + contrib,
                });
            }
        }
        wrt.iter()
            .map(|w| match adj.get(w.idx).copied().flatten() {
                Some(g) => g,
                None => self.constant(Array2::zeros(w.shape())),
            })
            .collect()
    }

    /// Vector-Jacobian products for node `i` with upstream gradient `g`.
    fn vjp<'t>(
        &'t self,
        i: usize,
        op: &Op,
        g: Var<'t>,
        relevant: &[bool],
    ) -> Vec<(usize, Var<'t>)> {
        let want = |p: usize| relevant[p];
        let mut out = Vec::with_capacity(2);
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if want(*a) {
                    out.push((*a, g));
                }
                if want(*b) {
                    out.push((*b, g));
                }
            }
            Op::Sub(a, b) => {
                if want(*a) {
                    out.push((*a, g));
                }
                if want(*b) {
                    out.push((*b, -g));
                }
            }
            Op::Mul(a, b) => {
                if want(*a) {
                    out.push((*a, g * self.get(*b)));
                }
                if want(*b) {
                    out.push((*b, g * self.get(*a)));
                }
            }
            Op::Neg(a) => out.push((*a, -g)),
            Op::Scale(a, c) => out.push((*a, g.scale(*c))),
            Op::AddScalar(a) => out.push((*a, g)),
            Op::MatMul { a, b, ta, tb } => {
                let (va, vb) = (self.get(*a), self.get(*b));
                if want(*a) {
                    let ga = if *ta {
                        vb.matmul_t(g, *tb, true)
                    } else {
                        g.matmul_t(vb, false, !*tb)
                    };
                    out.push((*a, ga));
                }
                if want(*b) {
                    let gb = if *tb {
                        g.matmul_t(va, true, *ta)
                    } else {
                        va.matmul_t(g, !*ta, false)
                    };
                    out.push((*b, gb));
                }
            }
            Op::AddRow(a, row) => {
                if want(*a) {
                    out.push((*a, g));
                }
                if want(*row) {
                    out.push((*row, g.sum_rows()));
                }
            }
            Op::BroadcastRows(a) => out.push((*a, g.sum_rows())),
            Op::SumRows(a) => {
                let n = self.get(*a).shape().0;
                out.push((*a, g.broadcast_rows(n)));
            }
            Op::BroadcastCols(a) => out.push((*a, g.sum_cols())),
            Op::SumCols(a) => {
                let m = self.get(*a).shape().1;
                out.push((*a, g.broadcast_cols(m)));
            }
            Op::Sum(a) => {
                let shape = self.get(*a).shape();
                out.push((*a, g.broadcast_scalar(shape)));
            }
            Op::BroadcastScalar(a) => out.push((*a, g.sum())),
            Op::Tanh(a) => {
                let y = self.get(i);
                let dy = (y * y).scale(-1.0).add_scalar(1.0);
                out.push((*a, g * dy));
            }
            Op::LeakyRelu(a, slope) => {
                let mask = self
                    .get(*a)
                    .value()
                    .mapv(|v| if v > 0.0 { 1.0 } else { *slope });
                out.push((*a, g * self.constant(mask)));
            }
            Op::Exp(a) => out.push((*a, g * self.get(i))),
            Op::Log(a) => out.push((*a, g * self.get(*a).recip())),
            Op::Sqrt(a) => {
                // Subgradient 0 at the origin keeps norms of vanishing
                // gradients differentiable.
                let y = self.get(i);
                let mask = y.value().mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                let shifted = y + self.constant(mask.mapv(|m| 1.0 - m));
                let half_inv = shifted.recip().scale(0.5) * self.constant(mask);
                out.push((*a, g * half_inv));
            }
            Op::Recip(a) => {
                let y = self.get(i);
                out.push((*a, -(g * y * y)));
            }
            Op::Clamp(a, lo, hi) => {
                let mask = self
                    .get(*a)
                    .value()
                    .mapv(|v| if v >= *lo && v <= *hi { 1.0 } else { 0.0 });
                out.push((*a, g * self.constant(mask)));
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for &p in parts {
                    let w = self.get(p).shape().1;
                    if want(p) {
                        out.push((p, g.slice_cols(start, start + w)));
                    }
                    start += w;
                }
            }
            Op::SliceCols(a, start) => {
                let total = self.get(*a).shape().1;
                out.push((*a, g.pad_cols(*start, total)));
            }
            Op::PadCols(a, start) => {
                let w = self.get(*a).shape().1;
                out.push((*a, g.slice_cols(*start, start + w)));
            }
            Op::GatherRows(a, idx) => {
                let n = self.get(*a).shape().0;
                out.push((*a, g.scatter_rows(idx.clone(), n)));
            }
            Op::ScatterRows(a, idx) => out.push((*a, g.gather_rows_rc(idx.clone()))),
            Op::Reshape(a) => {
                let shape = self.get(*a).shape();
                out.push((*a, g.reshape(shape)));
            }
        }
        out
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    /// Borrow of the underlying value. Release it before recording new
    /// operations on the same tape.
    pub fn value(&self) -> Ref<'t, Array2<f64>> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.idx].value)
    }

    pub fn to_array(&self) -> Array2<f64> {
        self.value().clone()
    }

    /// Value of a `1 × 1` node.
    pub fn item(&self) -> f64 {
        let v = self.value();
        debug_assert_eq!(v.len(), 1, "item() on non-scalar node");
        v[[0, 0]]
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value().dim()
    }

    pub fn needs_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.idx].needs_grad
    }

    fn unary(self, f: impl FnOnce(&Array2<f64>) -> Array2<f64>, op: Op) -> Var<'t> {
        let v = f(&self.value());
        self.tape.push(v, op)
    }

    /// `op(self) · op(other)` with optional transposes.
    pub fn matmul_t(self, other: Var<'t>, ta: bool, tb: bool) -> Var<'t> {
        let v = {
            let a = self.value();
            let b = other.value();
            let av = if ta { a.t() } else { a.view() };
            let bv = if tb { b.t() } else { b.view() };
            assert_eq!(
                av.ncols(),
                bv.nrows(),
                "matmul inner dimension mismatch: {:?} x {:?}",
                av.dim(),
                bv.dim()
            );
            av.dot(&bv)
        };
        self.tape.push(
            v,
            Op::MatMul {
                a: self.idx,
                b: other.idx,
                ta,
                tb,
            },
        )
    }

    pub fn matmul(self, other: Var<'t>) -> Var<'t> {
        self.matmul_t(other, false, false)
    }

    /// Adds a `1 × m` row to every row of an `n × m` matrix.
    pub fn add_row(self, row: Var<'t>) -> Var<'t> {
        let v = {
            let a = self.value();
            let r = row.value();
            assert_eq!(r.nrows(), 1, "add_row expects a 1 x m row");
            assert_eq!(a.ncols(), r.ncols(), "add_row width mismatch");
            &*a + &r.row(0)
        };
        self.tape.push(v, Op::AddRow(self.idx, row.idx))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.unary(|a| a * c, Op::Scale(self.idx, c))
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        self.unary(|a| a + c, Op::AddScalar(self.idx))
    }

    /// `1 × m` → `n × m`.
    pub fn broadcast_rows(self, n: usize) -> Var<'t> {
        self.unary(
            |a| {
                assert_eq!(a.nrows(), 1);
                a.broadcast((n, a.ncols())).unwrap().to_owned()
            },
            Op::BroadcastRows(self.idx),
        )
    }

    /// Column sums as a `1 × m` row.
    pub fn sum_rows(self) -> Var<'t> {
        self.unary(|a| a.sum_axis(Axis(0)).insert_axis(Axis(0)), Op::SumRows(self.idx))
    }

    /// `n × 1` → `n × m`.
    pub fn broadcast_cols(self, m: usize) -> Var<'t> {
        self.unary(
            |a| {
                assert_eq!(a.ncols(), 1);
                a.broadcast((a.nrows(), m)).unwrap().to_owned()
            },
            Op::BroadcastCols(self.idx),
        )
    }

    /// Row sums as an `n × 1` column.
    pub fn sum_cols(self) -> Var<'t> {
        self.unary(|a| a.sum_axis(Axis(1)).insert_axis(Axis(1)), Op::SumCols(self.idx))
    }

    pub fn sum(self) -> Var<'t> {
        self.unary(|a| Array2::from_elem((1, 1), a.sum()), Op::Sum(self.idx))
    }

    pub fn mean(self) -> Var<'t> {
        let n = self.value().len() as f64;
        self.sum().scale(1.0 / n)
    }

    pub fn broadcast_scalar(self, shape: (usize, usize)) -> Var<'t> {
        self.unary(
            |a| Array2::from_elem(shape, a[[0, 0]]),
            Op::BroadcastScalar(self.idx),
        )
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary(|a| a.mapv(crate::special::tanh), Op::Tanh(self.idx))
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'t> {
        self.unary(
            |a| a.mapv(|v| if v > 0.0 { v } else { slope * v }),
            Op::LeakyRelu(self.idx, slope),
        )
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(|a| a.mapv(f64::exp), Op::Exp(self.idx))
    }

    pub fn log(self) -> Var<'t> {
        self.unary(|a| a.mapv(f64::ln), Op::Log(self.idx))
    }

    pub fn sqrt(self) -> Var<'t> {
        self.unary(|a| a.mapv(f64::sqrt), Op::Sqrt(self.idx))
    }

    pub fn recip(self) -> Var<'t> {
        self.unary(|a| a.mapv(f64::recip), Op::Recip(self.idx))
    }

    pub fn square(self) -> Var<'t> {
        self * self
    }

    pub fn clamp(self, lo: f64, hi: f64) -> Var<'t> {
        self.unary(|a| a.mapv(|v| v.clamp(lo, hi)), Op::Clamp(self.idx, lo, hi))
    }

    pub fn concat_cols(parts: &[Var<'t>]) -> Var<'t> {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let tape = parts[0].tape;
        let v = {
            let vals: Vec<_> = parts.iter().map(|p| p.value()).collect();
            let views: Vec<_> = vals.iter().map(|v| v.view()).collect();
            concatenate(Axis(1), &views).expect("concat_cols row mismatch")
        };
        tape.push(v, Op::ConcatCols(parts.iter().map(|p| p.idx).collect()))
    }

    /// Columns `start..end`.
    pub fn slice_cols(self, start: usize, end: usize) -> Var<'t> {
        self.unary(
            |a| a.slice(s![.., start..end]).to_owned(),
            Op::SliceCols(self.idx, start),
        )
    }

    /// Embeds the columns at offset `start` inside a zero matrix of width `total`.
    pub fn pad_cols(self, start: usize, total: usize) -> Var<'t> {
        self.unary(
            |a| {
                let mut z = Array2::zeros((a.nrows(), total));
                z.slice_mut(s![.., start..start + a.ncols()]).assign(a);
                z
            },
            Op::PadCols(self.idx, start),
        )
    }

    /// Row `k` of the result is row `idx[k]` of `self`.
    pub fn gather_rows(self, idx: &[usize]) -> Var<'t> {
        self.gather_rows_rc(Rc::from(idx))
    }

    fn gather_rows_rc(self, idx: Rc<[usize]>) -> Var<'t> {
        let v = {
            let a = self.value();
            let mut out = Array2::zeros((idx.len(), a.ncols()));
            for (k, &r) in idx.iter().enumerate() {
                out.row_mut(k).assign(&a.row(r));
            }
            out
        };
        self.tape.push(v, Op::GatherRows(self.idx, idx))
    }

    /// Adjoint of [`Var::gather_rows`]: row `k` is added into row `idx[k]`
    /// of an `n`-row zero matrix.
    pub fn scatter_rows(self, idx: Rc<[usize]>, n: usize) -> Var<'t> {
        let v = {
            let a = self.value();
            let mut out = Array2::zeros((n, a.ncols()));
            for (k, &r) in idx.iter().enumerate() {
                let mut row = out.row_mut(r);
                row += &a.row(k);
            }
            out
        };
        self.tape.push(v, Op::ScatterRows(self.idx, idx))
    }

    /// Row-major reshape.
    pub fn reshape(self, shape: (usize, usize)) -> Var<'t> {
        self.unary(
            |a| {
                let flat: Vec<f64> = a.iter().copied().collect();
                Array2::from_shape_vec(shape, flat).expect("reshape size mismatch")
            },
            Op::Reshape(self.idx),
        )
    }
}

macro_rules! binary_elementwise {
    ($trait:ident, $method:ident, $variant:ident, $sym:tt) => {
        impl<'t> $trait for Var<'t> {
            type Output = Var<'t>;
            fn $method(self, rhs: Var<'t>) -> Var<'t> {
                let v = {
                    let a = self.value();
                    let b = rhs.value();
                    assert_eq!(
                        a.dim(),
                        b.dim(),
                        concat!("shape mismatch in ", stringify!($method))
                    );
                    &*a $sym &*b
                };
                self.tape.push(v, Op::$variant(self.idx, rhs.idx))
            }
        }
    };
}

binary_elementwise!(Add, add, Add, +);
binary_elementwise!(Sub, sub, Sub, -);
binary_elementwise!(Mul, mul, Mul, *);

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(|a| -a, Op::Neg(self.idx))
    }
}
