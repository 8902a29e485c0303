use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{NumError, Result};
use crate::tape::{Tape, Var};

/// Ordered, uniquely named parameter blocks.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    blocks: Vec<(String, Array2<f64>)>,
}

impl ParamVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Array2<f64>) -> Result<()> {
        let name = name.into();
        if self.blocks.iter().any(|(n, _)| *n == name) {
            return Err(NumError::DuplicateBlock(name));
        }
        self.blocks.push((name, value));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.blocks.iter().map(|(_, a)| a.len()).sum()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.blocks.iter().map(|(n, _)| n.as_str())
    }

    pub fn blocks(&self) -> &[(String, Array2<f64>)] {
        &self.blocks
    }

    pub fn arrays(&self) -> impl Iterator<Item = &Array2<f64>> {
        self.blocks.iter().map(|(_, a)| a)
    }

    pub fn arrays_mut(&mut self) -> impl Iterator<Item = &mut Array2<f64>> {
        self.blocks.iter_mut().map(|(_, a)| a)
    }

    pub fn get(&self, name: &str) -> Result<&Array2<f64>> {
        self.blocks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, a)| a)
            .ok_or_else(|| NumError::UnknownBlock(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Array2<f64>> {
        self.blocks
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, a)| a)
            .ok_or_else(|| NumError::UnknownBlock(name.to_string()))
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.blocks.iter().map(|(_, a)| a.dim()).collect()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.numel());
        for (_, a) in &self.blocks {
            out.extend(a.iter().copied());
        }
        out
    }

    /// Rebuilds a vector with this vector's layout from flat values.
    pub fn unflatten(&self, flat: &[f64]) -> Result<ParamVector> {
        if flat.len() != self.numel() {
            return Err(NumError::Shape {
                context: "unflatten",
                expected: vec![self.numel()],
                actual: vec![flat.len()],
            });
        }
        let mut offset = 0;
        let blocks = self
            .blocks
            .iter()
            .map(|(n, a)| {
                let len = a.len();
                let arr = Array2::from_shape_vec(a.dim(), flat[offset..offset + len].to_vec())
                    .expect("block length checked");
                offset += len;
                (n.clone(), arr)
            })
            .collect();
        Ok(ParamVector { blocks })
    }

    pub fn zeros_like(&self) -> ParamVector {
        ParamVector {
            blocks: self
                .blocks
                .iter()
                .map(|(n, a)| (n.clone(), Array2::zeros(a.dim())))
                .collect(),
        }
    }

    pub fn same_layout(&self, other: &ParamVector) -> bool {
        self.blocks.len() == other.blocks.len()
            && self
                .blocks
                .iter()
                .zip(&other.blocks)
                .all(|((n1, a1), (n2, a2))| n1 == n2 && a1.dim() == a2.dim())
    }

    /// Records every block as a differentiable leaf.
    pub fn vars<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.blocks.iter().map(|(_, a)| tape.var(a.clone())).collect()
    }

    /// Records every block as a constant leaf.
    pub fn constants<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.blocks
            .iter()
            .map(|(_, a)| tape.constant(a.clone()))
            .collect()
    }

    /// Name of the first block containing a non-finite entry.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.blocks
            .iter()
            .find(|(_, a)| a.iter().any(|v| !v.is_finite()))
            .map(|(n, _)| n.as_str())
    }

    pub(crate) fn from_blocks(blocks: Vec<(String, Array2<f64>)>) -> ParamVector {
        ParamVector { blocks }
    }
}

/// Value and exact reverse-mode gradient of a scalar function of `params`.
///
/// `f` receives one leaf per block, in block order, and must return a
/// `1 × 1` node.
pub fn grad_params<F>(params: &ParamVector, f: F) -> Result<(f64, ParamVector)>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let vars = params.vars(&tape);
    let out = f(&tape, &vars);
    let value = out.item();
    if !value.is_finite() {
        return Err(NumError::NonFinite {
            block: "<output>".into(),
        });
    }
    let grads = tape.grad(out, &vars);
    let blocks: Vec<_> = params
        .blocks
        .iter()
        .zip(grads)
        .map(|((n, _), g)| (n.clone(), g.to_array()))
        .collect();
    let gv = ParamVector::from_blocks(blocks);
    if let Some(name) = gv.first_non_finite() {
        return Err(NumError::NonFinite {
            block: name.to_string(),
        });
    }
    Ok((value, gv))
}
