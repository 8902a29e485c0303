use std::fmt;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{PriorError, Result};

/// Physical field carried by a sample or observation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldTag {
    /// Solution.
    U,
    /// Source term.
    F,
    /// Boundary values of the solution.
    B,
    /// Problem parameter (reaction rate, log-conductivity).
    Lambda,
}

impl FieldTag {
    pub const ALL: [FieldTag; 4] = [FieldTag::U, FieldTag::F, FieldTag::B, FieldTag::Lambda];

    pub fn as_str(self) -> &'static str {
        match self {
            FieldTag::U => "u",
            FieldTag::F => "f",
            FieldTag::B => "b",
            FieldTag::Lambda => "lambda",
        }
    }
}

impl fmt::Display for FieldTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FieldTag {
    type Err = PriorError;
    fn from_str(s: &str) -> Result<Self> {
        FieldTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| PriorError::Config(format!("unknown field tag `{s}`")))
    }
}

/// Ordered coordinates on which every function sample is resolved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorGrid {
    points: Array2<f64>,
}

impl SensorGrid {
    /// Validates ordering: strictly increasing in 1-D, a full tensor grid
    /// (x-major) in 2-D.
    pub fn new(points: Array2<f64>) -> Result<Self> {
        let n = points.nrows();
        if n == 0 {
            return Err(PriorError::Grid("empty grid".into()));
        }
        match points.ncols() {
            1 => {
                if !points.column(0).windows(2).into_iter().all(|w| w[0] < w[1]) {
                    return Err(PriorError::Grid("1-D coordinates must be strictly increasing".into()));
                }
            }
            2 => {
                let xs = distinct(points.column(0).to_vec());
                let ys = distinct(points.column(1).to_vec());
                let ok = xs.len() * ys.len() == n
                    && points.rows().into_iter().enumerate().all(|(p, r)| {
                        r[0] == xs[p / ys.len()] && r[1] == ys[p % ys.len()]
                    });
                if !ok {
                    return Err(PriorError::Grid("2-D coordinates must form an x-major tensor grid".into()));
                }
            }
            d => return Err(PriorError::Grid(format!("unsupported dimension {d}"))),
        }
        Ok(Self { points })
    }

    /// `n` equidistant points on `[lo, hi]`.
    pub fn line(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n == 0 || !(lo < hi || n == 1) {
            return Err(PriorError::Grid(format!("bad interval [{lo}, {hi}] with {n} points")));
        }
        let step = if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 };
        Self::new(Array2::from_shape_fn((n, 1), |(i, _)| lo + step * i as f64))
    }

    /// `n × n` grid on the unit square.
    pub fn unit_square(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(PriorError::Grid("unit-square grid needs n ≥ 2".into()));
        }
        let step = 1.0 / (n - 1) as f64;
        Self::new(Array2::from_shape_fn((n * n, 2), |(p, c)| {
            (if c == 0 { p / n } else { p % n }) as f64 * step
        }))
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }
}

fn distinct(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Function samples on a shared grid, one row per sample with the field
/// blocks concatenated in `fields` order.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionDataset {
    pub grid: SensorGrid,
    pub fields: Vec<FieldTag>,
    pub values: Array2<f64>,
}

impl FunctionDataset {
    pub fn new(grid: SensorGrid, fields: Vec<FieldTag>, values: Array2<f64>) -> Result<Self> {
        if fields.is_empty() {
            return Err(PriorError::Grid("dataset needs at least one field".into()));
        }
        if values.ncols() != fields.len() * grid.len() {
            return Err(PriorError::Grid(format!(
                "{} columns for {} fields on {} points",
                values.ncols(),
                fields.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(PriorError::Grid("non-finite sample value".into()));
        }
        Ok(Self { grid, fields, values })
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    /// `N × n` block of one field.
    pub fn field(&self, tag: FieldTag) -> Option<Array2<f64>> {
        let k = self.fields.iter().position(|&t| t == tag)?;
        let n = self.grid.len();
        Some(self.values.slice(ndarray::s![.., k * n..(k + 1) * n]).to_owned())
    }

    pub fn rows(&self, idx: &[usize]) -> Array2<f64> {
        self.values.select(Axis(0), idx)
    }
}
