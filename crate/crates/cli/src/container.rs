//! Bulk array file: one JSON header line, then the samples as row-major
//! little-endian `f64`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use fpuq_priors::{FieldTag, FunctionDataset, SensorGrid};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{format_err, io_err, CliError, Result};

pub const CONTAINER_FORMAT: &str = "fpuq-dataset";
pub const CONTAINER_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContainerHeader {
    pub format: String,
    pub version: u32,
    /// Field blocks of each row, in order. Empty for latent draws.
    pub fields: Vec<FieldTag>,
    pub grid: Option<SensorGrid>,
    pub samples: usize,
    /// Values per sample.
    pub width: usize,
    pub dtype: String,
    pub seed: u64,
    /// Random stream the samples were drawn from.
    pub stream: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetContainer {
    pub header: ContainerHeader,
    pub values: Array2<f64>,
}

impl DatasetContainer {
    pub fn from_dataset(data: &FunctionDataset, seed: u64, stream: &str) -> Self {
        Self::build(data.fields.clone(), Some(data.grid.clone()), data.values.clone(), seed, stream)
    }

    /// Rows without a grid, e.g. latent posterior draws.
    pub fn from_rows(values: Array2<f64>, seed: u64, stream: &str) -> Self {
        Self::build(Vec::new(), None, values, seed, stream)
    }

    fn build(fields: Vec<FieldTag>, grid: Option<SensorGrid>, values: Array2<f64>, seed: u64, stream: &str) -> Self {
        Self {
            header: ContainerHeader {
                format: CONTAINER_FORMAT.into(),
                version: CONTAINER_VERSION,
                fields,
                grid,
                samples: values.nrows(),
                width: values.ncols(),
                dtype: "f64le".into(),
                seed,
                stream: stream.into(),
            },
            values,
        }
    }

    pub fn to_dataset(&self) -> std::result::Result<FunctionDataset, fpuq_priors::PriorError> {
        let grid = self
            .header
            .grid
            .clone()
            .ok_or_else(|| fpuq_priors::PriorError::Grid("container has no grid".into()))?;
        FunctionDataset::new(grid, self.header.fields.clone(), self.values.clone())
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let h = &self.header;
        if h.format != CONTAINER_FORMAT || h.version != CONTAINER_VERSION {
            return Err(format!("unsupported format {} v{}", h.format, h.version));
        }
        if h.dtype != "f64le" {
            return Err(format!("unsupported dtype {}", h.dtype));
        }
        if let Some(g) = &h.grid {
            if h.width != g.len() * h.fields.len() {
                return Err(format!(
                    "width {} != {} fields × {} grid points",
                    h.width,
                    h.fields.len(),
                    g.len()
                ));
            }
        }
        if self.values.dim() != (h.samples, h.width) {
            return Err(format!(
                "payload {:?} != header {} × {}",
                self.values.dim(),
                h.samples,
                h.width
            ));
        }
        Ok(())
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        let line = serde_json::to_string(&self.header).map_err(std::io::Error::other)?;
        w.write_all(line.as_bytes())?;
        w.write_all(b"\n")?;
        for v in self.values.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()
    }

    pub fn read_from(r: impl Read) -> std::result::Result<Self, String> {
        let mut r = BufReader::new(r);
        let mut line = String::new();
        r.read_line(&mut line).map_err(|e| e.to_string())?;
        let header: ContainerHeader = serde_json::from_str(line.trim_end()).map_err(|e| e.to_string())?;
        let count = header
            .samples
            .checked_mul(header.width)
            .ok_or("sample count overflows")?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| e.to_string())?;
        if bytes.len() != count * 8 {
            return Err(format!("payload has {} bytes, header implies {}", bytes.len(), count * 8));
        }
        let data: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let values = Array2::from_shape_vec((header.samples, header.width), data).map_err(|e| e.to_string())?;
        let c = Self { header, values };
        c.validate()?;
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate().map_err(|m| format_err(path, m))?;
        let f = File::create(path).map_err(io_err(path))?;
        self.write_to(BufWriter::new(f)).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(CliError::Missing(path.into()));
        }
        let f = File::open(path).map_err(io_err(path))?;
        Self::read_from(f).map_err(|m| format_err(path, m))
    }
}
