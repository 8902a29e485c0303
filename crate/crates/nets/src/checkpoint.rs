//! Model checkpoint file: one JSON header line, then the parameter blocks
//! as little-endian `f64` in header order.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use fpuq_numcore::ParamVector;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{NetError, Result};

pub const CHECKPOINT_FORMAT: &str = "fpuq-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct BlockHeader {
    name: String,
    shape: [usize; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct GroupHeader {
    name: String,
    blocks: Vec<BlockHeader>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    meta: Value,
    groups: Vec<GroupHeader>,
}

/// Named parameter groups plus free-form metadata (network specs, seed,
/// training step, ...).
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: Value,
    pub groups: Vec<(String, ParamVector)>,
}

impl Checkpoint {
    pub fn new(meta: Value) -> Self {
        Self {
            meta,
            groups: Vec::new(),
        }
    }

    pub fn with_group(mut self, name: &str, params: &ParamVector) -> Self {
        self.groups.push((name.to_string(), params.clone()));
        self
    }

    pub fn group(&self, name: &str) -> Result<&ParamVector> {
        self.groups
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, p)| p)
            .ok_or_else(|| NetError::Format(format!("missing parameter group `{name}`")))
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let header = Header {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            meta: self.meta.clone(),
            groups: self
                .groups
                .iter()
                .map(|(name, p)| GroupHeader {
                    name: name.clone(),
                    blocks: p
                        .blocks()
                        .iter()
                        .map(|(n, a)| BlockHeader {
                            name: n.clone(),
                            shape: [a.nrows(), a.ncols()],
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for (_, p) in &self.groups {
            for a in p.arrays() {
                for v in a.iter() {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut line = String::new();
        r.read_line(&mut line)?;
        let header: Header = serde_json::from_str(line.trim_end())?;
        if header.format != CHECKPOINT_FORMAT || header.version != CHECKPOINT_VERSION {
            return Err(NetError::Format(format!(
                "unsupported checkpoint {} v{}",
                header.format, header.version
            )));
        }
        let mut groups = Vec::with_capacity(header.groups.len());
        let mut buf = [0u8; 8];
        for g in header.groups {
            let mut p = ParamVector::new();
            for b in g.blocks {
                let n = b.shape[0] * b.shape[1];
                let mut data = Vec::with_capacity(n);
                for _ in 0..n {
                    r.read_exact(&mut buf)
                        .map_err(|_| NetError::Format("truncated checkpoint payload".into()))?;
                    data.push(f64::from_le_bytes(buf));
                }
                let arr = Array2::from_shape_vec((b.shape[0], b.shape[1]), data)
                    .map_err(|e| NetError::Format(e.to_string()))?;
                p.push(b.name, arr)?;
            }
            groups.push((g.name, p));
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(NetError::Format(format!("{} trailing payload bytes", rest.len())));
        }
        Ok(Self {
            meta: header.meta,
            groups,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(std::fs::File::open(path)?)
    }
}
