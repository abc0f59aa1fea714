//! Instance files (JSON) and query streams (JSON lines of coordinate vectors).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::datagen::{Generated, InstanceSpec};
use crate::error::{Error, Result};
use crate::metric::{MetricInstance, SubspaceSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
    pub subspace: SubspaceSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<InstanceSpec>,
}

impl InstanceFile {
    pub fn from_generated(g: &Generated, spec: Option<InstanceSpec>) -> Self {
        Self {
            dim: g.instance.dim(),
            points: g.points.clone(),
            subspace: g.subspace.clone(),
            heights: Some(g.heights.clone()),
            spec,
        }
    }

    pub fn to_instance(&self) -> Result<Arc<MetricInstance>> {
        if self.subspace.ambient_dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: self.subspace.ambient_dim(),
            });
        }
        Ok(Arc::new(MetricInstance::euclidean(
            self.points.clone(),
            self.subspace.build()?,
        )?))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }
}

pub fn parse_queries<R: BufRead>(input: R) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

pub fn read_queries(path: &Path) -> Result<Vec<Vec<f64>>> {
    parse_queries(BufReader::new(File::open(path)?))
}

pub fn write_jsonl<T: Serialize, W: Write>(mut out: W, rows: impl IntoIterator<Item = T>) -> Result<()> {
    for row in rows {
        serde_json::to_writer(&mut out, &row)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_queries(path: &Path, queries: &[Vec<f64>]) -> Result<()> {
    write_jsonl(BufWriter::new(File::create(path)?), queries)
}
