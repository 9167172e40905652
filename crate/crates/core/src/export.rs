//! CSV artifacts: labelled datasets and steered latents. Floats are written
//! with Rust's shortest round-trip formatting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{AttributeVector, LatentVector};
use crate::world::WorldSpec;

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

fn parse_f64(field: &str) -> Result<f64> {
    field
        .parse()
        .map_err(|_| Error::Format(format!("`{field}` is not a number")))
}

/// Sidecar describing a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub samples: usize,
    pub seed: u64,
    pub rng: String,
    pub world: WorldSpec,
}

/// Header `z_0..z_{d-1},p_0..p_{n-1}`, one row per sample.
pub fn dataset_to_csv(data: &[(LatentVector, AttributeVector)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if let Some((z, p)) = data.first() {
        let header = (0..z.dim())
            .map(|i| format!("z_{i}"))
            .chain((0..p.len()).map(|i| format!("p_{i}")));
        w.write_record(header).map_err(csv_err)?;
    }
    for (z, p) in data {
        w.write_record(z.as_slice().iter().chain(p.as_slice()).map(|v| v.to_string()))
            .map_err(csv_err)?;
    }
    into_string(w)
}

pub fn dataset_from_csv(text: &str) -> Result<Vec<(LatentVector, AttributeVector)>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(csv_err)?.clone();
    let d = header.iter().filter(|h| h.starts_with("z_")).count();
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let values = rec.iter().map(parse_f64).collect::<Result<Vec<_>>>()?;
        let (z, p) = values.split_at(d);
        out.push((LatentVector::new(z.to_vec())?, AttributeVector::new(p.to_vec())?));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentRow {
    pub sample: usize,
    pub stage: String,
    pub z: LatentVector,
}

/// Header `sample,stage,z_0..z_{d-1}`.
pub fn latents_to_csv(rows: &[LatentRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let d = rows.first().map_or(0, |r| r.z.dim());
    let header = ["sample".to_string(), "stage".to_string()]
        .into_iter()
        .chain((0..d).map(|i| format!("z_{i}")));
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        let fields = [r.sample.to_string(), r.stage.clone()]
            .into_iter()
            .chain(r.z.as_slice().iter().map(|v| v.to_string()));
        w.write_record(fields).map_err(csv_err)?;
    }
    into_string(w)
}

pub fn latents_from_csv(text: &str) -> Result<Vec<LatentRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let sample = rec
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("bad sample index".into()))?;
        let stage = rec.get(1).unwrap_or_default().to_string();
        let z = rec.iter().skip(2).map(parse_f64).collect::<Result<Vec<_>>>()?;
        out.push(LatentRow {
            sample,
            stage,
            z: LatentVector::new(z)?,
        });
    }
    Ok(out)
}
