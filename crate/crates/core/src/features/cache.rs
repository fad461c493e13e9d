use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FeatureVector;
use crate::error::{Error, Result};

/// One line of the feature cache CSV; absent values are empty cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub id: String,
    pub pitch_mu: Option<f64>,
    pub pitch_sigma: Option<f64>,
    pub intensity_db: f64,
    pub jitter: Option<f64>,
    pub shimmer: Option<f64>,
    pub duration_s: f64,
}

impl FeatureRow {
    pub fn new(id: impl Into<String>, fv: &FeatureVector) -> Self {
        Self {
            id: id.into(),
            pitch_mu: fv.pitch_mu,
            pitch_sigma: fv.pitch_sigma,
            intensity_db: fv.intensity_db,
            jitter: fv.jitter,
            shimmer: fv.shimmer,
            duration_s: fv.duration_s,
        }
    }

    pub fn features(&self) -> FeatureVector {
        FeatureVector {
            pitch_mu: self.pitch_mu,
            pitch_sigma: self.pitch_sigma,
            intensity_db: self.intensity_db,
            jitter: self.jitter,
            shimmer: self.shimmer,
            duration_s: self.duration_s,
        }
    }
}

pub fn write_feature_cache(path: &Path, rows: &[FeatureRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_feature_cache(path: &Path) -> Result<Vec<FeatureRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    let mut rows = Vec::new();
    for (i, row) in r.deserialize().enumerate() {
        rows.push(row.map_err(|e: csv::Error| Error::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            message: e.to_string(),
        })?);
    }
    Ok(rows)
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Serde(format!("{other:?}")),
        }
    } else {
        Error::from(e)
    }
}
