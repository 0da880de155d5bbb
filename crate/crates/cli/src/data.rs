//! Dataset ingestion: IDX image/label pairs, CSV feature tables and raw
//! f32 blocks with a JSON sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::DataSource;
use crate::error::{io_err, CliError, Result};

/// Row-major `n x d` inputs with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Vec<f64>,
    pub labels: Vec<usize>,
    pub dim: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn view(&self) -> circspec_core::svi::Dataset<'_> {
        circspec_core::svi::Dataset { x: &self.x, labels: &self.labels }
    }

    /// Checks the row width and that every label is below `classes`.
    pub fn check(&self, dim: usize, classes: usize, origin: &Path) -> Result<()> {
        if self.dim != dim {
            return Err(CliError::Format {
                path: origin.to_path_buf(),
                message: format!("rows have {} values, the model expects {dim}", self.dim),
            });
        }
        if let Some((row, &y)) = self.labels.iter().enumerate().find(|(_, &y)| y >= classes) {
            return Err(CliError::Row {
                path: origin.to_path_buf(),
                row,
                message: format!("label {y} is not below the class count {classes}"),
            });
        }
        Ok(())
    }
}

/// Loads any configured source; the returned path names it in errors.
pub fn load_source(src: &DataSource) -> Result<(Dataset, PathBuf)> {
    match src {
        DataSource::Idx { images, labels, .. } => Ok((load_idx(images, labels)?, images.clone())),
        DataSource::Csv { path, .. } => Ok((load_csv(path)?, path.clone())),
        DataSource::F32 { path, sidecar, .. } => {
            let side = sidecar.clone().unwrap_or_else(|| default_sidecar(path));
            Ok((load_f32(path, &side)?, path.clone()))
        }
    }
}

pub fn default_sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// A parsed IDX tensor of unsigned bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxTensor {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

const IDX_UBYTE: u8 = 0x08;

/// Parses the IDX container: two zero bytes, type code, rank, big-endian
/// `u32` dimensions, then the payload.
pub fn parse_idx(bytes: &[u8], path: &Path) -> Result<IdxTensor> {
    let fail = |offset: usize, message: String| CliError::Idx { path: path.to_path_buf(), offset: offset as u64, message };
    if bytes.len() < 4 {
        return Err(fail(bytes.len(), "truncated magic number".into()));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(fail(0, format!("bad magic {:02x}{:02x}{:02x}{:02x}", bytes[0], bytes[1], bytes[2], bytes[3])));
    }
    if bytes[2] != IDX_UBYTE {
        return Err(fail(2, format!("unsupported element type 0x{:02x}", bytes[2])));
    }
    let rank = bytes[3] as usize;
    if rank == 0 {
        return Err(fail(3, "rank must be at least 1".into()));
    }
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(fail(bytes.len(), format!("truncated header: need {header} bytes")));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| fail(4, "dimension product overflows".into()))?;
    let payload = bytes.len() - header;
    if payload != count {
        let at = header + payload.min(count);
        return Err(fail(at, format!("payload has {payload} bytes, dimensions require {count}")));
    }
    Ok(IdxTensor { dims, data: bytes[header..].to_vec() })
}

pub fn read_idx(path: &Path) -> Result<IdxTensor> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    parse_idx(&bytes, path)
}

/// Images scaled to `[0, 1]` and their labels.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let img = read_idx(images)?;
    let lab = read_idx(labels)?;
    if img.dims.len() < 2 {
        return Err(CliError::Idx { path: images.to_path_buf(), offset: 3, message: "image file needs rank >= 2".into() });
    }
    if lab.dims.len() != 1 {
        return Err(CliError::Idx { path: labels.to_path_buf(), offset: 3, message: "label file must have rank 1".into() });
    }
    if img.dims[0] != lab.dims[0] {
        return Err(CliError::Format {
            path: labels.to_path_buf(),
            message: format!("{} labels for {} images", lab.dims[0], img.dims[0]),
        });
    }
    let dim = img.dims[1..].iter().product();
    Ok(Dataset {
        x: img.data.iter().map(|&b| f64::from(b) / 255.0).collect(),
        labels: lab.data.iter().map(|&b| usize::from(b)).collect(),
        dim,
    })
}

/// CSV with a header row; the column named `label` holds integer labels
/// and every other column is a feature.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| CliError::Format { path: path.to_path_buf(), message: e.to_string() })?;
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Format { path: path.to_path_buf(), message: e.to_string() })?
        .clone();
    let label_col = headers
        .iter()
        .position(|h| h.trim() == "label")
        .ok_or_else(|| CliError::Format { path: path.to_path_buf(), message: "missing `label` column".into() })?;
    let width = headers.len();
    let dim = width - 1;
    let mut x = Vec::new();
    let mut labels = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let row_err = |message: String| CliError::Row { path: path.to_path_buf(), row, message };
        let rec = rec.map_err(|e| row_err(e.to_string()))?;
        if rec.len() != width {
            return Err(row_err(format!("expected {width} fields, found {}", rec.len())));
        }
        for (c, field) in rec.iter().enumerate() {
            let field = field.trim();
            if c == label_col {
                labels.push(field.parse::<usize>().map_err(|_| row_err(format!("label `{field}` is not a nonnegative integer")))?);
            } else {
                let v: f64 = field.parse().map_err(|_| row_err(format!("`{field}` is not a number")))?;
                if !v.is_finite() {
                    return Err(row_err(format!("non-finite value in column {c}")));
                }
                x.push(v);
            }
        }
    }
    Ok(Dataset { x, labels, dim })
}

/// Sidecar describing an f32 block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct F32Sidecar {
    pub n: usize,
    pub d: usize,
    pub labels: Vec<usize>,
}

pub fn load_f32(path: &Path, sidecar: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(sidecar).map_err(io_err(sidecar))?;
    let meta: F32Sidecar = serde_json::from_str(&text)
        .map_err(|e| CliError::Format { path: sidecar.to_path_buf(), message: e.to_string() })?;
    let bytes = fs::read(path).map_err(io_err(path))?;
    let expect = meta.n.checked_mul(meta.d).and_then(|v| v.checked_mul(4));
    if expect != Some(bytes.len()) {
        return Err(CliError::Format {
            path: path.to_path_buf(),
            message: format!("{} bytes, sidecar declares {} x {} f32 values", bytes.len(), meta.n, meta.d),
        });
    }
    if meta.labels.len() != meta.n {
        return Err(CliError::Format {
            path: sidecar.to_path_buf(),
            message: format!("{} labels for {} rows", meta.labels.len(), meta.n),
        });
    }
    let x: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(CliError::Row { path: path.to_path_buf(), row: i / meta.d.max(1), message: "non-finite value".into() });
    }
    Ok(Dataset { x, labels: meta.labels, dim: meta.d })
}

/// Encodes a ubyte IDX file.
pub fn encode_idx(dims: &[usize], data: &[u8]) -> Vec<u8> {
    let mut out = vec![0, 0, IDX_UBYTE, dims.len() as u8];
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(data);
    out
}
