//! Feature sets and the `.fset` container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "FSET"            4 bytes magic
//! version           u32 (= 1)
//! manifest_len      u64
//! manifest          UTF-8 JSON: {grid, layer, dim, extractor?, seed?, ...}
//! payload           rows * dim f32, row-major
//! crc32             u32, CRC-32 (IEEE) of the payload bytes
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::grid::FactorGrid;

pub const MAGIC: &[u8; 4] = b"FSET";
pub const FORMAT_VERSION: u32 = 1;

/// Provenance record carried alongside the features.
///
/// Keys this type does not know about are kept in `extra` and written back
/// unchanged.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extractor: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipe: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Serialize)]
struct HeaderOut<'a> {
    grid: &'a FactorGrid,
    layer: &'a str,
    dim: usize,
    #[serde(flatten)]
    manifest: &'a Manifest,
}

#[derive(Deserialize)]
struct HeaderIn {
    grid: Value,
    layer: String,
    dim: Value,
    #[serde(flatten)]
    manifest: Manifest,
}

/// A |Θ| × d matrix of 32-bit features aligned to a factor grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    grid: FactorGrid,
    layer: String,
    dim: usize,
    data: Vec<f32>,
    pub manifest: Manifest,
}

impl FeatureSet {
    pub fn new(
        grid: FactorGrid,
        layer: impl Into<String>,
        dim: usize,
        data: Vec<f32>,
        manifest: Manifest,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Shape("feature dimension must be positive".into()));
        }
        let expected = grid
            .size()
            .checked_mul(dim)
            .ok_or_else(|| Error::Shape("feature matrix too large".into()))?;
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "expected {} x {} = {expected} values, got {}",
                grid.size(),
                dim,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Param(format!(
                "non-finite feature value at row {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(FeatureSet {
            grid,
            layer: layer.into(),
            dim,
            data,
            manifest,
        })
    }

    pub fn grid(&self) -> &FactorGrid {
        &self.grid
    }

    pub fn layer(&self) -> &str {
        &self.layer
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_rows(&self) -> usize {
        self.grid.size()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Rows with `factor` at `level`.
    pub fn slice(&self, factor: &str, level: usize) -> Result<Vec<usize>> {
        self.grid.slice(factor, level)
    }

    fn manifest_json(&self) -> Result<Vec<u8>> {
        serde_json::to_vec(&HeaderOut {
            grid: &self.grid,
            layer: &self.layer,
            dim: self.dim,
            manifest: &self.manifest,
        })
        .map_err(|e| Error::format("manifest", e.to_string()))
    }

    /// Serialized container bytes.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let manifest = self.manifest_json()?;
        let payload_len = self.data.len() * 4;
        let mut out = Vec::with_capacity(16 + manifest.len() + payload_len + 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        let start = out.len();
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let crc = crc32fast::hash(&out[start..]);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::format("magic", "not an FSET container"));
        }
        let version =
            read_u32(bytes, 4).ok_or_else(|| Error::format("version", "truncated header"))?;
        if version != FORMAT_VERSION {
            return Err(Error::format(
                "version",
                format!("unsupported version {version}, expected {FORMAT_VERSION}"),
            ));
        }
        let mlen =
            read_u64(bytes, 8).ok_or_else(|| Error::format("manifest", "truncated header"))?;
        let mstart = 16usize;
        let mend = usize::try_from(mlen)
            .ok()
            .and_then(|l| mstart.checked_add(l))
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::format("manifest", "manifest length exceeds file size"))?;
        let header: HeaderIn = serde_json::from_slice(&bytes[mstart..mend])
            .map_err(|e| Error::format("manifest", e.to_string()))?;
        let grid: FactorGrid = serde_json::from_value(header.grid)
            .map_err(|e| Error::format("grid", e.to_string()))?;
        let dim = header
            .dim
            .as_u64()
            .and_then(|d| usize::try_from(d).ok())
            .filter(|&d| d > 0)
            .ok_or_else(|| {
                Error::format("dim", format!("invalid feature dimension {}", header.dim))
            })?;

        let n_values = grid
            .size()
            .checked_mul(dim)
            .ok_or_else(|| Error::format("dim", "feature matrix too large"))?;
        let payload_len = n_values * 4;
        let rest = &bytes[mend..];
        if rest.len() != payload_len + 4 {
            return Err(Error::format(
                "payload",
                format!(
                    "expected {} payload bytes plus checksum, found {}",
                    payload_len,
                    rest.len()
                ),
            ));
        }
        let (payload, crc_bytes) = rest.split_at(payload_len);
        let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
        if crc32fast::hash(payload) != stored {
            return Err(Error::format("crc", "payload checksum mismatch"));
        }
        let data: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::format(
                "payload",
                format!(
                    "non-finite value at row {}, column {}",
                    pos / dim,
                    pos % dim
                ),
            ));
        }
        Ok(FeatureSet {
            grid,
            layer: header.layer,
            dim,
            data,
            manifest: header.manifest,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        FeatureSet::from_bytes(&bytes)
    }
}

fn read_u32(b: &[u8], at: usize) -> Option<u32> {
    b.get(at..at + 4)
        .map(|s| u32::from_le_bytes(s.try_into().unwrap()))
}

fn read_u64(b: &[u8], at: usize) -> Option<u64> {
    b.get(at..at + 8)
        .map(|s| u64::from_le_bytes(s.try_into().unwrap()))
}
