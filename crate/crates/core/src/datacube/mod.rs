//! Hyperspectral cubes, 2-D maps and instance masks, with their on-disk
//! formats.
//!
//! Cubes and maps are stored as a JSON header next to a raw little-endian
//! `f32` payload. Cube payloads are band-sequential: band-major, then row,
//! then column. Masks are JSON documents holding run-length encodings over
//! row-major pixel order.

mod cube;
mod map;
mod mask;

pub use cube::{load_cube, save_cube, HyperCube, SpectralCalibration};
pub use map::{load_map, save_map, EnhancementMap, MapFile, ProbabilityMap};
pub use mask::{load_masks, save_masks, BBox, InstanceMaskSet, MaskInstance, Run};

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::num::Real;

pub(crate) const DTYPE_F32LE: &str = "f32le";

pub(crate) fn read_json<D: serde::de::DeserializeOwned>(path: &Path) -> Result<D> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_json<S: serde::Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Payload file sitting next to a header: `scene.json` -> `scene.bin`.
pub(crate) fn payload_path_for(header: &Path) -> PathBuf {
    header.with_extension("bin")
}

pub(crate) fn resolve_payload(header: &Path, payload: &str) -> PathBuf {
    match header.parent() {
        Some(dir) => dir.join(payload),
        None => PathBuf::from(payload),
    }
}

pub(crate) fn write_f32le<T: Real>(path: &Path, values: &[T]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for &v in values {
        bytes.extend_from_slice(&v.to_f32_bits().to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads exactly `count` little-endian `f32` values, rejecting NaN.
pub(crate) fn read_f32le<T: Real>(path: &Path, count: usize) -> Result<Vec<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != count * 4 {
        return Err(Error::SizeMismatch {
            expected: count * 4,
            found: bytes.len(),
        });
    }
    bytes
        .chunks_exact(4)
        .enumerate()
        .map(|(i, c)| {
            let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            if v.is_nan() {
                Err(Error::invalid(format!("NaN at payload element {i}")))
            } else {
                Ok(T::from_f32_bits(v))
            }
        })
        .collect()
}

pub(crate) fn check_dtype(dtype: &str) -> Result<()> {
    if dtype != DTYPE_F32LE {
        return Err(Error::invalid(format!("unsupported dtype {dtype:?}")));
    }
    Ok(())
}
