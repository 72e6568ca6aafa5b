use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    check_dtype, payload_path_for, read_f32le, read_json, resolve_payload, write_f32le, write_json, DTYPE_F32LE,
};
use crate::error::{Error, Result};
use crate::num::Real;

/// XCH₄ enhancement per pixel (ppb), row-major. Negative values are legal.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhancementMap<T> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
}

/// Per-pixel plume probability in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap<T> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
}

/// Shared surface of the two raster types and their file representation.
pub trait MapFile: Sized {
    type Scalar: Real;
    const UNITS: &'static str;

    fn from_parts(rows: usize, cols: usize, values: Vec<Self::Scalar>) -> Result<Self>;
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn values(&self) -> &[Self::Scalar];

    fn len(&self) -> usize {
        self.rows() * self.cols()
    }

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(&self, row: usize, col: usize) -> Self::Scalar {
        self.values()[row * self.cols() + col]
    }
}

fn check_len(rows: usize, cols: usize, n: usize) -> Result<()> {
    if n != rows * cols {
        return Err(Error::LengthMismatch {
            what: "map values vs rows*cols",
            left: n,
            right: rows * cols,
        });
    }
    Ok(())
}

impl<T: Real> EnhancementMap<T> {
    pub fn new(rows: usize, cols: usize, values: Vec<T>) -> Result<Self> {
        check_len(rows, cols, values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite enhancement at pixel {i}")));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![T::zero(); rows * cols],
        }
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }
}

impl<T: Real> ProbabilityMap<T> {
    pub fn new(rows: usize, cols: usize, values: Vec<T>) -> Result<Self> {
        check_len(rows, cols, values.len())?;
        if let Some(i) = values.iter().position(|&v| !(v >= T::zero() && v <= T::one())) {
            return Err(Error::invalid(format!(
                "probability out of [0,1] at pixel {i}: {}",
                values[i]
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }
}

macro_rules! impl_map_file {
    ($ty:ident, $units:literal) => {
        impl<T: Real> MapFile for $ty<T> {
            type Scalar = T;
            const UNITS: &'static str = $units;

            fn from_parts(rows: usize, cols: usize, values: Vec<T>) -> Result<Self> {
                $ty::new(rows, cols, values)
            }
            fn rows(&self) -> usize {
                self.rows
            }
            fn cols(&self) -> usize {
                self.cols
            }
            fn values(&self) -> &[T] {
                &self.values
            }
        }
    };
}

impl_map_file!(EnhancementMap, "ppb");
impl_map_file!(ProbabilityMap, "probability");

#[derive(Debug, Serialize, Deserialize)]
struct MapHeader {
    rows: usize,
    cols: usize,
    dtype: String,
    units: String,
    payload: String,
}

/// Loads a map, checking that the header's `units` match the requested type.
pub fn load_map<M: MapFile>(path: impl AsRef<Path>) -> Result<M> {
    let path = path.as_ref();
    let h: MapHeader = read_json(path)?;
    check_dtype(&h.dtype)?;
    if h.units != M::UNITS {
        return Err(Error::invalid(format!(
            "{}: units {:?}, expected {:?}",
            path.display(),
            h.units,
            M::UNITS
        )));
    }
    let values = read_f32le(&resolve_payload(path, &h.payload), h.rows * h.cols)?;
    M::from_parts(h.rows, h.cols, values)
}

pub fn save_map<M: MapFile>(map: &M, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let payload = payload_path_for(path);
    let header = MapHeader {
        rows: map.rows(),
        cols: map.cols(),
        dtype: DTYPE_F32LE.into(),
        units: M::UNITS.into(),
        payload: payload
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    write_f32le(&payload, map.values())?;
    write_json(path, &header)
}
