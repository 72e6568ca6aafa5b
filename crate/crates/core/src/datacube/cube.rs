use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    check_dtype, payload_path_for, read_f32le, read_json, resolve_payload, write_f32le, write_json, DTYPE_F32LE,
};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::num::Real;

/// Per-column band centers and widths of a pushbroom detector, in nm.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCalibration<T> {
    cols: usize,
    bands: usize,
    centers: Vec<T>,
    fwhm: Vec<T>,
}

impl<T: Real> SpectralCalibration<T> {
    /// `centers` and `fwhm` are `cols × bands`, row-major by column.
    pub fn new(cols: usize, bands: usize, centers: Vec<T>, fwhm: Vec<T>) -> Result<Self> {
        for (what, v) in [("centers", &centers), ("fwhm", &fwhm)] {
            if v.len() != cols * bands {
                return Err(Error::LengthMismatch {
                    what: if what == "centers" {
                        "calibration centers vs cols*bands"
                    } else {
                        "calibration fwhm vs cols*bands"
                    },
                    left: v.len(),
                    right: cols * bands,
                });
            }
        }
        let cal = Self {
            cols,
            bands,
            centers,
            fwhm,
        };
        cal.validate()?;
        Ok(cal)
    }

    /// Every column shares one wavelength/FWHM vector.
    pub fn shared(cols: usize, centers: &[T], fwhm: &[T]) -> Result<Self> {
        if centers.len() != fwhm.len() {
            return Err(Error::LengthMismatch {
                what: "shared centers vs fwhm",
                left: centers.len(),
                right: fwhm.len(),
            });
        }
        let bands = centers.len();
        Self::new(cols, bands, centers.repeat(cols), fwhm.repeat(cols))
    }

    fn validate(&self) -> Result<()> {
        for c in 0..self.cols {
            let centers = self.centers(c);
            if let Some(b) = centers.iter().position(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("non-finite wavelength at column {c}, band {b}")));
            }
            if let Some(b) = centers.windows(2).position(|w| w[1] <= w[0]) {
                return Err(Error::invalid(format!(
                    "wavelengths not strictly increasing at column {c}, band {}",
                    b + 1
                )));
            }
            if let Some(b) = self.fwhm(c).iter().position(|&w| !(w > T::zero()) || !w.is_finite()) {
                return Err(Error::invalid(format!("fwhm must be > 0 (column {c}, band {b})")));
            }
        }
        Ok(())
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn centers(&self, col: usize) -> &[T] {
        &self.centers[col * self.bands..(col + 1) * self.bands]
    }

    pub fn fwhm(&self, col: usize) -> &[T] {
        &self.fwhm[col * self.bands..(col + 1) * self.bands]
    }

    /// Copy with `offsets[c]` nm added to every center of column `c`.
    pub fn shifted(&self, offsets: &[T]) -> Result<Self> {
        if offsets.len() != self.cols {
            return Err(Error::LengthMismatch {
                what: "offsets vs columns",
                left: offsets.len(),
                right: self.cols,
            });
        }
        let mut centers = self.centers.clone();
        for (c, &d) in offsets.iter().enumerate() {
            for v in &mut centers[c * self.bands..(c + 1) * self.bands] {
                *v += d;
            }
        }
        Self::new(self.cols, self.bands, centers, self.fwhm.clone())
    }

    fn is_shared(&self) -> bool {
        (1..self.cols).all(|c| self.centers(c) == self.centers(0) && self.fwhm(c) == self.fwhm(0))
    }
}

/// Radiance cube `rows × cols × bands` stored band-sequential.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperCube<T> {
    rows: usize,
    cols: usize,
    bands: usize,
    data: Vec<T>,
    calib: SpectralCalibration<T>,
}

impl<T: Real> HyperCube<T> {
    pub fn new(rows: usize, cols: usize, bands: usize, data: Vec<T>, calib: SpectralCalibration<T>) -> Result<Self> {
        if data.len() != rows * cols * bands {
            return Err(Error::LengthMismatch {
                what: "cube data vs rows*cols*bands",
                left: data.len(),
                right: rows * cols * bands,
            });
        }
        if calib.cols() != cols || calib.bands() != bands {
            return Err(Error::invalid(format!(
                "calibration is {}x{}, cube needs {cols}x{bands}",
                calib.cols(),
                calib.bands()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::invalid(format!(
                "radiance must be finite and non-negative (element {i} = {})",
                data[i]
            )));
        }
        Ok(Self {
            rows,
            cols,
            bands,
            data,
            calib,
        })
    }

    /// Builds a cube from a per-sample function `f(row, col, band)`.
    pub fn from_fn(
        rows: usize,
        cols: usize,
        calib: SpectralCalibration<T>,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Result<Self> {
        let bands = calib.bands();
        let mut data = Vec::with_capacity(rows * cols * bands);
        for b in 0..bands {
            for r in 0..rows {
                for c in 0..cols {
                    data.push(f(r, c, b));
                }
            }
        }
        Self::new(rows, cols, bands, data, calib)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn calibration(&self) -> &SpectralCalibration<T> {
        &self.calib
    }

    #[inline]
    pub fn offset(&self, row: usize, col: usize, band: usize) -> usize {
        (band * self.rows + row) * self.cols + col
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, band: usize) -> T {
        self.data[self.offset(row, col, band)]
    }

    /// `rows × bands` matrix of the spectra seen by detector column `col`.
    pub fn column_spectra(&self, col: usize) -> Result<Matrix<T>> {
        self.column_spectra_window(col, 0..self.bands)
    }

    /// Like [`column_spectra`](Self::column_spectra) restricted to a band range.
    pub fn column_spectra_window(&self, col: usize, bands: Range<usize>) -> Result<Matrix<T>> {
        if col >= self.cols {
            return Err(Error::OutOfRange {
                index: col,
                limit: self.cols,
            });
        }
        if bands.start >= bands.end || bands.end > self.bands {
            return Err(Error::invalid(format!(
                "band window {}..{} not within 0..{}",
                bands.start, bands.end, self.bands
            )));
        }
        let d = bands.len();
        let mut out = Matrix::zeros(self.rows, d);
        for (j, b) in bands.enumerate() {
            let plane = &self.data[b * self.rows * self.cols..(b + 1) * self.rows * self.cols];
            for r in 0..self.rows {
                out[(r, j)] = plane[r * self.cols + col];
            }
        }
        Ok(out)
    }

    /// Mean spectrum over rows for one column.
    pub fn column_mean(&self, col: usize) -> Result<Vec<T>> {
        let m = self.column_spectra(col)?;
        let n = T::lit(self.rows as f64);
        Ok((0..self.bands)
            .map(|b| (0..self.rows).map(|r| m[(r, b)]).sum::<T>() / n)
            .collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum CalibField {
    PerColumn(Vec<Vec<f64>>),
    Shared(Vec<f64>),
}

impl CalibField {
    fn expand(&self, cols: usize, bands: usize, what: &str) -> Result<Vec<f64>> {
        let out = match self {
            CalibField::Shared(v) => {
                if v.len() != bands {
                    return Err(Error::invalid(format!("{what}: {} entries for {bands} bands", v.len())));
                }
                v.repeat(cols)
            }
            CalibField::PerColumn(rows) => {
                if rows.len() != cols || rows.iter().any(|r| r.len() != bands) {
                    return Err(Error::invalid(format!(
                        "{what}: expected {cols} rows of {bands} values"
                    )));
                }
                rows.concat()
            }
        };
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CubeHeader {
    rows: usize,
    cols: usize,
    bands: usize,
    dtype: String,
    interleave: String,
    wavelengths_nm: CalibField,
    fwhm_nm: CalibField,
    payload: String,
}

/// Reads a cube from its JSON header path.
pub fn load_cube<T: Real>(path: impl AsRef<Path>) -> Result<HyperCube<T>> {
    let path = path.as_ref();
    let h: CubeHeader = read_json(path)?;
    check_dtype(&h.dtype)?;
    if h.interleave != "bsq" {
        return Err(Error::invalid(format!("unsupported interleave {:?}", h.interleave)));
    }
    let to_t = |v: Vec<f64>| {
        v.into_iter()
            .map(|x| T::from_f64(x).unwrap_or_else(T::nan))
            .collect::<Vec<T>>()
    };
    let centers = to_t(h.wavelengths_nm.expand(h.cols, h.bands, "wavelengths_nm")?);
    let fwhm = to_t(h.fwhm_nm.expand(h.cols, h.bands, "fwhm_nm")?);
    let calib = SpectralCalibration::new(h.cols, h.bands, centers, fwhm)?;
    let data = read_f32le(&resolve_payload(path, &h.payload), h.rows * h.cols * h.bands)?;
    HyperCube::new(h.rows, h.cols, h.bands, data, calib)
}

/// Writes `path` (JSON header) and a sibling `.bin` payload.
pub fn save_cube<T: Real>(cube: &HyperCube<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let payload = payload_path_for(path);
    let cal = &cube.calib;
    let shared = cal.is_shared() && cube.cols > 0;
    let field = |values: &[T]| {
        let row = |c: usize| {
            values[c * cube.bands..(c + 1) * cube.bands]
                .iter()
                .map(|v| v.as_f64())
                .collect::<Vec<_>>()
        };
        if shared {
            CalibField::Shared(row(0))
        } else {
            CalibField::PerColumn((0..cube.cols).map(row).collect())
        }
    };
    let header = CubeHeader {
        rows: cube.rows,
        cols: cube.cols,
        bands: cube.bands,
        dtype: DTYPE_F32LE.into(),
        interleave: "bsq".into(),
        wavelengths_nm: field(&cal.centers),
        fwhm_nm: field(&cal.fwhm),
        payload: payload
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    write_f32le(&payload, &cube.data)?;
    write_json(path, &header)
}
