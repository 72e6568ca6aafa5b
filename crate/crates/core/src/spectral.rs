//! Reference spectra, sensor response convolution, per-column wavelength
//! recalibration and the unit methane absorption spectrum.
//!
//! Radiative transfer is a transmittance table times a smooth solar
//! envelope. Band responses are Gaussian in wavelength, truncated at ±4σ and
//! integrated with the trapezoid rule on the fine grid, with the truncation
//! points interpolated so the window is exactly symmetric about the center.

use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::datacube::HyperCube;
use crate::error::{Error, Result};
use crate::num::Real;

/// Grid step of the recalibration search, nm.
pub const SEARCH_STEP_NM: f64 = 0.1;
/// Minimum fine-grid samples per FWHM accepted by [`convolve_srf`].
pub const MIN_SAMPLES_PER_FWHM: f64 = 10.0;
/// Gaussian response support, in standard deviations each side.
pub const SRF_TRUNCATION_SIGMA: f64 = 4.0;
/// Band centers must sit this many FWHM inside the fine grid.
pub const EDGE_MARGIN_FWHM: f64 = 3.0;

const FWHM_TO_SIGMA: f64 = 0.424_660_900_144_009_5; // 1 / (2 sqrt(2 ln 2))

/// A value tabulated on a strictly increasing wavelength grid (nm).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTable<T> {
    wavelengths: Vec<T>,
    values: Vec<T>,
}

impl<T: Real> SpectralTable<T> {
    pub fn new(wavelengths: Vec<T>, values: Vec<T>) -> Result<Self> {
        if wavelengths.len() != values.len() {
            return Err(Error::LengthMismatch {
                what: "table wavelengths vs values",
                left: wavelengths.len(),
                right: values.len(),
            });
        }
        if wavelengths.len() < 2 {
            return Err(Error::invalid("spectral table needs at least two samples"));
        }
        check_grid(&wavelengths)?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite table value at row {i}")));
        }
        Ok(Self { wavelengths, values })
    }

    pub fn wavelengths(&self) -> &[T] {
        &self.wavelengths
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Same grid, every value multiplied by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        Self {
            wavelengths: self.wavelengths.clone(),
            values: self.values.iter().map(|&v| v * factor).collect(),
        }
    }

    /// Linear interpolation; `None` outside the tabulated range.
    pub fn interpolate(&self, wl: T) -> Option<T> {
        interp(&self.wavelengths, &self.values, wl)
    }

    /// Reads a two-column CSV (`wavelength_nm,value`) with a header row.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let table_err = |message: String| Error::Table {
            path: path.to_path_buf(),
            message,
        };
        let mut rdr = csv::Reader::from_path(path).map_err(|e| table_err(e.to_string()))?;
        let headers = rdr.headers().map_err(|e| table_err(e.to_string()))?.clone();
        if headers.len() != 2 || &headers[0] != "wavelength_nm" || &headers[1] != "value" {
            return Err(table_err(format!(
                "expected header wavelength_nm,value, found {headers:?}"
            )));
        }
        let (mut wl, mut val) = (Vec::new(), Vec::new());
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| table_err(e.to_string()))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| table_err(format!("row {}: {e}", i + 1)))
            };
            wl.push(T::lit(parse(&rec[0])?));
            val.push(T::lit(parse(&rec[1])?));
        }
        Self::new(wl, val).map_err(|e| table_err(e.to_string()))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Table {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut write = || -> std::result::Result<(), csv::Error> {
            w.write_record(["wavelength_nm", "value"])?;
            for (l, v) in self.wavelengths.iter().zip(&self.values) {
                w.write_record([l.to_string(), v.to_string()])?;
            }
            w.flush()?;
            Ok(())
        };
        write().map_err(|e| Error::Table {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

fn check_grid<T: Real>(grid: &[T]) -> Result<()> {
    if let Some(i) = grid.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite wavelength at {i}")));
    }
    if let Some(i) = grid.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::invalid(format!(
            "wavelength grid not strictly increasing at {}",
            i + 1
        )));
    }
    Ok(())
}

fn interp<T: Real>(xs: &[T], ys: &[T], x: T) -> Option<T> {
    let n = xs.len();
    if n == 0 || x < xs[0] || x > xs[n - 1] {
        return None;
    }
    let i = xs.partition_point(|&v| v <= x);
    if i == n {
        return Some(ys[n - 1]);
    }
    let (x0, x1) = (xs[i - 1], xs[i]);
    let w = (x - x0) / (x1 - x0);
    Some(ys[i - 1] + w * (ys[i] - ys[i - 1]))
}

/// Smooth spectral shape of the illumination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SolarEnvelope {
    /// `E(λ) = 1`.
    Flat,
    /// Planck curve at the given temperature, normalized to 1 at its peak.
    Blackbody { temperature_k: f64 },
}

impl SolarEnvelope {
    pub const SUN: SolarEnvelope = SolarEnvelope::Blackbody { temperature_k: 5778.0 };

    pub fn eval(&self, wavelength_nm: f64) -> f64 {
        match *self {
            SolarEnvelope::Flat => 1.0,
            SolarEnvelope::Blackbody { temperature_k } => {
                // hc/k in nm·K
                const C2: f64 = 1.438_776_877e7;
                let planck = |l: f64| l.powi(-5) / ((C2 / (l * temperature_k)).exp() - 1.0);
                let peak = 2.897_771_955e6 / temperature_k;
                planck(wavelength_nm) / planck(peak)
            }
        }
    }
}

/// Top-of-atmosphere radiance on a fine wavelength grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSpectrum<T> {
    grid: Vec<T>,
    radiance: Vec<T>,
}

impl<T: Real> ReferenceSpectrum<T> {
    pub fn new(grid: Vec<T>, radiance: Vec<T>) -> Result<Self> {
        if grid.len() != radiance.len() {
            return Err(Error::LengthMismatch {
                what: "reference grid vs radiance",
                left: grid.len(),
                right: radiance.len(),
            });
        }
        if grid.len() < 2 {
            return Err(Error::invalid("reference spectrum needs at least two samples"));
        }
        check_grid(&grid)?;
        if let Some(i) = radiance.iter().position(|&v| !v.is_finite() || v < T::zero()) {
            return Err(Error::invalid(format!(
                "reference radiance must be finite and >= 0 (sample {i})"
            )));
        }
        Ok(Self { grid, radiance })
    }

    pub fn grid(&self) -> &[T] {
        &self.grid
    }

    pub fn radiance(&self) -> &[T] {
        &self.radiance
    }

    /// Pointwise product with a transmittance-like factor on the same grid.
    pub fn attenuated(&self, factor: impl Fn(usize) -> T) -> Result<Self> {
        let radiance = self.radiance.iter().enumerate().map(|(i, &r)| r * factor(i)).collect();
        Self::new(self.grid.clone(), radiance)
    }
}

/// `radiance(λ) = solar_scale · E(λ) · T(λ)`.
pub fn simulate_reference<T: Real>(
    transmittance: &SpectralTable<T>,
    envelope: SolarEnvelope,
    solar_scale: T,
) -> Result<ReferenceSpectrum<T>> {
    if let Some(i) = transmittance
        .values
        .iter()
        .position(|&t| !(t >= T::zero() && t <= T::one()))
    {
        return Err(Error::invalid(format!(
            "transmittance {} at sample {i} outside [0,1]",
            transmittance.values[i]
        )));
    }
    if !(solar_scale >= T::zero()) || !solar_scale.is_finite() {
        return Err(Error::invalid("solar scale must be finite and >= 0"));
    }
    let radiance = transmittance
        .wavelengths
        .iter()
        .zip(&transmittance.values)
        .map(|(&l, &t)| solar_scale * T::lit(envelope.eval(l.as_f64())) * t)
        .collect();
    ReferenceSpectrum::new(transmittance.wavelengths.clone(), radiance)
}

/// Response-weighted mean of `values` (on `grid`) for one Gaussian band.
fn band_response<T: Real>(grid: &[T], values: &[T], center: T, fwhm: T) -> Result<T> {
    let n = grid.len();
    let margin = T::lit(EDGE_MARGIN_FWHM) * fwhm;
    if !(fwhm > T::zero()) || center - margin < grid[0] || center + margin > grid[n - 1] {
        return Err(Error::invalid(format!(
            "band at {center} nm (fwhm {fwhm}) too close to the reference grid edge [{}, {}]",
            grid[0],
            grid[n - 1]
        )));
    }
    let sigma = fwhm * T::lit(FWHM_TO_SIGMA);
    let half = T::lit(SRF_TRUNCATION_SIGMA) * sigma;
    let (lo, hi) = (center - half, center + half);
    // interior nodes strictly inside (lo, hi)
    let i0 = grid.partition_point(|&g| g <= lo);
    let i1 = grid.partition_point(|&g| g < hi);
    let max_step = fwhm / T::lit(MIN_SAMPLES_PER_FWHM);
    let first = i0.saturating_sub(1);
    let last = i1.min(n - 1);
    if grid[first..=last]
        .windows(2)
        .any(|w| w[1] - w[0] > max_step * T::lit(1.0 + 1e-9))
    {
        return Err(Error::invalid(format!(
            "reference grid too coarse at {center} nm: need >= {MIN_SAMPLES_PER_FWHM} samples per fwhm {fwhm}"
        )));
    }
    let inv2s2 = T::one() / (T::lit(2.0) * sigma * sigma);
    let gauss = |l: T| (-(l - center) * (l - center) * inv2s2).exp();
    let at = |l: T| interp(grid, values, l).expect("inside grid");

    let mut prev = (lo, gauss(lo), at(lo));
    let (mut num, mut den) = (T::zero(), T::zero());
    let half_t = T::lit(0.5);
    let mut step = |l: T, g: T, f: T| {
        let h = l - prev.0;
        num += half_t * h * (prev.1 * prev.2 + g * f);
        den += half_t * h * (prev.1 + g);
        prev = (l, g, f);
    };
    for i in i0..i1 {
        step(grid[i], gauss(grid[i]), values[i]);
    }
    step(hi, gauss(hi), at(hi));
    Ok(num / den)
}

/// Per-band at-sensor radiance for Gaussian responses with the given centers
/// and FWHM (nm).
pub fn convolve_srf<T: Real>(reference: &ReferenceSpectrum<T>, centers: &[T], fwhm: &[T]) -> Result<Vec<T>> {
    if centers.len() != fwhm.len() {
        return Err(Error::LengthMismatch {
            what: "band centers vs fwhm",
            left: centers.len(),
            right: fwhm.len(),
        });
    }
    centers
        .iter()
        .zip(fwhm)
        .map(|(&c, &w)| band_response(&reference.grid, &reference.radiance, c, w))
        .collect()
}

/// Outcome of fitting one detector column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ColumnFit<T> {
    /// Wavelength offset added to the nominal centers, nm.
    pub offset: T,
    /// Distance criterion at the optimum.
    pub residual: T,
}

fn normalized<T: Real>(xs: &[T]) -> Option<Vec<T>> {
    let m = crate::num::mean(xs);
    if !(m.abs() > T::zero()) || !m.is_finite() {
        return None;
    }
    Some(xs.iter().map(|&x| x / m).collect())
}

/// Sum of squared differences between mean-normalized spectra.
fn distance<T: Real>(obs_norm: &[T], reference: &ReferenceSpectrum<T>, centers: &[T], fwhm: &[T], offset: T) -> T {
    let shifted: Vec<T> = centers.iter().map(|&c| c + offset).collect();
    let Ok(sim) = convolve_srf(reference, &shifted, fwhm) else {
        return T::nan();
    };
    let Some(sim) = normalized(&sim) else {
        return T::nan();
    };
    obs_norm.iter().zip(&sim).map(|(&o, &s)| (o - s) * (o - s)).sum()
}

/// Fits the wavelength offset of one column against the reference spectrum.
///
/// Grid search over `[-half_width, half_width]` at no more than
/// [`SEARCH_STEP_NM`] spacing, then a parabola through the best point and its
/// two neighbours.
pub fn recalibrate_column<T: Real>(
    observed_mean: &[T],
    reference: &ReferenceSpectrum<T>,
    centers: &[T],
    fwhm: &[T],
    half_width: T,
) -> Result<ColumnFit<T>> {
    if observed_mean.len() != centers.len() || centers.len() != fwhm.len() {
        return Err(Error::LengthMismatch {
            what: "observed spectrum vs calibration",
            left: observed_mean.len(),
            right: centers.len(),
        });
    }
    if !(half_width > T::zero()) || !half_width.is_finite() {
        return Err(Error::invalid("half_width must be > 0"));
    }
    if observed_mean.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("observed spectrum has non-finite values"));
    }
    let obs = normalized(observed_mean).ok_or(Error::FitFailed)?;

    let mut m = (2.0 * half_width.as_f64() / SEARCH_STEP_NM - 1e-9).ceil().max(2.0) as usize;
    if m % 2 == 1 {
        m += 1;
    }
    let step = half_width * T::lit(2.0) / T::lit(m as f64);
    let offsets: Vec<T> = (0..=m).map(|k| -half_width + step * T::lit(k as f64)).collect();
    let d: Vec<T> = offsets
        .iter()
        .map(|&o| distance(&obs, reference, centers, fwhm, o))
        .collect();

    let best = d
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.partial_cmp(b.1).expect("finite"))
        .map(|(i, _)| i)
        .ok_or(Error::FitFailed)?;

    let mut fit = ColumnFit {
        offset: offsets[best],
        residual: d[best],
    };
    if best > 0 && best < m {
        let (dm, d0, dp) = (d[best - 1], d[best], d[best + 1]);
        let curvature = dm - T::lit(2.0) * d0 + dp;
        if dm.is_finite() && dp.is_finite() && curvature > T::zero() {
            let shift = (step * (dm - dp) / (T::lit(2.0) * curvature)).max(-step).min(step);
            let candidate = (offsets[best] + shift).max(-half_width).min(half_width);
            let r = distance(&obs, reference, centers, fwhm, candidate);
            if r.is_finite() && r <= d0 {
                fit = ColumnFit {
                    offset: candidate,
                    residual: r,
                };
            }
        }
    }
    Ok(fit)
}

/// Per-column wavelength offsets for a scene.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecalibrationResult<T> {
    /// Offset per column, nm; zero for failed columns.
    pub offsets: Vec<T>,
    /// Fit residual per column; NaN-free, zero for failed columns.
    pub residuals: Vec<T>,
    /// Columns whose fit failed.
    pub failed: Vec<usize>,
}

/// Fits every column's mean spectrum (over rows) independently. `bands`
/// restricts the fit to a spectral window.
pub fn recalibrate_cube<T: Real>(
    cube: &HyperCube<T>,
    reference: &ReferenceSpectrum<T>,
    half_width: T,
    bands: Range<usize>,
) -> Result<RecalibrationResult<T>> {
    if bands.start >= bands.end || bands.end > cube.bands() {
        return Err(Error::invalid(format!(
            "band window {}..{} not within 0..{}",
            bands.start,
            bands.end,
            cube.bands()
        )));
    }
    let cal = cube.calibration();
    let fits: Vec<Result<ColumnFit<T>>> = (0..cube.cols())
        .into_par_iter()
        .map(|c| {
            let mean = cube.column_mean(c)?;
            recalibrate_column(
                &mean[bands.clone()],
                reference,
                &cal.centers(c)[bands.clone()],
                &cal.fwhm(c)[bands.clone()],
                half_width,
            )
        })
        .collect();
    let mut out = RecalibrationResult {
        offsets: Vec::with_capacity(fits.len()),
        residuals: Vec::with_capacity(fits.len()),
        failed: Vec::new(),
    };
    for (c, fit) in fits.into_iter().enumerate() {
        match fit {
            Ok(f) => {
                out.offsets.push(f.offset);
                out.residuals.push(f.residual);
            }
            Err(e) => {
                log::warn!("recalibration failed for column {c}: {e}");
                out.offsets.push(T::zero());
                out.residuals.push(T::zero());
                out.failed.push(c);
            }
        }
    }
    Ok(out)
}

/// Fractional radiance change per ppb of added XCH₄, one value per band.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitAbsorptionSpectrum<T> {
    k: Vec<T>,
}

impl<T: Real> UnitAbsorptionSpectrum<T> {
    pub fn new(k_per_ppb: Vec<T>) -> Result<Self> {
        if let Some(i) = k_per_ppb.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite k at band {i}")));
        }
        Ok(Self { k: k_per_ppb })
    }

    /// From a Jacobian expressed per ppm.
    pub fn from_per_ppm(k_per_ppm: &[T]) -> Result<Self> {
        Self::new(k_per_ppm.iter().map(|&v| v / T::lit(1000.0)).collect())
    }

    pub fn values(&self) -> &[T] {
        &self.k
    }

    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    pub fn window(&self, bands: Range<usize>) -> Result<Self> {
        if bands.end > self.k.len() || bands.start > bands.end {
            return Err(Error::OutOfRange {
                index: bands.end,
                limit: self.k.len(),
            });
        }
        Ok(Self {
            k: self.k[bands].to_vec(),
        })
    }

    /// CSV with header `band_index,k_per_ppb`, rows in band order.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let table_err = |message: String| Error::Table {
            path: path.to_path_buf(),
            message,
        };
        let mut rdr = csv::Reader::from_path(path).map_err(|e| table_err(e.to_string()))?;
        let headers = rdr.headers().map_err(|e| table_err(e.to_string()))?.clone();
        if headers.len() != 2 || &headers[0] != "band_index" || &headers[1] != "k_per_ppb" {
            return Err(table_err(format!(
                "expected header band_index,k_per_ppb, found {headers:?}"
            )));
        }
        let mut k = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| table_err(e.to_string()))?;
            let idx: usize = rec[0]
                .trim()
                .parse()
                .map_err(|e| table_err(format!("row {}: {e}", i + 1)))?;
            if idx != i {
                return Err(table_err(format!("row {}: band_index {idx}, expected {i}", i + 1)));
            }
            let v: f64 = rec[1]
                .trim()
                .parse()
                .map_err(|e| table_err(format!("row {}: {e}", i + 1)))?;
            k.push(T::lit(v));
        }
        Self::new(k).map_err(|e| table_err(e.to_string()))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let err = |e: csv::Error| Error::Table {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record(["band_index", "k_per_ppb"]).map_err(err)?;
        for (i, v) in self.k.iter().enumerate() {
            w.write_record([i.to_string(), v.to_string()]).map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Finite-difference methane Jacobian of the band radiances.
///
/// `cross_section` is the optical depth per ppb, interpolated onto the
/// reference grid. With `T(λ; X) = T₀(λ)·exp(−X·σ(λ))`,
/// `k_b = (s_b(Δ) − s_b(0)) / (Δ · s_b(0))`.
pub fn methane_jacobian<T: Real>(
    reference: &ReferenceSpectrum<T>,
    cross_section: &SpectralTable<T>,
    centers: &[T],
    fwhm: &[T],
    delta_ppb: T,
) -> Result<UnitAbsorptionSpectrum<T>> {
    if !(delta_ppb > T::zero()) || !delta_ppb.is_finite() {
        return Err(Error::invalid("delta_ppb must be > 0"));
    }
    let sigma: Vec<T> = reference
        .grid
        .iter()
        .map(|&l| {
            cross_section
                .interpolate(l)
                .ok_or_else(|| Error::invalid(format!("cross-section table does not cover {l} nm")))
        })
        .collect::<Result<_>>()?;
    if let Some(i) = sigma.iter().position(|&s| s < T::zero()) {
        return Err(Error::invalid(format!("negative cross-section at grid sample {i}")));
    }
    let base = convolve_srf(reference, centers, fwhm)?;
    let perturbed = convolve_srf(&reference.attenuated(|i| (-delta_ppb * sigma[i]).exp())?, centers, fwhm)?;
    let k = base
        .iter()
        .zip(&perturbed)
        .enumerate()
        .map(|(b, (&s0, &s1))| {
            if s0 == T::zero() {
                Err(Error::invalid(format!("zero simulated radiance at band {b}")))
            } else {
                Ok((s1 - s0) / (delta_ppb * s0))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    UnitAbsorptionSpectrum::new(k)
}

/// Analytic toy SWIR atmosphere on `[start_nm, end_nm]` at `step_nm`.
///
/// Returns `(transmittance, methane cross-section per ppm)`. Methane lines sit
/// in 2200–2400 nm; broader water-like features are spread across the window
/// so every column has structure to lock the wavelength fit on. The
/// transmittance already includes a 1.9 ppm methane background.
pub fn toy_atmosphere(start_nm: f64, end_nm: f64, step_nm: f64) -> Result<(SpectralTable<f64>, SpectralTable<f64>)> {
    if !(end_nm > start_nm) || !(step_nm > 0.0) {
        return Err(Error::invalid("toy atmosphere needs start < end and step > 0"));
    }
    let n = ((end_nm - start_nm) / step_nm).round() as usize + 1;
    let grid: Vec<f64> = (0..n).map(|i| start_nm + step_nm * i as f64).collect();
    let line = |l: f64, c: f64, w: f64, a: f64| a * (-0.5 * ((l - c) / w).powi(2)).exp();
    let ch4 = |l: f64| {
        let mut s = 0.0;
        // P-branch-like comb plus a Q-branch cluster near 2317 nm
        for j in 0..24 {
            let c = 2210.0 + 7.5 * j as f64;
            let a = 0.035 * (1.0 + 0.6 * ((j as f64) * 0.9).sin().abs());
            s += line(l, c, 1.2 + 0.05 * (j % 5) as f64, a);
        }
        s + line(l, 2317.0, 3.0, 0.12) + line(l, 2372.0, 2.5, 0.06)
    };
    let h2o = |l: f64| {
        [
            (2130.0, 6.0, 0.25),
            (2175.0, 4.0, 0.15),
            (2395.0, 8.0, 0.35),
            (2430.0, 5.0, 0.30),
            (2262.0, 2.0, 0.08),
        ]
        .iter()
        .map(|&(c, w, a)| line(l, c, w, a))
        .sum::<f64>()
    };
    let sigma: Vec<f64> = grid.iter().map(|&l| ch4(l)).collect();
    let trans: Vec<f64> = grid
        .iter()
        .zip(&sigma)
        .map(|(&l, &s)| (-1.9 * s - h2o(l)).exp())
        .collect();
    Ok((
        SpectralTable::new(grid.clone(), trans)?,
        SpectralTable::new(grid, sigma)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_table(value: f64) -> SpectralTable<f64> {
        let grid: Vec<f64> = (0..2001).map(|i| 2000.0 + 0.1 * i as f64).collect();
        SpectralTable::new(grid.clone(), vec![value; grid.len()]).unwrap()
    }

    #[test]
    fn flat_envelope_unit_transmittance() {
        let r = simulate_reference(&flat_table(1.0), SolarEnvelope::Flat, 2.0).unwrap();
        assert!(r.radiance().iter().all(|&v| v == 2.0));
        let r = simulate_reference(&flat_table(0.0), SolarEnvelope::Flat, 2.0).unwrap();
        assert!(r.radiance().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn absorption_dip_is_local() {
        let mut t = flat_table(1.0);
        t.values[1000] = 0.5;
        let r = simulate_reference(&t, SolarEnvelope::Flat, 3.0).unwrap();
        for (i, &v) in r.radiance().iter().enumerate() {
            assert_eq!(v, if i == 1000 { 1.5 } else { 3.0 });
        }
    }

    #[test]
    fn transmittance_out_of_range() {
        assert!(simulate_reference(&flat_table(1.1), SolarEnvelope::Flat, 1.0).is_err());
        assert!(simulate_reference(&flat_table(-0.1), SolarEnvelope::Flat, 1.0).is_err());
    }

    #[test]
    fn blackbody_peaks_at_one() {
        let sun = SolarEnvelope::SUN;
        let peak = 2.897_771_955e6 / 5778.0;
        assert!((sun.eval(peak) - 1.0).abs() < 1e-12);
        assert!(sun.eval(2300.0) < sun.eval(1000.0));
    }

    #[test]
    fn constant_reference_convolves_to_constant() {
        let r = simulate_reference(&flat_table(0.7), SolarEnvelope::Flat, 1.0).unwrap();
        let out = convolve_srf(&r, &[2050.0, 2100.33, 2150.0], &[10.0, 7.3, 12.0]).unwrap();
        for v in out {
            assert!((v - 0.7).abs() <= 1e-10 * 0.7);
        }
    }

    #[test]
    fn edge_and_resolution_checks() {
        let r = simulate_reference(&flat_table(1.0), SolarEnvelope::Flat, 1.0).unwrap();
        // 3 fwhm = 30 nm, grid starts at 2000
        assert!(convolve_srf(&r, &[2029.0], &[10.0]).is_err());
        assert!(convolve_srf(&r, &[2031.0], &[10.0]).is_ok());
        // grid step 0.1 nm needs fwhm >= 1 nm
        assert!(convolve_srf(&r, &[2100.0], &[0.5]).is_err());
        assert!(convolve_srf(&r, &[2100.0], &[1.0]).is_ok());
    }

    #[test]
    fn jacobian_zero_without_absorption() {
        let r = simulate_reference(&flat_table(1.0), SolarEnvelope::Flat, 1.0).unwrap();
        let k = methane_jacobian(&r, &flat_table(0.0), &[2100.0, 2120.0], &[10.0, 10.0], 100.0).unwrap();
        assert!(k.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn jacobian_single_band_closed_form() {
        let r = simulate_reference(&flat_table(1.0), SolarEnvelope::Flat, 1.0).unwrap();
        let (sigma, delta) = (2e-4, 50.0);
        let k = methane_jacobian(&r, &flat_table(sigma), &[2100.0], &[10.0], delta).unwrap();
        let expected = ((-delta * sigma).exp() - 1.0) / delta;
        assert!((k.values()[0] - expected).abs() < 1e-12 * expected.abs());
    }

    #[test]
    fn per_ppm_conversion() {
        let k = UnitAbsorptionSpectrum::from_per_ppm(&[-2.0f64, 0.0]).unwrap();
        assert_eq!(k.values(), &[-0.002, 0.0]);
    }

    #[test]
    fn recalibration_rejects_bad_input() {
        let r = simulate_reference(&flat_table(1.0), SolarEnvelope::Flat, 1.0).unwrap();
        assert!(recalibrate_column(&[1.0, 1.0], &r, &[2100.0, 2110.0], &[10.0, 10.0], 0.0).is_err());
        assert!(recalibrate_column(&[1.0, f64::NAN], &r, &[2100.0, 2110.0], &[10.0, 10.0], 1.0).is_err());
        // every candidate offset puts the band off the grid
        assert!(matches!(
            recalibrate_column(&[1.0], &r, &[2010.0], &[10.0], 1.0),
            Err(Error::FitFailed)
        ));
    }
}
