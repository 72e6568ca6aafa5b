//! Gaussian-plume scenes with analytic ground truth.
//!
//! Plumes are column-integrated: the vertical Gaussian is integrated out, so
//! only the crosswind spread `σ_y(x) = a·xᵖ` remains. Wind direction is in
//! degrees with 0° pointing along `+col` and 90° along `−row` (up the image).

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::datacube::{read_json, EnhancementMap, HyperCube, InstanceMaskSet, MapFile, SpectralCalibration};
use crate::detection::{label_components, Connectivity};
use crate::error::{Error, Result};
use crate::num::Real;
use crate::plumetransfer::{cos_sin_deg, SyntheticSample};
use crate::spectral::{convolve_srf, methane_jacobian, ReferenceSpectrum, SpectralTable};

pub const DEFAULT_DISPERSION_A: f64 = 0.08;
pub const DEFAULT_DISPERSION_P: f64 = 0.9;
pub const DEFAULT_MASK_FLOOR_FRACTION: f64 = 0.01;

fn default_a() -> f64 {
    DEFAULT_DISPERSION_A
}

fn default_p() -> f64 {
    DEFAULT_DISPERSION_P
}

fn default_floor() -> f64 {
    DEFAULT_MASK_FLOOR_FRACTION
}

/// One point source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianPlumeSpec {
    /// Source strength in ppb·m²/s column units.
    pub q: f64,
    /// Wind speed, m/s.
    pub wind_speed: f64,
    pub wind_dir_deg: f64,
    /// Source pixel `(row, col)`; may be fractional or off-grid.
    pub source: (f64, f64),
    #[serde(default = "default_a")]
    pub a: f64,
    #[serde(default = "default_p")]
    pub p: f64,
    /// Ground sampling distance, m.
    pub pixel_size: f64,
}

impl GaussianPlumeSpec {
    pub fn new(q: f64, wind_speed: f64, wind_dir_deg: f64, source: (f64, f64), pixel_size: f64) -> Result<Self> {
        let spec = Self {
            q,
            wind_speed,
            wind_dir_deg,
            source,
            a: DEFAULT_DISPERSION_A,
            p: DEFAULT_DISPERSION_P,
            pixel_size,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_dispersion(mut self, a: f64, p: f64) -> Result<Self> {
        self.a = a;
        self.p = p;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.q) {
            return Err(Error::invalid(format!("plume q must be > 0, got {}", self.q)));
        }
        if !pos(self.wind_speed) {
            return Err(Error::invalid(format!(
                "wind_speed must be > 0, got {}",
                self.wind_speed
            )));
        }
        if !pos(self.a) {
            return Err(Error::invalid(format!("dispersion a must be > 0, got {}", self.a)));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::invalid(format!(
                "dispersion p must be in (0, 1], got {}",
                self.p
            )));
        }
        if !pos(self.pixel_size) {
            return Err(Error::invalid(format!(
                "pixel_size must be > 0, got {}",
                self.pixel_size
            )));
        }
        if !self.wind_dir_deg.is_finite() || !self.source.0.is_finite() || !self.source.1.is_finite() {
            return Err(Error::invalid("wind direction and source must be finite"));
        }
        Ok(())
    }

    pub fn sigma_y(&self, x_m: f64) -> f64 {
        self.a * x_m.powf(self.p)
    }

    /// Column enhancement at downwind distance `x` and crosswind offset `y`, in metres.
    pub fn value_at(&self, x_m: f64, y_m: f64) -> f64 {
        if x_m <= 0.0 {
            return 0.0;
        }
        let s = self.sigma_y(x_m);
        self.q / ((2.0 * std::f64::consts::PI).sqrt() * self.wind_speed * s) * (-(y_m * y_m) / (2.0 * s * s)).exp()
    }

    /// `(downwind, crosswind)` coordinates of a pixel centre, in metres.
    pub fn plume_coords(&self, row: usize, col: usize) -> (f64, f64) {
        let (c, s) = cos_sin_deg(self.wind_dir_deg);
        let dc = col as f64 - self.source.1;
        let dr = row as f64 - self.source.0;
        let x = dc * c - dr * s;
        let y = dc * s + dr * c;
        (x * self.pixel_size, y * self.pixel_size)
    }
}

fn field_f64(spec: &GaussianPlumeSpec, rows: usize, cols: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let (x, y) = spec.plume_coords(r, c);
            out.push(spec.value_at(x, y));
        }
    }
    out
}

/// Noiseless enhancement field of one source on a `rows × cols` grid.
pub fn gaussian_plume_field<T: Real>(spec: &GaussianPlumeSpec, rows: usize, cols: usize) -> Result<EnhancementMap<T>> {
    spec.validate()?;
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("scene shape must be positive"));
    }
    EnhancementMap::new(
        rows,
        cols,
        field_f64(spec, rows, cols).into_iter().map(T::lit).collect(),
    )
}

/// Scene description read by the `simulate` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSceneSpec {
    pub rows: usize,
    pub cols: usize,
    pub noise_std: f64,
    #[serde(default = "default_floor")]
    pub mask_floor_fraction: f64,
    pub seed: u64,
    pub plumes: Vec<GaussianPlumeSpec>,
}

impl OracleSceneSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let spec: Self = read_json(path.as_ref())?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::invalid("scene rows and cols must be positive"));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::invalid("noise_std must be finite and >= 0"));
        }
        if !(self.mask_floor_fraction > 0.0 && self.mask_floor_fraction < 1.0) {
            return Err(Error::invalid("mask_floor_fraction must be in (0, 1)"));
        }
        self.plumes.iter().try_for_each(GaussianPlumeSpec::validate)
    }

    pub fn generate<T: Real>(&self) -> Result<SyntheticSample<T>> {
        self.validate()?;
        make_oracle_scene(
            &self.plumes,
            (self.rows, self.cols),
            self.noise_std,
            self.mask_floor_fraction,
            self.seed,
        )
    }
}

/// Sum of plume fields plus white Gaussian noise.
///
/// Truth instances are the 8-connected components of the noiseless field at or
/// above `mask_floor_fraction` of its maximum. The recorded SBR of each
/// instance is its mean noiseless enhancement over `noise_std` (infinite when
/// the scene is noiseless).
pub fn make_oracle_scene<T: Real>(
    specs: &[GaussianPlumeSpec],
    shape: (usize, usize),
    noise_std: f64,
    mask_floor_fraction: f64,
    seed: u64,
) -> Result<SyntheticSample<T>> {
    let (rows, cols) = shape;
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("scene shape must be positive"));
    }
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(Error::invalid("noise_std must be finite and >= 0"));
    }
    if !(mask_floor_fraction > 0.0 && mask_floor_fraction < 1.0) {
        return Err(Error::invalid("mask_floor_fraction must be in (0, 1)"));
    }
    let mut clean = vec![0.0f64; rows * cols];
    for spec in specs {
        spec.validate()?;
        for (acc, v) in clean.iter_mut().zip(field_f64(spec, rows, cols)) {
            *acc += v;
        }
    }
    let peak = clean.iter().copied().fold(0.0, f64::max);
    let mut warnings = Vec::new();
    let components = if peak > 0.0 {
        let floor = mask_floor_fraction * peak;
        let mask: Vec<bool> = clean.iter().map(|&v| v >= floor).collect();
        label_components(&mask, rows, cols, Connectivity::Eight)
    } else {
        if !specs.is_empty() {
            warnings.push("no plume reaches the grid; truth is empty".to_string());
        }
        Vec::new()
    };
    let sbr = components
        .iter()
        .map(|c| {
            let mean = c.iter().map(|&i| clean[i]).sum::<f64>() / c.len() as f64;
            T::lit(if noise_std > 0.0 {
                mean / noise_std
            } else {
                f64::INFINITY
            })
        })
        .collect();
    let truth = InstanceMaskSet::from_pixel_lists(rows, cols, &components)?;

    let mut values = clean;
    if noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_std).map_err(|e| Error::invalid(e.to_string()))?;
        for v in values.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    let map = EnhancementMap::new(rows, cols, values.into_iter().map(T::lit).collect())?;
    Ok(SyntheticSample {
        map,
        truth,
        sbr,
        rng_seed: seed,
        background_index: 0,
        plumes: Vec::new(),
        warnings,
    })
}

/// Radiance cube observing an enhancement map through the linearized forward
/// model `x = s_b·(1 + k_b·E) + ε`.
///
/// Column `c` is observed at the nominal band centres shifted by
/// `true_shifts[c]`; the stored calibration is the nominal one, so the shifts
/// are what recalibration has to find.
pub fn render_radiance_cube<T: Real>(
    map: &EnhancementMap<T>,
    reference: &ReferenceSpectrum<T>,
    cross_section_per_ppb: &SpectralTable<T>,
    nominal: &SpectralCalibration<T>,
    true_shifts: &[T],
    noise_std: T,
    seed: u64,
) -> Result<HyperCube<T>> {
    let (rows, cols) = (map.rows(), map.cols());
    if nominal.cols() != cols {
        return Err(Error::LengthMismatch {
            what: "calibration columns vs map columns",
            left: nominal.cols(),
            right: cols,
        });
    }
    if true_shifts.len() != cols {
        return Err(Error::LengthMismatch {
            what: "true shifts vs map columns",
            left: true_shifts.len(),
            right: cols,
        });
    }
    if !(noise_std >= T::zero()) || !noise_std.is_finite() {
        return Err(Error::invalid("noise_std must be finite and >= 0"));
    }
    let bands = nominal.bands();
    let actual = nominal.shifted(true_shifts)?;
    let mut signal = Vec::with_capacity(cols);
    let mut jac = Vec::with_capacity(cols);
    for c in 0..cols {
        signal.push(convolve_srf(reference, actual.centers(c), actual.fwhm(c))?);
        jac.push(methane_jacobian(
            reference,
            cross_section_per_ppb,
            actual.centers(c),
            actual.fwhm(c),
            T::lit(1.0),
        )?);
    }
    let normal = Normal::new(0.0, noise_std.as_f64()).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![T::zero(); rows * cols * bands];
    let e = map.values();
    for b in 0..bands {
        for r in 0..rows {
            for c in 0..cols {
                let s = signal[c][b];
                let k = jac[c].values()[b];
                let mut x = s * (T::one() + k * e[r * cols + c]);
                if noise_std > T::zero() {
                    x += T::lit(normal.sample(&mut rng));
                }
                data[(b * rows + r) * cols + c] = x.max(T::zero());
            }
        }
    }
    HyperCube::new(rows, cols, bands, data, nominal.clone())
}
