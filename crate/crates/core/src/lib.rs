//! Methane plume toolkit for pushbroom imaging spectrometers.
//!
//! The pipeline runs from radiance cubes to evaluated plume masks:
//!
//! * [`spectral`]: reference spectra, spectral response convolution, per-column
//!   wavelength recalibration and the unit methane absorption Jacobian.
//! * [`matchedfilter`]: per-column matched filter producing XCH₄ enhancement maps.
//! * [`plumetransfer`]: synthetic training scenes built by transferring donor
//!   plume shapes onto plume-free backgrounds with gamma-distributed intensities.
//! * [`scenesim`]: Gaussian-plume scenes with known ground truth.
//! * [`detection`]: hysteresis thresholding of probability maps.
//! * [`metrics`]: mask-level detection and pixel segmentation scores.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases at the
//! crate root fix the scalar for the common cases.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datacube;
pub mod detection;
pub mod error;
pub mod linalg;
pub mod matchedfilter;
pub mod metrics;
pub mod num;
pub mod plumetransfer;
pub mod scenesim;
pub mod spectral;

pub use error::{Error, Result};
pub use num::Real;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type Cube = datacube::HyperCube<f64>;
pub type Cube32 = datacube::HyperCube<f32>;
pub type Calibration = datacube::SpectralCalibration<f64>;
pub type Xch4Map = datacube::EnhancementMap<f64>;
pub type Xch4Map32 = datacube::EnhancementMap<f32>;
pub type ProbMap = datacube::ProbabilityMap<f64>;
pub type ProbMap32 = datacube::ProbabilityMap<f32>;
pub type Template = plumetransfer::PlumeTemplate<f64>;
pub type Sample = plumetransfer::SyntheticSample<f64>;
