//! Probability maps to plume instances: hysteresis thresholding over
//! connected components, and a robust z-score surrogate detector.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::datacube::{EnhancementMap, InstanceMaskSet, MapFile, ProbabilityMap};
use crate::error::{Error, Result};
use crate::num::{self, Real};

/// Pixel adjacency used for connected components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl TryFrom<u8> for Connectivity {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            other => Err(Error::invalid(format!("connectivity must be 4 or 8, got {other}"))),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(-1, 0), (0, -1), (0, 1), (1, 0)],
            Connectivity::Eight => &[(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)],
        }
    }
}

/// Connected components of the `true` pixels of a row-major mask. Components
/// come in order of their first pixel; each pixel list is sorted.
pub fn label_components(mask: &[bool], rows: usize, cols: usize, connectivity: Connectivity) -> Vec<Vec<usize>> {
    assert_eq!(mask.len(), rows * cols, "mask size");
    let mut seen = vec![false; mask.len()];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut comp = Vec::new();
        while let Some(p) = queue.pop_front() {
            comp.push(p);
            let (r, c) = ((p / cols) as isize, (p % cols) as isize);
            for &(dr, dc) in connectivity.offsets() {
                let (nr, nc) = (r + dr, c + dc);
                if nr < 0 || nc < 0 || nr >= rows as isize || nc >= cols as isize {
                    continue;
                }
                let q = nr as usize * cols + nc as usize;
                if mask[q] && !seen[q] {
                    seen[q] = true;
                    queue.push_back(q);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// `0 ≤ low ≤ high ≤ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HysteresisParams<T> {
    pub low: T,
    pub high: T,
}

impl<T: Real> HysteresisParams<T> {
    pub fn new(low: T, high: T) -> Result<Self> {
        if !(low >= T::zero() && low <= high && high <= T::one()) {
            return Err(Error::invalid(format!(
                "hysteresis thresholds need 0 <= low <= high <= 1 (low {low}, high {high})"
            )));
        }
        Ok(Self { low, high })
    }
}

/// Components of `{p ≥ low}` that contain at least one pixel with `p ≥ high`.
/// Instance ids are 1, 2, ... in order of first row-major pixel.
pub fn hysteresis_threshold<T: Real>(
    prob: &ProbabilityMap<T>,
    params: HysteresisParams<T>,
    connectivity: Connectivity,
) -> Result<InstanceMaskSet> {
    let params = HysteresisParams::new(params.low, params.high)?;
    let p = prob.values();
    let low_mask: Vec<bool> = p.iter().map(|&v| v >= params.low).collect();
    let kept: Vec<Vec<usize>> = label_components(&low_mask, prob.rows(), prob.cols(), connectivity)
        .into_iter()
        .filter(|comp| comp.iter().any(|&i| p[i] >= params.high))
        .collect();
    InstanceMaskSet::from_pixel_lists(prob.rows(), prob.cols(), &kept)
}

/// Consistency constant turning the MAD into a Gaussian standard deviation.
pub const MAD_TO_SIGMA: f64 = 1.4826;
/// Robust z-score at which the baseline probability crosses 0.5.
pub const BASELINE_Z_CENTER: f64 = 3.0;
pub const BASELINE_MIN_PIXELS: usize = 100;

/// Surrogate detector: `p = 1 / (1 + exp(−(z − 3)))` with
/// `z = (α − median) / (1.4826 · MAD)`.
pub fn baseline_probability<T: Real>(map: &EnhancementMap<T>) -> Result<ProbabilityMap<T>> {
    let v = map.values();
    if v.len() < BASELINE_MIN_PIXELS {
        return Err(Error::invalid(format!(
            "baseline detector needs >= {BASELINE_MIN_PIXELS} pixels, map has {}",
            v.len()
        )));
    }
    let med = num::median(v);
    let deviations: Vec<T> = v.iter().map(|&x| (x - med).abs()).collect();
    let mad = num::median(&deviations);
    if !(mad > T::zero()) {
        return Err(Error::ZeroSpread("median absolute deviation is zero"));
    }
    let scale = T::lit(MAD_TO_SIGMA) * mad;
    let center = T::lit(BASELINE_Z_CENTER);
    let p = v
        .iter()
        .map(|&x| {
            let z = (x - med) / scale;
            T::one() / (T::one() + (center - z).exp())
        })
        .collect();
    ProbabilityMap::new(map.rows(), map.cols(), p)
}
