//! Per-column matched filter turning radiance into XCH₄ enhancement (ppb).
//!
//! Each detector column has its own mean and covariance. With the shrunk
//! covariance `S = (1−λ)Σ + λ·(tr Σ / d)·I` and target `t = μ ∘ k`,
//! `α(x) = (x−μ)ᵀ S⁻¹ t / (tᵀ S⁻¹ t)`. `S⁻¹ t` comes from one Cholesky solve,
//! after which every row costs a single dot product.

use std::ops::Range;

use rayon::prelude::*;
use serde::Serialize;

use crate::datacube::{EnhancementMap, HyperCube};
use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky, Matrix};
use crate::num::Real;
use crate::spectral::UnitAbsorptionSpectrum;

pub const DEFAULT_SHRINKAGE: f64 = 0.05;
/// `tᵀS⁻¹t` below this fraction of `‖t‖²` marks a degenerate target.
pub const DEGENERATE_TARGET_RATIO: f64 = 1e-12;

/// Mean spectrum and population covariance of one detector column.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnStats<T> {
    pub mu: Vec<T>,
    pub sigma: Matrix<T>,
    pub n: usize,
}

impl<T: Real> ColumnStats<T> {
    pub fn bands(&self) -> usize {
        self.mu.len()
    }

    /// `(1−λ)Σ + λ·(tr Σ / d)·I`.
    pub fn shrunk_covariance(&self, shrinkage: T) -> Matrix<T> {
        let d = self.bands();
        let target = self.sigma.trace() / T::lit(d as f64);
        let keep = T::one() - shrinkage;
        let mut s = self.sigma.clone();
        for i in 0..d {
            for j in 0..d {
                s[(i, j)] *= keep;
            }
            s[(i, i)] += shrinkage * target;
        }
        s
    }
}

/// Column mean and `1/n` covariance of a `rows × bands` matrix.
pub fn column_stats<T: Real>(spectra: &Matrix<T>) -> Result<ColumnStats<T>> {
    let (n, d) = (spectra.rows(), spectra.cols());
    if n < 2 {
        return Err(Error::invalid(format!(
            "column statistics need at least 2 rows, got {n}"
        )));
    }
    let inv_n = T::one() / T::lit(n as f64);
    let mut mu = vec![T::zero(); d];
    for r in 0..n {
        for (m, &x) in mu.iter_mut().zip(spectra.row(r)) {
            *m += x;
        }
    }
    mu.iter_mut().for_each(|m| *m *= inv_n);

    let mut sigma = Matrix::zeros(d, d);
    let mut centered = vec![T::zero(); d];
    for r in 0..n {
        for ((c, &x), &m) in centered.iter_mut().zip(spectra.row(r)).zip(&mu) {
            *c = x - m;
        }
        for i in 0..d {
            let ci = centered[i];
            let row = sigma.row_mut(i);
            for j in i..d {
                row[j] += ci * centered[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = sigma[(i, j)] * inv_n;
            sigma[(i, j)] = v;
            sigma[(j, i)] = v;
        }
    }
    Ok(ColumnStats { mu, sigma, n })
}

/// Expected radiance change per ppb, `t = μ ∘ k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSignature<T> {
    t: Vec<T>,
}

impl<T: Real> TargetSignature<T> {
    pub fn new(t: Vec<T>) -> Self {
        Self { t }
    }

    pub fn values(&self) -> &[T] {
        &self.t
    }

    pub fn norm_squared(&self) -> T {
        dot(&self.t, &self.t)
    }
}

pub fn build_target<T: Real>(mu: &[T], k: &UnitAbsorptionSpectrum<T>) -> Result<TargetSignature<T>> {
    if mu.len() != k.len() {
        return Err(Error::LengthMismatch {
            what: "mean spectrum vs unit absorption spectrum",
            left: mu.len(),
            right: k.len(),
        });
    }
    Ok(TargetSignature::new(
        mu.iter().zip(k.values()).map(|(&m, &kb)| m * kb).collect(),
    ))
}

/// Matched-filter output for one column plus solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnRetrieval<T> {
    pub alpha: Vec<T>,
    /// `tᵀ S⁻¹ t`; the noise std of α is `1/sqrt` of this for white residuals.
    pub target_norm: T,
    pub condition_estimate: T,
}

fn check_shrinkage<T: Real>(shrinkage: T) -> Result<()> {
    if !(shrinkage >= T::zero() && shrinkage < T::one()) {
        return Err(Error::invalid(format!("shrinkage {shrinkage} outside [0, 1)")));
    }
    Ok(())
}

/// Filter with precomputed statistics.
pub fn apply_filter<T: Real>(
    spectra: &Matrix<T>,
    stats: &ColumnStats<T>,
    target: &TargetSignature<T>,
    shrinkage: T,
) -> Result<ColumnRetrieval<T>> {
    check_shrinkage(shrinkage)?;
    let d = stats.bands();
    if spectra.cols() != d || target.values().len() != d {
        return Err(Error::LengthMismatch {
            what: "spectra/target bands vs statistics",
            left: spectra.cols().max(target.values().len()),
            right: d,
        });
    }
    let chol = Cholesky::factor(&stats.shrunk_covariance(shrinkage))?;
    let s_inv_t = chol.solve(target.values())?;
    let norm = dot(target.values(), &s_inv_t);
    if !(norm > T::lit(DEGENERATE_TARGET_RATIO) * target.norm_squared()) || !norm.is_finite() {
        return Err(Error::DegenerateTarget { value: norm.as_f64() });
    }
    // α_r = x_rᵀ w − μᵀ w with w = S⁻¹t / (tᵀS⁻¹t)
    let w: Vec<T> = s_inv_t.iter().map(|&v| v / norm).collect();
    let mut centered = vec![T::zero(); d];
    let alpha = (0..spectra.rows())
        .map(|r| {
            for ((c, &x), &m) in centered.iter_mut().zip(spectra.row(r)).zip(&stats.mu) {
                *c = x - m;
            }
            dot(&centered, &w)
        })
        .collect();
    Ok(ColumnRetrieval {
        alpha,
        target_norm: norm,
        condition_estimate: chol.condition_estimate(),
    })
}

/// Per-row enhancement α for one column's `rows × bands` spectra.
pub fn matched_filter_column<T: Real>(
    spectra: &Matrix<T>,
    target: &TargetSignature<T>,
    shrinkage: T,
) -> Result<Vec<T>> {
    let stats = column_stats(spectra)?;
    Ok(apply_filter(spectra, &stats, target, shrinkage)?.alpha)
}

/// Unit absorption spectra for the scene: one shared, or one per column.
#[derive(Debug, Clone)]
pub enum ColumnJacobians<T> {
    Shared(UnitAbsorptionSpectrum<T>),
    PerColumn(Vec<UnitAbsorptionSpectrum<T>>),
}

impl<T: Real> ColumnJacobians<T> {
    pub fn for_column(&self, col: usize) -> &UnitAbsorptionSpectrum<T> {
        match self {
            ColumnJacobians::Shared(k) => k,
            ColumnJacobians::PerColumn(ks) => &ks[col],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalOptions {
    pub shrinkage: f64,
    /// Band range used for the retrieval; all bands when `None`.
    pub window: Option<Range<usize>>,
    pub parallel: bool,
}

impl Default for RetrievalOptions {
    fn default() -> Self {
        Self {
            shrinkage: DEFAULT_SHRINKAGE,
            window: None,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnReport {
    pub column: usize,
    pub condition_estimate: Option<f64>,
    pub target_norm: Option<f64>,
    pub degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalReport {
    pub shrinkage: f64,
    pub window: [usize; 2],
    pub columns: Vec<ColumnReport>,
    pub degenerate_columns: Vec<usize>,
}

/// Value written into every pixel of a column whose filter could not be built.
pub const DEGENERATE_FILL: f64 = 0.0;

fn retrieve_column<T: Real>(
    cube: &HyperCube<T>,
    col: usize,
    k: &UnitAbsorptionSpectrum<T>,
    shrinkage: T,
    window: &Range<usize>,
) -> Result<ColumnRetrieval<T>> {
    let spectra = cube.column_spectra_window(col, window.clone())?;
    let stats = column_stats(&spectra)?;
    let target = build_target(&stats.mu, &k.window(window.clone())?)?;
    apply_filter(&spectra, &stats, &target, shrinkage).map_err(|e| match e {
        Error::NotPositiveDefinite { .. } => Error::NotPositiveDefinite { column: Some(col) },
        other => other,
    })
}

/// XCH₄ enhancement map of a scene. Columns are independent; degenerate
/// columns are filled with [`DEGENERATE_FILL`] and listed in the report.
pub fn retrieve_xch4<T: Real>(
    cube: &HyperCube<T>,
    jacobians: &ColumnJacobians<T>,
    options: &RetrievalOptions,
) -> Result<(EnhancementMap<T>, RetrievalReport)> {
    let shrinkage = T::lit(options.shrinkage);
    check_shrinkage(shrinkage)?;
    let window = options.window.clone().unwrap_or(0..cube.bands());
    if window.start >= window.end || window.end > cube.bands() {
        return Err(Error::invalid(format!(
            "band window {}..{} not within 0..{}",
            window.start,
            window.end,
            cube.bands()
        )));
    }
    match jacobians {
        ColumnJacobians::Shared(k) if k.len() != cube.bands() => {
            return Err(Error::LengthMismatch {
                what: "jacobian bands vs cube bands",
                left: k.len(),
                right: cube.bands(),
            })
        }
        ColumnJacobians::PerColumn(ks) if ks.len() != cube.cols() || ks.iter().any(|k| k.len() != cube.bands()) => {
            return Err(Error::invalid(
                "per-column jacobians must have one entry of cube.bands() values per column",
            ))
        }
        _ => {}
    }
    if cube.rows() < 2 {
        return Err(Error::invalid("retrieval needs at least 2 rows"));
    }

    let run = |col: usize| retrieve_column(cube, col, jacobians.for_column(col), shrinkage, &window);
    let results: Vec<Result<ColumnRetrieval<T>>> = if options.parallel {
        (0..cube.cols()).into_par_iter().map(run).collect()
    } else {
        (0..cube.cols()).map(run).collect()
    };

    let (rows, cols) = (cube.rows(), cube.cols());
    let mut values = vec![T::lit(DEGENERATE_FILL); rows * cols];
    let mut report = RetrievalReport {
        shrinkage: options.shrinkage,
        window: [window.start, window.end],
        columns: Vec::with_capacity(cols),
        degenerate_columns: Vec::new(),
    };
    for (col, res) in results.into_iter().enumerate() {
        match res {
            Ok(r) => {
                for (row, a) in r.alpha.into_iter().enumerate() {
                    values[row * cols + col] = a;
                }
                report.columns.push(ColumnReport {
                    column: col,
                    condition_estimate: Some(r.condition_estimate.as_f64()),
                    target_norm: Some(r.target_norm.as_f64()),
                    degenerate: false,
                    reason: None,
                });
            }
            Err(e) => {
                log::warn!("column {col} degenerate: {e}");
                report.degenerate_columns.push(col);
                report.columns.push(ColumnReport {
                    column: col,
                    condition_estimate: None,
                    target_norm: None,
                    degenerate: true,
                    reason: Some(e.to_string()),
                });
            }
        }
    }
    Ok((EnhancementMap::new(rows, cols, values)?, report))
}
