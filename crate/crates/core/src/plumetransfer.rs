//! Synthetic training scenes: donor plume shapes re-intensified with
//! gamma-distributed enhancements and added onto plume-free backgrounds.
//!
//! One inserted plume goes through:
//! 1. draw gamma parameters from the prior and `n_pix` enhancement values,
//! 2. histogram-specify the donor values onto those draws (ranks kept),
//! 3. rotate/translate the donor pixels onto the background grid,
//! 4. add the values to the background,
//! 5. redraw the values (up to [`SBR_RETRIES`] times) until the local
//!    signal-to-background ratio reaches the requested minimum.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datacube::{self, EnhancementMap, InstanceMaskSet, MapFile, MaskInstance};
use crate::error::{Error, Result};
use crate::num::{self, Real};

/// Gamma redraws allowed per plume before it is skipped.
pub const SBR_RETRIES: usize = 20;
/// Placement attempts in [`transform_plume`].
pub const PLACEMENT_RETRY_CAP: usize = 64;
/// Dilation of the plume bounding box that defines the SBR background window.
pub const SBR_DILATION: usize = 10;
/// Minimum background pixels in the SBR window.
pub const SBR_MIN_BACKGROUND: usize = 30;

/// A donor plume: pixel offsets from its bounding-box origin and positive
/// enhancement values (ppb).
#[derive(Debug, Clone, PartialEq)]
pub struct PlumeTemplate<T> {
    pixels: Vec<(usize, usize)>,
    values: Vec<T>,
    source_id: String,
}

impl<T: Real> PlumeTemplate<T> {
    /// Pixels are re-expressed relative to their bounding-box origin.
    pub fn new(pixels: Vec<(usize, usize)>, values: Vec<T>, source_id: impl Into<String>) -> Result<Self> {
        if pixels.is_empty() {
            return Err(Error::invalid("plume template needs at least one pixel"));
        }
        if pixels.len() != values.len() {
            return Err(Error::LengthMismatch {
                what: "template pixels vs values",
                left: pixels.len(),
                right: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|&v| !(v > T::zero()) || !v.is_finite()) {
            return Err(Error::invalid(format!(
                "template value {i} must be positive and finite"
            )));
        }
        let r0 = pixels.iter().map(|p| p.0).min().unwrap_or(0);
        let c0 = pixels.iter().map(|p| p.1).min().unwrap_or(0);
        let pixels: Vec<(usize, usize)> = pixels.into_iter().map(|(r, c)| (r - r0, c - c0)).collect();
        let mut sorted = pixels.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("template pixels must be unique"));
        }
        Ok(Self {
            pixels,
            values,
            source_id: source_id.into(),
        })
    }

    /// Extracts the pixels of `instance` with a positive value in `map`.
    pub fn from_instance(
        instance: &MaskInstance,
        map: &EnhancementMap<T>,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        let cols = map.cols();
        let (pixels, values): (Vec<_>, Vec<_>) = instance
            .pixels()
            .filter(|&p| map.values()[p] > T::zero())
            .map(|p| ((p / cols, p % cols), map.values()[p]))
            .unzip();
        Self::new(pixels, values, source_id)
    }

    pub fn n_pix(&self) -> usize {
        self.pixels.len()
    }

    pub fn pixels(&self) -> &[(usize, usize)] {
        &self.pixels
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn with_values(&self, values: Vec<T>) -> Result<Self> {
        Self::new(self.pixels.clone(), values, self.source_id.clone())
    }

    pub fn centroid(&self) -> (f64, f64) {
        let n = self.pixels.len() as f64;
        let (sr, sc) = self
            .pixels
            .iter()
            .fold((0.0, 0.0), |(a, b), &(r, c)| (a + r as f64, b + c as f64));
        (sr / n, sc / n)
    }
}

/// Loads one template per instance of a donor mask file whose companion
/// enhancement map holds the values.
pub fn load_templates<T: Real>(
    mask_path: impl AsRef<Path>,
    map_path: impl AsRef<Path>,
) -> Result<Vec<PlumeTemplate<T>>> {
    let masks = datacube::load_masks(mask_path.as_ref())?;
    let map: EnhancementMap<T> = datacube::load_map(map_path.as_ref())?;
    if masks.shape() != (map.rows(), map.cols()) {
        return Err(Error::invalid(format!(
            "donor mask {:?} and map {:?} shapes differ",
            masks.shape(),
            (map.rows(), map.cols())
        )));
    }
    let stem = mask_path
        .as_ref()
        .file_name()
        .map(|s| s.to_string_lossy().trim_end_matches(".mask.json").to_string())
        .unwrap_or_default();
    let mut out = Vec::new();
    for inst in masks.instances() {
        match PlumeTemplate::from_instance(inst, &map, format!("{stem}#{}", inst.id())) {
            Ok(t) => out.push(t),
            Err(e) => log::warn!("skipping donor {stem}#{}: {e}", inst.id()),
        }
    }
    Ok(out)
}

fn files_with_suffix(dir: &Path, suffix: &str) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().is_some_and(|n| n.to_string_lossy().ends_with(suffix)))
        .collect();
    files.sort();
    Ok(files)
}

/// Every `<stem>.mask.json` in `dir` paired with `<stem>.map.json`.
pub fn load_template_dir<T: Real>(dir: impl AsRef<Path>) -> Result<Vec<PlumeTemplate<T>>> {
    let mut out = Vec::new();
    for mask in files_with_suffix(dir.as_ref(), ".mask.json")? {
        let name = mask
            .file_name()
            .expect("file")
            .to_string_lossy()
            .replace(".mask.json", ".map.json");
        out.extend(load_templates(&mask, mask.with_file_name(name))?);
    }
    Ok(out)
}

/// Every `*.map.json` enhancement map in `dir`, sorted by file name.
pub fn load_background_dir<T: Real>(dir: impl AsRef<Path>) -> Result<Vec<EnhancementMap<T>>> {
    files_with_suffix(dir.as_ref(), ".map.json")?
        .iter()
        .map(datacube::load_map)
        .collect()
}

/// Gamma distribution with `shape` k and `scale` θ (ppb).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams<T> {
    pub shape: T,
    pub scale: T,
}

impl<T: Real> GammaParams<T> {
    pub fn new(shape: T, scale: T) -> Result<Self> {
        if !(shape > T::zero() && shape.is_finite() && scale > T::zero() && scale.is_finite()) {
            return Err(Error::invalid(format!(
                "gamma parameters must be finite and > 0 (shape {shape}, scale {scale})"
            )));
        }
        Ok(Self { shape, scale })
    }

    pub fn mean(&self) -> T {
        self.shape * self.scale
    }

    pub fn variance(&self) -> T {
        self.shape * self.scale * self.scale
    }
}

/// Method-of-moments fit: `shape = m²/v`, `scale = v/m` with population variance.
pub fn fit_gamma<T: Real>(values: &[T]) -> Result<GammaParams<T>> {
    if values.len() < 2 {
        return Err(Error::invalid("gamma fit needs at least 2 samples"));
    }
    if let Some(i) = values.iter().position(|&v| !(v > T::zero()) || !v.is_finite()) {
        return Err(Error::invalid(format!("gamma fit sample {i} is not positive")));
    }
    let m = num::mean(values);
    let v = num::variance(values);
    if !(v > T::zero()) {
        return Err(Error::ZeroSpread("gamma fit samples have zero variance"));
    }
    GammaParams::new(m * m / v, v / m)
}

fn draw_gamma<T: Real, R: Rng + ?Sized>(params: &GammaParams<T>, n: usize, rng: &mut R) -> Result<Vec<T>> {
    let dist = rand_distr::Gamma::new(params.shape.as_f64(), params.scale.as_f64())
        .map_err(|e| Error::invalid(format!("gamma distribution: {e}")))?;
    Ok((0..n)
        .map(|_| {
            // f32 can round tiny draws to zero; enhancements must stay positive
            let v = T::lit(dist.sample(rng));
            if v > T::zero() {
                v
            } else {
                T::min_positive_value()
            }
        })
        .collect())
}

/// `n` i.i.d. draws, a pure function of `(params, n, seed)`.
pub fn sample_gamma<T: Real>(params: &GammaParams<T>, n: usize, seed: u64) -> Result<Vec<T>> {
    if n == 0 {
        return Err(Error::invalid("sample_gamma needs n >= 1"));
    }
    GammaParams::new(params.shape, params.scale)?;
    draw_gamma(params, n, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Empirical bag of fitted gamma parameters, sampled uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior<T> {
    params: Vec<GammaParams<T>>,
}

impl<T: Real> GammaPrior<T> {
    pub fn new(params: Vec<GammaParams<T>>) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::invalid("gamma prior is empty"));
        }
        for p in &params {
            GammaParams::new(p.shape, p.scale)?;
        }
        Ok(Self { params })
    }

    /// One fit per labeled plume; plumes that cannot be fitted are skipped.
    pub fn fit_from<'a>(plumes: impl IntoIterator<Item = &'a [T]>) -> Result<Self> {
        Self::new(plumes.into_iter().filter_map(|v| fit_gamma(v).ok()).collect())
    }

    pub fn params(&self) -> &[GammaParams<T>] {
        &self.params
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GammaParams<T> {
        self.params[rng.random_range(0..self.params.len())]
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let p: Self = datacube::read_json(path.as_ref())?;
        Self::new(p.params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        datacube::write_json(path.as_ref(), self)
    }
}

/// Replaces each source value by the target sample of the same rank.
///
/// `out[i] = sorted(targets)[rank(source[i])]`, ties in `source` ranked by
/// index.
pub fn histogram_specify<T: Real>(source: &[T], target_samples: &[T]) -> Result<Vec<T>> {
    if source.len() != target_samples.len() {
        return Err(Error::LengthMismatch {
            what: "histogram source vs target samples",
            left: source.len(),
            right: target_samples.len(),
        });
    }
    if source.iter().chain(target_samples).any(|v| v.is_nan()) {
        return Err(Error::invalid("histogram specification input contains NaN"));
    }
    let mut order: Vec<usize> = (0..source.len()).collect();
    // stable sort keeps index order among equal values
    order.sort_by(|&a, &b| source[a].partial_cmp(&source[b]).expect("no NaN"));
    let mut targets = target_samples.to_vec();
    targets.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    let mut out = vec![T::zero(); source.len()];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = targets[rank];
    }
    Ok(out)
}

/// Exact cosine/sine for multiples of 90°.
pub(crate) fn cos_sin_deg(deg: f64) -> (f64, f64) {
    let q = deg / 90.0;
    if q == q.round() {
        match (q.round() as i64).rem_euclid(4) {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        }
    } else {
        let r = deg.to_radians();
        (r.cos(), r.sin())
    }
}

/// Template pixels rotated about the centroid, re-based to a zero origin.
#[derive(Debug, Clone, PartialEq)]
pub struct RotatedShape<T> {
    /// `(row, col)` offsets with `min row = min col = 0`, sorted row-major.
    pub pixels: Vec<(usize, usize)>,
    pub values: Vec<T>,
    pub height: usize,
    pub width: usize,
}

/// Nearest-neighbour rotation: each pixel maps to `round(R·(p−c) + c)`;
/// pixels landing on the same target keep the larger value.
pub fn rotate_template<T: Real>(tpl: &PlumeTemplate<T>, rotation_deg: f64) -> RotatedShape<T> {
    let (cr, cc) = tpl.centroid();
    let (cos, sin) = cos_sin_deg(rotation_deg);
    let mut targets: BTreeMap<(i64, i64), T> = BTreeMap::new();
    for (&(r, c), &v) in tpl.pixels.iter().zip(&tpl.values) {
        let (dr, dc) = (r as f64 - cr, c as f64 - cc);
        let nr = (cos * dr - sin * dc + cr).round() as i64;
        let nc = (sin * dr + cos * dc + cc).round() as i64;
        targets
            .entry((nr, nc))
            .and_modify(|e| {
                if v > *e {
                    *e = v
                }
            })
            .or_insert(v);
    }
    let r0 = targets.keys().map(|k| k.0).min().expect("non-empty");
    let c0 = targets.keys().map(|k| k.1).min().expect("non-empty");
    let (mut height, mut width) = (0, 0);
    let (pixels, values): (Vec<_>, Vec<_>) = targets
        .into_iter()
        .map(|((r, c), v)| {
            let p = ((r - r0) as usize, (c - c0) as usize);
            height = height.max(p.0 + 1);
            width = width.max(p.1 + 1);
            (p, v)
        })
        .unzip();
    RotatedShape {
        pixels,
        values,
        height,
        width,
    }
}

/// A template placed on a map grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacedPlume<T> {
    rows: usize,
    cols: usize,
    /// Row-major linear indices, strictly increasing.
    pixels: Vec<usize>,
    values: Vec<T>,
    pub rotation_deg: f64,
    pub origin: (usize, usize),
    pub attempts: usize,
}

impl<T: Real> PlacedPlume<T> {
    /// Places an already-rotated shape with its origin at `origin`.
    pub fn from_shape(
        shape: &RotatedShape<T>,
        origin: (usize, usize),
        bounds: (usize, usize),
        rotation_deg: f64,
    ) -> Result<Self> {
        let (rows, cols) = bounds;
        if origin.0 + shape.height > rows || origin.1 + shape.width > cols {
            return Err(Error::OutOfRange {
                index: (origin.0 + shape.height - 1) * cols.max(1) + origin.1 + shape.width - 1,
                limit: rows * cols,
            });
        }
        let pixels = shape
            .pixels
            .iter()
            .map(|&(r, c)| (origin.0 + r) * cols + origin.1 + c)
            .collect();
        Ok(Self {
            rows,
            cols,
            pixels,
            values: shape.values.clone(),
            rotation_deg,
            origin,
            attempts: 1,
        })
    }

    pub fn pixels(&self) -> &[usize] {
        &self.pixels
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Inclusive `(row0, col0, row1, col1)`.
    pub fn bbox(&self) -> Option<(usize, usize, usize, usize)> {
        let first = *self.pixels.first()?;
        let last = *self.pixels.last()?;
        let (c0, c1) = self.pixels.iter().fold((usize::MAX, 0), |(lo, hi), &p| {
            (lo.min(p % self.cols), hi.max(p % self.cols))
        });
        Some((first / self.cols, c0, last / self.cols, c1))
    }

    pub fn to_instance(&self, id: u32) -> Result<MaskInstance> {
        MaskInstance::from_pixels(id, &self.pixels, self.cols, self.rows * self.cols)
    }
}

/// Rotates `tpl` by `rotation_deg` and puts its bounding-box origin at
/// `position`. When that does not fit in `bounds`, rotation and position are
/// redrawn from `seed` up to [`PLACEMENT_RETRY_CAP`] attempts in total.
pub fn transform_plume<T: Real>(
    tpl: &PlumeTemplate<T>,
    rotation_deg: f64,
    position: (usize, usize),
    bounds: (usize, usize),
    seed: u64,
) -> Result<PlacedPlume<T>> {
    let (rows, cols) = bounds;
    let shape = rotate_template(tpl, rotation_deg);
    if let Ok(p) = PlacedPlume::from_shape(&shape, position, bounds, rotation_deg) {
        return Ok(p);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 2..=PLACEMENT_RETRY_CAP {
        let rot = rng.random_range(0.0..360.0);
        let shape = rotate_template(tpl, rot);
        if shape.height <= rows && shape.width <= cols {
            let origin = (
                rng.random_range(0..=rows - shape.height),
                rng.random_range(0..=cols - shape.width),
            );
            let mut p = PlacedPlume::from_shape(&shape, origin, bounds, rot)?;
            p.attempts = attempt;
            return Ok(p);
        }
    }
    Err(Error::Placement {
        attempts: PLACEMENT_RETRY_CAP,
        reason: format!(
            "template {} ({} px) does not fit a {rows}x{cols} map",
            tpl.source_id,
            tpl.n_pix()
        ),
    })
}

/// Adds the plume values to the background; every other pixel is copied
/// unchanged.
pub fn composite_additive<T: Real>(
    background: &EnhancementMap<T>,
    placed: &PlacedPlume<T>,
) -> Result<EnhancementMap<T>> {
    let mut out = background.clone();
    add_in_place(&mut out, placed)?;
    Ok(out)
}

fn add_in_place<T: Real>(map: &mut EnhancementMap<T>, placed: &PlacedPlume<T>) -> Result<()> {
    let n = map.len();
    if placed.shape() != (map.rows(), map.cols()) {
        return Err(Error::invalid("placed plume grid differs from background"));
    }
    if let Some(&p) = placed.pixels.iter().find(|&&p| p >= n) {
        return Err(Error::OutOfRange { index: p, limit: n });
    }
    let values = map.values_mut();
    for (&p, &v) in placed.pixels.iter().zip(&placed.values) {
        values[p] += v;
    }
    Ok(())
}

/// Mean plume enhancement over the population std of the background in the
/// plume's bounding box dilated by [`SBR_DILATION`] pixels (plume pixels
/// excluded).
pub fn compute_sbr<T: Real>(background: &EnhancementMap<T>, placed: &PlacedPlume<T>) -> Result<T> {
    let (rows, cols) = (background.rows(), background.cols());
    if placed.shape() != (rows, cols) {
        return Err(Error::invalid("placed plume grid differs from background"));
    }
    let (r0, c0, r1, c1) = placed.bbox().ok_or_else(|| Error::invalid("empty plume"))?;
    let (wr0, wc0) = (r0.saturating_sub(SBR_DILATION), c0.saturating_sub(SBR_DILATION));
    let (wr1, wc1) = ((r1 + SBR_DILATION).min(rows - 1), (c1 + SBR_DILATION).min(cols - 1));
    let mut window = Vec::with_capacity((wr1 - wr0 + 1) * (wc1 - wc0 + 1));
    let mut plume = placed.pixels.iter().peekable();
    for r in wr0..=wr1 {
        for c in wc0..=wc1 {
            let p = r * cols + c;
            while plume.next_if(|&&q| q < p).is_some() {}
            if plume.peek() == Some(&&p) {
                continue;
            }
            window.push(background.values()[p]);
        }
    }
    if window.len() < SBR_MIN_BACKGROUND {
        return Err(Error::TooFewBackground {
            found: window.len(),
            needed: SBR_MIN_BACKGROUND,
        });
    }
    let std = num::variance(&window).sqrt();
    if !(std > T::zero()) {
        return Err(Error::ZeroSpread("background window has zero standard deviation"));
    }
    Ok(num::mean(&placed.values) / std)
}

/// Bookkeeping for one inserted plume.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InsertedPlume<T> {
    pub instance_id: u32,
    pub template_index: usize,
    pub source_id: String,
    pub gamma: GammaParams<T>,
    pub rotation_deg: f64,
    pub origin: (usize, usize),
    pub sbr: T,
    /// Gamma draws used until the SBR criterion held.
    pub draws: usize,
}

/// A generated scene with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample<T> {
    pub map: EnhancementMap<T>,
    pub truth: InstanceMaskSet,
    /// Per truth instance, same order.
    pub sbr: Vec<T>,
    pub rng_seed: u64,
    pub background_index: usize,
    pub plumes: Vec<InsertedPlume<T>>,
    pub warnings: Vec<String>,
}

/// Builds one synthetic scene; a pure function of its inputs and `seed`.
///
/// Inserted plumes never overlap each other, so the truth instances are
/// disjoint. A plume whose SBR stays below `sbr_min` after
/// [`SBR_RETRIES`] draws, or that cannot be placed, is skipped with a warning.
pub fn generate_sample<T: Real>(
    templates: &[PlumeTemplate<T>],
    backgrounds: &[EnhancementMap<T>],
    prior: &GammaPrior<T>,
    sbr_min: T,
    n_plumes: usize,
    seed: u64,
) -> Result<SyntheticSample<T>> {
    if templates.is_empty() || backgrounds.is_empty() {
        return Err(Error::invalid(
            "generate_sample needs at least one template and one background",
        ));
    }
    if !(sbr_min >= T::zero()) {
        return Err(Error::invalid("sbr_min must be >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let background_index = rng.random_range(0..backgrounds.len());
    let background = &backgrounds[background_index];
    let (rows, cols) = (background.rows(), background.cols());
    let mut map = background.clone();
    let mut occupied = vec![false; rows * cols];
    let mut truth = InstanceMaskSet::empty(rows, cols);
    let mut sbr = Vec::new();
    let mut plumes = Vec::new();
    let mut warnings = Vec::new();
    let mut warn = |msg: String| {
        log::warn!("{msg}");
        warnings.push(msg);
    };

    for j in 0..n_plumes {
        let template_index = rng.random_range(0..templates.len());
        let tpl = &templates[template_index];
        let gamma = prior.sample(&mut rng);
        let place_seed = rng.next_u64();
        let value_seed = rng.next_u64();

        // geometry first: values only affect which value wins a collision
        let mut place_rng = ChaCha8Rng::seed_from_u64(place_seed);
        let mut geometry = None;
        for _ in 0..PLACEMENT_RETRY_CAP {
            let rot: f64 = place_rng.random_range(0.0..360.0);
            let shape = rotate_template(tpl, rot);
            if shape.height > rows || shape.width > cols {
                continue;
            }
            let origin = (
                place_rng.random_range(0..=rows - shape.height),
                place_rng.random_range(0..=cols - shape.width),
            );
            let placed = PlacedPlume::from_shape(&shape, origin, (rows, cols), rot)?;
            if placed.pixels.iter().all(|&p| !occupied[p]) {
                geometry = Some((rot, origin));
                break;
            }
        }
        let Some((rotation_deg, origin)) = geometry else {
            warn(format!(
                "plume {j}: template {} could not be placed without overlap; skipped",
                tpl.source_id
            ));
            continue;
        };

        let mut value_rng = ChaCha8Rng::seed_from_u64(value_seed);
        let mut accepted = None;
        for draw in 1..=SBR_RETRIES {
            let samples = draw_gamma(&gamma, tpl.n_pix(), &mut value_rng)?;
            let specified = tpl.with_values(histogram_specify(tpl.values(), &samples)?)?;
            let placed = transform_plume(&specified, rotation_deg, origin, (rows, cols), place_seed)?;
            let ratio = compute_sbr(background, &placed);
            match ratio {
                Ok(r) if r >= sbr_min => {
                    accepted = Some((placed, r, draw));
                    break;
                }
                Err(e) if sbr_min == T::zero() => {
                    warn(format!("plume {j}: SBR undefined ({e}); accepted under sbr_min = 0"));
                    accepted = Some((placed, T::nan(), draw));
                    break;
                }
                _ => {}
            }
        }
        let Some((placed, ratio, draws)) = accepted else {
            warn(format!(
                "plume {j}: SBR stayed below {sbr_min} after {SBR_RETRIES} draws; skipped"
            ));
            continue;
        };
        add_in_place(&mut map, &placed)?;
        for &p in placed.pixels() {
            occupied[p] = true;
        }
        let instance_id = truth.len() as u32 + 1;
        truth.push(placed.to_instance(instance_id)?);
        sbr.push(ratio);
        plumes.push(InsertedPlume {
            instance_id,
            template_index,
            source_id: tpl.source_id.clone(),
            gamma,
            rotation_deg,
            origin,
            sbr: ratio,
            draws,
        });
    }
    if n_plumes > 0 && truth.is_empty() {
        warn("every plume was skipped; sample has no ground truth".into());
    }
    Ok(SyntheticSample {
        map,
        truth,
        sbr,
        rng_seed: seed,
        background_index,
        plumes,
        warnings,
    })
}

/// A curriculum stage: the first `fraction` of remaining samples use `sbr_min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurriculumStage {
    pub fraction: f64,
    pub sbr_min: f64,
}

/// Dataset generation recipe. Relative paths resolve against the manifest's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub stages: Vec<CurriculumStage>,
    pub n_plumes_range: [usize; 2],
    pub templates_dir: PathBuf,
    pub backgrounds_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Gamma prior file; fitted on the donor values when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<PathBuf>,
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut m: Self = datacube::read_json(path)?;
        if let Some(dir) = path.parent() {
            let fix = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            };
            fix(&mut m.templates_dir);
            fix(&mut m.backgrounds_dir);
            fix(&mut m.out_dir);
            if let Some(p) = m.prior.as_mut() {
                fix(p);
            }
        }
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::invalid("manifest needs at least one curriculum stage"));
        }
        if self.stages.iter().any(|s| !(s.fraction > 0.0) || !(s.sbr_min >= 0.0)) {
            return Err(Error::invalid("stage fractions must be > 0 and sbr_min >= 0"));
        }
        let total: f64 = self.stages.iter().map(|s| s.fraction).sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!("stage fractions sum to {total}, expected 1")));
        }
        let [lo, hi] = self.n_plumes_range;
        if lo > hi {
            return Err(Error::invalid("n_plumes_range must be [lo, hi] with lo <= hi"));
        }
        Ok(())
    }

    /// `sbr_min` for sample `index` of `count`, walking the stages in order.
    pub fn sbr_min_for(&self, index: usize, count: usize) -> f64 {
        let pos = (index as f64 + 0.5) / count.max(1) as f64;
        let mut acc = 0.0;
        for s in &self.stages {
            acc += s.fraction;
            if pos < acc {
                return s.sbr_min;
            }
        }
        self.stages.last().map_or(0.0, |s| s.sbr_min)
    }
}

/// Independent per-sample seed (SplitMix64 finalizer over seed and index).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleRecord {
    pub index: usize,
    pub seed: u64,
    pub sbr_min: f64,
    pub n_plumes_requested: usize,
    pub background_index: usize,
    pub plumes: Vec<InsertedPlume<f64>>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetSummary {
    pub manifest: DatasetManifest,
    pub count: usize,
    pub samples: Vec<SampleRecord>,
}

/// Generates `count` samples from a manifest into `manifest.out_dir` as
/// `sample_NNNNN.{map,mask,meta}.json`, plus `dataset.json`.
pub fn build_dataset(manifest: &DatasetManifest, count: usize) -> Result<DatasetSummary> {
    manifest.validate()?;
    let templates: Vec<PlumeTemplate<f64>> = load_template_dir(&manifest.templates_dir)?;
    let backgrounds: Vec<EnhancementMap<f64>> = load_background_dir(&manifest.backgrounds_dir)?;
    if templates.is_empty() || backgrounds.is_empty() {
        return Err(Error::invalid(format!(
            "found {} templates in {} and {} backgrounds in {}",
            templates.len(),
            manifest.templates_dir.display(),
            backgrounds.len(),
            manifest.backgrounds_dir.display()
        )));
    }
    let prior = match &manifest.prior {
        Some(p) => GammaPrior::load(p)?,
        None => GammaPrior::fit_from(templates.iter().map(|t| t.values()))?,
    };
    std::fs::create_dir_all(&manifest.out_dir).map_err(|e| Error::io(&manifest.out_dir, e))?;

    let samples = (0..count)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(manifest.seed, i as u64);
            let sbr_min = manifest.sbr_min_for(i, count);
            let [lo, hi] = manifest.n_plumes_range;
            let n_plumes = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX)).random_range(lo..=hi);
            let s = generate_sample(&templates, &backgrounds, &prior, sbr_min, n_plumes, seed)?;
            let stem = manifest.out_dir.join(format!("sample_{i:05}"));
            datacube::save_map(&s.map, stem.with_extension("map.json"))?;
            datacube::save_masks(&s.truth, stem.with_extension("mask.json"))?;
            let record = SampleRecord {
                index: i,
                seed,
                sbr_min,
                n_plumes_requested: n_plumes,
                background_index: s.background_index,
                plumes: s.plumes,
                warnings: s.warnings,
            };
            datacube::write_json(&stem.with_extension("meta.json"), &record)?;
            Ok(record)
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = DatasetSummary {
        manifest: manifest.clone(),
        count,
        samples,
    };
    datacube::write_json(&manifest.out_dir.join("dataset.json"), &summary)?;
    Ok(summary)
}
