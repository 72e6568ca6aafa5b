#![allow(dead_code, clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeSet;

use plumekit::datacube::{EnhancementMap, SpectralCalibration};
use plumekit::detection::Connectivity;
use plumekit::plumetransfer::PlumeTemplate;
use plumekit::spectral::{
    methane_jacobian, simulate_reference, toy_atmosphere, ReferenceSpectrum, SolarEnvelope, SpectralTable,
    UnitAbsorptionSpectrum,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Toy SWIR scene: reference radiance on a 0.05 nm grid, methane optical
/// depth per ppb, and a band layout with ~8 nm spacing.
pub struct ToyScene {
    pub reference: ReferenceSpectrum<f64>,
    pub transmittance: SpectralTable<f64>,
    pub cross_section_per_ppb: SpectralTable<f64>,
    pub centers: Vec<f64>,
    pub fwhm: Vec<f64>,
}

pub fn toy_scene(bands: usize) -> ToyScene {
    let (trans, xs_ppm) = toy_atmosphere(2040.0, 2500.0, 0.05).unwrap();
    let xs = xs_ppm.scaled(1e-3);
    let reference = simulate_reference(&trans, SolarEnvelope::SUN, 100.0).unwrap();
    let start = 2150.0;
    let stop = 2420.0;
    let step = (stop - start) / (bands - 1) as f64;
    let centers: Vec<f64> = (0..bands).map(|b| start + step * b as f64).collect();
    let fwhm = vec![step.max(6.0) * 1.1; bands];
    ToyScene {
        reference,
        transmittance: trans,
        cross_section_per_ppb: xs,
        centers,
        fwhm,
    }
}

impl ToyScene {
    pub fn calibration(&self, cols: usize) -> SpectralCalibration<f64> {
        SpectralCalibration::shared(cols, &self.centers, &self.fwhm).unwrap()
    }

    pub fn jacobian(&self) -> UnitAbsorptionSpectrum<f64> {
        methane_jacobian(
            &self.reference,
            &self.cross_section_per_ppb,
            &self.centers,
            &self.fwhm,
            1.0,
        )
        .unwrap()
    }
}

/// Random symmetric positive-definite `d × d` covariance as `L Lᵀ + eps·I`,
/// returned with its lower factor `L`.
pub fn random_covariance(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut l = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..=i {
            l[i][j] = scale
                * if i == j {
                    1.0 + rng.random::<f64>()
                } else {
                    0.5 * normal(rng)
                };
        }
    }
    let mut cov = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            cov[i][j] = (0..d).map(|k| l[i][k] * l[j][k]).sum();
        }
    }
    (cov, l)
}

/// Draws `L z` for standard normal `z`.
pub fn correlated_noise(rng: &mut ChaCha8Rng, l: &[Vec<f64>]) -> Vec<f64> {
    let z: Vec<f64> = (0..l.len()).map(|_| normal(rng)).collect();
    l.iter()
        .map(|row| row.iter().zip(&z).map(|(a, b)| a * b).sum())
        .collect()
}

/// Compact blob with strictly positive, mostly distinct values.
pub fn blob_template(rng: &mut ChaCha8Rng, id: &str) -> PlumeTemplate<f64> {
    let h = rng.random_range(4..10usize);
    let w = rng.random_range(4..12usize);
    let (cr, cc) = (h as f64 / 2.0, w as f64 / 2.0);
    let mut pixels = Vec::new();
    let mut values = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let d = ((r as f64 - cr) / cr).powi(2) + ((c as f64 - cc) / cc).powi(2);
            if d <= 1.0 {
                pixels.push((r, c));
                values.push(50.0 + 500.0 * (1.0 - d) + rng.random::<f64>());
            }
        }
    }
    PlumeTemplate::new(pixels, values, id).unwrap()
}

pub fn noise_background(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> EnhancementMap<f64> {
    EnhancementMap::new(rows, cols, (0..rows * cols).map(|_| std * normal(rng)).collect()).unwrap()
}

fn neighbours(p: usize, rows: usize, cols: usize, conn: Connectivity) -> Vec<usize> {
    let (r, c) = ((p / cols) as i64, (p % cols) as i64);
    let mut out = Vec::new();
    for dr in -1i64..=1 {
        for dc in -1i64..=1 {
            if (dr, dc) == (0, 0) || (conn == Connectivity::Four && dr != 0 && dc != 0) {
                continue;
            }
            let (nr, nc) = (r + dr, c + dc);
            if nr >= 0 && nc >= 0 && nr < rows as i64 && nc < cols as i64 {
                out.push(nr as usize * cols + nc as usize);
            }
        }
    }
    out
}

/// Hysteresis by flood fill from every strong pixel, as a set of pixel sets.
pub fn flood_fill_hysteresis(
    values: &[f64],
    rows: usize,
    cols: usize,
    low: f64,
    high: f64,
    conn: Connectivity,
) -> BTreeSet<BTreeSet<usize>> {
    let mut regions = BTreeSet::new();
    let mut seen = vec![false; values.len()];
    for seed in 0..values.len() {
        if values[seed] < high || seen[seed] {
            continue;
        }
        let mut region = BTreeSet::new();
        let mut stack = vec![seed];
        seen[seed] = true;
        while let Some(p) = stack.pop() {
            region.insert(p);
            for q in neighbours(p, rows, cols, conn) {
                if !seen[q] && values[q] >= low {
                    seen[q] = true;
                    stack.push(q);
                }
            }
        }
        regions.insert(region);
    }
    regions
}

pub fn mask_sets(masks: &plumekit::datacube::InstanceMaskSet) -> BTreeSet<BTreeSet<usize>> {
    masks.instances().iter().map(|m| m.pixels().collect()).collect()
}

/// Matched filter through an explicit inverse: population covariance,
/// shrinkage toward the scaled identity, then `(x−μ)ᵀS⁻¹t / tᵀS⁻¹t`.
pub fn naive_matched_filter(spectra: &[Vec<f64>], target: &[f64], shrinkage: f64) -> Vec<f64> {
    let n = spectra.len();
    let d = target.len();
    let mu: Vec<f64> = (0..d)
        .map(|b| spectra.iter().map(|x| x[b]).sum::<f64>() / n as f64)
        .collect();
    let mut cov = nalgebra::DMatrix::<f64>::zeros(d, d);
    for x in spectra {
        let v = nalgebra::DVector::from_iterator(d, x.iter().zip(&mu).map(|(a, m)| a - m));
        cov += &v * v.transpose();
    }
    cov /= n as f64;
    let tr = cov.trace() / d as f64;
    let s = cov * (1.0 - shrinkage) + nalgebra::DMatrix::identity(d, d) * (shrinkage * tr);
    let inv = s.try_inverse().expect("invertible");
    let t = nalgebra::DVector::from_column_slice(target);
    let sit = &inv * &t;
    let norm = t.dot(&sit);
    spectra
        .iter()
        .map(|x| {
            let v = nalgebra::DVector::from_iterator(d, x.iter().zip(&mu).map(|(a, m)| a - m));
            v.dot(&sit) / norm
        })
        .collect()
}

pub fn max_abs(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub struct TransferFixture {
    pub templates: Vec<PlumeTemplate<f64>>,
    pub backgrounds: Vec<EnhancementMap<f64>>,
    pub prior: plumekit::plumetransfer::GammaPrior<f64>,
}

pub fn transfer_fixture(seed: u64) -> TransferFixture {
    use plumekit::plumetransfer::{GammaParams, GammaPrior};
    let mut rng = rng(seed);
    let templates = (0..6).map(|i| blob_template(&mut rng, &format!("donor{i}"))).collect();
    let backgrounds = (0..3).map(|_| noise_background(&mut rng, 72, 80, 40.0)).collect();
    let prior = GammaPrior::new(vec![
        GammaParams::new(2.0, 60.0).unwrap(),
        GammaParams::new(5.0, 40.0).unwrap(),
        GammaParams::new(1.0, 150.0).unwrap(),
    ])
    .unwrap();
    TransferFixture {
        templates,
        backgrounds,
        prior,
    }
}

/// Checks every plume-transfer invariant of one generated sample; returns a
/// description of the first violation.
pub fn check_transfer_sample(fx: &TransferFixture, sbr_min: f64, n_plumes: usize, seed: u64) -> Result<(), String> {
    use plumekit::datacube::MapFile;
    use plumekit::plumetransfer::{generate_sample, rotate_template, SBR_DILATION};

    let s = generate_sample(&fx.templates, &fx.backgrounds, &fx.prior, sbr_min, n_plumes, seed)
        .map_err(|e| e.to_string())?;
    let again = generate_sample(&fx.templates, &fx.backgrounds, &fx.prior, sbr_min, n_plumes, seed)
        .map_err(|e| e.to_string())?;
    if s != again {
        return Err(format!("seed {seed}: regenerated sample differs"));
    }
    let bg = &fx.backgrounds[s.background_index];
    let (rows, cols) = (bg.rows(), bg.cols());
    let truth_px = s.truth.union_bitmap();
    for p in 0..rows * cols {
        if !truth_px[p] && s.map.values()[p].to_bits() != bg.values()[p].to_bits() {
            return Err(format!("seed {seed}: background pixel {p} changed"));
        }
    }
    s.truth.validate_disjoint().map_err(|e| e.to_string())?;
    if s.truth.len() != s.plumes.len() || s.sbr.len() != s.plumes.len() {
        return Err(format!("seed {seed}: bookkeeping lengths differ"));
    }
    for (inst, plume) in s.truth.instances().iter().zip(&s.plumes) {
        let tpl = &fx.templates[plume.template_index];
        let shape = rotate_template(tpl, plume.rotation_deg);
        let expect: Vec<usize> = shape
            .pixels
            .iter()
            .map(|&(r, c)| (plume.origin.0 + r) * cols + plume.origin.1 + c)
            .collect();
        let got: Vec<usize> = inst.pixels().collect();
        if got != expect {
            return Err(format!(
                "seed {seed}: instance {} is not the rotated template shape",
                inst.id()
            ));
        }
        // ranks of the inserted values follow the rotated donor values
        let inc: Vec<f64> = expect.iter().map(|&p| s.map.values()[p] - bg.values()[p]).collect();
        let mut order: Vec<usize> = (0..inc.len()).collect();
        order.sort_by(|&a, &b| shape.values[a].partial_cmp(&shape.values[b]).unwrap());
        for w in order.windows(2) {
            if shape.values[w[0]] < shape.values[w[1]] && inc[w[0]] > inc[w[1]] {
                return Err(format!("seed {seed}: rank order broken in instance {}", inst.id()));
            }
        }
        if !(plume.sbr >= sbr_min) {
            return Err(format!("seed {seed}: SBR {} below {sbr_min}", plume.sbr));
        }
        // independent SBR: dilated bbox, plume pixels removed, population std
        let bb = inst.bbox();
        let (r0, c0) = (
            bb.row0.saturating_sub(SBR_DILATION),
            bb.col0.saturating_sub(SBR_DILATION),
        );
        let (r1, c1) = (
            (bb.row1 + SBR_DILATION).min(rows - 1),
            (bb.col1 + SBR_DILATION).min(cols - 1),
        );
        let own: BTreeSet<usize> = expect.iter().copied().collect();
        let win: Vec<f64> = (r0..=r1)
            .flat_map(|r| (c0..=c1).map(move |c| r * cols + c))
            .filter(|p| !own.contains(p))
            .map(|p| bg.values()[p])
            .collect();
        let m = win.iter().sum::<f64>() / win.len() as f64;
        let sd = (win.iter().map(|v| (v - m).powi(2)).sum::<f64>() / win.len() as f64).sqrt();
        let oracle = inc.iter().sum::<f64>() / inc.len() as f64 / sd;
        if (oracle - plume.sbr).abs() > 1e-9 * oracle.abs() {
            return Err(format!(
                "seed {seed}: recorded SBR {} vs recomputed {oracle}",
                plume.sbr
            ));
        }
    }
    Ok(())
}

/// Random probability map with spatial structure: a box-blurred uniform field,
/// quantized to 1/64 steps so thresholds hit ties.
pub fn random_prob_values(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..rows * cols).map(|_| rng.random::<f64>()).collect();
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let (mut s, mut n) = (0.0, 0.0);
            for rr in r.saturating_sub(1)..=(r + 1).min(rows - 1) {
                for cc in c.saturating_sub(1)..=(c + 1).min(cols - 1) {
                    s += raw[rr * cols + cc];
                    n += 1.0;
                }
            }
            // stretch the blurred field back over [0, 1]
            let v = ((s / n - 0.5) * 2.5 + 0.5).clamp(0.0, 1.0);
            out[r * cols + c] = (v * 64.0).round() / 64.0;
        }
    }
    out
}
