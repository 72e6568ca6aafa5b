mod common;

use common::*;
use plumekit::datacube::{HyperCube, SpectralCalibration};
use plumekit::spectral::*;
use proptest::prelude::*;
use rand::Rng;
use tempfile::tempdir;

fn observed_cube(scene: &ToyScene, shifts: &[f64], rows: usize, noise_rel: f64, seed: u64) -> HyperCube<f64> {
    let cols = shifts.len();
    let nominal = scene.calibration(cols);
    let actual = nominal.shifted(shifts).unwrap();
    let sims: Vec<Vec<f64>> = (0..cols)
        .map(|c| convolve_srf(&scene.reference, actual.centers(c), actual.fwhm(c)).unwrap())
        .collect();
    let mut rng = rng(seed);
    let mut noise = vec![0.0; rows * cols * scene.centers.len()];
    for v in noise.iter_mut() {
        *v = noise_rel * normal(&mut rng);
    }
    HyperCube::from_fn(rows, cols, nominal, |r, c, b| {
        let s = sims[c][b];
        (s * (1.0 + noise[(b * rows + r) * cols + c])).max(0.0)
    })
    .unwrap()
}

#[test]
fn toy_features_are_deep_enough() {
    let scene = toy_scene(40);
    let lo = scene.centers[0];
    let hi = *scene.centers.last().unwrap();
    let min_t = scene
        .transmittance
        .wavelengths()
        .iter()
        .zip(scene.transmittance.values())
        .filter(|(l, _)| **l >= lo && **l <= hi)
        .map(|(_, t)| *t)
        .fold(1.0, f64::min);
    assert!(min_t <= 0.95, "deepest feature only {}", 1.0 - min_t);
}

#[test]
fn recovers_injected_shifts() {
    let scene = toy_scene(40);
    let mut rng = rng(42);
    let shifts: Vec<f64> = (0..24).map(|_| rng.random_range(-3.0..=3.0)).collect();
    let cube = observed_cube(&scene, &shifts, 16, 0.0, 1);
    let fit = recalibrate_cube(&cube, &scene.reference, 4.0, 0..cube.bands()).unwrap();
    assert!(fit.failed.is_empty());
    for (got, want) in fit.offsets.iter().zip(&shifts) {
        assert!((got - want).abs() <= 0.05, "{got} vs {want}");
    }
}

#[test]
fn recovers_shifts_under_noise() {
    let scene = toy_scene(40);
    let shifts = [-2.7, -1.0, 0.0, 0.35, 1.5, 2.95];
    let cube = observed_cube(&scene, &shifts, 200, 0.01, 7);
    let fit = recalibrate_cube(&cube, &scene.reference, 4.0, 0..cube.bands()).unwrap();
    for (got, want) in fit.offsets.iter().zip(&shifts) {
        assert!((got - want).abs() <= 0.05, "{got} vs {want}");
    }
}

#[test]
fn zero_shift_is_a_fixed_point() {
    let scene = toy_scene(30);
    let sim = convolve_srf(&scene.reference, &scene.centers, &scene.fwhm).unwrap();
    let fit = recalibrate_column(&sim, &scene.reference, &scene.centers, &scene.fwhm, 2.0).unwrap();
    assert_eq!(fit.offset, 0.0);
    assert_eq!(fit.residual, 0.0);
}

#[test]
fn window_and_failure_handling() {
    let scene = toy_scene(30);
    let cube = observed_cube(&scene, &[1.0, -1.0], 4, 0.0, 3);
    assert!(recalibrate_cube(&cube, &scene.reference, 2.0, 5..5).is_err());
    let fit = recalibrate_cube(&cube, &scene.reference, 2.0, 5..25).unwrap();
    assert!((fit.offsets[0] - 1.0).abs() < 0.05 && (fit.offsets[1] + 1.0).abs() < 0.05);
    // an all-zero column has no mean to normalize by
    let dark = HyperCube::from_fn(3, 1, scene.calibration(1), |_, _, _| 0.0).unwrap();
    let fit = recalibrate_cube(&dark, &scene.reference, 2.0, 0..30).unwrap();
    assert_eq!(fit.failed, vec![0]);
    assert_eq!(fit.offsets, vec![0.0]);
}

#[test]
fn jacobian_is_negative_and_linear_for_small_delta() {
    let scene = toy_scene(40);
    let k1 = methane_jacobian(
        &scene.reference,
        &scene.cross_section_per_ppb,
        &scene.centers,
        &scene.fwhm,
        1.0,
    )
    .unwrap();
    let k10 = methane_jacobian(
        &scene.reference,
        &scene.cross_section_per_ppb,
        &scene.centers,
        &scene.fwhm,
        10.0,
    )
    .unwrap();
    assert!(k1.values().iter().all(|&k| k <= 0.0));
    assert!(k1.values().iter().any(|&k| k < -1e-6));
    for (a, b) in k1.values().iter().zip(k10.values()) {
        assert!((a - b).abs() <= 1e-3 * a.abs().max(1e-9));
    }
    // the strongest absorption sits in the band nearest the 2317 nm cluster
    let strongest = k1
        .values()
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap()
        .0;
    assert!((scene.centers[strongest] - 2317.0).abs() < 15.0);
}

#[test]
fn table_csv_round_trip() {
    let dir = tempdir().unwrap();
    let scene = toy_scene(20);
    let p = dir.path().join("t.csv");
    scene.transmittance.save_csv(&p).unwrap();
    let back: SpectralTable<f64> = SpectralTable::load_csv(&p).unwrap();
    assert_eq!(back.wavelengths().len(), scene.transmittance.wavelengths().len());
    for (a, b) in back.values().iter().zip(scene.transmittance.values()) {
        assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0));
    }
    let k = scene.jacobian();
    let kp = dir.path().join("k.csv");
    k.save_csv(&kp).unwrap();
    assert_eq!(UnitAbsorptionSpectrum::<f64>::load_csv(&kp).unwrap(), k);
}

#[test]
fn per_column_calibration_is_used() {
    let scene = toy_scene(20);
    let cal = SpectralCalibration::shared(2, &scene.centers, &scene.fwhm)
        .unwrap()
        .shifted(&[0.0, 1.25])
        .unwrap();
    assert_eq!(cal.centers(1)[0], scene.centers[0] + 1.25);
    assert_eq!(cal.centers(0), &scene.centers[..]);
}

fn shared_scene() -> &'static ToyScene {
    static SCENE: std::sync::OnceLock<ToyScene> = std::sync::OnceLock::new();
    SCENE.get_or_init(|| toy_scene(20))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn convolution_is_linear(a in -5.0f64..5.0, b in -5.0f64..5.0, seed in any::<u64>()) {
        let scene = shared_scene();
        let grid = scene.reference.grid().to_vec();
        let mut rng = rng(seed);
        let f: Vec<f64> = grid.iter().map(|_| rng.random::<f64>()).collect();
        let g: Vec<f64> = grid.iter().map(|_| rng.random::<f64>()).collect();
        let mix: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect();
        let conv = |v: Vec<f64>| {
            // the reference type requires non-negative radiance, so lift by a constant and remove it
            let lifted: Vec<f64> = v.iter().map(|x| x + 20.0).collect();
            let r = ReferenceSpectrum::new(grid.clone(), lifted).unwrap();
            convolve_srf(&r, &scene.centers, &scene.fwhm).unwrap().iter().map(|x| x - 20.0).collect::<Vec<f64>>()
        };
        let (cf, cg, cm) = (conv(f), conv(g), conv(mix));
        for i in 0..cm.len() {
            let want = a * cf[i] + b * cg[i];
            prop_assert!((cm[i] - want).abs() <= 1e-9 * (a.abs() + b.abs()).max(1.0) * 20.0);
        }
    }

    #[test]
    fn recalibration_ignores_overall_scale(shift in -2.0f64..2.0, c in 0.01f64..100.0) {
        let scene = shared_scene();
        let centers: Vec<f64> = scene.centers.iter().map(|x| x + shift).collect();
        let obs = convolve_srf(&scene.reference, &centers, &scene.fwhm).unwrap();
        let scaled: Vec<f64> = obs.iter().map(|v| v * c).collect();
        let a = recalibrate_column(&obs, &scene.reference, &scene.centers, &scene.fwhm, 3.0).unwrap();
        let b = recalibrate_column(&scaled, &scene.reference, &scene.centers, &scene.fwhm, 3.0).unwrap();
        prop_assert!((a.offset - b.offset).abs() <= SEARCH_STEP_NM);
        prop_assert!((a.offset - shift).abs() <= 0.05);
    }

    #[test]
    fn stronger_absorption_gives_smaller_k(extra in 0.0f64..2.0, seed in any::<u64>()) {
        let scene = shared_scene();
        let mut rng = rng(seed);
        let xs = &scene.cross_section_per_ppb;
        let bigger: Vec<f64> = xs.values().iter().map(|v| v * (1.0 + extra * rng.random::<f64>())).collect();
        let bigger = SpectralTable::new(xs.wavelengths().to_vec(), bigger).unwrap();
        let k0 = methane_jacobian(&scene.reference, xs, &scene.centers, &scene.fwhm, 1.0).unwrap();
        let k1 = methane_jacobian(&scene.reference, &bigger, &scene.centers, &scene.fwhm, 1.0).unwrap();
        for (a, b) in k0.values().iter().zip(k1.values()) {
            prop_assert!(b <= a);
        }
    }
}
