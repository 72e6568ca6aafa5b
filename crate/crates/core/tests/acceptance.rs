//! Acceptance suite: one line per criterion, non-zero exit if any fails.

#![allow(clippy::needless_range_loop)]

mod common;

use std::time::{Duration, Instant};

use common::*;
use plumekit::datacube::{EnhancementMap, HyperCube, InstanceMaskSet, MapFile, ProbabilityMap, SpectralCalibration};
use plumekit::detection::{baseline_probability, hysteresis_threshold, Connectivity, HysteresisParams};
use plumekit::linalg::Matrix;
use plumekit::matchedfilter::{
    matched_filter_column, retrieve_xch4, ColumnJacobians, RetrievalOptions, TargetSignature,
};
use plumekit::metrics::{
    match_masks, mean_iou, parse_grid, pixel_iou, select_best, sweep, write_sweep_csv, Criterion, SweepRow,
};
use plumekit::plumetransfer::{derive_seed, fit_gamma, sample_gamma, GammaParams};
use plumekit::scenesim::{make_oracle_scene, GaussianPlumeSpec};
use plumekit::spectral::{convolve_srf, recalibrate_cube, UnitAbsorptionSpectrum};
use rand::Rng;

type Outcome = Result<String, String>;
type Check = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<T>(r: plumekit::Result<T>) -> Result<T, String> {
    r.map_err(|err| err.to_string())
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("took {took:.2?}, limit {limit:?}"))
}

fn c1_matched_filter_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = rng(1);
    let mut worst: f64 = 0.0;
    let cases = 200;
    for case in 0..cases {
        let bands = rng.random_range(1..=16usize);
        let rows = rng.random_range(2..=64usize);
        let lambda = rng.random_range(0.01..0.3);
        let (_, l) = random_covariance(&mut rng, bands, 1.0);
        let base: Vec<f64> = (0..bands).map(|_| 100.0 + 50.0 * rng.random::<f64>()).collect();
        let spectra: Vec<Vec<f64>> = (0..rows)
            .map(|_| {
                correlated_noise(&mut rng, &l)
                    .iter()
                    .zip(&base)
                    .map(|(n, b)| n + b)
                    .collect()
            })
            .collect();
        let target: Vec<f64> = (0..bands).map(|_| normal(&mut rng)).collect();
        let got = matched_filter_column(
            &Matrix::from_rows(&spectra).unwrap(),
            &TargetSignature::new(target.clone()),
            lambda,
        )
        .map_err(|e| format!("case {case}: {e}"))?;
        let want = naive_matched_filter(&spectra, &target, lambda);
        let scale = max_abs(&want);
        for (g, w) in got.iter().zip(&want) {
            worst = worst.max((g - w).abs() / scale);
        }
    }
    ensure(worst <= 1e-8, || format!("max relative deviation {worst:e}"))?;
    within(Duration::from_secs(5), start)?;
    Ok(format!(
        "{cases} cases, max relative deviation {worst:.1e}, {:.2?}",
        start.elapsed()
    ))
}

fn c2_injection_recovery() -> Outcome {
    let start = Instant::now();
    let toy = toy_scene(24);
    let mu = convolve_srf(&toy.reference, &toy.centers, &toy.fwhm).unwrap();
    let k = toy.jacobian();
    let t: Vec<f64> = mu.iter().zip(k.values()).map(|(m, k)| m * k).collect();
    let d = t.len();
    // full-swath column height; plume pixels are 1% of each column
    let (rows, cols) = (1000, 16);
    let block = 100..110;
    let alpha_std = 80.0;
    let mut report = Vec::new();
    for (i, &c) in [500.0, 1000.0, 2000.0].iter().enumerate() {
        let mut rng = rng(20 + i as u64);
        let (cov, l) = random_covariance(&mut rng, d, 1.0);
        // scale the noise so the analytic α standard deviation is alpha_std
        let cov_m = nalgebra::DMatrix::from_fn(d, d, |a, b| cov[a][b]);
        let tv = nalgebra::DVector::from_column_slice(&t);
        let tst = tv.dot(&(cov_m.try_inverse().unwrap() * &tv));
        let s = alpha_std * tst.sqrt();
        ensure(alpha_std <= c / 5.0, || {
            "noise too strong for the SNR requirement".into()
        })?;
        let mut noise = vec![0.0; rows * cols * d];
        for p in 0..rows * cols {
            let n = correlated_noise(&mut rng, &l);
            for b in 0..d {
                noise[b * rows * cols + p] = s * n[b];
            }
        }
        let cube = HyperCube::from_fn(rows, cols, toy.calibration(cols), |r, col, b| {
            let inj = if block.contains(&r) { c * t[b] } else { 0.0 };
            mu[b] + noise[(b * rows + r) * cols + col] + inj
        })
        .map_err(|e| e.to_string())?;
        let (map, rep) = retrieve_xch4(&cube, &ColumnJacobians::Shared(k.clone()), &RetrievalOptions::default())
            .map_err(|e| e.to_string())?;
        ensure(rep.degenerate_columns.is_empty(), || "degenerate columns".into())?;
        let vals: Vec<f64> = block
            .clone()
            .flat_map(|r| (0..cols).map(move |col| (r, col)))
            .map(|(r, col)| map.get(r, col))
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let rel = (mean - c) / c;
        ensure(rel.abs() <= 0.10, || {
            format!("c = {c}: block mean {mean:.1} ({:+.1}%)", 100.0 * rel)
        })?;
        report.push(format!("{c:.0}→{mean:.0}"));
    }
    within(Duration::from_secs(30), start)?;
    Ok(format!(
        "{} ppb, alpha std {alpha_std} ppb, {:.2?}",
        report.join(", "),
        start.elapsed()
    ))
}

fn c3_recalibration_recovery() -> Outcome {
    let start = Instant::now();
    let toy = toy_scene(40);
    let lo = toy.centers[0];
    let hi = *toy.centers.last().unwrap();
    let depth = 1.0
        - toy
            .transmittance
            .wavelengths()
            .iter()
            .zip(toy.transmittance.values())
            .filter(|(l, _)| **l >= lo && **l <= hi)
            .map(|(_, t)| *t)
            .fold(1.0, f64::min);
    ensure(depth >= 0.05, || format!("deepest feature {depth:.3} < 5%"))?;
    let cols = 32;
    let shifts: Vec<f64> = (0..cols).map(|c| -3.0 + 6.0 * c as f64 / (cols - 1) as f64).collect();
    let nominal = toy.calibration(cols);
    let actual = nominal.shifted(&shifts).unwrap();
    let sims: Vec<Vec<f64>> = (0..cols)
        .map(|c| convolve_srf(&toy.reference, actual.centers(c), actual.fwhm(c)).unwrap())
        .collect();
    let rows = 100;
    let mut rng = rng(3);
    let noise: Vec<f64> = (0..rows * cols * toy.centers.len())
        .map(|_| 0.005 * normal(&mut rng))
        .collect();
    let cube = HyperCube::from_fn(rows, cols, nominal, |r, c, b| {
        sims[c][b] * (1.0 + noise[(b * rows + r) * cols + c])
    })
    .map_err(|e| e.to_string())?;
    let fit = recalibrate_cube(&cube, &toy.reference, 4.0, 0..cube.bands()).map_err(|e| e.to_string())?;
    ensure(fit.failed.is_empty(), || format!("failed columns {:?}", fit.failed))?;
    let worst = fit
        .offsets
        .iter()
        .zip(&shifts)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    ensure(worst <= 0.05, || format!("max error {worst:.4} nm"))?;
    within(Duration::from_secs(30), start)?;
    Ok(format!(
        "{cols} columns, max error {worst:.4} nm, feature depth {:.0}%, {:.2?}",
        100.0 * depth,
        start.elapsed()
    ))
}

fn c4_plume_transfer_invariants() -> Outcome {
    let start = Instant::now();
    let fx = transfer_fixture(7);
    let mut instances = 0;
    for i in 0..1000u64 {
        let sbr_min = [0.0, 1.0, 2.0][i as usize % 3];
        let seed = derive_seed(2024, i);
        check_transfer_sample(&fx, sbr_min, 1 + i as usize % 4, seed)?;
        instances += plumekit::plumetransfer::generate_sample(
            &fx.templates,
            &fx.backgrounds,
            &fx.prior,
            sbr_min,
            1 + i as usize % 4,
            seed,
        )
        .map_err(|e| e.to_string())?
        .truth
        .len();
    }
    Ok(format!(
        "1000 samples, {instances} inserted plumes, {:.2?}",
        start.elapsed()
    ))
}

fn c5_gamma_round_trip() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut seed = 0;
    for &a in &[0.5f64, 1.0, 3.0, 10.0] {
        for &theta in &[10.0f64, 150.0, 1000.0] {
            seed += 1;
            let xs = sample_gamma(&GammaParams::new(a, theta).unwrap(), 100_000, seed).map_err(|e| e.to_string())?;
            let fit = fit_gamma(&xs).map_err(|e| e.to_string())?;
            let ea = (fit.shape - a).abs() / a;
            let et = (fit.scale - theta).abs() / theta;
            ensure(ea <= 0.05 && et <= 0.05, || {
                format!("a={a}, θ={theta}: fitted ({:.3}, {:.2})", fit.shape, fit.scale)
            })?;
            worst = worst.max(ea).max(et);
        }
    }
    Ok(format!(
        "12 grid points, max relative error {:.2}%, {:.2?}",
        100.0 * worst,
        start.elapsed()
    ))
}

fn c6_hysteresis_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = rng(6);
    let mut checks = 0;
    for map_i in 0..8 {
        let v = random_prob_values(&mut rng, 64, 64);
        let prob = ProbabilityMap::new(64, 64, v.clone()).map_err(|e| e.to_string())?;
        for _ in 0..25 {
            // half the thresholds sit exactly on quantization levels
            let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
                if rng.random::<bool>() {
                    rng.random_range(0..=64) as f64 / 64.0
                } else {
                    rng.random::<f64>()
                }
            };
            let (a, b) = (draw(&mut rng), draw(&mut rng));
            let (low, high) = if a <= b { (a, b) } else { (b, a) };
            for conn in [Connectivity::Four, Connectivity::Eight] {
                let got = hysteresis_threshold(&prob, HysteresisParams::new(low, high).unwrap(), conn)
                    .map_err(|e| e.to_string())?;
                let want = flood_fill_hysteresis(&v, 64, 64, low, high, conn);
                ensure(mask_sets(&got) == want, || {
                    format!("map {map_i}, low {low}, high {high}, {conn:?}: sets differ")
                })?;
                checks += 1;
            }
        }
    }
    Ok(format!(
        "{checks} map/threshold/connectivity cases, {:.2?}",
        start.elapsed()
    ))
}

fn c7_metrics() -> Outcome {
    let start = Instant::now();
    let set = |lists: &[Vec<usize>]| InstanceMaskSet::from_pixel_lists(4, 4, lists).unwrap();
    let m = e(match_masks(&set(&[vec![0, 1]]), &set(&[vec![1, 2], vec![10]])))?;
    ensure((m.precision, m.recall) == (1.0, 0.5), || "one of two truths".into())?;
    let m = e(match_masks(&set(&[vec![1, 2, 3, 10]]), &set(&[vec![1], vec![10]])))?;
    ensure((m.precision, m.recall) == (1.0, 1.0), || {
        "one prediction over both truths".into()
    })?;
    let shifted = e(pixel_iou(&set(&[vec![0, 1, 4, 5]]), &set(&[vec![1, 2, 5, 6]])))?;
    ensure(shifted == 1.0 / 3.0, || format!("shifted block IoU {shifted}"))?;
    let two = set(&[vec![0, 1], vec![14, 15]]);
    let half = e(mean_iou(&set(&[vec![0, 1]]), &two))?;
    ensure(half == 0.5, || format!("one of two matched mIoU {half}"))?;
    let over = e(mean_iou(&set(&[vec![0, 1, 2, 3]]), &set(&[vec![0, 1]])))?;
    ensure(over == 0.5, || format!("double-size prediction mIoU {over}"))?;
    let mk = |low, high, iou| SweepRow {
        low,
        high,
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        iou,
        miou: 0.0,
        n_pred: 0,
        n_true: 0,
    };
    let best = e(select_best(&[mk(0.1, 0.5, 0.4), mk(0.1, 0.7, 0.4)], Criterion::Iou))?;
    ensure(best.high == 0.7, || "tie rule".into())?;

    let mut rng = rng(77);
    let grid = parse_grid("0:1:0.05").map_err(|e| e.to_string())?;
    for i in 0..20 {
        let prob = ProbabilityMap::new(32, 32, random_prob_values(&mut rng, 32, 32)).unwrap();
        let truth_src = ProbabilityMap::new(32, 32, random_prob_values(&mut rng, 32, 32)).unwrap();
        let truth = hysteresis_threshold(
            &truth_src,
            HysteresisParams::new(0.5, 0.7).unwrap(),
            Connectivity::Eight,
        )
        .unwrap();
        let rows = e(sweep(&[prob], &[truth], &grid, &grid, Connectivity::Eight))?;
        for w in rows.windows(2) {
            if w[0].low == w[1].low {
                ensure(w[1].n_pred <= w[0].n_pred, || {
                    format!("map {i}: n_pred rises at low {}, high {}", w[1].low, w[1].high)
                })?;
            }
        }
    }
    Ok(format!(
        "6 counting examples exact, monotone sweeps on 20 maps, {:.2?}",
        start.elapsed()
    ))
}

fn c8_end_to_end() -> Outcome {
    let start = Instant::now();
    let mut rng = rng(8);
    let (rows, cols) = (96, 96);
    let mut probs = Vec::new();
    let mut truths = Vec::new();
    let mut min_sbr = f64::INFINITY;
    for scene_i in 0..12u64 {
        let n = rng.random_range(1..=3usize);
        let mut specs: Vec<GaussianPlumeSpec> = (0..n)
            .map(|j| {
                let source = (
                    rng.random_range(10.0..86.0),
                    8.0 + 30.0 * j as f64 + rng.random_range(0.0..4.0),
                );
                GaussianPlumeSpec::new(
                    1.0,
                    rng.random_range(2.0..6.0),
                    rng.random_range(-40.0..40.0),
                    source,
                    30.0,
                )
                .unwrap()
            })
            .collect();
        // calibrate source strength so the weakest instance has the drawn SBR
        let unit = make_oracle_scene::<f64>(&specs, (rows, cols), 1.0, 0.01, scene_i).map_err(|e| e.to_string())?;
        let weakest = unit.sbr.iter().copied().fold(f64::INFINITY, f64::min);
        let target = rng.random_range(5.0..8.0);
        for s in specs.iter_mut() {
            s.q *= target / weakest;
        }
        let scene = make_oracle_scene::<f64>(&specs, (rows, cols), 1.0, 0.01, scene_i).map_err(|e| e.to_string())?;
        min_sbr = scene.sbr.iter().copied().fold(min_sbr, f64::min);
        probs.push(baseline_probability(&scene.map).map_err(|e| e.to_string())?);
        truths.push(scene.truth);
    }
    ensure(min_sbr >= 5.0 - 1e-9, || format!("scene SBR {min_sbr} below 5"))?;
    let grid = parse_grid("0:1:0.05").map_err(|e| e.to_string())?;
    let table = sweep(&probs, &truths, &grid, &grid, Connectivity::Eight).map_err(|e| e.to_string())?;
    let out = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance_sweep.csv");
    write_sweep_csv(&table, &out).map_err(|e| e.to_string())?;
    let best = select_best(&table, Criterion::Iou).map_err(|e| e.to_string())?;
    ensure(best.recall >= 0.9 && best.precision >= 0.8, || {
        format!(
            "best IoU at ({}, {}): precision {:.3}, recall {:.3}",
            best.low, best.high, best.precision, best.recall
        )
    })?;
    // trade-off shape along the high axis at the selected low
    let curve: Vec<&SweepRow> = table.iter().filter(|r| r.low == best.low && r.n_pred > 0).collect();
    let (first, last) = (curve.first().unwrap(), curve.last().unwrap());
    ensure(
        last.precision >= first.precision
            && last.recall <= first.recall
            && (last.precision > first.precision || last.recall < first.recall),
        || format!("no precision/recall trade-off along high at low {}", best.low),
    )?;
    Ok(format!(
        "best IoU {:.3} at low {}, high {}: precision {:.3}, recall {:.3}; high {}→{}: precision {:.2}→{:.2}, recall {:.2}→{:.2}; {:.2?}",
        best.iou, best.low, best.high, best.precision, best.recall, first.high, last.high, first.precision, last.precision, first.recall, last.recall, start.elapsed()
    ))
}

fn c9_performance() -> Outcome {
    let (rows, cols, bands) = (512, 512, 32);
    let mut rng = rng(9);
    let base: Vec<f64> = (0..bands).map(|_| 100.0 + 100.0 * rng.random::<f64>()).collect();
    let mut data = Vec::with_capacity(rows * cols * bands);
    for b in 0..bands {
        for _ in 0..rows * cols {
            data.push((base[b] + 2.0 * normal(&mut rng)) as f32);
        }
    }
    let centers: Vec<f32> = (0..bands).map(|b| 2100.0 + 10.0 * b as f32).collect();
    let cal = SpectralCalibration::shared(cols, &centers, &vec![9.0f32; bands]).unwrap();
    let cube = HyperCube::new(rows, cols, bands, data, cal).map_err(|e| e.to_string())?;
    let k = UnitAbsorptionSpectrum::new((0..bands).map(|_| -1e-5 * rng.random::<f32>()).collect()).unwrap();
    let jac = ColumnJacobians::Shared(k);

    let start = Instant::now();
    let serial = retrieve_xch4(
        &cube,
        &jac,
        &RetrievalOptions {
            parallel: false,
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let single = start.elapsed();
    let parallel = retrieve_xch4(&cube, &jac, &RetrievalOptions::default()).map_err(|e| e.to_string())?;
    let bits = |m: &EnhancementMap<f32>| m.values().iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<u8>>();
    ensure(bits(&serial.0) == bits(&parallel.0), || {
        "parallel output bytes differ from serial".into()
    })?;
    ensure(single < Duration::from_secs(10), || {
        format!("single-threaded retrieval took {single:.2?}")
    })?;
    Ok(format!(
        "512x512x32 single-threaded {single:.2?}, parallel bytes identical"
    ))
}

fn main() {
    let criteria: [Check; 9] = [
        (
            "matched filter equals explicit-inverse oracle",
            c1_matched_filter_oracle,
        ),
        ("injection recovery of retrieval", c2_injection_recovery),
        ("recalibration shift recovery", c3_recalibration_recovery),
        ("plume transfer invariants", c4_plume_transfer_invariants),
        ("gamma fit round trip", c5_gamma_round_trip),
        ("hysteresis equals flood fill", c6_hysteresis_oracle),
        ("metrics examples and sweep monotonicity", c7_metrics),
        ("end-to-end Gaussian plume pipeline", c8_end_to_end),
        ("retrieval performance and determinism", c9_performance),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
