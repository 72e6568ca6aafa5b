use std::fs;
use std::ops::Range;
use std::path::Path;

use anyhow::Context;
use log::{info, warn};
use plumekit::datacube::{
    load_cube, load_map, load_masks, save_cube, save_map, save_masks, HyperCube, InstanceMaskSet, MapFile,
    SpectralCalibration,
};
use plumekit::detection::{baseline_probability, hysteresis_threshold, Connectivity, HysteresisParams};
use plumekit::matchedfilter::{retrieve_xch4, ColumnJacobians, RetrievalOptions};
use plumekit::metrics::{evaluate, evaluate_dataset, parse_grid, read_sweep_csv, select_best, sweep, write_sweep_csv};
use plumekit::plumetransfer::{build_dataset, derive_seed, DatasetManifest};
use plumekit::scenesim::{render_radiance_cube, OracleSceneSpec};
use plumekit::spectral::{
    convolve_srf, methane_jacobian, recalibrate_cube, simulate_reference, toy_atmosphere, ReferenceSpectrum,
    SpectralTable, UnitAbsorptionSpectrum,
};
use plumekit::{Cube, ProbMap, Xch4Map};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::*;
use crate::failure::{check_exists, existing, in_range, invalid, positive, required, Classify, Outcome};
use crate::report::Ctx;

/// Built-in toy atmosphere used by `pipeline` when no tables are given.
pub const TOY_GRID_NM: (f64, f64, f64) = (2040.0, 2500.0, 0.05);

pub fn run(command: &Command, ctx: &mut Ctx) -> Outcome<()> {
    match command {
        Command::Recalibrate(a) => recalibrate(a, ctx),
        Command::Retrieve(a) => retrieve(a, ctx),
        Command::Synth(a) => synth(a, ctx),
        Command::Simulate(a) => simulate(a, ctx),
        Command::Detect(a) => detect(a, ctx),
        Command::Evaluate(a) => evaluate_cmd(a, ctx),
        Command::Sweep(a) => sweep_cmd(a, ctx),
        Command::SelectBest(a) => select_best_cmd(a, ctx),
        Command::Pipeline(a) => pipeline(a, ctx),
    }
}

fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
        }
        _ => Ok(()),
    }
}

pub fn to_json<S: Serialize>(value: &S) -> anyhow::Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> anyhow::Result<()> {
    ensure_parent(path)?;
    fs::write(path, to_json(value)?).with_context(|| format!("cannot write {}", path.display()))
}

/// Runs a writer after making sure the parent directory exists.
fn write_with(ctx: &mut Ctx, path: &Path, f: impl FnOnce(&Path) -> anyhow::Result<()>) -> Outcome<()> {
    ensure_parent(path).runtime()?;
    f(path).runtime()?;
    ctx.output(path);
    Ok(())
}

fn band_range(window: Option<BandWindow>, bands: usize) -> Outcome<Range<usize>> {
    match window {
        None => Ok(0..bands),
        Some(w) if w.end <= bands => Ok(w.range()),
        Some(w) => invalid("window", format_args!("{w} exceeds the cube's {bands} bands")),
    }
}

fn connectivity(c: u8) -> Outcome<Connectivity> {
    Connectivity::try_from(c).field("connectivity")
}

fn thresholds(low: f64, high: f64) -> Outcome<HysteresisParams<f64>> {
    in_range("low", low, 0.0, 1.0)?;
    in_range("high", high, 0.0, 1.0)?;
    HysteresisParams::new(low, high).field("high")
}

fn load_table(field: &str, path: &Path) -> Outcome<SpectralTable<f64>> {
    SpectralTable::load_csv(path).field(field)
}

#[derive(Serialize)]
struct RecalibrationOutput<'a> {
    half_width: f64,
    window: [usize; 2],
    offsets: &'a [f64],
    residuals: &'a [f64],
    failed: &'a [usize],
    #[serde(skip_serializing_if = "Option::is_none")]
    true_shifts: Option<&'a [f64]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_abs_error: Option<f64>,
}

fn recalibrate(a: &RecalibrateArgs, ctx: &mut Ctx) -> Outcome<()> {
    let cube_path = existing("cube", &a.cube)?;
    let trans_path = existing("transmittance", &a.transmittance)?;
    let out = required("out", &a.out)?;
    positive("half_width", a.half_width)?;
    let cross = match (&a.jacobian_out, &a.cross_section) {
        (Some(_), None) => return invalid("cross_section", "required with --jacobian-out"),
        (_, Some(_)) => Some(existing("cross_section", &a.cross_section)?),
        (None, None) => None,
    };
    ctx.report_next_to(out, "recalibrate");

    let cube: Cube = ctx.stage("load", || load_cube(cube_path)).field("cube")?;
    let window = band_range(a.window, cube.bands())?;
    let trans = load_table("transmittance", trans_path)?;
    let xsec = cross.map(|p| load_table("cross_section", p)).transpose()?;
    let reference = simulate_reference(&trans, a.solar.envelope(), 1.0).field("transmittance")?;

    let res = ctx
        .stage("recalibrate", || {
            recalibrate_cube(&cube, &reference, a.half_width, window.clone())
        })
        .runtime()?;
    info!(
        "recalibrated {} columns, {} failed",
        res.offsets.len(),
        res.failed.len()
    );
    let output = RecalibrationOutput {
        half_width: a.half_width,
        window: [window.start, window.end],
        offsets: &res.offsets,
        residuals: &res.residuals,
        failed: &res.failed,
        true_shifts: None,
        max_abs_error: None,
    };
    write_with(ctx, out, |p| write_json(p, &output))?;

    let corrected = cube.calibration().shifted(&res.offsets).runtime()?;
    if let Some(path) = &a.corrected_cube {
        let shifted = HyperCube::new(
            cube.rows(),
            cube.cols(),
            cube.bands(),
            cube.data().to_vec(),
            corrected.clone(),
        )
        .runtime()?;
        write_with(ctx, path, |p| Ok(save_cube(&shifted, p)?))?;
    }
    if let (Some(path), Some(xsec)) = (&a.jacobian_out, xsec) {
        let (centers, fwhm) = mean_calibration(&corrected);
        let k = ctx
            .stage("jacobian", || {
                methane_jacobian(&reference, &xsec.scaled(1e-3), &centers, &fwhm, 1.0)
            })
            .runtime()?;
        write_with(ctx, path, |p| Ok(k.save_csv(p)?))?;
    }
    Ok(())
}

/// Band centres and FWHM averaged over columns.
fn mean_calibration(cal: &SpectralCalibration<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = cal.cols() as f64;
    let mut centers = vec![0.0; cal.bands()];
    let mut fwhm = vec![0.0; cal.bands()];
    for c in 0..cal.cols() {
        for b in 0..cal.bands() {
            centers[b] += cal.centers(c)[b] / n;
            fwhm[b] += cal.fwhm(c)[b] / n;
        }
    }
    (centers, fwhm)
}

fn retrieve(a: &RetrieveArgs, ctx: &mut Ctx) -> Outcome<()> {
    let cube_path = existing("cube", &a.cube)?;
    let jac_path = existing("jacobian", &a.jacobian)?;
    let out = required("out", &a.out)?;
    in_range("shrinkage", a.shrinkage, 0.0, 1.0)?;
    ctx.report_next_to(out, "retrieve");

    let cube: Cube = ctx.stage("load", || load_cube(cube_path)).field("cube")?;
    let k: UnitAbsorptionSpectrum<f64> = UnitAbsorptionSpectrum::load_csv(jac_path).field("jacobian")?;
    if k.len() != cube.bands() {
        return invalid(
            "jacobian",
            format_args!("{} values for a {}-band cube", k.len(), cube.bands()),
        );
    }
    let window = band_range(a.window, cube.bands())?;
    if cube.rows() < 2 {
        return invalid("cube", "retrieval needs at least 2 rows");
    }
    let options = RetrievalOptions {
        shrinkage: a.shrinkage,
        window: Some(window),
        parallel: !a.serial,
    };
    let (map, report) = ctx
        .stage("matched_filter", || {
            retrieve_xch4(&cube, &ColumnJacobians::Shared(k), &options)
        })
        .runtime()?;
    write_with(ctx, out, |p| Ok(save_map(&map, p)?))?;
    if let Some(path) = &a.report {
        write_with(ctx, path, |p| write_json(p, &report))?;
    }
    Ok(())
}

fn synth(a: &SynthArgs, ctx: &mut Ctx) -> Outcome<()> {
    let manifest_path = existing("manifest", &a.manifest)?;
    let count = *required("count", &a.count)?;
    if count == 0 {
        return invalid("count", "must be >= 1");
    }
    let manifest = DatasetManifest::load(manifest_path).field("manifest")?;
    check_exists("templates_dir", &manifest.templates_dir)?;
    check_exists("backgrounds_dir", &manifest.backgrounds_dir)?;
    if let Some(p) = &manifest.prior {
        check_exists("prior", p)?;
    }
    ctx.seed = Some(manifest.seed);
    ctx.default_report = Some(manifest.out_dir.join("run_report.json"));

    let summary = ctx.stage("synthesize", || build_dataset(&manifest, count)).runtime()?;
    let inserted: usize = summary.samples.iter().map(|s| s.plumes.len()).sum();
    info!(
        "wrote {count} samples with {inserted} plumes to {}",
        manifest.out_dir.display()
    );
    ctx.output(&manifest.out_dir.join("dataset.json"));
    Ok(())
}

#[derive(Serialize)]
struct SceneMeta<'a> {
    seed: u64,
    rows: usize,
    cols: usize,
    noise_std: f64,
    n_instances: usize,
    /// Per truth instance; null when the scene is noiseless.
    sbr: Vec<Option<f64>>,
    warnings: &'a [String],
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn simulate(a: &SimulateArgs, ctx: &mut Ctx) -> Outcome<()> {
    let spec_path = existing("spec", &a.spec)?;
    let out = required("out", &a.out)?;
    let truth_path = required("truth", &a.truth)?;
    let spec = OracleSceneSpec::load(spec_path).field("spec")?;
    ctx.seed = Some(spec.seed);
    ctx.report_next_to(out, "simulate");

    let sample = ctx.stage("simulate", || spec.generate::<f64>()).runtime()?;
    for w in &sample.warnings {
        warn!("{w}");
    }
    write_with(ctx, out, |p| Ok(save_map(&sample.map, p)?))?;
    write_with(ctx, truth_path, |p| Ok(save_masks(&sample.truth, p)?))?;
    if let Some(path) = &a.meta {
        let meta = SceneMeta {
            seed: spec.seed,
            rows: spec.rows,
            cols: spec.cols,
            noise_std: spec.noise_std,
            n_instances: sample.truth.len(),
            sbr: sample.sbr.iter().map(|&s| finite(s)).collect(),
            warnings: &sample.warnings,
        };
        write_with(ctx, path, |p| write_json(p, &meta))?;
    }
    Ok(())
}

fn detect(a: &DetectArgs, ctx: &mut Ctx) -> Outcome<()> {
    let out = required("out", &a.out)?;
    let params = thresholds(a.low, a.high)?;
    let conn = connectivity(a.connectivity)?;
    let prob: ProbMap = match (&a.prob, &a.xch4) {
        (Some(_), Some(_)) => return invalid("xch4", "give either --prob or --xch4, not both"),
        (None, None) => return invalid("prob", "missing (pass --prob, or --xch4 with --baseline)"),
        (Some(p), None) => {
            check_exists("prob", p)?;
            if a.baseline {
                return invalid("baseline", "applies to --xch4 input only");
            }
            ctx.stage("load", || load_map(p)).field("prob")?
        }
        (None, Some(p)) => {
            check_exists("xch4", p)?;
            if !a.baseline {
                return invalid("baseline", "--xch4 input needs --baseline");
            }
            let map: Xch4Map = ctx.stage("load", || load_map(p)).field("xch4")?;
            ctx.stage("baseline", || baseline_probability(&map)).field("xch4")?
        }
    };
    ctx.report_next_to(out, "detect");
    let masks = ctx
        .stage("hysteresis", || hysteresis_threshold(&prob, params, conn))
        .runtime()?;
    info!("{} instances", masks.len());
    write_with(ctx, out, |p| Ok(save_masks(&masks, p)?))?;
    if let Some(path) = &a.prob_out {
        write_with(ctx, path, |p| Ok(save_map(&prob, p)?))?;
    }
    Ok(())
}

fn load_mask_list(field: &str, paths: &[std::path::PathBuf]) -> Outcome<Vec<InstanceMaskSet>> {
    paths
        .iter()
        .map(|p| {
            check_exists(field, p)?;
            load_masks(p).field(field)
        })
        .collect()
}

fn check_pairing(left: &str, n_left: usize, n_right: usize) -> Outcome<()> {
    if n_left == 0 {
        return invalid(left, format_args!("missing (pass --{left} with at least one file)"));
    }
    if n_right == 0 {
        return invalid("truth", "missing (pass --truth with at least one file)");
    }
    if n_left != n_right {
        return invalid("truth", format_args!("{n_right} files for {n_left} --{left} files"));
    }
    Ok(())
}

fn check_shapes(field: &str, shapes: impl Iterator<Item = (usize, usize)>, truths: &[InstanceMaskSet]) -> Outcome<()> {
    for (i, (s, t)) in shapes.zip(truths).enumerate() {
        if s != t.shape() {
            return invalid(
                "truth",
                format_args!("scene {i}: {field} shape {s:?} vs truth {:?}", t.shape()),
            );
        }
    }
    Ok(())
}

fn evaluate_cmd(a: &EvaluateArgs, ctx: &mut Ctx) -> Outcome<()> {
    check_pairing("pred", a.pred.len(), a.truth.len())?;
    let preds = load_mask_list("pred", &a.pred)?;
    let truths = load_mask_list("truth", &a.truth)?;
    check_shapes("pred", preds.iter().map(|p| p.shape()), &truths)?;
    if let Some(out) = &a.out {
        ctx.report_next_to(out, "evaluate");
    }
    let report = ctx.stage("evaluate", || evaluate_dataset(&preds, &truths)).runtime()?;
    let text = to_json(&report).runtime()?;
    print!("{text}");
    if let Some(out) = &a.out {
        write_with(ctx, out, |p| Ok(fs::write(p, &text)?))?;
    }
    Ok(())
}

fn grid(field: &str, spec: &str) -> Outcome<Vec<f64>> {
    parse_grid(spec).field(field)
}

fn sweep_cmd(a: &SweepArgs, ctx: &mut Ctx) -> Outcome<()> {
    check_pairing("prob", a.prob.len(), a.truth.len())?;
    let out = required("out", &a.out)?;
    let low = grid("low_grid", &a.low_grid)?;
    let high = grid("high_grid", &a.high_grid)?;
    let conn = connectivity(a.connectivity)?;
    let probs: Vec<ProbMap> = a
        .prob
        .iter()
        .map(|p| {
            check_exists("prob", p)?;
            load_map(p).field("prob")
        })
        .collect::<Outcome<_>>()?;
    let truths = load_mask_list("truth", &a.truth)?;
    check_shapes("prob", probs.iter().map(|p| (p.rows(), p.cols())), &truths)?;
    ctx.report_next_to(out, "sweep");

    let rows = ctx
        .stage("sweep", || sweep(&probs, &truths, &low, &high, conn))
        .runtime()?;
    if rows.is_empty() {
        warn!("no (low, high) pair with low <= high in the grids");
    }
    write_with(ctx, out, |p| Ok(write_sweep_csv(&rows, p)?))
}

fn select_best_cmd(a: &SelectBestArgs, ctx: &mut Ctx) -> Outcome<()> {
    let table_path = existing("table", &a.table)?;
    let rows = read_sweep_csv(table_path).field("table")?;
    if rows.is_empty() {
        return invalid("table", "sweep table has no rows");
    }
    if let Some(out) = &a.out {
        ctx.report_next_to(out, "select-best");
    }
    let best = select_best(&rows, a.criterion.into()).runtime()?;
    let text = to_json(&best).runtime()?;
    print!("{text}");
    if let Some(out) = &a.out {
        write_with(ctx, out, |p| Ok(fs::write(p, &text)?))?;
    }
    Ok(())
}

/// Uniform in [0, 1) from the top 53 bits.
fn unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| start + (end - start) * i as f64 / (n - 1) as f64)
        .collect()
}

fn pipeline(a: &PipelineArgs, ctx: &mut Ctx) -> Outcome<()> {
    let scene_path = existing("scene", &a.scene)?;
    let out_dir = required("out_dir", &a.out_dir)?;
    let seed = *required("seed", &a.seed)?;
    ctx.seed = Some(seed);
    ctx.default_report = Some(out_dir.join("run_report.json"));

    if a.bands < 2 {
        return invalid("bands", "need at least 2 bands");
    }
    positive("band_start", a.band_start)?;
    if !(a.band_end > a.band_start) || !a.band_end.is_finite() {
        return invalid(
            "band_end",
            format_args!("{} must exceed band_start {}", a.band_end, a.band_start),
        );
    }
    let spacing = (a.band_end - a.band_start) / (a.bands - 1) as f64;
    let fwhm = a.fwhm.unwrap_or(1.1 * spacing);
    positive("fwhm", fwhm)?;
    in_range("max_shift", a.max_shift, 0.0, 50.0)?;
    in_range("radiance_noise", a.radiance_noise, 0.0, 1.0)?;
    positive("half_width", a.half_width)?;
    in_range("shrinkage", a.shrinkage, 0.0, 1.0)?;
    let params = thresholds(a.low, a.high)?;
    let conn = connectivity(a.connectivity)?;
    let low_grid = grid("low_grid", &a.low_grid)?;
    let high_grid = grid("high_grid", &a.high_grid)?;
    let window = band_range(a.window, a.bands)?;

    let spec = OracleSceneSpec::load(scene_path).field("scene")?;
    if spec.rows < 2 {
        return invalid("scene", "retrieval needs at least 2 rows");
    }
    let (trans, xsec_ppm) = match (&a.transmittance, &a.cross_section) {
        (None, None) => {
            let (start, end, step) = TOY_GRID_NM;
            toy_atmosphere(start, end, step).runtime()?
        }
        (Some(_), None) => return invalid("cross_section", "required with --transmittance"),
        (None, Some(_)) => return invalid("transmittance", "required with --cross-section"),
        (Some(_), Some(_)) => (
            load_table("transmittance", existing("transmittance", &a.transmittance)?)?,
            load_table("cross_section", existing("cross_section", &a.cross_section)?)?,
        ),
    };
    let xsec = xsec_ppm.scaled(1e-3);
    let reference = simulate_reference(&trans, a.solar.envelope(), 1.0).field("transmittance")?;
    check_coverage(&reference, a, fwhm)?;

    let centers = linspace(a.band_start, a.band_end, a.bands);
    let nominal = SpectralCalibration::shared(spec.cols, &centers, &vec![fwhm; a.bands]).field("bands")?;

    let sample = ctx.stage("simulate", || spec.generate::<f64>()).runtime()?;
    for w in &sample.warnings {
        warn!("{w}");
    }
    let true_shifts: Vec<f64> = (0..spec.cols)
        .map(|c| a.max_shift * (2.0 * unit(derive_seed(seed, c as u64)) - 1.0))
        .collect();
    let mean_radiance = {
        let s = convolve_srf(&reference, nominal.centers(0), nominal.fwhm(0)).runtime()?;
        s.iter().sum::<f64>() / s.len() as f64
    };
    let noise_abs = a.radiance_noise * mean_radiance;
    let cube = ctx
        .stage("render", || {
            render_radiance_cube(
                &sample.map,
                &reference,
                &xsec,
                &nominal,
                &true_shifts,
                noise_abs,
                derive_seed(seed, u64::MAX),
            )
        })
        .runtime()?;

    let recal = ctx
        .stage("recalibrate", || {
            recalibrate_cube(&cube, &reference, a.half_width, window.clone())
        })
        .runtime()?;
    let corrected = nominal.shifted(&recal.offsets).runtime()?;
    let jacobians = ctx
        .stage("jacobian", || {
            (0..spec.cols)
                .into_par_iter()
                .map(|c| methane_jacobian(&reference, &xsec, corrected.centers(c), corrected.fwhm(c), 1.0))
                .collect::<plumekit::Result<Vec<_>>>()
        })
        .runtime()?;
    let options = RetrievalOptions {
        shrinkage: a.shrinkage,
        window: Some(window.clone()),
        parallel: true,
    };
    let (xch4, retrieval) = ctx
        .stage("matched_filter", || {
            retrieve_xch4(&cube, &ColumnJacobians::PerColumn(jacobians), &options)
        })
        .runtime()?;
    let prob = ctx.stage("baseline", || baseline_probability(&xch4)).runtime()?;
    let pred = ctx
        .stage("hysteresis", || hysteresis_threshold(&prob, params, conn))
        .runtime()?;
    let scores = ctx.stage("evaluate", || evaluate(&pred, &sample.truth)).runtime()?;
    let table = ctx
        .stage("sweep", || {
            sweep(
                std::slice::from_ref(&prob),
                std::slice::from_ref(&sample.truth),
                &low_grid,
                &high_grid,
                conn,
            )
        })
        .runtime()?;
    info!(
        "precision {:.3} recall {:.3} iou {:.3} at low {} high {}",
        scores.precision, scores.recall, scores.iou, a.low, a.high
    );

    let max_abs_error = recal
        .offsets
        .iter()
        .zip(&true_shifts)
        .map(|(o, t)| (o - t).abs())
        .fold(0.0, f64::max);
    let recal_out = RecalibrationOutput {
        half_width: a.half_width,
        window: [window.start, window.end],
        offsets: &recal.offsets,
        residuals: &recal.residuals,
        failed: &recal.failed,
        true_shifts: Some(&true_shifts),
        max_abs_error: Some(max_abs_error),
    };
    let t = std::time::Instant::now();
    write_with(ctx, &out_dir.join("scene.map.json"), |p| Ok(save_map(&sample.map, p)?))?;
    write_with(ctx, &out_dir.join("truth.mask.json"), |p| {
        Ok(save_masks(&sample.truth, p)?)
    })?;
    write_with(ctx, &out_dir.join("cube.json"), |p| Ok(save_cube(&cube, p)?))?;
    write_with(ctx, &out_dir.join("recalibration.json"), |p| write_json(p, &recal_out))?;
    write_with(ctx, &out_dir.join("xch4.map.json"), |p| Ok(save_map(&xch4, p)?))?;
    write_with(ctx, &out_dir.join("retrieval_report.json"), |p| {
        write_json(p, &retrieval)
    })?;
    write_with(ctx, &out_dir.join("prob.map.json"), |p| Ok(save_map(&prob, p)?))?;
    write_with(ctx, &out_dir.join("pred.mask.json"), |p| Ok(save_masks(&pred, p)?))?;
    write_with(ctx, &out_dir.join("eval.json"), |p| write_json(p, &scores))?;
    write_with(ctx, &out_dir.join("sweep.csv"), |p| Ok(write_sweep_csv(&table, p)?))?;
    ctx.record("write", t.elapsed().as_secs_f64());
    Ok(())
}

/// Every shifted band must sit inside the reference grid with its response
/// support and be resolved by it.
fn check_coverage(reference: &ReferenceSpectrum<f64>, a: &PipelineArgs, fwhm: f64) -> Outcome<()> {
    let grid = reference.grid();
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    let reach = a.max_shift + plumekit::spectral::EDGE_MARGIN_FWHM * fwhm;
    if a.band_start - reach < lo {
        return invalid(
            "band_start",
            format_args!(
                "{} nm leaves no room for shifts and response support above the grid start {lo} nm",
                a.band_start
            ),
        );
    }
    if a.band_end + reach > hi {
        return invalid(
            "band_end",
            format_args!(
                "{} nm leaves no room for shifts and response support below the grid end {hi} nm",
                a.band_end
            ),
        );
    }
    let step = grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    if step > fwhm / plumekit::spectral::MIN_SAMPLES_PER_FWHM {
        return invalid(
            "fwhm",
            format_args!("{fwhm} nm is under-resolved by the {step} nm reference grid"),
        );
    }
    Ok(())
}
