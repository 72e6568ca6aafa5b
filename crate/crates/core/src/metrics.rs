//! Mask-level detection scores and pixel segmentation scores.
//!
//! A predicted instance is a true positive when it shares at least one pixel
//! with a ground-truth instance. IoU pools pixels over all instances; mIoU
//! averages, over ground-truth instances, the IoU between the instance and
//! the predictions touching it, so missed plumes count as zero.
//!
//! Datasets are scored by summing counts before forming ratios.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datacube::{InstanceMaskSet, MapFile, ProbabilityMap};
use crate::detection::{label_components, Connectivity};
use crate::error::{Error, Result};
use crate::num::Real;

fn check_shapes(pred: &InstanceMaskSet, truth: &InstanceMaskSet) -> Result<()> {
    if pred.shape() != truth.shape() {
        return Err(Error::invalid(format!(
            "prediction grid {:?} differs from truth grid {:?}",
            pred.shape(),
            truth.shape()
        )));
    }
    Ok(())
}

/// Raw tallies; additive over scenes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalCounts {
    pub n_pred: usize,
    pub n_true: usize,
    /// Predictions intersecting at least one truth instance.
    pub tp_pred: usize,
    /// Truth instances intersected by at least one prediction.
    pub matched_true: usize,
    /// `|P ∩ T|` over union masks.
    pub intersection: usize,
    /// `|P ∪ T|` over union masks.
    pub union: usize,
    /// Sum over truth instances of their IoU with touching predictions.
    pub instance_iou_sum: f64,
}

impl std::ops::AddAssign for EvalCounts {
    fn add_assign(&mut self, o: Self) {
        self.n_pred += o.n_pred;
        self.n_true += o.n_true;
        self.tp_pred += o.tp_pred;
        self.matched_true += o.matched_true;
        self.intersection += o.intersection;
        self.union += o.union;
        self.instance_iou_sum += o.instance_iou_sum;
    }
}

/// Instance-to-instance overlap: `touch[t]` lists predictions intersecting truth `t`.
fn overlaps(pred: &InstanceMaskSet, truth: &InstanceMaskSet) -> Vec<Vec<usize>> {
    let n = truth.rows() * truth.cols();
    // owner of each truth pixel; truth may overlap, so keep every owner
    let mut owners: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (t, inst) in truth.instances().iter().enumerate() {
        for p in inst.pixels() {
            owners[p].push(t);
        }
    }
    let mut touch = vec![Vec::new(); truth.len()];
    for (k, inst) in pred.instances().iter().enumerate() {
        for p in inst.pixels() {
            for &t in &owners[p] {
                if touch[t].last() != Some(&k) {
                    touch[t].push(k);
                }
            }
        }
    }
    touch
}

/// All tallies for one scene.
pub fn count(pred: &InstanceMaskSet, truth: &InstanceMaskSet) -> Result<EvalCounts> {
    check_shapes(pred, truth)?;
    let touch = overlaps(pred, truth);
    let mut pred_hit = vec![false; pred.len()];
    for ks in &touch {
        for &k in ks {
            pred_hit[k] = true;
        }
    }
    let pu = pred.union_bitmap();
    let tu = truth.union_bitmap();
    let intersection = pu.iter().zip(&tu).filter(|(a, b)| **a && **b).count();
    let union = pu.iter().zip(&tu).filter(|(a, b)| **a || **b).count();

    let n = truth.rows() * truth.cols();
    let mut instance_iou_sum = 0.0;
    let mut scratch = vec![false; n];
    for (t, inst) in truth.instances().iter().enumerate() {
        if touch[t].is_empty() {
            continue;
        }
        let mut touched_px = Vec::new();
        for &k in &touch[t] {
            for p in pred.instances()[k].pixels() {
                if !scratch[p] {
                    scratch[p] = true;
                    touched_px.push(p);
                }
            }
        }
        let inter = inst.pixels().filter(|&p| scratch[p]).count();
        let uni = touched_px.len() + inst.area() - inter;
        instance_iou_sum += inter as f64 / uni as f64;
        for p in touched_px {
            scratch[p] = false;
        }
    }
    Ok(EvalCounts {
        n_pred: pred.len(),
        n_true: truth.len(),
        tp_pred: pred_hit.iter().filter(|&&h| h).count(),
        matched_true: touch.iter().filter(|ks| !ks.is_empty()).count(),
        intersection,
        union,
        instance_iou_sum,
    })
}

/// Detection counts with precision and recall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchResult {
    pub counts: EvalCounts,
    pub precision: f64,
    pub recall: f64,
    /// No predictions: precision reported as 1.0.
    pub precision_vacuous: bool,
    /// No truth instances: recall reported as 1.0.
    pub recall_vacuous: bool,
}

pub fn match_masks(pred: &InstanceMaskSet, truth: &InstanceMaskSet) -> Result<MatchResult> {
    let counts = count(pred, truth)?;
    let (precision, precision_vacuous) = ratio(counts.tp_pred, counts.n_pred);
    let (recall, recall_vacuous) = ratio(counts.matched_true, counts.n_true);
    Ok(MatchResult {
        counts,
        precision,
        recall,
        precision_vacuous,
        recall_vacuous,
    })
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (1.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Pooled pixel IoU; 1.0 when both sets are empty.
pub fn pixel_iou(pred: &InstanceMaskSet, truth: &InstanceMaskSet) -> Result<f64> {
    let c = count(pred, truth)?;
    Ok(ratio(c.intersection, c.union).0)
}

/// Mean over truth instances of IoU(instance, predictions touching it).
pub fn mean_iou(pred: &InstanceMaskSet, truth: &InstanceMaskSet) -> Result<f64> {
    let c = count(pred, truth)?;
    if c.n_true == 0 {
        return Err(Error::invalid("mean IoU is undefined without ground-truth instances"));
    }
    Ok(c.instance_iou_sum / c.n_true as f64)
}

/// Detection and segmentation scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
    pub miou: f64,
    pub counts: EvalCounts,
    pub precision_vacuous: bool,
    pub recall_vacuous: bool,
    pub miou_vacuous: bool,
}

impl EvalReport {
    pub fn from_counts(counts: EvalCounts) -> Self {
        let (precision, precision_vacuous) = ratio(counts.tp_pred, counts.n_pred);
        let (recall, recall_vacuous) = ratio(counts.matched_true, counts.n_true);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        let iou = ratio(counts.intersection, counts.union).0;
        let miou_vacuous = counts.n_true == 0;
        let miou = if miou_vacuous {
            1.0
        } else {
            counts.instance_iou_sum / counts.n_true as f64
        };
        Self {
            precision,
            recall,
            f1,
            iou,
            miou,
            counts,
            precision_vacuous,
            recall_vacuous,
            miou_vacuous,
        }
    }
}

pub fn evaluate(pred: &InstanceMaskSet, truth: &InstanceMaskSet) -> Result<EvalReport> {
    Ok(EvalReport::from_counts(count(pred, truth)?))
}

/// Micro-averaged report over aligned prediction/truth lists.
pub fn evaluate_dataset(preds: &[InstanceMaskSet], truths: &[InstanceMaskSet]) -> Result<EvalReport> {
    if preds.len() != truths.len() {
        return Err(Error::LengthMismatch {
            what: "prediction vs truth scene lists",
            left: preds.len(),
            right: truths.len(),
        });
    }
    let mut total = EvalCounts::default();
    for (p, t) in preds.iter().zip(truths) {
        total += count(p, t)?;
    }
    Ok(EvalReport::from_counts(total))
}

/// Inclusive `start:stop:step` grid, e.g. `0:1:0.05`.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::invalid(format!("grid {spec:?}: expected start:stop:step"));
    let nums = parts
        .iter()
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<Vec<_>>>()?;
    let (start, stop, step) = match nums.as_slice() {
        [v] => (*v, *v, 1.0),
        [a, b, s] => (*a, *b, *s),
        _ => return Err(bad()),
    };
    if !(step > 0.0) || stop < start || !(0.0..=1.0).contains(&start) || !(0.0..=1.0).contains(&stop) {
        return Err(Error::invalid(format!(
            "grid {spec:?}: need 0 <= start <= stop <= 1 and step > 0"
        )));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n)
        .map(|i| ((start + step * i as f64) * 1e12).round() / 1e12)
        .collect())
}

/// One row of a threshold sweep; column order matches the CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub low: f64,
    pub high: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
    pub miou: f64,
    pub n_pred: usize,
    pub n_true: usize,
}

impl SweepRow {
    fn from_report(low: f64, high: f64, r: &EvalReport) -> Self {
        Self {
            low,
            high,
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
            iou: r.iou,
            miou: r.miou,
            n_pred: r.counts.n_pred,
            n_true: r.counts.n_true,
        }
    }
}

/// Hysteresis over every `low ≤ high` pair of the grids, scored over the whole
/// dataset. Rows are ordered by `low`, then `high`.
pub fn sweep<T: Real>(
    probs: &[ProbabilityMap<T>],
    truths: &[InstanceMaskSet],
    low_grid: &[f64],
    high_grid: &[f64],
    connectivity: Connectivity,
) -> Result<Vec<SweepRow>> {
    if probs.len() != truths.len() {
        return Err(Error::LengthMismatch {
            what: "probability maps vs truth mask sets",
            left: probs.len(),
            right: truths.len(),
        });
    }
    for (p, t) in probs.iter().zip(truths) {
        if (p.rows(), p.cols()) != t.shape() {
            return Err(Error::invalid("probability map and truth grids differ"));
        }
    }
    if low_grid.iter().chain(high_grid).any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid("threshold grids must lie in [0, 1]"));
    }
    let rows: Vec<Vec<SweepRow>> = low_grid
        .par_iter()
        .map(|&low| {
            let lo_t = T::lit(low);
            // components of {p >= low} and their peak value, per scene
            let comps: Vec<Vec<(Vec<usize>, T)>> = probs
                .iter()
                .map(|p| {
                    let v = p.values();
                    let mask: Vec<bool> = v.iter().map(|&x| x >= lo_t).collect();
                    label_components(&mask, p.rows(), p.cols(), connectivity)
                        .into_iter()
                        .map(|c| {
                            let peak = c.iter().map(|&i| v[i]).fold(T::neg_infinity(), T::max);
                            (c, peak)
                        })
                        .collect()
                })
                .collect();
            high_grid
                .iter()
                .filter(|&&high| high >= low)
                .map(|&high| {
                    let hi_t = T::lit(high);
                    let mut total = EvalCounts::default();
                    for ((scene, truth), p) in comps.iter().zip(truths).zip(probs) {
                        let kept: Vec<Vec<usize>> = scene
                            .iter()
                            .filter(|(_, peak)| *peak >= hi_t)
                            .map(|(c, _)| c.clone())
                            .collect();
                        let pred = InstanceMaskSet::from_pixel_lists(p.rows(), p.cols(), &kept)?;
                        total += count(&pred, truth)?;
                    }
                    Ok(SweepRow::from_report(low, high, &EvalReport::from_counts(total)))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.into_iter().flatten().collect())
}

pub const SWEEP_CSV_HEADER: [&str; 9] = [
    "low",
    "high",
    "precision",
    "recall",
    "f1",
    "iou",
    "miou",
    "n_pred",
    "n_true",
];

pub fn write_sweep_csv(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let err = |e: csv::Error| Error::Table {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(err)?;
    w.write_record(SWEEP_CSV_HEADER).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_sweep_csv(path: impl AsRef<Path>) -> Result<Vec<SweepRow>> {
    let path = path.as_ref();
    let err = |e: csv::Error| Error::Table {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut rdr = csv::Reader::from_path(path).map_err(err)?;
    let headers = rdr.headers().map_err(err)?.clone();
    if headers.iter().ne(SWEEP_CSV_HEADER) {
        return Err(Error::Table {
            path: path.to_path_buf(),
            message: format!("unexpected header {headers:?}"),
        });
    }
    rdr.deserialize().map(|r| r.map_err(err)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Iou,
    F1,
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iou" => Ok(Criterion::Iou),
            "f1" => Ok(Criterion::F1),
            other => Err(Error::invalid(format!("criterion must be iou or f1, got {other:?}"))),
        }
    }
}

/// Best row by `criterion`; ties go to the larger `high`, then the larger `low`.
pub fn select_best(table: &[SweepRow], criterion: Criterion) -> Result<SweepRow> {
    let score = |r: &SweepRow| match criterion {
        Criterion::Iou => r.iou,
        Criterion::F1 => r.f1,
    };
    table
        .iter()
        .copied()
        .reduce(|best, r| {
            let key = |x: &SweepRow| (score(x), x.high, x.low);
            if key(&r).partial_cmp(&key(&best)) == Some(std::cmp::Ordering::Greater) {
                r
            } else {
                best
            }
        })
        .ok_or_else(|| Error::invalid("cannot select from an empty sweep table"))
}
