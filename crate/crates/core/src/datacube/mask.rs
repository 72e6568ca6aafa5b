use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_json, write_json};
use crate::error::{Error, Result};

/// One run of consecutive row-major pixel indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Run {
    pub start: usize,
    pub len: usize,
}

impl From<[usize; 2]> for Run {
    fn from([start, len]: [usize; 2]) -> Self {
        Run { start, len }
    }
}

impl From<Run> for [usize; 2] {
    fn from(r: Run) -> Self {
        [r.start, r.len]
    }
}

/// Inclusive pixel bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BBox {
    pub row0: usize,
    pub col0: usize,
    pub row1: usize,
    pub col1: usize,
}

impl BBox {
    pub fn height(&self) -> usize {
        self.row1 - self.row0 + 1
    }

    pub fn width(&self) -> usize {
        self.col1 - self.col0 + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskInstance {
    id: u32,
    rle: Vec<Run>,
    bbox: BBox,
    area: usize,
}

impl MaskInstance {
    /// Builds an instance from pixel indices (any order, duplicates ignored).
    pub fn from_pixels(id: u32, pixels: &[usize], cols: usize, n_pixels: usize) -> Result<Self> {
        let mut px = pixels.to_vec();
        px.sort_unstable();
        px.dedup();
        let mut rle: Vec<Run> = Vec::new();
        for p in px {
            match rle.last_mut() {
                Some(run) if run.start + run.len == p => run.len += 1,
                _ => rle.push(Run { start: p, len: 1 }),
            }
        }
        Self::from_rle(id, rle, cols, n_pixels)
    }

    /// Validates runs: non-empty, in bounds, strictly ordered and disjoint.
    pub fn from_rle(id: u32, rle: Vec<Run>, cols: usize, n_pixels: usize) -> Result<Self> {
        if rle.is_empty() {
            return Err(Error::invalid(format!("instance {id} has no pixels")));
        }
        let mut end = 0usize;
        let (mut row0, mut col0, mut row1, mut col1) = (usize::MAX, usize::MAX, 0, 0);
        let mut area = 0;
        for (i, run) in rle.iter().enumerate() {
            if run.len == 0 {
                return Err(Error::invalid(format!("instance {id}: zero-length run {i}")));
            }
            if run.start + run.len > n_pixels {
                return Err(Error::OutOfRange {
                    index: run.start + run.len - 1,
                    limit: n_pixels,
                });
            }
            if i > 0 && run.start < end {
                return Err(Error::invalid(format!(
                    "instance {id}: runs unsorted or overlapping at {i}"
                )));
            }
            end = run.start + run.len;
            area += run.len;
            let (r_first, r_last) = (run.start / cols, (end - 1) / cols);
            row0 = row0.min(r_first);
            row1 = row1.max(r_last);
            if r_first == r_last {
                col0 = col0.min(run.start % cols);
                col1 = col1.max((end - 1) % cols);
            } else {
                // a run crossing a row boundary touches both the last and first column
                col0 = 0;
                col1 = cols - 1;
            }
        }
        Ok(Self {
            id,
            rle,
            bbox: BBox { row0, col0, row1, col1 },
            area,
        })
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn rle(&self) -> &[Run] {
        &self.rle
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn area(&self) -> usize {
        self.area
    }

    /// Row-major pixel indices in increasing order.
    pub fn pixels(&self) -> impl Iterator<Item = usize> + '_ {
        self.rle.iter().flat_map(|r| r.start..r.start + r.len)
    }

    pub fn paint(&self, bitmap: &mut [bool]) {
        for p in self.pixels() {
            bitmap[p] = true;
        }
    }
}

/// A set of (possibly overlapping) plume instances on one grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceMaskSet {
    rows: usize,
    cols: usize,
    instances: Vec<MaskInstance>,
}

impl InstanceMaskSet {
    pub fn new(rows: usize, cols: usize, instances: Vec<MaskInstance>) -> Self {
        Self { rows, cols, instances }
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, Vec::new())
    }

    /// Instances from per-instance pixel lists; ids are assigned 1, 2, ...
    pub fn from_pixel_lists(rows: usize, cols: usize, lists: &[Vec<usize>]) -> Result<Self> {
        let instances = lists
            .iter()
            .enumerate()
            .map(|(i, px)| MaskInstance::from_pixels(i as u32 + 1, px, cols, rows * cols))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(rows, cols, instances))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn instances(&self) -> &[MaskInstance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn push(&mut self, instance: MaskInstance) {
        self.instances.push(instance);
    }

    /// Union of all instances as a row-major bitmap.
    pub fn union_bitmap(&self) -> Vec<bool> {
        let mut bm = vec![false; self.rows * self.cols];
        for inst in &self.instances {
            inst.paint(&mut bm);
        }
        bm
    }

    /// Ground-truth sets must not overlap.
    pub fn validate_disjoint(&self) -> Result<()> {
        let mut bm = vec![false; self.rows * self.cols];
        for inst in &self.instances {
            for p in inst.pixels() {
                if std::mem::replace(&mut bm[p], true) {
                    return Err(Error::invalid(format!(
                        "instance {} overlaps another at pixel {p}",
                        inst.id
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct InstanceFile {
    id: u32,
    rle: Vec<Run>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MaskFile {
    rows: usize,
    cols: usize,
    instances: Vec<InstanceFile>,
}

pub fn load_masks(path: impl AsRef<Path>) -> Result<InstanceMaskSet> {
    let f: MaskFile = read_json(path.as_ref())?;
    let instances = f
        .instances
        .into_iter()
        .map(|i| MaskInstance::from_rle(i.id, i.rle, f.cols.max(1), f.rows * f.cols))
        .collect::<Result<Vec<_>>>()?;
    Ok(InstanceMaskSet::new(f.rows, f.cols, instances))
}

pub fn save_masks(masks: &InstanceMaskSet, path: impl AsRef<Path>) -> Result<()> {
    let f = MaskFile {
        rows: masks.rows,
        cols: masks.cols,
        instances: masks
            .instances
            .iter()
            .map(|i| InstanceFile {
                id: i.id,
                rle: i.rle.clone(),
            })
            .collect(),
    };
    write_json(path.as_ref(), &f)
}
