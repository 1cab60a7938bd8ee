//! Depth-map error statistics and map accuracy / completeness.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::geometry::{FisheyeCamera, Pose, Vec3};

/// Tolerances (meters) swept when reporting map quality.
pub const DEFAULT_TOLERANCES: [f64; 5] = [0.05, 0.10, 0.15, 0.20, 0.25];

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DepthErrorStats {
    pub frame_id: u64,
    pub median_abs_err: f64,
    pub mean_abs_err: f64,
    pub valid_evaluated: usize,
    /// No pixel was valid in both maps; the error fields are zero.
    pub empty: bool,
}

/// Absolute range error over pixels valid in both maps.
pub fn depth_error_stats(est: &DepthMap, gt: &DepthMap) -> Result<DepthErrorStats> {
    if !est.same_shape(gt) {
        return Err(Error::DimensionMismatch(format!(
            "estimate is {}x{}, ground truth {}x{}",
            est.width(),
            est.height(),
            gt.width(),
            gt.height()
        )));
    }
    let errors: Vec<f64> = (0..est.len())
        .filter(|&k| est.is_valid(k) && gt.is_valid(k))
        .map(|k| (est.depth[k] as f64 - gt.depth[k] as f64).abs())
        .collect();
    Ok(error_stats(errors))
}

/// Like [`depth_error_stats`] but restricted to pixels where `mask` is set.
pub fn masked_depth_error_stats(est: &DepthMap, gt: &DepthMap, mask: &[bool]) -> Result<DepthErrorStats> {
    if !est.same_shape(gt) || mask.len() != est.len() {
        return Err(Error::DimensionMismatch("depth maps and mask differ in size".into()));
    }
    let errors: Vec<f64> = (0..est.len())
        .filter(|&k| mask[k] && est.is_valid(k) && gt.is_valid(k))
        .map(|k| (est.depth[k] as f64 - gt.depth[k] as f64).abs())
        .collect();
    Ok(error_stats(errors))
}

fn error_stats(mut errors: Vec<f64>) -> DepthErrorStats {
    if errors.is_empty() {
        return DepthErrorStats {
            frame_id: 0,
            median_abs_err: 0.0,
            mean_abs_err: 0.0,
            valid_evaluated: 0,
            empty: true,
        };
    }
    errors.sort_by(f64::total_cmp);
    let n = errors.len();
    let median = if n % 2 == 1 {
        errors[n / 2]
    } else {
        0.5 * (errors[n / 2 - 1] + errors[n / 2])
    };
    DepthErrorStats {
        frame_id: 0,
        median_abs_err: median,
        mean_abs_err: errors.iter().sum::<f64>() / n as f64,
        valid_evaluated: n,
        empty: false,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MapQuality {
    pub accuracy: f64,
    pub completeness: f64,
    pub t1: f64,
    pub t2: f64,
}

/// Uniform hash grid for exact fixed-radius nearest-neighbor queries.
pub struct PointGrid<'a> {
    points: &'a [Vec3],
    cell: f64,
    cells: HashMap<[i64; 3], Vec<u32>>,
}

impl<'a> PointGrid<'a> {
    pub fn new(points: &'a [Vec3], cell: f64) -> Self {
        assert!(cell > 0.0, "grid cell must be positive");
        let mut cells: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        for (k, p) in points.iter().enumerate() {
            cells.entry(cell_of(p, cell)).or_default().push(k as u32);
        }
        Self { points, cell, cells }
    }

    /// Distance from `q` to its nearest point if that distance is at most the
    /// cell size; `None` otherwise.
    pub fn nearest_within_cell(&self, q: &Vec3) -> Option<f64> {
        let c = cell_of(q, self.cell);
        let mut best = f64::INFINITY;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        for &i in ids {
                            best = best.min(distance(q, &self.points[i as usize]));
                        }
                    }
                }
            }
        }
        (best <= self.cell).then_some(best)
    }
}

#[inline]
fn cell_of(p: &Vec3, cell: f64) -> [i64; 3] {
    [
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    ]
}

#[inline]
pub fn distance(a: &Vec3, b: &Vec3) -> f64 {
    (a - b).norm()
}

/// Fraction of `query` points within `t` of some `reference` point.
fn fraction_within(query: &[Vec3], grid: &PointGrid<'_>, t: f64) -> f64 {
    if query.is_empty() {
        return 1.0;
    }
    let hits = query
        .par_iter()
        .filter(|q| grid.nearest_within_cell(q).is_some_and(|d| d <= t))
        .count();
    hits as f64 / query.len() as f64
}

/// Accuracy of `sc` against `sgt` at `t1` and completeness of `sgt` against
/// `sc` at `t2`. An empty reconstruction has accuracy 1.
pub fn accuracy_completeness(sc: &[Vec3], sgt: &[Vec3], t1: f64, t2: f64) -> Result<MapQuality> {
    if sgt.is_empty() {
        return Err(Error::Empty("ground-truth point set is empty".into()));
    }
    if !(t1 > 0.0 && t2 > 0.0) {
        return Err(Error::Config("tolerances must be positive".into()));
    }
    let cell = t1.max(t2);
    let gt_grid = PointGrid::new(sgt, cell);
    let accuracy = fraction_within(sc, &gt_grid, t1);
    let completeness = if sc.is_empty() {
        0.0
    } else {
        fraction_within(sgt, &PointGrid::new(sc, cell), t2)
    };
    Ok(MapQuality {
        accuracy,
        completeness,
        t1,
        t2,
    })
}

/// Map quality at each tolerance (`t1 = t2 = t`).
pub fn tolerance_sweep(sc: &[Vec3], sgt: &[Vec3], tolerances: &[f64]) -> Result<Vec<MapQuality>> {
    tolerances
        .iter()
        .map(|&t| accuracy_completeness(sc, sgt, t, t))
        .collect()
}

/// Z-buffered splat of world points into a camera: each pixel keeps the
/// smallest range of the points projecting into it.
pub fn project_gt_depth(cloud: &[Vec3], cam: &FisheyeCamera, world_to_cam: &Pose) -> DepthMap {
    let (w, h) = (cam.width(), cam.height());
    let mut depth = vec![f32::INFINITY; w * h];
    for p in cloud {
        let x = world_to_cam.apply(p);
        let Some(px) = cam.project(&x) else { continue };
        let k = px.y.floor() as usize * w + px.x.floor() as usize;
        let r = x.norm() as f32;
        if r < depth[k] {
            depth[k] = r;
        }
    }
    DepthMap::from_depth(w, h, depth).expect("buffer matches camera size")
}
