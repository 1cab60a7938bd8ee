//! Fisheye plane-sweep stereo.
//!
//! Every plane hypothesis induces a per-pixel warp from the reference camera
//! into each support camera (ray/plane intersection, rigid transform, fisheye
//! projection). Support images are resampled through that warp and compared
//! with the reference over a square window using ZNCC. The per-pixel winner
//! over all planes gives the depth; the best cost among non-neighboring planes
//! is kept for the uniqueness test.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::geometry::{CameraRig, FisheyeCamera, Pixel, Plane, Pose, Vec3};
use crate::image::Image;

/// Patch variance below which a window is considered textureless.
pub const MIN_PATCH_VARIANCE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SweepDirection {
    Fronto,
    Ground,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPlane {
    pub plane: Plane,
    pub direction: SweepDirection,
}

/// Plane hypotheses in the reference camera frame. Within each direction the
/// planes are stored by increasing offset.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneSet {
    planes: Vec<SweepPlane>,
    /// Ray/plane intersections farther than this are rejected.
    max_range: f64,
}

impl PlaneSet {
    pub fn new(planes: Vec<SweepPlane>, max_range: f64) -> Self {
        Self { planes, max_range }
    }

    pub fn planes(&self) -> &[SweepPlane] {
        &self.planes
    }

    pub fn len(&self) -> usize {
        self.planes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.planes.is_empty()
    }

    pub fn max_range(&self) -> f64 {
        self.max_range
    }

    /// Offsets of the planes sweeping in `dir`, in storage order.
    pub fn offsets(&self, dir: SweepDirection) -> Vec<f64> {
        self.planes
            .iter()
            .filter(|p| p.direction == dir)
            .map(|p| p.plane.offset)
            .collect()
    }

    /// Planes `a` and `b` are neighbors in the same sweep.
    fn adjacent(&self, a: usize, b: usize) -> bool {
        a.abs_diff(b) == 1 && self.planes[a].direction == self.planes[b].direction
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub n_fronto: usize,
    pub n_ground: usize,
    pub z_min: f64,
    pub z_max: f64,
    pub window_full: usize,
    pub window_low: usize,
    pub ground_band_halfwidth: f64,
    /// Average only the `k` best support views per plane (occlusion handling);
    /// `None` averages every valid view.
    pub best_k: Option<usize>,
    pub crop_w: usize,
    pub crop_h: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_fronto: 64,
            n_ground: 30,
            z_min: 2.0,
            z_max: 60.0,
            window_full: 9,
            window_low: 7,
            ground_band_halfwidth: 0.5,
            best_k: None,
            crop_w: 572,
            crop_h: 332,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.window_full.is_multiple_of(2) || self.window_low.is_multiple_of(2) {
            return bad(format!(
                "window sizes must be odd (got {} and {})",
                self.window_full, self.window_low
            ));
        }
        if !(self.z_min > 0.0 && self.z_min < self.z_max) {
            return bad(format!("need 0 < z_min < z_max (got {}, {})", self.z_min, self.z_max));
        }
        if self.n_fronto + self.n_ground == 0 {
            return bad("no plane hypotheses".into());
        }
        if !(self.ground_band_halfwidth >= 0.0) {
            return bad("ground band half-width must be non-negative".into());
        }
        if self.best_k == Some(0) {
            return bad("best_k must be positive".into());
        }
        Ok(())
    }
}

/// Fronto-parallel planes uniform in inverse depth over `[z_min, z_max]`, then
/// ground-parallel planes uniform within `±ground_band_halfwidth` of `ground`.
pub fn generate_planes(cfg: &SweepConfig, ground: &Plane) -> PlaneSet {
    let mut planes = Vec::with_capacity(cfg.n_fronto + cfg.n_ground);
    let (inv_near, inv_far) = (1.0 / cfg.z_min, 1.0 / cfg.z_max);
    for k in 0..cfg.n_fronto {
        let depth = if cfg.n_fronto == 1 {
            cfg.z_min
        } else {
            let s = k as f64 / (cfg.n_fronto - 1) as f64;
            1.0 / (inv_near + (inv_far - inv_near) * s)
        };
        planes.push(SweepPlane {
            plane: Plane {
                normal: Vec3::z(),
                offset: depth,
            },
            direction: SweepDirection::Fronto,
        });
    }
    // Exact endpoints; the reciprocal of a reciprocal can be off by an ulp.
    if cfg.n_fronto >= 2 {
        planes[0].plane.offset = cfg.z_min;
        planes[cfg.n_fronto - 1].plane.offset = cfg.z_max;
    }
    for k in 0..cfg.n_ground {
        let shift = if cfg.n_ground == 1 {
            0.0
        } else {
            let s = k as f64 / (cfg.n_ground - 1) as f64;
            cfg.ground_band_halfwidth * (2.0 * s - 1.0)
        };
        planes.push(SweepPlane {
            plane: Plane {
                normal: ground.normal,
                offset: ground.offset + shift,
            },
            direction: SweepDirection::Ground,
        });
    }
    PlaneSet::new(planes, 2.0 * cfg.z_max)
}

/// Maps a reference pixel into a source camera through `plane`.
pub fn warp_pixel(
    plane: &Plane,
    ref_cam: &FisheyeCamera,
    src_cam: &FisheyeCamera,
    ref_to_src: &Pose,
    p: &Pixel,
    max_range: f64,
) -> Option<Pixel> {
    let ray = ref_cam.back_project(p).ok()?;
    let range = plane.ray_range(&ray).filter(|&t| t <= max_range)?;
    src_cam.project(&ref_to_src.apply(&(ray * range)))
}

/// `(1 - ZNCC) / 2` between two equally sized patches; `None` when either
/// patch is textureless.
pub fn zncc_cost(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "patches must have equal size");
    let n = a.len() as f64;
    if a.is_empty() {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (da, db) = (x - ma, y - mb);
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    if saa / n < MIN_PATCH_VARIANCE || sbb / n < MIN_PATCH_VARIANCE {
        return None;
    }
    let zncc = sab / (saa * sbb).sqrt();
    Some(((1.0 - zncc) / 2.0).clamp(0.0, 1.0))
}

/// A support image with its camera and the reference-to-source transform.
#[derive(Clone, Copy, Debug)]
pub struct SupportView<'a> {
    pub image: &'a Image,
    pub camera: &'a FisheyeCamera,
    pub ref_to_src: Pose,
}

/// Pixel rectangle `[x, x + w) x [y, y + h)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Roi {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Roi {
    /// Centered `w x h` crop, clamped to the image.
    pub fn centered(width: usize, height: usize, w: usize, h: usize) -> Self {
        let (w, h) = (w.min(width), h.min(height));
        Self {
            x: (width - w) / 2,
            y: (height - h) / 2,
            w,
            h,
        }
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        i >= self.x && i < self.x + self.w && j >= self.y && j < self.y + self.h
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SweepOptions {
    pub best_k: Option<usize>,
    /// Only pixels inside the region are estimated; windows may still read
    /// reference pixels outside it.
    pub roi: Option<Roi>,
}

/// Plane sweep over the whole reference image.
pub fn sweep(
    ref_image: &Image,
    ref_cam: &FisheyeCamera,
    support: &[SupportView<'_>],
    planes: &PlaneSet,
    window: usize,
) -> Result<DepthMap> {
    sweep_with(ref_image, ref_cam, support, planes, window, &SweepOptions::default())
}

pub fn sweep_with(
    ref_image: &Image,
    ref_cam: &FisheyeCamera,
    support: &[SupportView<'_>],
    planes: &PlaneSet,
    window: usize,
    opts: &SweepOptions,
) -> Result<DepthMap> {
    if support.is_empty() {
        return Err(Error::Config("plane sweep needs at least one support view".into()));
    }
    if window.is_multiple_of(2) {
        return Err(Error::Config(format!("window size {window} is not odd")));
    }
    if ref_image.width() != ref_cam.width() || ref_image.height() != ref_cam.height() {
        return Err(Error::DimensionMismatch("reference image and camera differ".into()));
    }
    for (k, s) in support.iter().enumerate() {
        if s.image.width() != s.camera.width() || s.image.height() != s.camera.height() {
            return Err(Error::DimensionMismatch(format!(
                "support view {k}: image and camera differ"
            )));
        }
    }
    let layout = Layout::new(ref_cam, window, opts.roi);
    let mut out = DepthMap::invalid(ref_cam.width(), ref_cam.height());
    if layout.out_w == 0 || layout.out_h == 0 || planes.is_empty() {
        return Ok(out);
    }
    let reference = ReferenceData::new(ref_image, ref_cam, &layout);

    let n_out = layout.out_w * layout.out_h;
    let mut top = vec![[(f64::INFINITY, u32::MAX); 4]; n_out];
    let chunk = (rayon::current_num_threads() * 2).max(4);
    let indices: Vec<usize> = (0..planes.len()).collect();
    for batch in indices.chunks(chunk) {
        let costs: Vec<Vec<f64>> = batch
            .par_iter()
            .map(|&k| plane_costs(&planes.planes[k].plane, planes.max_range, &reference, support, &layout, opts.best_k))
            .collect();
        for (&k, plane_cost) in batch.iter().zip(&costs) {
            for (slot, &c) in top.iter_mut().zip(plane_cost) {
                if c.is_nan() || c >= slot[3].0 {
                    continue;
                }
                let mut pos = 3;
                while pos > 0 && c < slot[pos - 1].0 {
                    slot[pos] = slot[pos - 1];
                    pos -= 1;
                }
                slot[pos] = (c, k as u32);
            }
        }
    }

    for oj in 0..layout.out_h {
        for oi in 0..layout.out_w {
            let slot = &top[oj * layout.out_w + oi];
            let (best, win) = slot[0];
            if !best.is_finite() {
                continue;
            }
            let (i, j) = (layout.out_x + oi, layout.out_y + oj);
            let ray = reference.rays[layout.ext_index(i, j)].expect("costed pixels have rays");
            let Some(range) = planes.planes[win as usize].plane.ray_range(&ray) else {
                continue;
            };
            let second = slot[1..]
                .iter()
                .find(|(c, k)| c.is_finite() && !planes.adjacent(*k as usize, win as usize))
                .map_or(1.0, |(c, _)| *c);
            let idx = out.index(i, j);
            out.depth[idx] = range as f32;
            out.best_cost[idx] = best as f32;
            out.second_cost[idx] = second as f32;
        }
    }
    Ok(out)
}

/// Index bookkeeping: the output region (pixels whose full window lies in the
/// image, restricted to the ROI) and the extended region covering their
/// windows.
struct Layout {
    radius: usize,
    out_x: usize,
    out_y: usize,
    out_w: usize,
    out_h: usize,
    ext_x: usize,
    ext_y: usize,
    ext_w: usize,
    ext_h: usize,
}

impl Layout {
    fn new(cam: &FisheyeCamera, window: usize, roi: Option<Roi>) -> Self {
        let (w, h) = (cam.width(), cam.height());
        let r = window / 2;
        let roi = roi.unwrap_or(Roi { x: 0, y: 0, w, h });
        let x0 = roi.x.max(r);
        let y0 = roi.y.max(r);
        let x1 = (roi.x + roi.w).min(w.saturating_sub(r));
        let y1 = (roi.y + roi.h).min(h.saturating_sub(r));
        let (out_w, out_h) = (x1.saturating_sub(x0), y1.saturating_sub(y0));
        let ext_x = x0.saturating_sub(r);
        let ext_y = y0.saturating_sub(r);
        let ext_w = if out_w == 0 { 0 } else { (x1 + r).min(w) - ext_x };
        let ext_h = if out_h == 0 { 0 } else { (y1 + r).min(h) - ext_y };
        Self {
            radius: r,
            out_x: x0,
            out_y: y0,
            out_w,
            out_h,
            ext_x,
            ext_y,
            ext_w,
            ext_h,
        }
    }

    #[inline]
    fn ext_index(&self, i: usize, j: usize) -> usize {
        (j - self.ext_y) * self.ext_w + (i - self.ext_x)
    }

    fn window_n(&self) -> f64 {
        let s = 2 * self.radius + 1;
        (s * s) as f64
    }
}

/// Summed-area table over the extended region, four channels per entry.
struct Integral {
    stride: usize,
    data: Vec<[f64; 4]>,
}

impl Integral {
    fn build(w: usize, h: usize, mut value: impl FnMut(usize) -> [f64; 4]) -> Self {
        let stride = w + 1;
        let mut data = vec![[0.0; 4]; stride * (h + 1)];
        for y in 0..h {
            let mut row = [0.0; 4];
            for x in 0..w {
                let v = value(y * w + x);
                for c in 0..4 {
                    row[c] += v[c];
                }
                let above = data[y * stride + x + 1];
                let cell = &mut data[(y + 1) * stride + x + 1];
                for c in 0..4 {
                    cell[c] = above[c] + row[c];
                }
            }
        }
        Self { stride, data }
    }

    /// Sum over `[x0, x1) x [y0, y1)` in extended-region coordinates.
    #[inline]
    fn window(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> [f64; 4] {
        let s = self.stride;
        let (a, b, c, d) = (
            self.data[y0 * s + x0],
            self.data[y0 * s + x1],
            self.data[y1 * s + x0],
            self.data[y1 * s + x1],
        );
        [
            d[0] - b[0] - c[0] + a[0],
            d[1] - b[1] - c[1] + a[1],
            d[2] - b[2] - c[2] + a[2],
            d[3] - b[3] - c[3] + a[3],
        ]
    }
}

struct ReferenceData {
    rays: Vec<Option<Vec3>>,
    values: Vec<f64>,
    /// Per output pixel: window sum of the reference and its centered sum of
    /// squares (NaN when the reference window is textureless or lacks rays).
    sum: Vec<f64>,
    centered_sq: Vec<f64>,
}

impl ReferenceData {
    fn new(image: &Image, cam: &FisheyeCamera, layout: &Layout) -> Self {
        let (ew, eh) = (layout.ext_w, layout.ext_h);
        let mut rays = Vec::with_capacity(ew * eh);
        let mut values = Vec::with_capacity(ew * eh);
        for y in 0..eh {
            for x in 0..ew {
                let (i, j) = (layout.ext_x + x, layout.ext_y + y);
                rays.push(cam.pixel_ray(i, j));
                values.push(image.get(i, j) as f64);
            }
        }
        let integral = Integral::build(ew, eh, |e| {
            let v = values[e];
            [v, v * v, 0.0, if rays[e].is_none() { 1.0 } else { 0.0 }]
        });
        let n = layout.window_n();
        let mut sum = Vec::with_capacity(layout.out_w * layout.out_h);
        let mut centered_sq = Vec::with_capacity(layout.out_w * layout.out_h);
        for oj in 0..layout.out_h {
            for oi in 0..layout.out_w {
                let [s, ss, _, missing] = window_sums(&integral, layout, oi, oj);
                let var = ss - s * s / n;
                let ok = missing == 0.0 && var / n >= MIN_PATCH_VARIANCE;
                sum.push(s);
                centered_sq.push(if ok { var } else { f64::NAN });
            }
        }
        Self {
            rays,
            values,
            sum,
            centered_sq,
        }
    }
}

#[inline]
fn window_sums(integral: &Integral, layout: &Layout, oi: usize, oj: usize) -> [f64; 4] {
    // Output pixel (oi, oj) sits at extended coordinates offset by the
    // distance between the two regions.
    let ex = layout.out_x - layout.ext_x + oi;
    let ey = layout.out_y - layout.ext_y + oj;
    let r = layout.radius;
    integral.window(ex - r, ey - r, ex + r + 1, ey + r + 1)
}

/// Aggregated matching cost of one plane for every output pixel (NaN = none).
fn plane_costs(
    plane: &Plane,
    max_range: f64,
    reference: &ReferenceData,
    support: &[SupportView<'_>],
    layout: &Layout,
    best_k: Option<usize>,
) -> Vec<f64> {
    let n_ext = layout.ext_w * layout.ext_h;
    let n_out = layout.out_w * layout.out_h;
    let points: Vec<Option<Vec3>> = reference
        .rays
        .iter()
        .map(|ray| {
            ray.and_then(|r| {
                plane
                    .ray_range(&r)
                    .filter(|&t| t <= max_range)
                    .map(|t| r * t)
            })
        })
        .collect();

    let mut per_view: Vec<Vec<f64>> = Vec::with_capacity(support.len());
    let mut samples = vec![0.0f64; n_ext];
    let mut missing = vec![false; n_ext];
    let n = layout.window_n();
    for view in support {
        let rot = view.ref_to_src.rotation();
        let trans = view.ref_to_src.translation();
        for e in 0..n_ext {
            let sample = points[e].and_then(|x| {
                let xs = rot * x + trans;
                view.camera
                    .project(&xs)
                    .and_then(|px| view.image.sample(px.x, px.y))
            });
            match sample {
                Some(v) => {
                    samples[e] = v;
                    missing[e] = false;
                }
                None => {
                    samples[e] = 0.0;
                    missing[e] = true;
                }
            }
        }
        let integral = Integral::build(layout.ext_w, layout.ext_h, |e| {
            let b = samples[e];
            [b, b * b, b * reference.values[e], if missing[e] { 1.0 } else { 0.0 }]
        });
        let mut costs = Vec::with_capacity(n_out);
        for oj in 0..layout.out_h {
            for oi in 0..layout.out_w {
                let o = oj * layout.out_w + oi;
                let var_a = reference.centered_sq[o];
                let [sb, sbb, sab, miss] = window_sums(&integral, layout, oi, oj);
                if miss > 0.0 || var_a.is_nan() {
                    costs.push(f64::NAN);
                    continue;
                }
                let var_b = sbb - sb * sb / n;
                if var_b / n < MIN_PATCH_VARIANCE {
                    costs.push(f64::NAN);
                    continue;
                }
                let cov = sab - reference.sum[o] * sb / n;
                let zncc = cov / (var_a * var_b).sqrt();
                costs.push(((1.0 - zncc) / 2.0).clamp(0.0, 1.0));
            }
        }
        per_view.push(costs);
    }

    let mut combined = Vec::with_capacity(n_out);
    let mut buf: Vec<f64> = Vec::with_capacity(support.len());
    for o in 0..n_out {
        buf.clear();
        buf.extend(per_view.iter().map(|v| v[o]).filter(|c| !c.is_nan()));
        if buf.is_empty() {
            combined.push(f64::NAN);
            continue;
        }
        // Sorting makes the sum independent of the support-view order.
        buf.sort_by(f64::total_cmp);
        let take = best_k.map_or(buf.len(), |k| k.min(buf.len()));
        combined.push(buf[..take].iter().sum::<f64>() / take as f64);
    }
    combined
}

/// Which image resolutions feed the depth estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScaleMode {
    Full,
    Half,
    Multiscale,
}

impl std::str::FromStr for ScaleMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(ScaleMode::Full),
            "half" => Ok(ScaleMode::Half),
            "multiscale" => Ok(ScaleMode::Multiscale),
            other => Err(Error::Config(format!(
                "unknown scale mode `{other}` (expected full, half or multiscale)"
            ))),
        }
    }
}

impl std::fmt::Display for ScaleMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScaleMode::Full => "full",
            ScaleMode::Half => "half",
            ScaleMode::Multiscale => "multiscale",
        })
    }
}

/// Depth estimate plus the wall-clock time spent sweeping.
#[derive(Clone, Debug)]
pub struct DepthEstimate {
    pub depth: DepthMap,
    pub sweep_time: Duration,
}

/// Estimates the reference depth map of a synchronized capture. `images` are
/// ordered like the rig's cameras; every non-reference camera supports.
pub fn estimate_depth(
    images: &[Image],
    rig: &CameraRig,
    cfg: &SweepConfig,
    mode: ScaleMode,
) -> Result<DepthEstimate> {
    cfg.validate()?;
    if images.len() != rig.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} images for a {}-camera rig",
            images.len(),
            rig.len()
        )));
    }
    if rig.len() < 2 {
        return Err(Error::Config("stereo needs at least two cameras".into()));
    }
    let ref_idx = rig.reference_index();
    let planes = generate_planes(cfg, &rig.ground_in_camera(ref_idx));
    let ref_cam = rig.reference();
    let (w, h) = (ref_cam.width(), ref_cam.height());
    let start = Instant::now();

    let low_res = || -> Result<DepthMap> {
        let low_rig = rig.half_resolution();
        let low_images: Vec<Image> = images.iter().map(Image::downsample).collect();
        let views = support_views(&low_images, &low_rig);
        let low = sweep(&low_images[ref_idx], low_rig.reference(), &views, &planes, cfg.window_low)?;
        Ok(upsample_nearest(&low, w, h))
    };
    let full_res = |roi: Option<Roi>| -> Result<DepthMap> {
        let views = support_views(images, rig);
        let opts = SweepOptions {
            best_k: cfg.best_k,
            roi,
        };
        sweep_with(&images[ref_idx], ref_cam, &views, &planes, cfg.window_full, &opts)
    };

    let depth = match mode {
        ScaleMode::Full => full_res(None)?,
        ScaleMode::Half => low_res()?,
        ScaleMode::Multiscale => {
            let up = low_res()?;
            let roi = Roi::centered(w, h, cfg.crop_w, cfg.crop_h);
            let crop = full_res(Some(roi))?;
            fuse_scales(&up, &crop, &roi)
        }
    };
    Ok(DepthEstimate {
        depth,
        sweep_time: start.elapsed(),
    })
}

/// Multi-scale estimate with the configured crop.
pub fn multiscale_depth(images: &[Image], rig: &CameraRig, cfg: &SweepConfig) -> Result<DepthMap> {
    Ok(estimate_depth(images, rig, cfg, ScaleMode::Multiscale)?.depth)
}

fn support_views<'a>(images: &'a [Image], rig: &'a CameraRig) -> Vec<SupportView<'a>> {
    (0..rig.len())
        .filter(|&k| k != rig.reference_index())
        .map(|k| SupportView {
            image: &images[k],
            camera: rig.camera(k),
            ref_to_src: rig.reference_to(k),
        })
        .collect()
}

/// Nearest-neighbor upsampling of a half-resolution map to `w x h`.
pub fn upsample_nearest(low: &DepthMap, w: usize, h: usize) -> DepthMap {
    let mut out = DepthMap::invalid(w, h);
    for j in 0..h {
        for i in 0..w {
            let (li, lj) = (i / 2, j / 2);
            if li < low.width() && lj < low.height() {
                let (s, d) = (low.index(li, lj), out.index(i, j));
                out.depth[d] = low.depth[s];
                out.best_cost[d] = low.best_cost[s];
                out.second_cost[d] = low.second_cost[s];
            }
        }
    }
    out
}

/// Inside `roi` the full-resolution estimate wins where valid; everywhere
/// else the upsampled low-resolution estimate is used.
pub fn fuse_scales(upsampled: &DepthMap, full: &DepthMap, roi: &Roi) -> DepthMap {
    let mut out = upsampled.clone();
    for j in roi.y..roi.y + roi.h {
        for i in roi.x..roi.x + roi.w {
            let k = full.index(i, j);
            if full.is_valid(k) {
                out.depth[k] = full.depth[k];
                out.best_cost[k] = full.best_cost[k];
                out.second_cost[k] = full.second_cost[k];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn default_plane_counts() {
        let planes = generate_planes(&SweepConfig::default(), &Plane {
            normal: Vec3::y(),
            offset: 1.6,
        });
        assert_eq!(planes.len(), 94);
        assert_eq!(planes.offsets(SweepDirection::Fronto).len(), 64);
        assert_eq!(planes.offsets(SweepDirection::Ground).len(), 30);
    }

    #[test]
    fn fronto_offsets_hit_range_endpoints_uniform_in_inverse_depth() {
        let cfg = SweepConfig {
            n_fronto: 2,
            n_ground: 0,
            ..SweepConfig::default()
        };
        let planes = generate_planes(&cfg, &Plane {
            normal: Vec3::y(),
            offset: 1.6,
        });
        assert_eq!(planes.offsets(SweepDirection::Fronto), vec![2.0, 60.0]);
        let planes = generate_planes(&SweepConfig::default(), &Plane {
            normal: Vec3::y(),
            offset: 1.6,
        });
        let inv: Vec<f64> = planes.offsets(SweepDirection::Fronto).iter().map(|d| 1.0 / d).collect();
        let step = inv[0] - inv[1];
        for pair in inv.windows(2) {
            assert_abs_diff_eq!(pair[0] - pair[1], step, epsilon = 1e-12);
        }
        for p in planes.planes() {
            assert_abs_diff_eq!(p.plane.normal.norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn ground_band_offsets() {
        let cfg = SweepConfig {
            n_fronto: 0,
            n_ground: 3,
            ..SweepConfig::default()
        };
        let planes = generate_planes(&cfg, &Plane {
            normal: Vec3::y(),
            offset: 1.6,
        });
        let off = planes.offsets(SweepDirection::Ground);
        assert_eq!(off.len(), 3);
        for (o, expected) in off.iter().zip([1.1, 1.6, 2.1]) {
            assert_abs_diff_eq!(*o, expected, epsilon = 1e-12);
        }
    }

    fn cam() -> FisheyeCamera {
        FisheyeCamera::new(1.0, 110.0, 110.0, 256.0, 136.0, 512, 272).unwrap()
    }

    #[test]
    fn identity_warp_is_identity() {
        let c = cam();
        let planes = generate_planes(&SweepConfig::default(), &Plane {
            normal: Vec3::y(),
            offset: 1.6,
        });
        for sp in planes.planes() {
            for &(u, v) in &[(256.0, 136.0), (100.5, 40.5), (400.25, 250.75)] {
                let p = Pixel::new(u, v);
                let ray = c.back_project(&p).unwrap();
                if let Some(t) = sp.plane.ray_range(&ray).filter(|&t| t <= planes.max_range()) {
                    let q = warp_pixel(&sp.plane, &c, &c, &Pose::identity(), &p, planes.max_range())
                        .unwrap_or_else(|| panic!("t = {t}"));
                    assert!((q - p).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn warp_rejects_parallel_behind_and_far() {
        let c = cam();
        let p = Pixel::new(256.0, 136.0);
        // The axis ray is parallel to a plane whose normal is perpendicular to it.
        let parallel = Plane {
            normal: Vec3::x(),
            offset: 1.0,
        };
        assert!(warp_pixel(&parallel, &c, &c, &Pose::identity(), &p, 120.0).is_none());
        let behind = Plane {
            normal: Vec3::z(),
            offset: -5.0,
        };
        assert!(warp_pixel(&behind, &c, &c, &Pose::identity(), &p, 120.0).is_none());
        let far = Plane {
            normal: Vec3::z(),
            offset: 130.0,
        };
        assert!(warp_pixel(&far, &c, &c, &Pose::identity(), &p, 120.0).is_none());
    }

    #[test]
    fn zncc_examples() {
        let a: Vec<f64> = (0..25).map(|k| ((k * 7919) % 23) as f64 / 23.0).collect();
        assert_abs_diff_eq!(zncc_cost(&a, &a).unwrap(), 0.0, epsilon = 1e-12);
        let anti: Vec<f64> = a.iter().map(|v| 3.0 - v).collect();
        assert_abs_diff_eq!(zncc_cost(&a, &anti).unwrap(), 1.0, epsilon = 1e-12);
        let affine: Vec<f64> = a.iter().map(|v| 2.0 * v + 5.0).collect();
        assert_abs_diff_eq!(zncc_cost(&a, &affine).unwrap(), 0.0, epsilon = 1e-12);
        assert!(zncc_cost(&a, &[0.5; 25]).is_none());
        assert!(zncc_cost(&[0.2; 25], &a).is_none());
    }

    #[test]
    fn window_sums_match_direct_zncc() {
        // The summed-area path must agree with the direct formula.
        let c = FisheyeCamera::new(0.0, 50.0, 50.0, 16.0, 12.0, 32, 24).unwrap();
        let data_a: Vec<f32> = (0..32 * 24).map(|k| ((k * 37 % 101) as f32) / 101.0).collect();
        let data_b: Vec<f32> = (0..32 * 24).map(|k| ((k * 53 % 97) as f32) / 97.0).collect();
        let a = Image::from_vec(32, 24, data_a).unwrap();
        let b = Image::from_vec(32, 24, data_b).unwrap();
        let plane = Plane {
            normal: Vec3::z(),
            offset: 4.0,
        };
        let planes = PlaneSet::new(
            vec![SweepPlane {
                plane,
                direction: SweepDirection::Fronto,
            }],
            100.0,
        );
        let views = [SupportView {
            image: &b,
            camera: &c,
            ref_to_src: Pose::identity(),
        }];
        let d = sweep(&a, &c, &views, &planes, 5).unwrap();
        for (i, j) in [(2usize, 2usize), (10, 7), (29, 21)] {
            let pa: Vec<f64> = (0..25).map(|k| a.get(i + k % 5 - 2, j + k / 5 - 2) as f64).collect();
            let pb: Vec<f64> = (0..25).map(|k| b.get(i + k % 5 - 2, j + k / 5 - 2) as f64).collect();
            let expected = zncc_cost(&pa, &pb).unwrap();
            let idx = d.index(i, j);
            assert!(d.is_valid(idx));
            assert_abs_diff_eq!(d.best_cost[idx] as f64, expected, epsilon = 1e-6);
            // Only one plane, so no competitor.
            assert_eq!(d.second_cost[idx], 1.0);
        }
        // Border pixels whose window leaves the image stay invalid.
        assert!(!d.is_valid(d.index(1, 5)));
        assert!(!d.is_valid(d.index(30, 5)));
    }

    #[test]
    fn textureless_reference_gives_no_depth() {
        let rig = CameraRig::synthetic(64, 34);
        let images = vec![Image::new(64, 34, 0.4); 5];
        let cfg = SweepConfig {
            crop_w: 36,
            crop_h: 20,
            ..SweepConfig::default()
        };
        for mode in [ScaleMode::Full, ScaleMode::Half, ScaleMode::Multiscale] {
            let d = estimate_depth(&images, &rig, &cfg, mode).unwrap().depth;
            assert_eq!(d.valid_count(), 0);
        }
    }

    #[test]
    fn sweep_rejects_bad_inputs() {
        let c = cam();
        let img = Image::new(512, 272, 0.5);
        let planes = PlaneSet::new(vec![], 10.0);
        assert!(sweep(&img, &c, &[], &planes, 9).is_err());
        let views = [SupportView {
            image: &img,
            camera: &c,
            ref_to_src: Pose::identity(),
        }];
        assert!(sweep(&img, &c, &views, &planes, 8).is_err());
        let small = Image::new(10, 10, 0.5);
        assert!(sweep(&small, &c, &views, &planes, 9).is_err());
    }

    #[test]
    fn crop_is_centered() {
        assert_eq!(Roi::centered(1024, 544, 572, 332), Roi {
            x: 226,
            y: 106,
            w: 572,
            h: 332
        });
        assert_eq!(Roi::centered(100, 50, 572, 332), Roi {
            x: 0,
            y: 0,
            w: 100,
            h: 50
        });
    }

    #[test]
    fn fusion_prefers_valid_full_resolution_inside_crop() {
        let up = DepthMap::from_depth(4, 4, vec![9.0; 16]).unwrap();
        let mut full = DepthMap::invalid(4, 4);
        full.depth[5] = 3.0;
        full.depth[0] = 7.0;
        let roi = Roi { x: 1, y: 1, w: 2, h: 2 };
        let fused = fuse_scales(&up, &full, &roi);
        assert_eq!(fused.depth[5], 3.0);
        // Outside the crop the upsampled value stays even if full is valid.
        assert_eq!(fused.depth[0], 9.0);
        // Invalid full-resolution pixel inside the crop falls back.
        assert_eq!(fused.depth[6], 9.0);
    }

    #[test]
    fn nearest_upsampling() {
        let low = DepthMap::from_depth(2, 1, vec![1.0, 2.0]).unwrap();
        let up = upsample_nearest(&low, 5, 3);
        assert_eq!(&up.depth[..5], &[1.0, 1.0, 2.0, 2.0, 0.0]);
        assert_eq!(&up.depth[5..10], &[1.0, 1.0, 2.0, 2.0, 0.0]);
        assert_eq!(up.valid_count(), 8);
    }

    #[test]
    fn half_resolution_rays_match_full_resolution() {
        let full = FisheyeCamera::new(1.0, 220.0, 220.0, 512.0, 272.0, 1024, 544).unwrap();
        let low = full.half_resolution();
        for (i, j) in [(0usize, 0usize), (100, 40), (255, 135), (511, 271)] {
            let (u, v) = (i as f64 + 0.5, j as f64 + 0.5);
            let a = low.back_project(&Pixel::new(u, v)).unwrap();
            let b = full.back_project(&Pixel::new(2.0 * u, 2.0 * v)).unwrap();
            assert!((a - b).norm() < 1e-6);
        }
    }
}
