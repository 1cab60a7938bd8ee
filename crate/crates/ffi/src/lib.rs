//! C interface to the densemap library.
//!
//! Every function returns a [`DmStatus`]; on failure a human-readable message
//! is available from [`dm_last_error`] on the calling thread. Objects are
//! opaque handles created by `*_new`/`*_read_*` functions and released with the
//! matching `*_free`. Passing a null handle to a `*_free` function is a no-op.
//! Depths are ranges along the viewing ray in meters; pixel `(i, j)` has its
//! center at `(i + 0.5, j + 0.5)`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use nalgebra::Matrix3;

use densemap::eval::accuracy_completeness;
use densemap::filter::{apply_filters, FilterConfig};
use densemap::pipeline::{run_pipeline, RunConfig};
use densemap::ply::PlyFormat;
use densemap::tsdf::{TsdfConfig, TsdfVolume};
use densemap::{DepthMap, Error, FisheyeCamera, Pixel, PointCloud, Pose, Vec3};

/// Result code of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    OutsideFov = 4,
    EmptyInput = 5,
    Parse = 6,
    Io = 7,
    Panic = 8,
}

/// Rigid transform `x -> R x + t` with `rotation` stored row-major.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DmPose {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

/// Accuracy and completeness of a reconstruction at tolerances `t1` and `t2`.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DmMapQuality {
    pub accuracy: f64,
    pub completeness: f64,
    pub t1: f64,
    pub t2: f64,
}

/// Statistics of one allocation plus integration pass.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DmFuseStats {
    pub blocks_allocated: usize,
    pub blocks_touched: usize,
    pub voxels_updated: usize,
}

/// Fisheye camera (unified projection model).
pub struct DmCamera(FisheyeCamera);

/// Depth map with per-pixel matching costs.
pub struct DmDepthMap(DepthMap);

/// Depth filter parameters.
pub struct DmFilterConfig(FilterConfig);

/// Hashed TSDF volume.
pub struct DmVolume(TsdfVolume);

/// Point cloud.
pub struct DmPointCloud(PointCloud);

struct Failure {
    status: DmStatus,
    message: String,
}

impl Failure {
    fn new(status: DmStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn null(what: &str) -> Self {
        Self::new(DmStatus::NullPointer, format!("{what} is null"))
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self::new(DmStatus::InvalidArgument, message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidCamera(_) | Error::InvalidPose(_) | Error::Config(_) => DmStatus::InvalidArgument,
            Error::OutsideFov { .. } => DmStatus::OutsideFov,
            Error::DimensionMismatch(_) => DmStatus::DimensionMismatch,
            Error::Parse { .. } | Error::Format { .. } => DmStatus::Parse,
            Error::Empty(_) => DmStatus::EmptyInput,
            Error::Io { .. } => DmStatus::Io,
        };
        Self::new(status, e.to_string())
    }
}

type FfiResult<T = ()> = Result<T, Failure>;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn guard(f: impl FnOnce() -> FfiResult) -> DmStatus {
    set_last_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DmStatus::Ok,
        Ok(Err(fail)) => {
            set_last_error(&fail.message);
            fail.status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_last_error(&format!("internal panic: {message}"));
            DmStatus::Panic
        }
    }
}

unsafe fn href<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| Failure::null(what))
}

unsafe fn hmut<'a, T>(p: *mut T, what: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(|| Failure::null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> FfiResult<&'a mut [T]> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn path(p: *const c_char) -> FfiResult<PathBuf> {
    string(p, "path").map(PathBuf::from)
}

unsafe fn vec3(p: *const f64, what: &str) -> FfiResult<Vec3> {
    let s = slice(p, 3, what)?;
    Ok(Vec3::new(s[0], s[1], s[2]))
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) -> FfiResult {
    let out = hmut(out, "output pointer")?;
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(p))));
    }
}

fn pose_from(p: &DmPose) -> FfiResult<Pose> {
    let r = Matrix3::from_row_slice(&p.rotation);
    let t = Vec3::new(p.translation[0], p.translation[1], p.translation[2]);
    Ok(Pose::new(r, t)?)
}

fn quality_from(q: densemap::eval::MapQuality) -> DmMapQuality {
    DmMapQuality {
        accuracy: q.accuracy,
        completeness: q.completeness,
        t1: q.t1,
        t2: q.t2,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message describing the last failed call on this thread, or an empty string.
/// The pointer stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn dm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates a camera with mirror parameter `xi`, focal lengths, principal point
/// and image size.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn dm_camera_new(
    xi: f64,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
    out: *mut *mut DmCamera,
) -> DmStatus {
    guard(|| {
        let cam = FisheyeCamera::new(xi, fx, fy, cx, cy, width, height)?;
        write_out(out, DmCamera(cam))
    })
}

/// # Safety
/// `camera` must be null or a handle from `dm_camera_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dm_camera_free(camera: *mut DmCamera) {
    free(camera);
}

/// Projects the camera-frame point `xyz[3]` to `uv[2]`. `inside` receives
/// whether the pixel falls inside the image; points that do not project at
/// all yield `DM_STATUS_OUTSIDE_FOV`.
///
/// # Safety
/// Pointers must be valid for the documented number of elements; `inside` may be null.
#[no_mangle]
pub unsafe extern "C" fn dm_camera_project(
    camera: *const DmCamera,
    xyz: *const f64,
    uv: *mut f64,
    inside: *mut bool,
) -> DmStatus {
    guard(|| {
        let cam = &href(camera, "camera")?.0;
        let x = vec3(xyz, "xyz")?;
        let uv = slice_mut(uv, 2, "uv")?;
        let p = cam
            .project_unbounded(&x)
            .ok_or_else(|| Failure::new(DmStatus::OutsideFov, "point does not project into the image plane"))?;
        uv[0] = p.x;
        uv[1] = p.y;
        if let Some(inside) = inside.as_mut() {
            *inside = cam.contains(&p);
        }
        Ok(())
    })
}

/// Writes the unit viewing ray of pixel position `(u, v)` to `ray[3]`.
///
/// # Safety
/// `ray` must be valid for three writes.
#[no_mangle]
pub unsafe extern "C" fn dm_camera_back_project(camera: *const DmCamera, u: f64, v: f64, ray: *mut f64) -> DmStatus {
    guard(|| {
        let cam = &href(camera, "camera")?.0;
        let out = slice_mut(ray, 3, "ray")?;
        let r = cam.back_project(&Pixel::new(u, v))?;
        out.copy_from_slice(r.as_slice());
        Ok(())
    })
}

/// Creates a depth map from `width * height` row-major ranges (0 or
/// non-finite marks invalid). `best_cost` and `second_cost` may be null; they
/// default to a perfect, unambiguous match (0 and 1).
///
/// # Safety
/// Non-null arrays must hold `width * height` elements.
#[no_mangle]
pub unsafe extern "C" fn dm_depth_new(
    width: usize,
    height: usize,
    depth: *const f32,
    best_cost: *const f32,
    second_cost: *const f32,
    out: *mut *mut DmDepthMap,
) -> DmStatus {
    guard(|| {
        let n = width
            .checked_mul(height)
            .filter(|&n| n > 0)
            .ok_or_else(|| Failure::invalid("depth map must be non-empty"))?;
        let mut d = DepthMap::from_depth(width, height, slice(depth, n, "depth")?.to_vec())?;
        if !best_cost.is_null() {
            d.best_cost = slice(best_cost, n, "best_cost")?.to_vec();
        }
        if !second_cost.is_null() {
            d.second_cost = slice(second_cost, n, "second_cost")?.to_vec();
        }
        write_out(out, DmDepthMap(d))
    })
}

/// Reads a single-channel PFM file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dm_depth_read_pfm(path_: *const c_char, out: *mut *mut DmDepthMap) -> DmStatus {
    guard(|| {
        let d = DepthMap::read_pfm(&path(path_)?)?;
        write_out(out, DmDepthMap(d))
    })
}

/// Writes the ranges as a single-channel PFM file.
///
/// # Safety
/// `depth` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dm_depth_write_pfm(depth: *const DmDepthMap, path_: *const c_char) -> DmStatus {
    guard(|| {
        let d = &href(depth, "depth map")?.0;
        Ok(d.write_pfm(&path(path_)?)?)
    })
}

/// Width in pixels, or 0 for a null handle.
///
/// # Safety
/// `depth` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dm_depth_width(depth: *const DmDepthMap) -> usize {
    depth.as_ref().map_or(0, |d| d.0.width())
}

/// Height in pixels, or 0 for a null handle.
///
/// # Safety
/// `depth` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dm_depth_height(depth: *const DmDepthMap) -> usize {
    depth.as_ref().map_or(0, |d| d.0.height())
}

/// Number of valid pixels, or 0 for a null handle.
///
/// # Safety
/// `depth` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dm_depth_valid_count(depth: *const DmDepthMap) -> usize {
    depth.as_ref().map_or(0, |d| d.0.valid_count())
}

/// Copies the ranges into `out`, which must hold `len == width * height` floats.
///
/// # Safety
/// `out` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn dm_depth_copy(depth: *const DmDepthMap, out: *mut f32, len: usize) -> DmStatus {
    guard(|| {
        let d = &href(depth, "depth map")?.0;
        if len != d.len() {
            return Err(Failure::new(
                DmStatus::DimensionMismatch,
                format!("buffer holds {len} values, map has {}", d.len()),
            ));
        }
        slice_mut(out, len, "out")?.copy_from_slice(&d.depth);
        Ok(())
    })
}

/// # Safety
/// `depth` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dm_depth_free(depth: *mut DmDepthMap) {
    free(depth);
}

/// Default filter parameters with all three filters enabled.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dm_filter_config_new(out: *mut *mut DmFilterConfig) -> DmStatus {
    guard(|| write_out(out, DmFilterConfig(FilterConfig::default())))
}

/// Sets one numeric parameter: `alpha_upper`, `alpha_lower`, `horizon_row`
/// (negative for half the height), `beta`, `gamma`, `delta`,
/// `consistency_window`, or the switches `enable_cost`, `enable_uniqueness`,
/// `enable_consistency` (non-zero enables).
///
/// # Safety
/// `config` must be a live handle and `key` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dm_filter_config_set(config: *mut DmFilterConfig, key: *const c_char, value: f64) -> DmStatus {
    guard(|| {
        let cfg = &mut hmut(config, "filter config")?.0;
        let key = string(key, "key")?;
        let mut next = cfg.clone();
        let count = |v: f64| -> FfiResult<usize> {
            if v >= 0.0 && v.fract() == 0.0 && v <= usize::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(Failure::invalid(format!("`{key}` needs a non-negative integer, got {v}")))
            }
        };
        match key {
            "alpha_upper" => next.alpha_upper = value,
            "alpha_lower" => next.alpha_lower = value,
            "horizon_row" => next.horizon_row = if value < 0.0 { None } else { Some(count(value)?) },
            "beta" => next.beta = value,
            "gamma" => next.gamma = value,
            "delta" => next.delta = value,
            "consistency_window" => next.consistency_window = count(value)?,
            "enable_cost" => next.enable_cost = value != 0.0,
            "enable_uniqueness" => next.enable_uniqueness = value != 0.0,
            "enable_consistency" => next.enable_consistency = value != 0.0,
            other => return Err(Failure::invalid(format!("unknown filter parameter `{other}`"))),
        }
        next.validate()?;
        *cfg = next;
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dm_filter_config_free(config: *mut DmFilterConfig) {
    free(config);
}

/// Applies the enabled filters in order (cost, uniqueness, consistency) and
/// returns a new depth map.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dm_filter_apply(
    config: *const DmFilterConfig,
    depth: *const DmDepthMap,
    out: *mut *mut DmDepthMap,
) -> DmStatus {
    guard(|| {
        let cfg = &href(config, "filter config")?.0;
        let d = &href(depth, "depth map")?.0;
        write_out(out, DmDepthMap(apply_filters(d, cfg)))
    })
}

/// Creates an empty volume. `local_size[3]` gives the edge lengths of the
/// region kept in memory around `center[3]`; pass null for the 60 x 60 x 3 m
/// default.
///
/// # Safety
/// `center` must hold three doubles, `local_size` three doubles or null.
#[no_mangle]
pub unsafe extern "C" fn dm_volume_new(
    voxel_size: f64,
    mu: f64,
    w_max: u16,
    local_size: *const f64,
    center: *const f64,
    out: *mut *mut DmVolume,
) -> DmStatus {
    guard(|| {
        let mut cfg = TsdfConfig {
            voxel_size,
            mu,
            w_max,
            ..TsdfConfig::default()
        };
        if !local_size.is_null() {
            cfg.local_size = vec3(local_size, "local_size")?;
        }
        let vol = TsdfVolume::new(cfg, vec3(center, "center")?)?;
        write_out(out, DmVolume(vol))
    })
}

/// Allocates the blocks seen by `depth` and integrates it. `world_to_camera`
/// maps world points into the camera frame. `stats` may be null.
///
/// # Safety
/// Handles must be live; `world_to_camera` must point to a pose.
#[no_mangle]
pub unsafe extern "C" fn dm_volume_fuse(
    volume: *mut DmVolume,
    depth: *const DmDepthMap,
    camera: *const DmCamera,
    world_to_camera: *const DmPose,
    stats: *mut DmFuseStats,
) -> DmStatus {
    guard(|| {
        let vol = &mut hmut(volume, "volume")?.0;
        let d = &href(depth, "depth map")?.0;
        let cam = &href(camera, "camera")?.0;
        let pose = pose_from(href(world_to_camera, "world_to_camera")?)?;
        if d.width() != cam.width() || d.height() != cam.height() {
            return Err(Failure::new(
                DmStatus::DimensionMismatch,
                format!(
                    "{}x{} depth map for a {}x{} camera",
                    d.width(),
                    d.height(),
                    cam.width(),
                    cam.height()
                ),
            ));
        }
        let allocated = vol.allocate(d, cam, &pose);
        let s = vol.integrate(d, cam, &pose);
        if let Some(out) = stats.as_mut() {
            *out = DmFuseStats {
                blocks_allocated: allocated.len(),
                blocks_touched: s.blocks_touched,
                voxels_updated: s.voxels_updated,
            };
        }
        Ok(())
    })
}

/// Recenters the local region on `position[3]`, archiving blocks that left it.
/// `moved` (nullable) receives the number of archived blocks.
///
/// # Safety
/// `volume` must be live and `position` hold three doubles.
#[no_mangle]
pub unsafe extern "C" fn dm_volume_prune(volume: *mut DmVolume, position: *const f64, moved: *mut usize) -> DmStatus {
    guard(|| {
        let vol = &mut hmut(volume, "volume")?.0;
        let n = vol.prune_and_swap(&vec3(position, "position")?);
        if let Some(m) = moved.as_mut() {
            *m = n;
        }
        Ok(())
    })
}

/// Counts of in-memory and archived blocks. Either output may be null.
///
/// # Safety
/// `volume` must be live.
#[no_mangle]
pub unsafe extern "C" fn dm_volume_block_counts(volume: *const DmVolume, active: *mut usize, inactive: *mut usize) -> DmStatus {
    guard(|| {
        let vol = &href(volume, "volume")?.0;
        if let Some(a) = active.as_mut() {
            *a = vol.active_count();
        }
        if let Some(i) = inactive.as_mut() {
            *i = vol.inactive_count();
        }
        Ok(())
    })
}

/// Extracts the zero-crossing surface as a point cloud, keeping blocks observed
/// at least `min_block_observations` times and voxels with weight at least
/// `min_voxel_weight`.
///
/// # Safety
/// `volume` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dm_volume_extract(
    volume: *const DmVolume,
    min_block_observations: u32,
    min_voxel_weight: u16,
    out: *mut *mut DmPointCloud,
) -> DmStatus {
    guard(|| {
        let vol = &href(volume, "volume")?.0;
        write_out(out, DmPointCloud(vol.extract_points(min_block_observations, min_voxel_weight)))
    })
}

/// # Safety
/// `volume` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dm_volume_free(volume: *mut DmVolume) {
    free(volume);
}

/// Creates a cloud from `count` points stored as consecutive `x, y, z` doubles.
///
/// # Safety
/// `xyz` must hold `3 * count` doubles (may be null when `count` is 0).
#[no_mangle]
pub unsafe extern "C" fn dm_cloud_new(xyz: *const f64, count: usize, out: *mut *mut DmPointCloud) -> DmStatus {
    guard(|| {
        let n = count
            .checked_mul(3)
            .ok_or_else(|| Failure::invalid("point count overflows"))?;
        let points = slice(xyz, n, "xyz")?
            .chunks_exact(3)
            .map(|p| Vec3::new(p[0], p[1], p[2]))
            .collect();
        write_out(out, DmPointCloud(PointCloud::from_points(points)))
    })
}

/// Number of points, or 0 for a null handle.
///
/// # Safety
/// `cloud` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dm_cloud_len(cloud: *const DmPointCloud) -> usize {
    cloud.as_ref().map_or(0, |c| c.0.points.len())
}

/// Copies up to `capacity` points into `xyz` as consecutive `x, y, z`
/// doubles; `written` (nullable) receives the number of points copied.
///
/// # Safety
/// `xyz` must be valid for `3 * capacity` writes.
#[no_mangle]
pub unsafe extern "C" fn dm_cloud_copy_points(
    cloud: *const DmPointCloud,
    xyz: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> DmStatus {
    guard(|| {
        let c = &href(cloud, "cloud")?.0;
        let n = capacity.min(c.points.len());
        let out = slice_mut(xyz, n * 3, "xyz")?;
        for (dst, p) in out.chunks_exact_mut(3).zip(&c.points) {
            dst.copy_from_slice(p.as_slice());
        }
        if let Some(w) = written.as_mut() {
            *w = n;
        }
        Ok(())
    })
}

/// Reads a PLY file (ASCII or binary little endian, `x y z` vertex properties).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dm_cloud_read_ply(path_: *const c_char, out: *mut *mut DmPointCloud) -> DmStatus {
    guard(|| {
        let c = PointCloud::read_ply(&path(path_)?)?;
        write_out(out, DmPointCloud(c))
    })
}

/// Writes a PLY file, binary little endian when `binary` is true.
///
/// # Safety
/// `cloud` must be live and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dm_cloud_write_ply(cloud: *const DmPointCloud, path_: *const c_char, binary: bool) -> DmStatus {
    guard(|| {
        let c = &href(cloud, "cloud")?.0;
        let format = if binary { PlyFormat::BinaryLittleEndian } else { PlyFormat::Ascii };
        Ok(c.write_ply(&path(path_)?, format)?)
    })
}

/// # Safety
/// `cloud` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dm_cloud_free(cloud: *mut DmPointCloud) {
    free(cloud);
}

/// Fraction of `reconstruction` points within `t1` of the ground truth
/// (accuracy) and of `ground_truth` points within `t2` of the reconstruction
/// (completeness).
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dm_accuracy_completeness(
    reconstruction: *const DmPointCloud,
    ground_truth: *const DmPointCloud,
    t1: f64,
    t2: f64,
    out: *mut DmMapQuality,
) -> DmStatus {
    guard(|| {
        let sc = &href(reconstruction, "reconstruction")?.0;
        let sgt = &href(ground_truth, "ground truth")?.0;
        let out = hmut(out, "out")?;
        *out = quality_from(accuracy_completeness(&sc.points, &sgt.points, t1, t2)?);
        Ok(())
    })
}

/// Runs the full mapping pipeline described by a `key = value` configuration
/// file and writes its outputs. `frames_processed` and `quality` are nullable;
/// `quality` receives the result at the first configured tolerance.
///
/// # Safety
/// `config_path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dm_run_pipeline(
    config_path: *const c_char,
    frames_processed: *mut usize,
    quality: *mut DmMapQuality,
) -> DmStatus {
    guard(|| {
        let cfg = RunConfig::load(&path(config_path)?)?;
        let run = run_pipeline(&cfg)?;
        if let Some(n) = frames_processed.as_mut() {
            *n = run.summary.frames_processed;
        }
        if let Some(q) = quality.as_mut() {
            *q = run.summary.quality.first().copied().map(quality_from).unwrap_or_default();
        }
        Ok(())
    })
}
