//! Rigid transforms, the unified projective fisheye model and multi-camera rigs.
//!
//! Pixel coordinates are continuous: pixel `(i, j)` covers `[i, i+1) x [j, j+1)`
//! and its center sits at `(i + 0.5, j + 0.5)`. Depth is always the range along
//! the viewing ray, never the z coordinate.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector2, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Pixel = Vector2<f64>;

/// Largest mirror parameter accepted by [`FisheyeCamera::new`].
pub const MAX_XI: f64 = 3.0;

const ORTHONORMAL_TOL: f64 = 1e-9;
const PROJECTION_EPS: f64 = 1e-9;

/// Rigid-body transform `x -> R x + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Builds a pose from a rotation matrix, rejecting anything that is not a
    /// proper rotation.
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidPose("non-finite entries".into()));
        }
        let defect = rotation * rotation.transpose() - Matrix3::identity();
        if defect.amax() > ORTHONORMAL_TOL {
            return Err(Error::InvalidPose(format!(
                "rotation is not orthonormal (max |R R^T - I| = {:.3e})",
                defect.amax()
            )));
        }
        if rotation.determinant() <= 0.0 {
            return Err(Error::InvalidPose("rotation has negative determinant".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64, translation: Vec3) -> Self {
        let rotation = if axis.norm() > 0.0 {
            Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).into_inner()
        } else {
            Matrix3::identity()
        };
        Self {
            rotation,
            translation,
        }
    }

    /// Quaternion in `(qx, qy, qz, qw)` order; it is normalized before use.
    pub fn from_quaternion(translation: Vec3, q: [f64; 4]) -> Result<Self> {
        let quat = Quaternion::new(q[3], q[0], q[1], q[2]);
        let norm = quat.norm();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(Error::InvalidPose("degenerate quaternion".into()));
        }
        let unit = UnitQuaternion::from_quaternion(quat);
        Self::new(unit.to_rotation_matrix().into_inner(), translation)
    }

    /// Quaternion in `(qx, qy, qz, qw)` order with `qw >= 0`.
    pub fn quaternion(&self) -> [f64; 4] {
        let rot = Rotation3::from_matrix_unchecked(self.rotation);
        let q = UnitQuaternion::from_rotation_matrix(&rot);
        let sign = if q.w < 0.0 { -1.0 } else { 1.0 };
        [sign * q.i, sign * q.j, sign * q.k, sign * q.w]
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    #[inline]
    pub fn apply(&self, x: &Vec3) -> Vec3 {
        self.rotation * x + self.translation
    }

    #[inline]
    pub fn rotate(&self, x: &Vec3) -> Vec3 {
        self.rotation * x
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }
}

/// `R x + t`.
#[inline]
pub fn se3_apply(pose: &Pose, x: &Vec3) -> Vec3 {
    pose.apply(x)
}

/// Unified projective (Mei) camera: points are lifted to the unit sphere, shifted
/// by `xi` along the optical axis and then perspective-projected.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FisheyeCamera {
    xi: f64,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
}

impl FisheyeCamera {
    pub fn new(
        xi: f64,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        if !(xi.is_finite() && (0.0..=MAX_XI).contains(&xi)) {
            return Err(Error::InvalidCamera(format!("xi = {xi} outside [0, {MAX_XI}]")));
        }
        if !(fx.is_finite() && fy.is_finite() && fx > 0.0 && fy > 0.0) {
            return Err(Error::InvalidCamera(format!("focal lengths must be positive ({fx}, {fy})")));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidCamera("empty image size".into()));
        }
        if !(cx >= 0.0 && cx < width as f64 && cy >= 0.0 && cy < height as f64) {
            return Err(Error::InvalidCamera(format!(
                "principal point ({cx}, {cy}) outside {width}x{height}"
            )));
        }
        Ok(Self {
            xi,
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }
    pub fn fx(&self) -> f64 {
        self.fx
    }
    pub fn fy(&self) -> f64 {
        self.fy
    }
    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn contains(&self, p: &Pixel) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x < self.width as f64 && p.y < self.height as f64
    }

    /// Projection without the image-bounds check.
    #[inline]
    pub fn project_unbounded(&self, x: &Vec3) -> Option<Pixel> {
        let norm = x.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return None;
        }
        let zs = x.z / norm;
        let denom = zs + self.xi;
        if denom <= PROJECTION_EPS {
            return None;
        }
        // For xi > 1 the sphere points below z = -1/xi fold back onto the
        // image of the upper part; only the injective region is kept.
        if self.xi > 1.0 && zs * self.xi <= -1.0 {
            return None;
        }
        let mx = x.x / norm / denom;
        let my = x.y / norm / denom;
        Some(Pixel::new(self.fx * mx + self.cx, self.fy * my + self.cy))
    }

    /// Projects a camera-frame point; `None` when the point is outside the
    /// model's domain or the image.
    #[inline]
    pub fn project(&self, x: &Vec3) -> Option<Pixel> {
        self.project_unbounded(x).filter(|p| self.contains(p))
    }

    /// Unit ray through a continuous pixel position, without bounds checks.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> Option<Vec3> {
        let x = (u - self.cx) / self.fx;
        let y = (v - self.cy) / self.fy;
        let r2 = x * x + y * y;
        let radicand = 1.0 + (1.0 - self.xi * self.xi) * r2;
        if radicand < 0.0 {
            return None;
        }
        let factor = (self.xi + radicand.sqrt()) / (r2 + 1.0);
        let ray = Vec3::new(factor * x, factor * y, factor - self.xi);
        let n = ray.norm();
        (n > 0.0).then(|| ray / n)
    }

    /// Back-projected unit ray direction for an in-image pixel position.
    pub fn back_project(&self, p: &Pixel) -> Result<Vec3> {
        if !self.contains(p) {
            return Err(Error::OutsideFov { u: p.x, v: p.y });
        }
        self.ray(p.x, p.y).ok_or(Error::OutsideFov { u: p.x, v: p.y })
    }

    /// Ray through the center of integer pixel `(i, j)`.
    #[inline]
    pub fn pixel_ray(&self, i: usize, j: usize) -> Option<Vec3> {
        self.ray(i as f64 + 0.5, j as f64 + 0.5)
    }

    /// Intrinsics for the 2x2 box-downsampled image. With pixel centers at
    /// `+0.5`, low-resolution coordinate `u` maps to full-resolution `2u`, so
    /// every intrinsic simply halves.
    pub fn half_resolution(&self) -> Self {
        Self {
            xi: self.xi,
            fx: self.fx / 2.0,
            fy: self.fy / 2.0,
            cx: self.cx / 2.0,
            cy: self.cy / 2.0,
            width: self.width / 2,
            height: self.height / 2,
        }
    }

    /// Per-pixel ray table in row-major order.
    pub fn ray_table(&self) -> Vec<Option<Vec3>> {
        let mut rays = Vec::with_capacity(self.width * self.height);
        for j in 0..self.height {
            for i in 0..self.width {
                rays.push(self.pixel_ray(i, j));
            }
        }
        rays
    }
}

/// Plane `n · x = d` with unit normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plane {
    pub normal: Vec3,
    pub offset: f64,
}

impl Plane {
    /// Range along unit ray `r` (from the origin) to the plane, if in front.
    #[inline]
    pub fn ray_range(&self, r: &Vec3) -> Option<f64> {
        let denom = self.normal.dot(r);
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = self.offset / denom;
        (t > 0.0 && t.is_finite()).then_some(t)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraRig {
    cameras: Vec<FisheyeCamera>,
    extrinsics: Vec<Pose>,
    reference_index: usize,
    /// Height of the body origin above the ground plane, meters.
    body_height: f64,
}

impl CameraRig {
    pub fn new(
        cameras: Vec<FisheyeCamera>,
        extrinsics: Vec<Pose>,
        reference_index: usize,
        body_height: f64,
    ) -> Result<Self> {
        if cameras.is_empty() || cameras.len() != extrinsics.len() {
            return Err(Error::Config(format!(
                "rig needs matching cameras and extrinsics ({} vs {})",
                cameras.len(),
                extrinsics.len()
            )));
        }
        if reference_index >= cameras.len() {
            return Err(Error::Config(format!(
                "reference index {reference_index} out of range for {} cameras",
                cameras.len()
            )));
        }
        Ok(Self {
            cameras,
            extrinsics,
            reference_index,
            body_height,
        })
    }

    /// Five forward-looking cameras spread across a roof bar, left to right,
    /// with the center camera as reference. `width` scales the focal length
    /// relative to the 1024x544 default.
    pub fn synthetic(width: usize, height: usize) -> Self {
        let scale = width as f64 / 1024.0;
        let f = 220.0 * scale;
        let cam = FisheyeCamera::new(1.0, f, f, width as f64 / 2.0, height as f64 / 2.0, width, height)
            .expect("default intrinsics are valid");
        let lateral = [0.6, 0.3, 0.0, -0.3, -0.6];
        let extrinsics = lateral
            .iter()
            .map(|&y| camera_mount(Vec3::new(0.0, y, 0.6)))
            .collect();
        Self::new(vec![cam; 5], extrinsics, 2, 1.0).expect("default rig is valid")
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    pub fn cameras(&self) -> &[FisheyeCamera] {
        &self.cameras
    }

    pub fn camera(&self, idx: usize) -> &FisheyeCamera {
        &self.cameras[idx]
    }

    /// Body-to-camera transform of camera `idx`.
    pub fn extrinsic(&self, idx: usize) -> &Pose {
        &self.extrinsics[idx]
    }

    pub fn reference_index(&self) -> usize {
        self.reference_index
    }

    pub fn reference(&self) -> &FisheyeCamera {
        &self.cameras[self.reference_index]
    }

    pub fn body_height(&self) -> f64 {
        self.body_height
    }

    /// World-to-camera transform given the body-to-world pose.
    pub fn world_to_camera(&self, idx: usize, body_to_world: &Pose) -> Pose {
        self.extrinsics[idx].compose(&body_to_world.inverse())
    }

    pub fn camera_to_world(&self, idx: usize, body_to_world: &Pose) -> Pose {
        body_to_world.compose(&self.extrinsics[idx].inverse())
    }

    /// Transform from the reference camera frame into camera `idx`.
    pub fn reference_to(&self, idx: usize) -> Pose {
        self.extrinsics[idx].compose(&self.extrinsics[self.reference_index].inverse())
    }

    /// Ground plane expressed in camera `idx`, assuming the body frame is level
    /// (z up) at `body_height` above the ground. The normal points away from the
    /// camera so the offset is positive for a camera above the ground.
    pub fn ground_in_camera(&self, idx: usize) -> Plane {
        let ext = &self.extrinsics[idx];
        let up = ext.rotate(&Vec3::z());
        // Ground: up_body · x_body = -body_height.
        let offset = -self.body_height + up.dot(ext.translation());
        let (normal, offset) = if offset < 0.0 { (-up, -offset) } else { (up, offset) };
        Plane { normal, offset }
    }

    /// Keeps the listed cameras (in the given order); the reference camera must
    /// be among them.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut cameras = Vec::with_capacity(indices.len());
        let mut extrinsics = Vec::with_capacity(indices.len());
        let mut reference = None;
        for (k, &idx) in indices.iter().enumerate() {
            if idx >= self.cameras.len() {
                return Err(Error::Config(format!("camera {idx} not in rig")));
            }
            if indices[..k].contains(&idx) {
                return Err(Error::Config(format!("camera {idx} listed twice")));
            }
            if idx == self.reference_index {
                reference = Some(k);
            }
            cameras.push(self.cameras[idx]);
            extrinsics.push(self.extrinsics[idx]);
        }
        let reference = reference.ok_or_else(|| {
            Error::Config("camera subset must include the reference camera".into())
        })?;
        Self::new(cameras, extrinsics, reference, self.body_height)
    }

    /// Same rig with every camera at half resolution.
    pub fn half_resolution(&self) -> Self {
        Self {
            cameras: self.cameras.iter().map(FisheyeCamera::half_resolution).collect(),
            ..self.clone()
        }
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut reference = 0usize;
        let mut body_height = 1.0;
        let mut blocks: Vec<RigBlock> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let key = fields.next().unwrap_or_default();
            let values: Vec<f64> = fields
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(path, lineno + 1, format!("bad number: {e}")))?;
            let expect = |n: usize| -> Result<()> {
                if values.len() == n {
                    Ok(())
                } else {
                    Err(Error::parse(
                        path,
                        lineno + 1,
                        format!("`{key}` expects {n} value(s), got {}", values.len()),
                    ))
                }
            };
            match key {
                "camera" => blocks.push(RigBlock::default()),
                "reference" => {
                    expect(1)?;
                    reference = values[0] as usize;
                }
                "body_height" => {
                    expect(1)?;
                    body_height = values[0];
                }
                _ => {
                    let block = blocks.last_mut().ok_or_else(|| {
                        Error::parse(path, lineno + 1, format!("`{key}` outside a camera block"))
                    })?;
                    match key {
                        "extrinsic" => {
                            expect(7)?;
                            block.extrinsic = Some([
                                values[0], values[1], values[2], values[3], values[4], values[5],
                                values[6],
                            ]);
                        }
                        "xi" | "fx" | "fy" | "cx" | "cy" | "width" | "height" => {
                            expect(1)?;
                            block.set(key, values[0]);
                        }
                        other => {
                            return Err(Error::parse(path, lineno + 1, format!("unknown key `{other}`")))
                        }
                    }
                }
            }
        }
        let mut cameras = Vec::new();
        let mut extrinsics = Vec::new();
        for (k, b) in blocks.iter().enumerate() {
            let missing = |name: &str| Error::Config(format!("camera {k}: missing `{name}`"));
            let cam = FisheyeCamera::new(
                b.xi.ok_or_else(|| missing("xi"))?,
                b.fx.ok_or_else(|| missing("fx"))?,
                b.fy.ok_or_else(|| missing("fy"))?,
                b.cx.ok_or_else(|| missing("cx"))?,
                b.cy.ok_or_else(|| missing("cy"))?,
                b.width.ok_or_else(|| missing("width"))? as usize,
                b.height.ok_or_else(|| missing("height"))? as usize,
            )?;
            let e = b.extrinsic.ok_or_else(|| missing("extrinsic"))?;
            let pose = Pose::from_quaternion(Vec3::new(e[0], e[1], e[2]), [e[3], e[4], e[5], e[6]])?;
            cameras.push(cam);
            extrinsics.push(pose);
        }
        Self::new(cameras, extrinsics, reference, body_height)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# fisheye rig: intrinsics in pixels, extrinsic = body-to-camera (tx ty tz qx qy qz qw)");
        let _ = writeln!(out, "reference {}", self.reference_index);
        let _ = writeln!(out, "body_height {}", self.body_height);
        for (cam, ext) in self.cameras.iter().zip(&self.extrinsics) {
            let t = ext.translation();
            let q = ext.quaternion();
            let _ = writeln!(out, "\ncamera");
            let _ = writeln!(out, "xi {}", cam.xi);
            let _ = writeln!(out, "fx {}", cam.fx);
            let _ = writeln!(out, "fy {}", cam.fy);
            let _ = writeln!(out, "cx {}", cam.cx);
            let _ = writeln!(out, "cy {}", cam.cy);
            let _ = writeln!(out, "width {}", cam.width);
            let _ = writeln!(out, "height {}", cam.height);
            let _ = writeln!(
                out,
                "extrinsic {} {} {} {} {} {} {}",
                t.x, t.y, t.z, q[0], q[1], q[2], q[3]
            );
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_config_string()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Default)]
struct RigBlock {
    xi: Option<f64>,
    fx: Option<f64>,
    fy: Option<f64>,
    cx: Option<f64>,
    cy: Option<f64>,
    width: Option<f64>,
    height: Option<f64>,
    extrinsic: Option<[f64; 7]>,
}

impl RigBlock {
    fn set(&mut self, key: &str, v: f64) {
        let slot = match key {
            "xi" => &mut self.xi,
            "fx" => &mut self.fx,
            "fy" => &mut self.fy,
            "cx" => &mut self.cx,
            "cy" => &mut self.cy,
            "width" => &mut self.width,
            _ => &mut self.height,
        };
        *slot = Some(v);
    }
}

/// Body-to-camera transform for a forward-looking camera at `position` in the
/// body frame (x forward, y left, z up). The camera looks along body +x with
/// image x to the right and image y down.
pub fn camera_mount(position: Vec3) -> Pose {
    #[rustfmt::skip]
    let rotation = Matrix3::new(
        0.0, -1.0, 0.0,
        0.0, 0.0, -1.0,
        1.0, 0.0, 0.0,
    );
    Pose {
        rotation,
        translation: -(rotation * position),
    }
}

/// Timestamped body-to-world poses.
pub type Trajectory = Vec<(f64, Pose)>;

/// Reads a TUM-format trajectory (`timestamp tx ty tz qx qy qz qw`).
pub fn load_trajectory(path: &Path) -> Result<Trajectory> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trajectory(&text, path)
}

pub fn parse_trajectory(text: &str, path: &Path) -> Result<Trajectory> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(path, lineno + 1, format!("bad number: {e}")))?;
        if v.len() != 8 {
            return Err(Error::parse(path, lineno + 1, format!("expected 8 fields, got {}", v.len())));
        }
        let pose = Pose::from_quaternion(Vec3::new(v[1], v[2], v[3]), [v[4], v[5], v[6], v[7]])
            .map_err(|e| Error::parse(path, lineno + 1, e.to_string()))?;
        out.push((v[0], pose));
    }
    Ok(out)
}

pub fn format_trajectory(traj: &[(f64, Pose)]) -> String {
    let mut out = String::new();
    for (t, pose) in traj {
        let p = pose.translation();
        let q = pose.quaternion();
        let _ = writeln!(
            out,
            "{:.6} {:.9} {:.9} {:.9} {:.12} {:.12} {:.12} {:.12}",
            t, p.x, p.y, p.z, q[0], q[1], q[2], q[3]
        );
    }
    out
}

pub fn save_trajectory(path: &Path, traj: &[(f64, Pose)]) -> Result<()> {
    std::fs::write(path, format_trajectory(traj)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn cam(xi: f64) -> FisheyeCamera {
        FisheyeCamera::new(xi, 400.0, 400.0, 512.0, 272.0, 1024, 544).unwrap()
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        for xi in [0.0, 0.5, 1.0, 2.5] {
            let p = cam(xi).project(&Vec3::new(0.0, 0.0, 5.0)).unwrap();
            assert_eq!((p.x, p.y), (512.0, 272.0));
        }
    }

    #[test]
    fn pinhole_and_mei_projection_values() {
        let p = cam(0.0).project(&Vec3::new(1.0, 0.0, 1.0)).unwrap();
        assert_abs_diff_eq!(p.x, 912.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.y, 272.0, epsilon = 1e-12);

        // x/|X| = 1/sqrt2, denominator 1/sqrt2 + 1.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let expected = 400.0 * s / (s + 1.0) + 512.0;
        let p = cam(1.0).project(&Vec3::new(1.0, 0.0, 1.0)).unwrap();
        assert_abs_diff_eq!(p.x, expected, epsilon = 1e-9);
        assert_abs_diff_eq!(p.x, 677.685, epsilon = 1e-3);
    }

    #[test]
    fn projection_rejects_out_of_domain_and_out_of_image() {
        let c = cam(0.0);
        assert!(c.project(&Vec3::new(0.0, 0.0, -1.0)).is_none());
        assert!(c.project(&Vec3::new(10.0, 0.0, 1.0)).is_none());
        assert!(c.project(&Vec3::zeros()).is_none());
    }

    #[test]
    fn back_projection_reductions() {
        for xi in [0.0, 0.7, 1.0, 2.0] {
            let r = cam(xi).back_project(&Pixel::new(512.0, 272.0)).unwrap();
            assert_abs_diff_eq!(r, Vec3::new(0.0, 0.0, 1.0), epsilon = 1e-12);
        }
        let c = cam(0.0);
        let p = Pixel::new(700.0, 100.0);
        let (x, y) = ((700.0 - 512.0) / 400.0, (100.0 - 272.0) / 400.0);
        let expected = Vec3::new(x, y, 1.0) / (x * x + y * y + 1.0f64).sqrt();
        assert_abs_diff_eq!(c.back_project(&p).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn back_projection_rejects_outside_model_domain() {
        // xi > 1 leaves a finite valid disc; corners of a wide image fall outside.
        let c = FisheyeCamera::new(2.0, 100.0, 100.0, 512.0, 272.0, 1024, 544).unwrap();
        assert!(matches!(
            c.back_project(&Pixel::new(0.5, 0.5)),
            Err(Error::OutsideFov { .. })
        ));
        assert!(c.back_project(&Pixel::new(-1.0, 3.0)).is_err());
    }

    #[test]
    fn camera_validation() {
        assert!(FisheyeCamera::new(3.5, 1.0, 1.0, 0.0, 0.0, 4, 4).is_err());
        assert!(FisheyeCamera::new(1.0, 0.0, 1.0, 0.0, 0.0, 4, 4).is_err());
        assert!(FisheyeCamera::new(1.0, 1.0, 1.0, 4.0, 0.0, 4, 4).is_err());
    }

    #[test]
    fn se3_examples() {
        let x = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(se3_apply(&Pose::identity(), &x), x);
        let p = Pose::from_translation(Vec3::new(0.0, 0.0, 5.0));
        assert_eq!(se3_apply(&p, &Vec3::zeros()), Vec3::new(0.0, 0.0, 5.0));
    }

    #[test]
    fn pose_rejects_non_rotations() {
        let mut m = Matrix3::identity();
        m[(0, 0)] = -1.0;
        assert!(Pose::new(m, Vec3::zeros()).is_err());
        m[(0, 0)] = 1.001;
        assert!(Pose::new(m, Vec3::zeros()).is_err());
        assert!(Pose::from_quaternion(Vec3::zeros(), [0.0; 4]).is_err());
    }

    #[test]
    fn ground_plane_from_mount() {
        let rig = CameraRig::synthetic(1024, 544);
        let g = rig.ground_in_camera(rig.reference_index());
        // Camera 0.6 m above a body origin 1.0 m above ground; ground is "down" (+y).
        assert_abs_diff_eq!(g.normal, Vec3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
        assert_abs_diff_eq!(g.offset, 1.6, epsilon = 1e-12);
    }

    #[test]
    fn rig_config_round_trip() {
        let rig = CameraRig::synthetic(512, 272);
        let text = rig.to_config_string();
        let back = CameraRig::parse(&text, Path::new("rig.txt")).unwrap();
        assert_eq!(back.len(), 5);
        assert_eq!(back.reference_index(), 2);
        for k in 0..5 {
            assert_eq!(back.camera(k), rig.camera(k));
            let x = Vec3::new(0.3, -1.0, 2.0);
            assert_abs_diff_eq!(back.extrinsic(k).apply(&x), rig.extrinsic(k).apply(&x), epsilon = 1e-9);
        }
    }

    #[test]
    fn rig_parse_errors_name_the_line() {
        let err = CameraRig::parse("camera\nxi 1\nfoo 3\n", Path::new("r.txt")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert!(CameraRig::parse("fx 3\n", Path::new("r.txt")).is_err());
    }

    #[test]
    fn subset_keeps_reference() {
        let rig = CameraRig::synthetic(256, 136);
        let sub = rig.subset(&[0, 2, 4]).unwrap();
        assert_eq!(sub.reference_index(), 1);
        assert!(rig.subset(&[0, 1]).is_err());
    }

    #[test]
    fn trajectory_round_trip() {
        let traj = vec![
            (0.0, Pose::identity()),
            (0.04, Pose::from_axis_angle(Vec3::z(), 0.1, Vec3::new(0.4, 0.01, 1.0))),
        ];
        let text = format_trajectory(&traj);
        let back = parse_trajectory(&text, Path::new("t.txt")).unwrap();
        assert_eq!(back.len(), 2);
        let x = Vec3::new(1.0, 2.0, 3.0);
        assert_abs_diff_eq!(back[1].1.apply(&x), traj[1].1.apply(&x), epsilon = 1e-8);
        assert!(parse_trajectory("0 1 2 3\n", Path::new("t")).is_err());
    }

    fn arb_pose() -> impl Strategy<Value = Pose> {
        (
            prop::array::uniform3(-1.0f64..1.0),
            -3.0f64..3.0,
            prop::array::uniform3(-10.0f64..10.0),
        )
            .prop_map(|(a, ang, t)| {
                Pose::from_axis_angle(Vec3::new(a[0], a[1], a[2] + 1e-3), ang, Vec3::new(t[0], t[1], t[2]))
            })
    }

    proptest! {
        #[test]
        fn compose_with_inverse_is_identity(p in arb_pose(), x in prop::array::uniform3(-50.0f64..50.0)) {
            let x = Vec3::new(x[0], x[1], x[2]);
            let back = se3_apply(&p.inverse(), &se3_apply(&p, &x));
            prop_assert!((back - x).amax() < 1e-9);
            let id = p.compose(&p.inverse());
            prop_assert!((id.rotation() - Matrix3::identity()).amax() < 1e-9);
            prop_assert!(id.translation().amax() < 1e-9);
        }

        #[test]
        fn composition_is_associative(a in arb_pose(), b in arb_pose(), c in arb_pose()) {
            let l = a.compose(&b).compose(&c);
            let r = a.compose(&b.compose(&c));
            prop_assert!((l.rotation() - r.rotation()).amax() < 1e-9);
            prop_assert!((l.translation() - r.translation()).amax() < 1e-9);
        }

        #[test]
        fn back_projection_is_unit_and_round_trips(
            xi in 0.0f64..3.0, u in 0.0f64..1024.0, v in 0.0f64..544.0, lambda in 0.1f64..80.0,
        ) {
            let c = FisheyeCamera::new(xi, 220.0, 220.0, 512.0, 272.0, 1024, 544).unwrap();
            if let Ok(r) = c.back_project(&Pixel::new(u, v)) {
                prop_assert!((r.norm() - 1.0).abs() < 1e-12);
                let p = c.project_unbounded(&(r * lambda)).unwrap();
                prop_assert!((p - Pixel::new(u, v)).norm() < 1e-5);
            }
        }

        #[test]
        fn projection_is_parallel_to_back_projection(
            xi in 0.0f64..3.0, x in prop::array::uniform3(-20.0f64..20.0),
        ) {
            let c = FisheyeCamera::new(xi, 220.0, 220.0, 512.0, 272.0, 1024, 544).unwrap();
            let x = Vec3::new(x[0], x[1], x[2]);
            if let Some(p) = c.project(&x) {
                let r = c.back_project(&p).unwrap();
                prop_assert!((r - x.normalize()).norm() < 1e-7);
            }
        }
    }
}
