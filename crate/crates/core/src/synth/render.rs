use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::scene::{Scene, Surface};
use super::texture::splitmix64;
use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::geometry::{CameraRig, FisheyeCamera, Pose, Trajectory, Vec3};
use crate::image::Image;

type RenderedRow = (Vec<f32>, Vec<f32>, Vec<Option<Surface>>);
use crate::mask::DetectionBox;

/// One synchronized capture of the whole rig.
#[derive(Clone, Debug)]
pub struct FramePacket {
    pub frame_id: u64,
    pub timestamp: f64,
    pub images: Vec<Image>,
    /// Body-to-world pose of the vehicle.
    pub body_pose: Pose,
    pub gt_depth: Option<Vec<DepthMap>>,
    pub detections: Option<Vec<DetectionBox>>,
}

/// Output of rendering a single camera.
#[derive(Clone, Debug)]
pub struct RenderedView {
    pub image: Image,
    pub depth: DepthMap,
    pub surfaces: Vec<Option<Surface>>,
}

/// Ray-traces one camera. Pixels that miss everything get the sky intensity
/// and invalid depth. `noise_seed` drives the additive intensity noise.
pub fn render_camera(
    scene: &Scene,
    cam: &FisheyeCamera,
    cam_to_world: &Pose,
    t: f64,
    noise_seed: u64,
) -> RenderedView {
    let (w, h) = (cam.width(), cam.height());
    let origin = *cam_to_world.translation();
    let rows: Vec<RenderedRow> = (0..h)
        .into_par_iter()
        .map(|j| {
            let mut intensity = Vec::with_capacity(w);
            let mut depth = Vec::with_capacity(w);
            let mut surfaces = Vec::with_capacity(w);
            for i in 0..w {
                let (u, v) = (i as f64 + 0.5, j as f64 + 0.5);
                let hit = cam.ray(u, v).and_then(|r| {
                    let dir = cam_to_world.rotate(&r);
                    scene.trace(&origin, &dir, t).map(|(s, hit)| {
                        let spread = pixel_spread(cam, u, v, &r);
                        let cos = hit.normal.dot(&dir).abs().max(0.2);
                        let footprint = hit.range * spread / cos;
                        let tex = scene.texture_of(s);
                        let shade = tex.shade(scene.texture_seed, s.texture_id(), hit.local, footprint);
                        (s, hit.range, shade)
                    })
                });
                match hit {
                    Some((s, range, shade)) => {
                        intensity.push(shade as f32);
                        depth.push(range as f32);
                        surfaces.push(Some(s));
                    }
                    None => {
                        intensity.push(scene.sky as f32);
                        depth.push(0.0);
                        surfaces.push(None);
                    }
                }
            }
            if scene.noise_sigma > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(noise_seed ^ (j as u64).wrapping_mul(0x9e37)));
                let normal = Normal::new(0.0, scene.noise_sigma).expect("finite sigma");
                for v in intensity.iter_mut() {
                    let n: f64 = normal.sample(&mut rng);
                    *v = (*v + n as f32).clamp(0.0, 1.0);
                }
            }
            (intensity, depth, surfaces)
        })
        .collect();
    let mut image = Vec::with_capacity(w * h);
    let mut depth = Vec::with_capacity(w * h);
    let mut surfaces = Vec::with_capacity(w * h);
    for (a, b, c) in rows {
        image.extend(a);
        depth.extend(b);
        surfaces.extend(c);
    }
    RenderedView {
        image: Image::from_vec(w, h, image).expect("sized"),
        depth: DepthMap::from_depth(w, h, depth).expect("sized"),
        surfaces,
    }
}

/// Angular size of a pixel around `(u, v)`, radians (chord approximation).
fn pixel_spread(cam: &FisheyeCamera, u: f64, v: f64, r: &Vec3) -> f64 {
    let du = cam.ray(u + 1.0, v).map(|r2| (r2 - r).norm());
    let dv = cam.ray(u, v + 1.0).map(|r2| (r2 - r).norm());
    match (du, dv) {
        (Some(a), Some(b)) => a.max(b),
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => 1.0 / cam.fx().min(cam.fy()),
    }
}

fn frame_seed(scene: &Scene, t: f64, cam: usize) -> u64 {
    splitmix64(scene.texture_seed ^ splitmix64(t.to_bits() ^ ((cam as u64) << 56)))
}

/// Renders every camera of the rig at time `t` for the given body-to-world
/// pose, with ground-truth depth for every camera and the bounding boxes of
/// moving objects visible in the reference camera.
pub fn render_frame(
    scene: &Scene,
    rig: &CameraRig,
    body_pose: &Pose,
    t: f64,
    frame_id: u64,
) -> FramePacket {
    let mut images = Vec::with_capacity(rig.len());
    let mut depths = Vec::with_capacity(rig.len());
    let mut detections = Vec::new();
    for idx in 0..rig.len() {
        let cam = rig.camera(idx);
        let cam_to_world = rig.camera_to_world(idx, body_pose);
        let view = render_camera(scene, cam, &cam_to_world, t, frame_seed(scene, t, idx));
        if idx == rig.reference_index() {
            detections = detect_moving(scene, cam, &cam_to_world, t, frame_id, &view.surfaces);
        }
        images.push(view.image);
        depths.push(view.depth);
    }
    FramePacket {
        frame_id,
        timestamp: t,
        images,
        body_pose: *body_pose,
        gt_depth: Some(depths),
        detections: Some(detections),
    }
}

/// Exact boxes for moving objects: the union of the pixels that see the object
/// and the projection of its densely sampled outline, clipped to the image.
fn detect_moving(
    scene: &Scene,
    cam: &FisheyeCamera,
    cam_to_world: &Pose,
    t: f64,
    frame_id: u64,
    surfaces: &[Option<Surface>],
) -> Vec<DetectionBox> {
    let world_to_cam = cam_to_world.inverse();
    let (w, h) = (cam.width(), cam.height());
    let mut out = Vec::new();
    for (k, obj) in scene.moving.iter().enumerate() {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        let mut seen = false;
        for (idx, s) in surfaces.iter().enumerate() {
            if *s == Some(Surface::Moving(k)) {
                let (i, j) = ((idx % w) as f64, (idx / w) as f64);
                lo = [lo[0].min(i), lo[1].min(j)];
                hi = [hi[0].max(i + 1.0), hi[1].max(j + 1.0)];
                seen = true;
            }
        }
        if !seen {
            continue;
        }
        for p in obj.shape_at(t).outline_points(48) {
            if let Some(px) = cam.project_unbounded(&world_to_cam.apply(&p)) {
                lo = [lo[0].min(px.x.floor()), lo[1].min(px.y.floor())];
                hi = [hi[0].max(px.x.ceil()), hi[1].max(px.y.ceil())];
            }
        }
        let x0 = lo[0].max(0.0);
        let y0 = lo[1].max(0.0);
        let x1 = hi[0].min(w as f64);
        let y1 = hi[1].min(h as f64);
        if x1 > x0 && y1 > y0 {
            out.push(DetectionBox {
                frame_id,
                class_id: obj.class_id,
                x: x0,
                y: y0,
                w: x1 - x0,
                h: y1 - y0,
                score: 1.0,
            });
        }
    }
    out
}

/// Path shape for [`script_trajectory_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectorySpec {
    pub length_m: f64,
    pub speed_mps: f64,
    pub frame_rate_hz: f64,
    pub start: Vec3,
    /// Initial heading about world z, radians (0 = +x).
    pub heading: f64,
    /// Heading change per meter traveled; 0 for a straight path.
    pub curvature: f64,
}

impl TrajectorySpec {
    pub fn straight(length_m: f64, speed_mps: f64, frame_rate_hz: f64) -> Self {
        Self {
            length_m,
            speed_mps,
            frame_rate_hz,
            start: Vec3::zeros(),
            heading: 0.0,
            curvature: 0.0,
        }
    }

    /// Length covering exactly `frames` poses.
    pub fn with_frames(frames: usize, speed_mps: f64, frame_rate_hz: f64) -> Self {
        let step = speed_mps / frame_rate_hz;
        Self::straight(step * frames.saturating_sub(1) as f64, speed_mps, frame_rate_hz)
    }
}

/// Straight path along +x from the origin.
pub fn script_trajectory(length_m: f64, speed_mps: f64, frame_rate_hz: f64) -> Result<Trajectory> {
    script_trajectory_with(&TrajectorySpec::straight(length_m, speed_mps, frame_rate_hz))
}

pub fn script_trajectory_with(spec: &TrajectorySpec) -> Result<Trajectory> {
    if !(spec.length_m >= 0.0 && spec.speed_mps > 0.0 && spec.frame_rate_hz > 0.0) {
        return Err(Error::Config(format!(
            "trajectory needs non-negative length and positive speed and rate (got {}, {}, {})",
            spec.length_m, spec.speed_mps, spec.frame_rate_hz
        )));
    }
    let step = spec.speed_mps / spec.frame_rate_hz;
    let count = (spec.length_m / step + 1e-9).floor() as usize + 1;
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let s = k as f64 * step;
        let heading = spec.heading + spec.curvature * s;
        let offset = if spec.curvature.abs() < 1e-12 {
            Vec3::new(s * spec.heading.cos(), s * spec.heading.sin(), 0.0)
        } else {
            let c = spec.curvature;
            Vec3::new(
                (heading.sin() - spec.heading.sin()) / c,
                -(heading.cos() - spec.heading.cos()) / c,
                0.0,
            )
        };
        let pose = Pose::from_axis_angle(Vec3::z(), heading, spec.start + offset);
        out.push((k as f64 / spec.frame_rate_hz, pose));
    }
    Ok(out)
}
