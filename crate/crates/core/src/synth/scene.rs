use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Rotation3};

use super::texture::Texture;
use crate::error::{Error, Result};
use crate::geometry::Vec3;

const HIT_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    /// Rectangle centered at `center` with unit `normal`; `half_w` runs along
    /// the in-plane horizontal axis, `half_h` along the other.
    Plane {
        center: Vec3,
        normal: Vec3,
        half_w: f64,
        half_h: f64,
    },
    /// Box rotated by `yaw` about the world z axis.
    Box { center: Vec3, half: Vec3, yaw: f64 },
    Sphere { center: Vec3, radius: f64 },
}

#[derive(Clone, Copy, Debug)]
pub struct Hit {
    pub range: f64,
    /// Hit point in the primitive's local frame (texture coordinates).
    pub local: [f64; 3],
    pub normal: Vec3,
}

impl Shape {
    pub fn translated(&self, offset: Vec3) -> Shape {
        match *self {
            Shape::Plane {
                center,
                normal,
                half_w,
                half_h,
            } => Shape::Plane {
                center: center + offset,
                normal,
                half_w,
                half_h,
            },
            Shape::Box { center, half, yaw } => Shape::Box {
                center: center + offset,
                half,
                yaw,
            },
            Shape::Sphere { center, radius } => Shape::Sphere {
                center: center + offset,
                radius,
            },
        }
    }

    /// Nearest intersection of the ray `origin + s * dir` (unit `dir`), s > 0.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<Hit> {
        match *self {
            Shape::Plane {
                center,
                normal,
                half_w,
                half_h,
            } => {
                let denom = normal.dot(dir);
                if denom.abs() < 1e-12 {
                    return None;
                }
                let s = normal.dot(&(center - origin)) / denom;
                if !(s > HIT_EPS) {
                    return None;
                }
                let p = origin + dir * s - center;
                let (e1, e2) = plane_basis(&normal);
                let (a, b) = (p.dot(&e1), p.dot(&e2));
                if a.abs() > half_w || b.abs() > half_h {
                    return None;
                }
                Some(Hit {
                    range: s,
                    local: [a, b, 0.0],
                    normal,
                })
            }
            Shape::Box { center, half, yaw } => {
                let rot = yaw_matrix(yaw);
                let o = rot.transpose() * (origin - center);
                let d = rot.transpose() * dir;
                let mut t_near = f64::NEG_INFINITY;
                let mut t_far = f64::INFINITY;
                let mut axis_near = 0;
                let mut axis_far = 0;
                for k in 0..3 {
                    if d[k].abs() < 1e-15 {
                        if o[k].abs() > half[k] {
                            return None;
                        }
                        continue;
                    }
                    let inv = 1.0 / d[k];
                    let (mut t0, mut t1) = ((-half[k] - o[k]) * inv, (half[k] - o[k]) * inv);
                    if t0 > t1 {
                        std::mem::swap(&mut t0, &mut t1);
                    }
                    if t0 > t_near {
                        t_near = t0;
                        axis_near = k;
                    }
                    if t1 < t_far {
                        t_far = t1;
                        axis_far = k;
                    }
                }
                if t_near > t_far {
                    return None;
                }
                let (s, axis) = if t_near > HIT_EPS {
                    (t_near, axis_near)
                } else if t_far > HIT_EPS {
                    (t_far, axis_far)
                } else {
                    return None;
                };
                let local = o + d * s;
                let mut n_local = Vec3::zeros();
                n_local[axis] = local[axis].signum();
                Some(Hit {
                    range: s,
                    local: [local.x, local.y, local.z],
                    normal: rot * n_local,
                })
            }
            Shape::Sphere { center, radius } => {
                let oc = origin - center;
                let b = oc.dot(dir);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let s = if -b - sq > HIT_EPS { -b - sq } else { -b + sq };
                if !(s > HIT_EPS) {
                    return None;
                }
                let local = oc + dir * s;
                Some(Hit {
                    range: s,
                    local: [local.x, local.y, local.z],
                    normal: local / radius,
                })
            }
        }
    }

    /// Points on the surface outline: box edges (dense), plane rim, sphere
    /// great circles. Used to bound silhouettes.
    pub fn outline_points(&self, per_edge: usize) -> Vec<Vec3> {
        let n = per_edge.max(2);
        let mut pts = Vec::new();
        match *self {
            Shape::Box { center, half, yaw } => {
                let rot = yaw_matrix(yaw);
                let corner = |sx: f64, sy: f64, sz: f64| {
                    center + rot * Vec3::new(sx * half.x, sy * half.y, sz * half.z)
                };
                let signs = [-1.0, 1.0];
                let mut corners = Vec::with_capacity(8);
                for &sx in &signs {
                    for &sy in &signs {
                        for &sz in &signs {
                            corners.push((sx, sy, sz, corner(sx, sy, sz)));
                        }
                    }
                }
                for a in 0..8 {
                    for b in (a + 1)..8 {
                        let (ca, cb) = (corners[a], corners[b]);
                        let diff = (ca.0 != cb.0) as u8 + (ca.1 != cb.1) as u8 + (ca.2 != cb.2) as u8;
                        if diff != 1 {
                            continue;
                        }
                        for k in 0..n {
                            let s = k as f64 / (n - 1) as f64;
                            pts.push(ca.3 + (cb.3 - ca.3) * s);
                        }
                    }
                }
            }
            Shape::Plane {
                center,
                normal,
                half_w,
                half_h,
            } => {
                let (e1, e2) = plane_basis(&normal);
                for k in 0..n {
                    let s = 2.0 * k as f64 / (n - 1) as f64 - 1.0;
                    pts.push(center + e1 * (s * half_w) + e2 * half_h);
                    pts.push(center + e1 * (s * half_w) - e2 * half_h);
                    pts.push(center + e1 * half_w + e2 * (s * half_h));
                    pts.push(center - e1 * half_w + e2 * (s * half_h));
                }
            }
            Shape::Sphere { center, radius } => {
                for k in 0..4 * n {
                    let a = std::f64::consts::TAU * k as f64 / (4 * n) as f64;
                    let (s, c) = a.sin_cos();
                    pts.push(center + Vec3::new(c, s, 0.0) * radius);
                    pts.push(center + Vec3::new(c, 0.0, s) * radius);
                    pts.push(center + Vec3::new(0.0, c, s) * radius);
                }
            }
        }
        pts
    }

    /// Euclidean distance from `p` to the solid (0 inside).
    pub fn distance(&self, p: &Vec3) -> f64 {
        match *self {
            Shape::Box { center, half, yaw } => {
                let q = yaw_matrix(yaw).transpose() * (p - center);
                let d = Vec3::new(
                    (q.x.abs() - half.x).max(0.0),
                    (q.y.abs() - half.y).max(0.0),
                    (q.z.abs() - half.z).max(0.0),
                );
                d.norm()
            }
            Shape::Sphere { center, radius } => ((p - center).norm() - radius).max(0.0),
            Shape::Plane {
                center,
                normal,
                half_w,
                half_h,
            } => {
                let (e1, e2) = plane_basis(&normal);
                let q = p - center;
                let a = (q.dot(&e1).abs() - half_w).max(0.0);
                let b = (q.dot(&e2).abs() - half_h).max(0.0);
                let c = q.dot(&normal);
                (a * a + b * b + c * c).sqrt()
            }
        }
    }
}

fn yaw_matrix(yaw: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Vec3::z_axis(), yaw).into_inner()
}

/// In-plane axes: `e1` horizontal (perpendicular to world z) when possible.
pub(crate) fn plane_basis(normal: &Vec3) -> (Vec3, Vec3) {
    let up = Vec3::z();
    let e1 = up.cross(normal);
    let e1 = if e1.norm() < 1e-9 {
        Vec3::x()
    } else {
        e1.normalize()
    };
    let e2 = normal.cross(&e1);
    (e1, e2)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    pub texture: Texture,
}

/// A primitive translating at constant velocity; its position at time `t` is
/// `shape` shifted by `velocity * t`.
#[derive(Clone, Debug, PartialEq)]
pub struct MovingObject {
    pub shape: Shape,
    pub texture: Texture,
    pub velocity: Vec3,
    pub class_id: u32,
}

impl MovingObject {
    pub fn shape_at(&self, t: f64) -> Shape {
        self.shape.translated(self.velocity * t)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub primitives: Vec<Primitive>,
    /// Texture of the infinite ground plane `z = 0`; `None` means no ground.
    pub ground: Option<Texture>,
    pub moving: Vec<MovingObject>,
    pub texture_seed: u64,
    pub sky: f64,
    /// Standard deviation of additive Gaussian intensity noise.
    pub noise_sigma: f64,
}

/// Identifies what a ray hit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Surface {
    Ground,
    Static(usize),
    Moving(usize),
}

impl Surface {
    pub(crate) fn texture_id(&self) -> u32 {
        match *self {
            Surface::Ground => 0,
            Surface::Static(k) => 1 + k as u32,
            Surface::Moving(k) => 100_000 + k as u32,
        }
    }
}

impl Default for Scene {
    fn default() -> Self {
        Self {
            primitives: Vec::new(),
            ground: None,
            moving: Vec::new(),
            texture_seed: 1,
            sky: 0.85,
            noise_sigma: 0.01,
        }
    }
}

impl Scene {
    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty() && self.ground.is_none() && self.moving.is_empty()
    }

    /// Nearest surface along a world ray at time `t`.
    pub fn trace(&self, origin: &Vec3, dir: &Vec3, t: f64) -> Option<(Surface, Hit)> {
        let mut best: Option<(Surface, Hit)> = None;
        let mut consider = |surface: Surface, hit: Option<Hit>| {
            if let Some(h) = hit {
                if best.as_ref().is_none_or(|(_, b)| h.range < b.range) {
                    best = Some((surface, h));
                }
            }
        };
        if self.ground.is_some() && dir.z.abs() > 1e-12 {
            let s = -origin.z / dir.z;
            if s > HIT_EPS {
                let p = origin + dir * s;
                consider(
                    Surface::Ground,
                    Some(Hit {
                        range: s,
                        local: [p.x, p.y, 0.0],
                        normal: Vec3::z(),
                    }),
                );
            }
        }
        for (k, prim) in self.primitives.iter().enumerate() {
            consider(Surface::Static(k), prim.shape.intersect(origin, dir));
        }
        for (k, obj) in self.moving.iter().enumerate() {
            consider(Surface::Moving(k), obj.shape_at(t).intersect(origin, dir));
        }
        best
    }

    pub fn texture_of(&self, surface: Surface) -> &Texture {
        match surface {
            Surface::Ground => self.ground.as_ref().expect("ground hit without ground"),
            Surface::Static(k) => &self.primitives[k].texture,
            Surface::Moving(k) => &self.moving[k].texture,
        }
    }

    /// Same scene without moving objects.
    pub fn without_moving(&self) -> Scene {
        Scene {
            moving: Vec::new(),
            ..self.clone()
        }
    }

    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# synthetic scene: world z up, meters, angles in radians");
        let _ = writeln!(out, "seed {}", self.texture_seed);
        let _ = writeln!(out, "sky {}", self.sky);
        let _ = writeln!(out, "noise {}", self.noise_sigma);
        let tex = |t: &Texture| format!("{} {} {}", t.mean, t.contrast, t.scale);
        if let Some(g) = &self.ground {
            let _ = writeln!(out, "ground {}", tex(g));
        }
        for p in &self.primitives {
            let _ = writeln!(out, "{} {}", shape_fields(&p.shape), tex(&p.texture));
        }
        for m in &self.moving {
            let Shape::Box { center, half, yaw } = m.shape else {
                unreachable!("moving objects are boxes")
            };
            let _ = writeln!(
                out,
                "moving_box {} {} {} {} {} {} {} {} {} {} {} {}",
                center.x,
                center.y,
                center.z,
                half.x,
                half.y,
                half.z,
                yaw,
                m.velocity.x,
                m.velocity.y,
                m.velocity.z,
                m.class_id,
                tex(&m.texture)
            );
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Scene> {
        let mut scene = Scene::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| Error::parse(path, lineno + 1, m);
            let mut it = line.split_whitespace();
            let key = it.next().unwrap_or_default();
            let v: Vec<f64> = it
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| err(format!("bad number: {e}")))?;
            let need = |n: usize| {
                if v.len() == n {
                    Ok(())
                } else {
                    Err(err(format!("`{key}` expects {n} values, got {}", v.len())))
                }
            };
            let tex = |k: usize| Texture::new(v[k], v[k + 1], v[k + 2]);
            match key {
                "seed" => {
                    need(1)?;
                    scene.texture_seed = v[0] as u64;
                }
                "sky" => {
                    need(1)?;
                    scene.sky = v[0];
                }
                "noise" => {
                    need(1)?;
                    scene.noise_sigma = v[0];
                }
                "ground" => {
                    need(3)?;
                    scene.ground = Some(tex(0));
                }
                "plane" => {
                    need(11)?;
                    let normal = Vec3::new(v[3], v[4], v[5]);
                    if normal.norm() < 1e-12 {
                        return Err(err("plane normal is zero".into()));
                    }
                    scene.primitives.push(Primitive {
                        shape: Shape::Plane {
                            center: Vec3::new(v[0], v[1], v[2]),
                            normal: normal.normalize(),
                            half_w: v[6],
                            half_h: v[7],
                        },
                        texture: tex(8),
                    });
                }
                "box" => {
                    need(10)?;
                    scene.primitives.push(Primitive {
                        shape: Shape::Box {
                            center: Vec3::new(v[0], v[1], v[2]),
                            half: Vec3::new(v[3], v[4], v[5]),
                            yaw: v[6],
                        },
                        texture: tex(7),
                    });
                }
                "sphere" => {
                    need(7)?;
                    scene.primitives.push(Primitive {
                        shape: Shape::Sphere {
                            center: Vec3::new(v[0], v[1], v[2]),
                            radius: v[3],
                        },
                        texture: tex(4),
                    });
                }
                "moving_box" => {
                    need(14)?;
                    scene.moving.push(MovingObject {
                        shape: Shape::Box {
                            center: Vec3::new(v[0], v[1], v[2]),
                            half: Vec3::new(v[3], v[4], v[5]),
                            yaw: v[6],
                        },
                        velocity: Vec3::new(v[7], v[8], v[9]),
                        class_id: v[10] as u32,
                        texture: tex(11),
                    });
                }
                other => return Err(err(format!("unknown primitive `{other}`"))),
            }
        }
        Ok(scene)
    }

    pub fn load(path: &Path) -> Result<Scene> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_config_string()).map_err(|e| Error::io(path, e))
    }
}

fn shape_fields(shape: &Shape) -> String {
    match *shape {
        Shape::Plane {
            center,
            normal,
            half_w,
            half_h,
        } => format!(
            "plane {} {} {} {} {} {} {} {}",
            center.x, center.y, center.z, normal.x, normal.y, normal.z, half_w, half_h
        ),
        Shape::Box { center, half, yaw } => format!(
            "box {} {} {} {} {} {} {}",
            center.x, center.y, center.z, half.x, half.y, half.z, yaw
        ),
        Shape::Sphere { center, radius } => {
            format!("sphere {} {} {} {}", center.x, center.y, center.z, radius)
        }
    }
}
