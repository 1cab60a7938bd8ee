//! Built-in scenes. The vehicle drives along +x at y = 0; every preset assumes
//! the default rig geometry (body origin 1 m above ground, cameras 0.6 m above
//! the body origin).

use super::scene::{MovingObject, Primitive, Scene, Shape};
use super::texture::Texture;
use crate::geometry::{CameraRig, Pose, Vec3};

/// Class id written for synthetic vehicles.
pub const CAR_CLASS: u32 = 2;

/// Camera height above the ground for the default rig.
pub const CAMERA_HEIGHT: f64 = 1.6;

/// Body-to-world pose at distance `x` along the street.
pub fn body_pose_at(rig: &CameraRig, x: f64) -> Pose {
    Pose::from_translation(Vec3::new(x, 0.0, rig.body_height()))
}

fn boxed(center: [f64; 3], half: [f64; 3], tex: Texture) -> Primitive {
    Primitive {
        shape: Shape::Box {
            center: Vec3::new(center[0], center[1], center[2]),
            half: Vec3::new(half[0], half[1], half[2]),
            yaw: 0.0,
        },
        texture: tex,
    }
}

/// A single textured plane facing the cameras at `depth` meters, nothing else.
pub fn fronto_plane(depth: f64, seed: u64) -> Scene {
    Scene {
        primitives: vec![Primitive {
            shape: Shape::Plane {
                center: Vec3::new(depth, 0.0, CAMERA_HEIGHT),
                normal: Vec3::new(-1.0, 0.0, 0.0),
                half_w: 1.0 * depth,
                half_h: 0.55 * depth,
            },
            texture: Texture::new(0.5, 0.4, 0.2 * depth),
        }],
        texture_seed: seed,
        ..Scene::default()
    }
}

/// Static street canyon: textured road, building rows on both sides with a
/// cross street at x in [14, 22], parked cars, poles and shrubs.
pub fn urban_street(seed: u64) -> Scene {
    let mut prims = Vec::new();
    // Building rows: (x_start, x_end, setback, height, mean, contrast, scale).
    let left = [
        (-30.0, -8.0, 6.8, 9.0, 0.45, 0.35, 1.6),
        (-8.0, 4.0, 7.4, 12.0, 0.55, 0.32, 1.2),
        (4.0, 14.0, 6.6, 8.0, 0.4, 0.38, 1.8),
        (22.0, 36.0, 7.0, 10.0, 0.5, 0.35, 1.4),
        (36.0, 52.0, 6.6, 14.0, 0.42, 0.33, 2.0),
        (52.0, 75.0, 7.2, 9.0, 0.58, 0.3, 1.5),
        (75.0, 100.0, 6.8, 11.0, 0.47, 0.36, 1.7),
    ];
    let right = [
        (-30.0, -12.0, 7.0, 10.0, 0.5, 0.34, 1.5),
        (-12.0, 2.0, 6.6, 8.0, 0.42, 0.37, 1.9),
        (2.0, 14.0, 7.2, 13.0, 0.56, 0.31, 1.3),
        (22.0, 40.0, 6.7, 9.0, 0.46, 0.36, 1.7),
        (40.0, 58.0, 7.3, 12.0, 0.53, 0.33, 1.4),
        (58.0, 80.0, 6.8, 10.0, 0.44, 0.35, 1.8),
        (80.0, 100.0, 7.0, 9.0, 0.5, 0.34, 1.6),
    ];
    for (side, rows) in [(1.0, &left), (-1.0, &right)] {
        for &(x0, x1, setback, height, mean, contrast, scale) in rows.iter() {
            prims.push(boxed(
                [(x0 + x1) / 2.0, side * (setback + 2.0), height / 2.0],
                [(x1 - x0) / 2.0, 2.0, height / 2.0],
                Texture::new(mean, contrast, scale),
            ));
        }
    }
    // Parked cars along the curbs, away from the cross street.
    let cars = [
        (-4.0, 1.0),
        (6.0, -1.0),
        (10.0, 1.0),
        (27.0, -1.0),
        (31.0, 1.0),
        (45.0, 1.0),
        (50.0, -1.0),
        (63.0, -1.0),
    ];
    for (k, &(x, side)) in cars.iter().enumerate() {
        prims.push(boxed(
            [x, side * 5.2, 0.7],
            [2.1, 0.9, 0.7],
            Texture::new(0.35 + 0.04 * (k % 4) as f64, 0.38, 0.9),
        ));
    }
    for k in 0..9 {
        let x = -6.0 + 12.0 * k as f64;
        if (12.0..24.0).contains(&x) {
            continue;
        }
        let side = if k % 2 == 0 { 1.0 } else { -1.0 };
        prims.push(boxed(
            [x, side * 6.1, 1.6],
            [0.15, 0.15, 1.6],
            Texture::new(0.3, 0.35, 0.6),
        ));
    }
    for &(x, y) in &[(2.0, 6.0), (24.5, -6.0), (39.0, 6.0), (55.0, -6.0)] {
        prims.push(Primitive {
            shape: Shape::Sphere {
                center: Vec3::new(x, y, 0.55),
                radius: 0.55,
            },
            texture: Texture::new(0.4, 0.4, 0.7),
        });
    }
    Scene {
        primitives: prims,
        ground: Some(Texture::new(0.45, 0.35, 2.0)),
        moving: Vec::new(),
        texture_seed: seed,
        sky: 0.85,
        noise_sigma: 0.01,
    }
}

/// [`urban_street`] plus a car-sized box driving through the cross street,
/// lifted 0.35 m off the ground like a car body over its wheels.
pub fn moving_box_street(seed: u64) -> Scene {
    let mut scene = urban_street(seed);
    scene.moving.push(MovingObject {
        shape: Shape::Box {
            center: Vec3::new(18.0, -10.0, 0.95),
            half: Vec3::new(0.9, 2.0, 0.6),
            yaw: 0.0,
        },
        texture: Texture::new(0.3, 0.4, 0.8),
        velocity: Vec3::new(0.0, 9.0, 0.0),
        class_id: CAR_CLASS,
    });
    scene
}

/// Road plus large structures 30-50 m ahead.
pub fn far_structure(seed: u64) -> Scene {
    let prims = vec![
        boxed([36.0, 0.0, 5.0], [1.5, 9.0, 5.0], Texture::new(0.5, 0.4, 2.5)),
        boxed([46.0, -15.0, 7.0], [2.0, 7.0, 7.0], Texture::new(0.45, 0.4, 3.0)),
        boxed([42.0, 14.0, 6.0], [2.0, 6.0, 6.0], Texture::new(0.55, 0.38, 2.8)),
        boxed([31.0, 9.0, 2.5], [1.0, 1.5, 2.5], Texture::new(0.4, 0.4, 1.5)),
        boxed([33.0, -8.0, 3.0], [1.0, 2.0, 3.0], Texture::new(0.5, 0.4, 1.8)),
    ];
    Scene {
        primitives: prims,
        ground: Some(Texture::new(0.45, 0.35, 2.0)),
        moving: Vec::new(),
        texture_seed: seed,
        sky: 0.85,
        noise_sigma: 0.01,
    }
}

/// Mid-range textured buildings next to a featureless facade, with stronger
/// intensity noise.
pub fn noisy_facade(seed: u64) -> Scene {
    let prims = vec![
        boxed([14.0, 0.0, 4.0], [1.0, 5.0, 4.0], Texture::new(0.5, 0.38, 1.5)),
        boxed([10.0, -7.0, 5.0], [6.0, 1.5, 5.0], Texture::new(0.45, 0.36, 1.3)),
        // Featureless facade.
        boxed([10.0, 7.5, 5.0], [6.0, 1.5, 5.0], Texture::flat(0.62)),
        boxed([22.0, 9.0, 6.0], [3.0, 3.0, 6.0], Texture::new(0.52, 0.35, 2.0)),
        boxed([7.0, -3.5, 0.7], [2.1, 0.9, 0.7], Texture::new(0.38, 0.4, 0.9)),
    ];
    Scene {
        primitives: prims,
        ground: Some(Texture::new(0.45, 0.35, 2.0)),
        moving: Vec::new(),
        texture_seed: seed,
        sky: 0.85,
        noise_sigma: 0.02,
    }
}

/// Two textured facades squarely facing the vehicle, `depths` meters ahead,
/// side by side so that together they span the forward view. No ground.
pub fn far_facades(depths: [f64; 2], seed: u64) -> Scene {
    let wall = |x: f64, y_lo: f64, y_hi: f64, scale: f64| Primitive {
        shape: Shape::Plane {
            center: Vec3::new(x, 0.5 * (y_lo + y_hi), 8.0),
            normal: Vec3::new(-1.0, 0.0, 0.0),
            half_w: 0.5 * (y_hi - y_lo),
            half_h: 12.0,
        },
        texture: Texture::new(0.5, 0.4, scale),
    };
    Scene {
        primitives: vec![wall(depths[0], -40.0, 0.0, 3.0), wall(depths[1], 0.0, 40.0, 3.5)],
        texture_seed: seed,
        ..Scene::default()
    }
}

/// Looks a preset up by name.
pub fn by_name(name: &str, seed: u64) -> Option<Scene> {
    Some(match name {
        "urban" => urban_street(seed),
        "moving_box" => moving_box_street(seed),
        "far" => far_structure(seed),
        "noisy_facade" => noisy_facade(seed),
        "fronto_plane" => fronto_plane(10.0, seed),
        "far_facades" => far_facades([31.24, 41.09], seed),
        _ => return None,
    })
}

pub const NAMES: [&str; 6] = [
    "urban",
    "moving_box",
    "far",
    "noisy_facade",
    "fronto_plane",
    "far_facades",
];
