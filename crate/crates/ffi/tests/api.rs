use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use densemap_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(dm_last_error()) }.to_string_lossy().into_owned()
}

fn c_path(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn identity_pose() -> DmPose {
    DmPose {
        rotation: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        translation: [0.0; 3],
    }
}

fn pinhole(width: usize, height: usize) -> *mut DmCamera {
    let mut cam = ptr::null_mut();
    let s = unsafe {
        dm_camera_new(0.0, 100.0, 100.0, width as f64 / 2.0, height as f64 / 2.0, width, height, &mut cam)
    };
    assert_eq!(s, DmStatus::Ok, "{}", last_error());
    cam
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(dm_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn camera_round_trip_and_errors() {
    let cam = pinhole(64, 48);
    let mut uv = [0.0; 2];
    let mut inside = false;
    let x = [0.3, -0.2, 2.0];
    assert_eq!(unsafe { dm_camera_project(cam, x.as_ptr(), uv.as_mut_ptr(), &mut inside) }, DmStatus::Ok);
    assert!(inside);
    assert!((uv[0] - (32.0 + 100.0 * 0.15)).abs() < 1e-9);
    assert!((uv[1] - (24.0 - 100.0 * 0.1)).abs() < 1e-9);

    let mut ray = [0.0; 3];
    assert_eq!(unsafe { dm_camera_back_project(cam, uv[0], uv[1], ray.as_mut_ptr()) }, DmStatus::Ok);
    let n = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    for k in 0..3 {
        assert!((ray[k] - x[k] / n).abs() < 1e-9);
    }

    let behind = [0.0, 0.0, -1.0];
    let s = unsafe { dm_camera_project(cam, behind.as_ptr(), uv.as_mut_ptr(), ptr::null_mut()) };
    assert_eq!(s, DmStatus::OutsideFov);
    assert!(!last_error().is_empty());

    assert_eq!(unsafe { dm_camera_project(cam, ptr::null(), uv.as_mut_ptr(), ptr::null_mut()) }, DmStatus::NullPointer);
    unsafe { dm_camera_free(cam) };

    let mut bad = ptr::null_mut();
    let s = unsafe { dm_camera_new(0.5, -1.0, 100.0, 10.0, 10.0, 20, 20, &mut bad) };
    assert_eq!(s, DmStatus::InvalidArgument);
    assert!(bad.is_null());
    assert!(last_error().contains("focal"));

    let s = unsafe { dm_camera_new(0.0, 100.0, 100.0, 10.0, 10.0, 20, 20, ptr::null_mut()) };
    assert_eq!(s, DmStatus::NullPointer);
}

#[test]
fn successful_calls_clear_the_error_message() {
    let mut out = ptr::null_mut();
    assert_ne!(unsafe { dm_depth_new(0, 4, ptr::null(), ptr::null(), ptr::null(), &mut out) }, DmStatus::Ok);
    assert!(!last_error().is_empty());
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { dm_filter_config_new(&mut cfg) }, DmStatus::Ok);
    assert!(last_error().is_empty());
    unsafe { dm_filter_config_free(cfg) };
}

#[test]
fn null_handles_are_tolerated() {
    unsafe {
        dm_camera_free(ptr::null_mut());
        dm_depth_free(ptr::null_mut());
        dm_filter_config_free(ptr::null_mut());
        dm_volume_free(ptr::null_mut());
        dm_cloud_free(ptr::null_mut());
        assert_eq!(dm_depth_width(ptr::null()), 0);
        assert_eq!(dm_cloud_len(ptr::null()), 0);
    }
}

#[test]
fn depth_map_copy_and_pfm_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (w, h) = (5usize, 3usize);
    let values: Vec<f32> = (0..w * h).map(|i| if i % 4 == 0 { 0.0 } else { 1.0 + i as f32 }).collect();
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { dm_depth_new(w, h, values.as_ptr(), ptr::null(), ptr::null(), &mut d) }, DmStatus::Ok);
    unsafe {
        assert_eq!(dm_depth_width(d), w);
        assert_eq!(dm_depth_height(d), h);
        assert_eq!(dm_depth_valid_count(d), values.iter().filter(|v| **v > 0.0).count());
    }

    let file = c_path(&dir.path().join("d.pfm"));
    assert_eq!(unsafe { dm_depth_write_pfm(d, file.as_ptr()) }, DmStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { dm_depth_read_pfm(file.as_ptr(), &mut back) }, DmStatus::Ok);
    let mut buf = vec![-1.0f32; w * h];
    assert_eq!(unsafe { dm_depth_copy(back, buf.as_mut_ptr(), buf.len()) }, DmStatus::Ok);
    assert_eq!(buf, values);
    assert_eq!(unsafe { dm_depth_copy(back, buf.as_mut_ptr(), buf.len() - 1) }, DmStatus::DimensionMismatch);

    let missing = c_path(&dir.path().join("missing.pfm"));
    let mut none = ptr::null_mut();
    assert_eq!(unsafe { dm_depth_read_pfm(missing.as_ptr(), &mut none) }, DmStatus::Io);
    assert!(none.is_null());

    let junk = dir.path().join("junk.pfm");
    std::fs::write(&junk, b"P5\n1 1\n255\n\0").unwrap();
    let junk = c_path(&junk);
    assert_eq!(unsafe { dm_depth_read_pfm(junk.as_ptr(), &mut none) }, DmStatus::Parse);

    unsafe {
        dm_depth_free(d);
        dm_depth_free(back);
    }
}

#[test]
fn filters_follow_their_switches() {
    let (w, h) = (8usize, 8usize);
    let depth = vec![5.0f32; w * h];
    let mut best = vec![0.01f32; w * h];
    let mut second = vec![0.5f32; w * h];
    best[0] = 0.5;
    second[0] = 1.0;
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { dm_depth_new(w, h, depth.as_ptr(), best.as_ptr(), second.as_ptr(), &mut d) }, DmStatus::Ok);

    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { dm_filter_config_new(&mut cfg) }, DmStatus::Ok);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { dm_filter_apply(cfg, d, &mut out) }, DmStatus::Ok);
    assert_eq!(unsafe { dm_depth_valid_count(out) }, w * h - 1);
    unsafe { dm_depth_free(out) };

    let key = CString::new("enable_cost").unwrap();
    assert_eq!(unsafe { dm_filter_config_set(cfg, key.as_ptr(), 0.0) }, DmStatus::Ok);
    assert_eq!(unsafe { dm_filter_apply(cfg, d, &mut out) }, DmStatus::Ok);
    assert_eq!(unsafe { dm_depth_valid_count(out) }, w * h);
    unsafe { dm_depth_free(out) };

    let beta = CString::new("beta").unwrap();
    assert_eq!(unsafe { dm_filter_config_set(cfg, beta.as_ptr(), 0.5) }, DmStatus::InvalidArgument);
    let unknown = CString::new("sharpness").unwrap();
    assert_eq!(unsafe { dm_filter_config_set(cfg, unknown.as_ptr(), 1.0) }, DmStatus::InvalidArgument);
    assert!(last_error().contains("sharpness"));
    let window = CString::new("consistency_window").unwrap();
    assert_eq!(unsafe { dm_filter_config_set(cfg, window.as_ptr(), 2.5) }, DmStatus::InvalidArgument);

    unsafe {
        dm_filter_config_free(cfg);
        dm_depth_free(d);
    }
}

#[test]
fn fusing_a_wall_yields_points_on_the_wall() {
    let (w, h) = (64usize, 48usize);
    let cam = pinhole(w, h);
    let wall = 4.0;
    let mut depth = vec![0.0f32; w * h];
    for j in 0..h {
        for i in 0..w {
            let mut ray = [0.0; 3];
            let s = unsafe { dm_camera_back_project(cam, i as f64 + 0.5, j as f64 + 0.5, ray.as_mut_ptr()) };
            assert_eq!(s, DmStatus::Ok);
            depth[j * w + i] = (wall / ray[2]) as f32;
        }
    }
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { dm_depth_new(w, h, depth.as_ptr(), ptr::null(), ptr::null(), &mut d) }, DmStatus::Ok);

    let mut vol = ptr::null_mut();
    let size = [20.0, 20.0, 20.0];
    let center = [0.0; 3];
    assert_eq!(unsafe { dm_volume_new(0.05, 0.2, 100, size.as_ptr(), center.as_ptr(), &mut vol) }, DmStatus::Ok);
    let pose = identity_pose();
    for pass in 0..3 {
        let mut stats = DmFuseStats::default();
        assert_eq!(unsafe { dm_volume_fuse(vol, d, cam, &pose, &mut stats) }, DmStatus::Ok, "{}", last_error());
        assert_eq!(stats.blocks_allocated > 0, pass == 0);
        assert!(stats.voxels_updated > 0);
    }
    let (mut active, mut inactive) = (0usize, 0usize);
    assert_eq!(unsafe { dm_volume_block_counts(vol, &mut active, &mut inactive) }, DmStatus::Ok);
    assert!(active > 0);
    assert_eq!(inactive, 0);

    let mut cloud = ptr::null_mut();
    assert_eq!(unsafe { dm_volume_extract(vol, 3, 0, &mut cloud) }, DmStatus::Ok);
    let n = unsafe { dm_cloud_len(cloud) };
    assert!(n > 100, "{n} points");
    let mut xyz = vec![0.0; 3 * n];
    let mut written = 0;
    assert_eq!(unsafe { dm_cloud_copy_points(cloud, xyz.as_mut_ptr(), n, &mut written) }, DmStatus::Ok);
    assert_eq!(written, n);
    for p in xyz.chunks_exact(3) {
        assert!((p[2] - wall).abs() < 0.05, "point {p:?} off the wall");
    }

    let mut gt = ptr::null_mut();
    assert_eq!(unsafe { dm_cloud_new(xyz.as_ptr(), n, &mut gt) }, DmStatus::Ok);
    let mut q = DmMapQuality::default();
    assert_eq!(unsafe { dm_accuracy_completeness(cloud, gt, 0.01, 0.01, &mut q) }, DmStatus::Ok);
    assert_eq!((q.accuracy, q.completeness), (1.0, 1.0));

    let far = [1000.0, 0.0, 0.0];
    let mut moved = 0;
    assert_eq!(unsafe { dm_volume_prune(vol, far.as_ptr(), &mut moved) }, DmStatus::Ok);
    assert_eq!(moved, active);
    assert_eq!(unsafe { dm_volume_block_counts(vol, &mut active, &mut inactive) }, DmStatus::Ok);
    assert_eq!((active, inactive), (0, moved));

    let small = pinhole(32, 24);
    assert_eq!(unsafe { dm_volume_fuse(vol, d, small, &pose, ptr::null_mut()) }, DmStatus::DimensionMismatch);
    let mut skew = identity_pose();
    skew.rotation[1] = 0.5;
    assert_eq!(unsafe { dm_volume_fuse(vol, d, cam, &skew, ptr::null_mut()) }, DmStatus::InvalidArgument);

    unsafe {
        dm_cloud_free(cloud);
        dm_cloud_free(gt);
        dm_volume_free(vol);
        dm_depth_free(d);
        dm_camera_free(cam);
        dm_camera_free(small);
    }
}

#[test]
fn point_cloud_ply_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let xyz = [0.0, 1.0, 2.0, -3.5, 4.25, 1e-3];
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { dm_cloud_new(xyz.as_ptr(), 2, &mut c) }, DmStatus::Ok);
    for binary in [false, true] {
        let file = c_path(&dir.path().join(format!("c{binary}.ply")));
        assert_eq!(unsafe { dm_cloud_write_ply(c, file.as_ptr(), binary) }, DmStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(unsafe { dm_cloud_read_ply(file.as_ptr(), &mut back) }, DmStatus::Ok);
        let mut out = [0.0; 6];
        let mut written = 0;
        assert_eq!(unsafe { dm_cloud_copy_points(back, out.as_mut_ptr(), 2, &mut written) }, DmStatus::Ok);
        assert_eq!(written, 2);
        for (a, b) in out.iter().zip(&xyz) {
            assert!((a - b).abs() < 1e-6);
        }
        unsafe { dm_cloud_free(back) };
    }

    let mut partial = [0.0; 3];
    let mut written = 0;
    assert_eq!(unsafe { dm_cloud_copy_points(c, partial.as_mut_ptr(), 1, &mut written) }, DmStatus::Ok);
    assert_eq!((written, partial), (1, [0.0, 1.0, 2.0]));

    let mut empty = ptr::null_mut();
    assert_eq!(unsafe { dm_cloud_new(ptr::null(), 0, &mut empty) }, DmStatus::Ok);
    let mut q = DmMapQuality::default();
    assert_eq!(unsafe { dm_accuracy_completeness(c, empty, 0.1, 0.1, &mut q) }, DmStatus::EmptyInput);
    unsafe {
        dm_cloud_free(c);
        dm_cloud_free(empty);
    }
}

#[test]
fn pipeline_reports_bad_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "n_fronto = many\n").unwrap();
    let p = c_path(&cfg);
    let s = unsafe { dm_run_pipeline(p.as_ptr(), ptr::null_mut(), ptr::null_mut()) };
    assert_ne!(s, DmStatus::Ok);
    assert!(last_error().contains("n_fronto"), "{}", last_error());
    assert_eq!(unsafe { dm_run_pipeline(ptr::null(), ptr::null_mut(), ptr::null_mut()) }, DmStatus::NullPointer);
}

#[test]
fn header_declares_the_api_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("densemap.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "dm_version",
        "dm_last_error",
        "dm_camera_new",
        "dm_depth_read_pfm",
        "dm_filter_apply",
        "dm_volume_fuse",
        "dm_volume_extract",
        "dm_cloud_write_ply",
        "dm_accuracy_completeness",
        "dm_run_pipeline",
        "DM_STATUS_OUTSIDE_FOV",
        "typedef struct DmVolume DmVolume",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        match Command::new(compiler).args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang]).arg(&header).output() {
            Ok(out) => assert!(out.status.success(), "{compiler}: {}", String::from_utf8_lossy(&out.stderr)),
            Err(_) => eprintln!("{compiler} not available; skipped header compilation"),
        }
    }
}
