use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use densemap::pipeline::{
    format_frames, generate_dataset, run_pipeline, Dataset, GenerateConfig, RunConfig, FRAMES_FILE, GT_MAP_FILE,
    MAP_FILE, MAP_UNGATED_FILE, METRICS_CSV_FILE, METRICS_JSON_FILE, TIMING_FILE,
};
use densemap::planesweep::ScaleMode;
use densemap::synth::{presets, Scene, TrajectorySpec};
use densemap::{CameraRig, PointCloud, Vec3};

const WIDTH: usize = 160;
const HEIGHT: usize = 85;
const FRAMES: usize = 4;

fn generate(scene: Scene, dir: &Path, frames: usize) -> densemap::pipeline::GenerateSummary {
    let rig = CameraRig::synthetic(WIDTH, HEIGHT);
    let mut trajectory = TrajectorySpec::with_frames(frames, 10.0, 25.0);
    trajectory.start = Vec3::new(0.0, 0.0, rig.body_height());
    generate_dataset(&GenerateConfig {
        scene,
        rig,
        trajectory,
        output: dir.to_path_buf(),
        depth_all_cameras: false,
    })
    .unwrap()
}

fn shared_dataset() -> &'static Path {
    static DIR: OnceLock<(tempfile::TempDir, PathBuf)> = OnceLock::new();
    let (_, path) = DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("urban");
        generate(presets::urban_street(3), &path, FRAMES);
        (dir, path)
    });
    path
}

fn config(dataset: &Path, output: &Path) -> RunConfig {
    RunConfig {
        dataset: dataset.to_path_buf(),
        output: output.to_path_buf(),
        mode: ScaleMode::Half,
        threads: Some(1),
        ..RunConfig::default()
    }
}

#[test]
fn run_writes_every_output() {
    let out = tempfile::tempdir().unwrap();
    let result = run_pipeline(&config(shared_dataset(), out.path())).unwrap();
    let s = &result.summary;
    assert_eq!(s.frames_total, FRAMES);
    assert_eq!(s.frames_processed, FRAMES);
    assert_eq!(s.frames.len(), FRAMES);
    assert_eq!(s.cameras, vec![0, 1, 2, 3, 4]);
    assert!(s.warnings.is_empty(), "{:?}", s.warnings);
    assert!(s.map_points > 0);
    assert!(s.map_points_ungated >= s.map_points);
    assert_eq!(s.quality.len(), RunConfig::default().tolerances.len());
    for f in &s.frames {
        assert!(f.valid_raw >= f.valid_filtered);
        assert!(f.valid_filtered >= f.valid_final);
        assert!(f.error_raw.is_some());
    }
    for name in [MAP_FILE, MAP_UNGATED_FILE, GT_MAP_FILE, METRICS_CSV_FILE, METRICS_JSON_FILE, TIMING_FILE] {
        assert!(out.path().join(name).is_file(), "{name} missing");
    }
    let map = PointCloud::read_ply(&out.path().join(MAP_FILE)).unwrap();
    assert_eq!(map.points.len(), s.map_points);

    let csv = fs::read_to_string(out.path().join(METRICS_CSV_FILE)).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("frame_id,median,mean,n"));
    assert_eq!(lines.count(), FRAMES);

    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.path().join(METRICS_JSON_FILE)).unwrap()).unwrap();
    assert_eq!(metrics["frames_processed"], FRAMES);
    let timing: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.path().join(TIMING_FILE)).unwrap()).unwrap();
    assert_eq!(timing["frames"].as_array().unwrap().len(), FRAMES);
    assert!(timing["total"]["sweep"].as_f64().unwrap() > 0.0);
}

#[test]
fn pipelined_run_matches_sequential_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let seq = run_pipeline(&config(shared_dataset(), a.path())).unwrap();
    let mut cfg = config(shared_dataset(), b.path());
    cfg.pipelined = true;
    cfg.threads = Some(2);
    let pip = run_pipeline(&cfg).unwrap();
    assert!(pip.timing.pipelined);
    assert_eq!(seq.map, pip.map);
    assert_eq!(seq.gt_map, pip.gt_map);
    for name in [MAP_FILE, GT_MAP_FILE, METRICS_CSV_FILE, METRICS_JSON_FILE] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name} differs"
        );
    }
}

#[test]
fn camera_subset_and_frame_limit_are_honored() {
    let out = tempfile::tempdir().unwrap();
    let mut cfg = config(shared_dataset(), out.path());
    cfg.set("cameras", "1,2,3").unwrap();
    cfg.max_frames = Some(2);
    let result = run_pipeline(&cfg).unwrap();
    assert_eq!(result.summary.cameras, vec![1, 2, 3]);
    assert_eq!(result.summary.frames_processed, 2);
    assert_eq!(result.timing.frames.len(), 2);
    assert!(result.timing.mean.sweep > 0.0);

    let mut bad = config(shared_dataset(), out.path());
    bad.set("cameras", "0,1").unwrap();
    assert!(run_pipeline(&bad).is_err(), "subset without the reference camera must be rejected");
}

#[test]
fn frames_without_a_pose_are_skipped_with_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    generate(presets::urban_street(5), &data, FRAMES);
    let frames_path = data.join(FRAMES_FILE);
    let mut frames = Dataset::open(&data, None).unwrap().frames;
    frames.push((frames.len() as u64, 1.0e4));
    fs::write(&frames_path, format_frames(&frames)).unwrap();

    let result = run_pipeline(&config(&data, &dir.path().join("out"))).unwrap();
    let s = &result.summary;
    assert_eq!(s.frames_total, FRAMES + 1);
    assert_eq!(s.frames_processed, FRAMES);
    assert_eq!(s.warnings.len(), 1, "{:?}", s.warnings);
    assert!(s.warnings[0].contains(&format!("frame {FRAMES}: no pose")), "{}", s.warnings[0]);
}

#[test]
fn config_text_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let default_path = dir.path().join("default.conf");
    fs::write(&default_path, RunConfig::default().to_config_string()).unwrap();
    assert_eq!(
        RunConfig::load(&default_path).unwrap().to_config_string(),
        RunConfig::default().to_config_string()
    );

    let mut cfg = RunConfig::default();
    for (k, v) in [
        ("n_fronto", "32"),
        ("crop", "300,180"),
        ("filter_uniqueness", "false"),
        ("alpha_upper", "0.07"),
        ("masking", "false"),
        ("voxel_size", "0.1"),
        ("mu", "0.4"),
        ("min_block_observations", "5"),
        ("cameras", "1,2,3"),
        ("threads", "3"),
        ("pipelined", "true"),
        ("ply_format", "ascii"),
        ("tolerances", "0.05,0.2"),
    ] {
        cfg.set(k, v).unwrap_or_else(|e| panic!("{k}: {e}"));
    }
    let path = dir.path().join("run.conf");
    fs::write(&path, cfg.to_config_string()).unwrap();
    let back = RunConfig::load(&path).unwrap();
    assert_eq!(back.to_config_string(), cfg.to_config_string());
    assert_eq!(back.sweep.n_fronto, 32);
    assert_eq!(back.crop, Some((300, 180)));
    assert!(!back.filter.enable_uniqueness);
    assert_eq!(back.cameras, Some(vec![1, 2, 3]));
    assert_eq!(back.tolerances, vec![0.05, 0.2]);

    assert!(cfg.set("n_fronto", "lots").is_err());
    assert!(cfg.set("no_such_key", "1").is_err());
    let bad = dir.path().join("bad.conf");
    fs::write(&bad, "voxel_size = 0.05\nthis line has no equals sign\n").unwrap();
    let err = RunConfig::load(&bad).unwrap_err().to_string();
    assert!(err.contains(":2:"), "{err}");
}

#[test]
fn generation_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    generate(presets::urban_street(11), &a, 2);
    generate(presets::urban_street(11), &b, 2);
    let data = Dataset::open(&a, None).unwrap();
    for &(id, _) in &data.frames {
        for cam in 0..data.rig.len() {
            let rel = densemap::pipeline::image_path(Path::new(""), cam, id);
            assert_eq!(fs::read(a.join(&rel)).unwrap(), fs::read(b.join(&rel)).unwrap());
        }
    }
    let gt = densemap::pipeline::depth_path(Path::new(""), data.rig.reference_index(), 0);
    assert_eq!(fs::read(a.join(&gt)).unwrap(), fs::read(b.join(&gt)).unwrap());
}

#[test]
fn moving_objects_produce_detections() {
    let dir = tempfile::tempdir().unwrap();
    let summary = generate(presets::moving_box_street(2), dir.path(), 3);
    assert_eq!(summary.frames, 3);
    assert_eq!(summary.images, 3 * 5);
    assert_eq!(summary.depth_maps, 3);
    assert!(summary.detections > 0);
    let data = Dataset::open(dir.path(), None).unwrap();
    assert!((0..3).any(|f| !data.detections_for(f).is_empty()));

    let static_dir = tempfile::tempdir().unwrap();
    let summary = generate(presets::urban_street(2), static_dir.path(), 2);
    assert_eq!(summary.detections, 0);
}
