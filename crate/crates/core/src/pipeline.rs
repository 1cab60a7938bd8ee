//! End-to-end orchestration: dataset generation and loading, the per-frame
//! depth / filter / mask / fusion loop, evaluation and output files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::eval::{depth_error_stats, tolerance_sweep, DepthErrorStats, MapQuality, DEFAULT_TOLERANCES};
use crate::filter::{apply_filters, FilterConfig};
use crate::geometry::{load_trajectory, save_trajectory, CameraRig, Pose, Trajectory, Vec3};
use crate::image::Image;
use crate::mask::{apply_masks, format_detections, load_detections, DetectionBox, Detections, MaskConfig};
use crate::planesweep::{estimate_depth, ScaleMode, SweepConfig};
use crate::ply::{PlyFormat, PointCloud};
use crate::synth::{render_frame, script_trajectory_with, Scene, TrajectorySpec};
use crate::tsdf::{TsdfConfig, TsdfVolume};

/// Image size the default crop is specified for.
const CROP_REFERENCE_SIZE: (usize, usize) = (1024, 544);

/// Timestamps closer than this match a trajectory entry.
const POSE_TIME_TOLERANCE: f64 = 1e-6;

/// Frames queued between the depth and fusion stages in pipelined mode. With
/// one frame in each stage this bounds the frames in flight to three.
const PIPELINE_QUEUE: usize = 1;

pub const RIG_FILE: &str = "rig.txt";
pub const TRAJECTORY_FILE: &str = "trajectory.txt";
pub const FRAMES_FILE: &str = "frames.txt";
pub const DETECTIONS_FILE: &str = "detections.txt";
pub const SCENE_FILE: &str = "scene.txt";

pub const MAP_FILE: &str = "map.ply";
pub const MAP_UNGATED_FILE: &str = "map_ungated.ply";
pub const GT_MAP_FILE: &str = "gt_map.ply";
pub const METRICS_CSV_FILE: &str = "metrics.csv";
pub const METRICS_JSON_FILE: &str = "metrics.json";
pub const TIMING_FILE: &str = "timing.json";

/// Everything a pipeline run needs.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset: PathBuf,
    /// Rig description; `None` uses the dataset's own.
    pub rig: Option<PathBuf>,
    pub output: PathBuf,
    pub mode: ScaleMode,
    pub sweep: SweepConfig,
    /// Full-resolution crop of the multi-scale mode; `None` scales the
    /// configured crop from 1024x544 to the actual image size.
    pub crop: Option<(usize, usize)>,
    pub filter: FilterConfig,
    pub masking: bool,
    pub mask: MaskConfig,
    pub tsdf: TsdfConfig,
    pub min_block_observations: u32,
    pub min_voxel_weight: u16,
    /// Rig cameras to use; `None` uses all of them.
    pub cameras: Option<Vec<usize>>,
    pub max_frames: Option<usize>,
    /// Worker threads; `None` lets the thread pool decide.
    pub threads: Option<usize>,
    pub pipelined: bool,
    pub write_depth: bool,
    pub ply_format: PlyFormat,
    /// Also write `map_<frame>.ply` after every n-th processed frame.
    pub ply_every: Option<usize>,
    pub evaluate: bool,
    pub tolerances: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::from("dataset"),
            rig: None,
            output: PathBuf::from("out"),
            mode: ScaleMode::Multiscale,
            sweep: SweepConfig::default(),
            crop: None,
            filter: FilterConfig::default(),
            masking: true,
            mask: MaskConfig::default(),
            tsdf: TsdfConfig::default(),
            min_block_observations: 3,
            min_voxel_weight: 0,
            cameras: None,
            max_frames: None,
            threads: None,
            pipelined: false,
            write_depth: false,
            ply_format: PlyFormat::BinaryLittleEndian,
            ply_every: None,
            evaluate: true,
            tolerances: DEFAULT_TOLERANCES.to_vec(),
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean `{value}` for `{key}`"))),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

fn parse_optional<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value == "none" || value == "auto" {
        Ok(None)
    } else {
        parse_value(key, value).map(Some)
    }
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn optional<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), T::to_string)
}

impl RunConfig {
    /// Sets one `key = value` option.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        let v = value.trim();
        match key {
            "dataset" => self.dataset = PathBuf::from(v),
            "rig" => self.rig = (v != "none").then(|| PathBuf::from(v)),
            "output" => self.output = PathBuf::from(v),
            "mode" => self.mode = v.parse()?,
            "n_fronto" => self.sweep.n_fronto = parse_value(key, v)?,
            "n_ground" => self.sweep.n_ground = parse_value(key, v)?,
            "z_min" => self.sweep.z_min = parse_value(key, v)?,
            "z_max" => self.sweep.z_max = parse_value(key, v)?,
            "window_full" => self.sweep.window_full = parse_value(key, v)?,
            "window_low" => self.sweep.window_low = parse_value(key, v)?,
            "ground_band" => self.sweep.ground_band_halfwidth = parse_value(key, v)?,
            "best_k" => self.sweep.best_k = parse_optional(key, v)?,
            "crop" if v == "none" => self.crop = None,
            "crop" => {
                self.crop = match parse_list::<usize>(key, v)?.as_slice() {
                    [] => None,
                    [w, h] => Some((*w, *h)),
                    _ => return Err(Error::Config("crop takes `width,height` or `none`".into())),
                }
            }
            "filter_cost" => self.filter.enable_cost = parse_bool(key, v)?,
            "filter_uniqueness" => self.filter.enable_uniqueness = parse_bool(key, v)?,
            "filter_consistency" => self.filter.enable_consistency = parse_bool(key, v)?,
            "alpha_upper" => self.filter.alpha_upper = parse_value(key, v)?,
            "alpha_lower" => self.filter.alpha_lower = parse_value(key, v)?,
            "horizon_row" => self.filter.horizon_row = parse_optional(key, v)?,
            "beta" => self.filter.beta = parse_value(key, v)?,
            "gamma" => self.filter.gamma = parse_value(key, v)?,
            "delta" => self.filter.delta = parse_value(key, v)?,
            "consistency_window" => self.filter.consistency_window = parse_value(key, v)?,
            "masking" => self.masking = parse_bool(key, v)?,
            "mask_dilation" => self.mask.dilation_px = parse_value(key, v)?,
            "mask_min_score" => self.mask.min_score = parse_value(key, v)?,
            "mask_classes" => self.mask.classes = parse_list(key, v)?,
            "voxel_size" => self.tsdf.voxel_size = parse_value(key, v)?,
            "mu" => self.tsdf.mu = parse_value(key, v)?,
            "w_max" => self.tsdf.w_max = parse_value(key, v)?,
            "local_size" => match parse_list::<f64>(key, v)?.as_slice() {
                [x, y, z] => self.tsdf.local_size = Vec3::new(*x, *y, *z),
                _ => return Err(Error::Config("local_size takes three numbers".into())),
            },
            "min_block_observations" => self.min_block_observations = parse_value(key, v)?,
            "min_voxel_weight" => self.min_voxel_weight = parse_value(key, v)?,
            "cameras" if v == "none" || v == "all" => self.cameras = None,
            "cameras" => {
                let list: Vec<usize> = parse_list(key, v)?;
                self.cameras = (!list.is_empty()).then_some(list);
            }
            "max_frames" => self.max_frames = parse_optional(key, v)?,
            "threads" => self.threads = parse_optional(key, v)?,
            "pipelined" => self.pipelined = parse_bool(key, v)?,
            "write_depth" => self.write_depth = parse_bool(key, v)?,
            "ply_format" => self.ply_format = v.parse()?,
            "ply_every" => self.ply_every = parse_optional(key, v)?,
            "evaluate" => self.evaluate = parse_bool(key, v)?,
            "tolerances" => self.tolerances = parse_list(key, v)?,
            other => return Err(Error::Config(format!("unknown option `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, lineno + 1, "expected `key = value`"))?;
            self.set(key, value)
                .map_err(|e| Error::parse(path, lineno + 1, e.to_string()))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, path)?;
        Ok(cfg)
    }

    /// The configuration as a commented config file that [`RunConfig::load`]
    /// reads back.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let mut line = |key: &str, value: String, note: &str| {
            if note.is_empty() {
                let _ = writeln!(s, "{key} = {value}");
            } else {
                let _ = writeln!(s, "{key} = {value}  # {note}");
            }
        };
        let (sw, fl, ts) = (&self.sweep, &self.filter, &self.tsdf);
        line("dataset", self.dataset.display().to_string(), "");
        line("rig", optional(&self.rig.as_ref().map(|p| p.display())), "none: the dataset's rig");
        line("output", self.output.display().to_string(), "");
        line("mode", self.mode.to_string(), "full, half or multiscale");
        line("n_fronto", sw.n_fronto.to_string(), "fronto-parallel plane count");
        line("n_ground", sw.n_ground.to_string(), "ground-parallel plane count");
        line("z_min", sw.z_min.to_string(), "meters, sweep near limit");
        line("z_max", sw.z_max.to_string(), "meters, sweep far limit");
        line("window_full", sw.window_full.to_string(), "full-resolution window");
        line("window_low", sw.window_low.to_string(), "half-resolution window");
        line("ground_band", sw.ground_band_halfwidth.to_string(), "meters around the ground plane");
        line("best_k", optional(&sw.best_k), "none: average every support view");
        let crop = self.crop.map(|(w, h)| format!("{w},{h}"));
        line("crop", optional(&crop), "none: default 572x332 crop scaled to the image");
        line("filter_cost", fl.enable_cost.to_string(), "");
        line("filter_uniqueness", fl.enable_uniqueness.to_string(), "");
        line("filter_consistency", fl.enable_consistency.to_string(), "");
        line("alpha_upper", fl.alpha_upper.to_string(), "cost threshold above the horizon");
        line("alpha_lower", fl.alpha_lower.to_string(), "cost threshold below the horizon");
        line("horizon_row", optional(&fl.horizon_row), "none: half the image height");
        line("beta", fl.beta.to_string(), "uniqueness ratio");
        line("gamma", fl.gamma.to_string(), "meters, continuity tolerance");
        line("delta", fl.delta.to_string(), "continuity fraction");
        line("consistency_window", fl.consistency_window.to_string(), "pixels");
        line("masking", self.masking.to_string(), "");
        line("mask_dilation", self.mask.dilation_px.to_string(), "pixels");
        line("mask_min_score", self.mask.min_score.to_string(), "");
        line("mask_classes", join(&self.mask.classes), "empty: every class");
        line("voxel_size", ts.voxel_size.to_string(), "meters, voxel size");
        line("mu", ts.mu.to_string(), "meters, truncation distance");
        line("w_max", ts.w_max.to_string(), "weight cap");
        let ls = ts.local_size;
        line("local_size", format!("{},{},{}", ls.x, ls.y, ls.z), "meters, local map extent");
        line("min_block_observations", self.min_block_observations.to_string(), "block observation gate");
        line("min_voxel_weight", self.min_voxel_weight.to_string(), "");
        line("cameras", self.cameras.as_deref().map(join).unwrap_or_default(), "empty: every camera");
        line("max_frames", optional(&self.max_frames), "");
        line("threads", optional(&self.threads), "none: one per core");
        line("pipelined", self.pipelined.to_string(), "");
        line("write_depth", self.write_depth.to_string(), "");
        let fmt = match self.ply_format {
            PlyFormat::Ascii => "ascii",
            PlyFormat::BinaryLittleEndian => "binary",
        };
        line("ply_format", fmt.to_string(), "ascii or binary");
        line("ply_every", optional(&self.ply_every), "");
        line("evaluate", self.evaluate.to_string(), "");
        line("tolerances", join(&self.tolerances), "meters");
        s
    }

    /// Sweep settings for `w x h` reference images, with the crop resolved.
    pub fn sweep_for(&self, w: usize, h: usize) -> SweepConfig {
        let (crop_w, crop_h) = self.crop.unwrap_or_else(|| scaled_crop(&self.sweep, w, h));
        SweepConfig {
            crop_w,
            crop_h,
            ..self.sweep.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sweep.validate()?;
        self.filter.validate()?;
        self.tsdf.validate()?;
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        if self.ply_every == Some(0) {
            return Err(Error::Config("ply_every must be positive".into()));
        }
        if self.tolerances.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if let Some((w, h)) = self.crop {
            if w == 0 || h == 0 {
                return Err(Error::Config("crop must be non-empty".into()));
            }
        }
        Ok(())
    }
}

/// A dataset directory: rig, trajectory, frame list, detections, and
/// `images/cam<c>/<frame>.pgm` plus `depth/cam<c>/<frame>.pfm`.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub rig: CameraRig,
    pub trajectory: Trajectory,
    /// `(frame_id, timestamp)` in processing order.
    pub frames: Vec<(u64, f64)>,
    pub detections: Detections,
}

pub fn image_path(root: &Path, cam: usize, frame_id: u64) -> PathBuf {
    root.join("images").join(format!("cam{cam}")).join(format!("{frame_id:06}.pgm"))
}

pub fn depth_path(root: &Path, cam: usize, frame_id: u64) -> PathBuf {
    root.join("depth").join(format!("cam{cam}")).join(format!("{frame_id:06}.pfm"))
}

pub fn parse_frames(text: &str, path: &Path) -> Result<Vec<(u64, f64)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = |m: &str| Error::parse(path, lineno + 1, m);
        if f.len() != 2 {
            return Err(bad("expected `frame_id timestamp`"));
        }
        let id = f[0].parse().map_err(|_| bad("bad frame id"))?;
        let t = f[1].parse().map_err(|_| bad("bad timestamp"))?;
        out.push((id, t));
    }
    Ok(out)
}

pub fn format_frames(frames: &[(u64, f64)]) -> String {
    frames.iter().map(|(id, t)| format!("{id} {t:.6}\n")).collect()
}

impl Dataset {
    /// Loads the dataset at `root`; `rig` overrides the dataset's rig file.
    pub fn open(root: &Path, rig: Option<&Path>) -> Result<Self> {
        let rig_path = rig.map_or_else(|| root.join(RIG_FILE), Path::to_path_buf);
        let rig = CameraRig::load(&rig_path)?;
        let trajectory = load_trajectory(&root.join(TRAJECTORY_FILE))?;
        let frames_path = root.join(FRAMES_FILE);
        let text = std::fs::read_to_string(&frames_path).map_err(|e| Error::io(&frames_path, e))?;
        let frames = parse_frames(&text, &frames_path)?;
        let det_path = root.join(DETECTIONS_FILE);
        let detections = if det_path.exists() {
            load_detections(&det_path)?
        } else {
            Detections::new()
        };
        Ok(Self {
            root: root.to_path_buf(),
            rig,
            trajectory,
            frames,
            detections,
        })
    }

    /// Body-to-world pose recorded at timestamp `t`.
    pub fn pose_at(&self, t: f64) -> Option<Pose> {
        self.trajectory
            .iter()
            .find(|(ts, _)| (ts - t).abs() <= POSE_TIME_TOLERANCE)
            .map(|(_, p)| *p)
    }

    pub fn load_images(&self, frame_id: u64, cameras: &[usize]) -> Result<Vec<Image>> {
        cameras
            .iter()
            .map(|&c| Image::read_pgm(&image_path(&self.root, c, frame_id)))
            .collect()
    }

    /// Ground-truth range map of camera `cam`, if the dataset has one.
    pub fn load_gt_depth(&self, frame_id: u64, cam: usize) -> Result<Option<DepthMap>> {
        let path = depth_path(&self.root, cam, frame_id);
        if path.exists() {
            DepthMap::read_pfm(&path).map(Some)
        } else {
            Ok(None)
        }
    }

    pub fn detections_for(&self, frame_id: u64) -> &[DetectionBox] {
        self.detections.get(&frame_id).map_or(&[], Vec::as_slice)
    }
}

/// What [`generate_dataset`] renders.
#[derive(Clone, Debug)]
pub struct GenerateConfig {
    pub scene: Scene,
    pub rig: CameraRig,
    /// Body path; the start is the absolute body position in the world.
    pub trajectory: TrajectorySpec,
    pub output: PathBuf,
    /// Ground-truth depth for every camera, not just the reference.
    pub depth_all_cameras: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct GenerateSummary {
    pub frames: usize,
    pub images: usize,
    pub depth_maps: usize,
    pub detections: usize,
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Renders a synthetic sequence to disk. Outputs depend only on the inputs.
pub fn generate_dataset(cfg: &GenerateConfig) -> Result<GenerateSummary> {
    let traj = script_trajectory_with(&cfg.trajectory)?;
    let root = &cfg.output;
    create_dir(root)?;
    for c in 0..cfg.rig.len() {
        create_dir(&image_path(root, c, 0).with_file_name(""))?;
        if cfg.depth_all_cameras || c == cfg.rig.reference_index() {
            create_dir(&depth_path(root, c, 0).with_file_name(""))?;
        }
    }
    cfg.rig.save(&root.join(RIG_FILE))?;
    cfg.scene.save(&root.join(SCENE_FILE))?;
    save_trajectory(&root.join(TRAJECTORY_FILE), &traj)?;

    let mut summary = GenerateSummary {
        frames: 0,
        images: 0,
        depth_maps: 0,
        detections: 0,
    };
    let mut frames = Vec::with_capacity(traj.len());
    let mut boxes = Vec::new();
    for (k, (t, pose)) in traj.iter().enumerate() {
        let frame_id = k as u64;
        let packet = render_frame(&cfg.scene, &cfg.rig, pose, *t, frame_id);
        for (c, img) in packet.images.iter().enumerate() {
            img.write_pgm(&image_path(root, c, frame_id))?;
            summary.images += 1;
        }
        if let Some(depths) = &packet.gt_depth {
            for (c, d) in depths.iter().enumerate() {
                if cfg.depth_all_cameras || c == cfg.rig.reference_index() {
                    d.write_pfm(&depth_path(root, c, frame_id))?;
                    summary.depth_maps += 1;
                }
            }
        }
        boxes.extend(packet.detections.unwrap_or_default());
        frames.push((frame_id, *t));
        summary.frames += 1;
    }
    summary.detections = boxes.len();
    write_file(&root.join(FRAMES_FILE), format_frames(&frames))?;
    write_file(&root.join(DETECTIONS_FILE), format_detections(&boxes))?;
    Ok(summary)
}

/// Wall-clock seconds per stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub load: f64,
    pub sweep: f64,
    pub filter: f64,
    pub mask: f64,
    pub allocate: f64,
    pub integrate: f64,
    pub prune: f64,
    pub ground_truth: f64,
    pub evaluate: f64,
}

impl StageTimings {
    fn add(&mut self, o: &StageTimings) {
        self.load += o.load;
        self.sweep += o.sweep;
        self.filter += o.filter;
        self.mask += o.mask;
        self.allocate += o.allocate;
        self.integrate += o.integrate;
        self.prune += o.prune;
        self.ground_truth += o.ground_truth;
        self.evaluate += o.evaluate;
    }

    fn scaled(&self, s: f64) -> StageTimings {
        StageTimings {
            load: self.load * s,
            sweep: self.sweep * s,
            filter: self.filter * s,
            mask: self.mask * s,
            allocate: self.allocate * s,
            integrate: self.integrate * s,
            prune: self.prune * s,
            ground_truth: self.ground_truth * s,
            evaluate: self.evaluate * s,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrameTiming {
    pub frame_id: u64,
    pub stages: StageTimings,
}

/// Timing report; kept apart from the metrics so those stay reproducible.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunTiming {
    pub threads: usize,
    pub pipelined: bool,
    pub wall_seconds: f64,
    pub total: StageTimings,
    pub mean: StageTimings,
    pub frames: Vec<FrameTiming>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrameReport {
    pub frame_id: u64,
    pub timestamp: f64,
    pub valid_raw: usize,
    pub valid_filtered: usize,
    pub valid_final: usize,
    pub blocks_allocated: usize,
    pub voxels_updated: usize,
    /// Errors against ground truth before filtering, after filtering, and of
    /// the map that is fused (filtered and masked).
    pub error_raw: Option<DepthErrorStats>,
    pub error_filtered: Option<DepthErrorStats>,
    pub error_final: Option<DepthErrorStats>,
}

/// Reproducible run results, written as `metrics.json`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub mode: String,
    pub cameras: Vec<usize>,
    pub frames_total: usize,
    pub frames_processed: usize,
    pub warnings: Vec<String>,
    pub frames: Vec<FrameReport>,
    pub active_blocks: usize,
    pub inactive_blocks: usize,
    pub map_points: usize,
    pub map_points_ungated: usize,
    pub gt_points: Option<usize>,
    /// Per tolerance, with the observation gate applied.
    pub quality: Vec<MapQuality>,
    /// Per tolerance, without the observation gate.
    pub quality_ungated: Vec<MapQuality>,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub timing: RunTiming,
    pub map: PointCloud,
    pub map_ungated: PointCloud,
    pub gt_map: Option<PointCloud>,
}

/// Output of the depth stage for one frame.
struct DepthFrame {
    frame_id: u64,
    timestamp: f64,
    pose: Pose,
    raw: DepthMap,
    filtered: DepthMap,
    fused: DepthMap,
    gt: Option<DepthMap>,
    timing: StageTimings,
}

enum StageItem {
    Frame(Box<DepthFrame>),
    Skipped(String),
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Everything the depth stage reads.
struct DepthStage<'a> {
    cfg: &'a RunConfig,
    data: &'a Dataset,
    cameras: &'a [usize],
    rig: &'a CameraRig,
    sweep: SweepConfig,
}

impl DepthStage<'_> {
    fn process(&self, frame_id: u64, timestamp: f64) -> Result<StageItem> {
        let Some(pose) = self.data.pose_at(timestamp) else {
            return Ok(StageItem::Skipped(format!(
                "frame {frame_id}: no pose at timestamp {timestamp:.6}, skipped"
            )));
        };
        let mut timing = StageTimings::default();
        let t0 = Instant::now();
        let images = self.data.load_images(frame_id, self.cameras)?;
        let ref_cam = self.cameras[self.rig.reference_index()];
        let gt = if self.cfg.evaluate {
            self.data.load_gt_depth(frame_id, ref_cam)?
        } else {
            None
        };
        timing.load = secs(t0.elapsed());

        let est = estimate_depth(&images, self.rig, &self.sweep, self.cfg.mode)?;
        timing.sweep = secs(est.sweep_time);

        let t0 = Instant::now();
        let filtered = apply_filters(&est.depth, &self.cfg.filter);
        timing.filter = secs(t0.elapsed());

        let t0 = Instant::now();
        let (fused, gt) = if self.cfg.masking {
            let boxes = self.data.detections_for(frame_id);
            let gt = gt.map(|g| apply_masks(&g, boxes, &self.cfg.mask));
            (apply_masks(&filtered, boxes, &self.cfg.mask), gt)
        } else {
            (filtered.clone(), gt)
        };
        timing.mask = secs(t0.elapsed());

        Ok(StageItem::Frame(Box::new(DepthFrame {
            frame_id,
            timestamp,
            pose,
            raw: est.depth,
            filtered,
            fused,
            gt,
            timing,
        })))
    }
}

/// Fusion state carried across frames.
struct FusionStage<'a> {
    cfg: &'a RunConfig,
    rig: &'a CameraRig,
    volume: Option<TsdfVolume>,
    gt_volume: Option<TsdfVolume>,
    reports: Vec<FrameReport>,
    timings: Vec<FrameTiming>,
    warnings: Vec<String>,
}

fn stats_against(est: &DepthMap, gt: Option<&DepthMap>, frame_id: u64) -> Result<Option<DepthErrorStats>> {
    gt.map(|g| {
        depth_error_stats(est, g).map(|mut s| {
            s.frame_id = frame_id;
            s
        })
    })
    .transpose()
}

impl FusionStage<'_> {
    fn volume<'v>(slot: &'v mut Option<TsdfVolume>, cfg: &TsdfConfig, center: Vec3) -> Result<&'v mut TsdfVolume> {
        if slot.is_none() {
            *slot = Some(TsdfVolume::new(cfg.clone(), center)?);
        }
        Ok(slot.as_mut().expect("volume was just created"))
    }

    fn consume(&mut self, f: DepthFrame) -> Result<()> {
        let mut timing = f.timing;
        let ref_idx = self.rig.reference_index();
        let cam = self.rig.reference();
        let w2c = self.rig.world_to_camera(ref_idx, &f.pose);
        let position = *f.pose.translation();

        let vol = Self::volume(&mut self.volume, &self.cfg.tsdf, position)?;
        let t0 = Instant::now();
        let created = vol.allocate(&f.fused, cam, &w2c);
        timing.allocate = secs(t0.elapsed());
        let t0 = Instant::now();
        let stats = vol.integrate(&f.fused, cam, &w2c);
        timing.integrate = secs(t0.elapsed());
        let t0 = Instant::now();
        vol.prune_and_swap(&position);
        timing.prune = secs(t0.elapsed());

        if let Some(gt) = &f.gt {
            let t0 = Instant::now();
            let gvol = Self::volume(&mut self.gt_volume, &self.cfg.tsdf, position)?;
            gvol.allocate(gt, cam, &w2c);
            gvol.integrate(gt, cam, &w2c);
            gvol.prune_and_swap(&position);
            timing.ground_truth = secs(t0.elapsed());
        } else if self.cfg.evaluate {
            self.warnings
                .push(format!("frame {}: no ground-truth depth, not evaluated", f.frame_id));
        }

        let t0 = Instant::now();
        let gt = f.gt.as_ref();
        let report = FrameReport {
            frame_id: f.frame_id,
            timestamp: f.timestamp,
            valid_raw: f.raw.valid_count(),
            valid_filtered: f.filtered.valid_count(),
            valid_final: f.fused.valid_count(),
            blocks_allocated: created.len(),
            voxels_updated: stats.voxels_updated,
            error_raw: stats_against(&f.raw, gt, f.frame_id)?,
            error_filtered: stats_against(&f.filtered, gt, f.frame_id)?,
            error_final: stats_against(&f.fused, gt, f.frame_id)?,
        };
        timing.evaluate = secs(t0.elapsed());

        if self.cfg.write_depth {
            let dir = self.cfg.output.join("depth");
            create_dir(&dir)?;
            f.fused.write_pfm(&dir.join(format!("{:06}.pfm", f.frame_id)))?;
        }
        self.reports.push(report);
        self.timings.push(FrameTiming {
            frame_id: f.frame_id,
            stages: timing,
        });
        if let (Some(every), Some(vol)) = (self.cfg.ply_every, &self.volume) {
            if self.reports.len().is_multiple_of(every) {
                let cloud = vol.extract_points(self.cfg.min_block_observations, self.cfg.min_voxel_weight);
                let path = self.cfg.output.join(format!("map_{:06}.ply", f.frame_id));
                cloud.write_ply(&path, self.cfg.ply_format)?;
            }
        }
        Ok(())
    }

    fn accept(&mut self, item: StageItem) -> Result<()> {
        match item {
            StageItem::Frame(f) => self.consume(*f),
            StageItem::Skipped(w) => {
                self.warnings.push(w);
                Ok(())
            }
        }
    }
}

/// Scales the 1024x544 crop to a `w x h` image.
fn scaled_crop(cfg: &SweepConfig, w: usize, h: usize) -> (usize, usize) {
    let (rw, rh) = CROP_REFERENCE_SIZE;
    (
        (cfg.crop_w * w + rw / 2) / rw,
        (cfg.crop_h * h + rh / 2) / rh,
    )
}

/// Runs the whole pipeline over the dataset and writes every output into
/// `cfg.output`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    let data = Dataset::open(&cfg.dataset, cfg.rig.as_deref())?;
    let cameras: Vec<usize> = match &cfg.cameras {
        Some(list) => list.clone(),
        None => (0..data.rig.len()).collect(),
    };
    let rig = data.rig.subset(&cameras)?;
    let sweep = cfg.sweep_for(rig.reference().width(), rig.reference().height());
    create_dir(&cfg.output)?;

    let frames: Vec<(u64, f64)> = data
        .frames
        .iter()
        .copied()
        .take(cfg.max_frames.unwrap_or(usize::MAX))
        .collect();
    let depth_stage = DepthStage {
        cfg,
        data: &data,
        cameras: &cameras,
        rig: &rig,
        sweep,
    };
    let mut fusion = FusionStage {
        cfg,
        rig: &rig,
        volume: None,
        gt_volume: None,
        reports: Vec::new(),
        timings: Vec::new(),
        warnings: Vec::new(),
    };

    let start = Instant::now();
    if cfg.pipelined {
        std::thread::scope(|scope| -> Result<()> {
            let (tx, rx) = mpsc::sync_channel::<Result<StageItem>>(PIPELINE_QUEUE);
            let producer = &depth_stage;
            let pool = &pool;
            let frames = &frames;
            scope.spawn(move || {
                pool.install(|| {
                    for &(id, t) in frames {
                        let item = producer.process(id, t);
                        let failed = item.is_err();
                        if tx.send(item).is_err() || failed {
                            break;
                        }
                    }
                })
            });
            pool.install(|| {
                for item in rx {
                    fusion.accept(item?)?;
                }
                Ok(())
            })
        })?;
    } else {
        pool.install(|| -> Result<()> {
            for &(id, t) in &frames {
                let item = depth_stage.process(id, t)?;
                fusion.accept(item)?;
            }
            Ok(())
        })?;
    }
    let wall_seconds = secs(start.elapsed());

    let output = pool.install(|| finish(cfg, &cameras, frames.len(), fusion, wall_seconds, pool.current_num_threads()))?;
    write_outputs(cfg, &output)?;
    Ok(output)
}

fn finish(
    cfg: &RunConfig,
    cameras: &[usize],
    frames_total: usize,
    fusion: FusionStage<'_>,
    wall_seconds: f64,
    threads: usize,
) -> Result<RunOutput> {
    let FusionStage {
        volume,
        gt_volume,
        reports,
        timings,
        mut warnings,
        ..
    } = fusion;
    let (map, map_ungated, active, inactive) = match &volume {
        Some(v) => (
            v.extract_points(cfg.min_block_observations, cfg.min_voxel_weight),
            v.extract_points(0, cfg.min_voxel_weight),
            v.active_count(),
            v.inactive_count(),
        ),
        None => (PointCloud::default(), PointCloud::default(), 0, 0),
    };
    let gt_map = gt_volume.map(|v| v.extract_points(cfg.min_block_observations, cfg.min_voxel_weight));
    let (quality, quality_ungated) = match &gt_map {
        Some(gt) if !gt.is_empty() => (
            tolerance_sweep(&map.points, &gt.points, &cfg.tolerances)?,
            tolerance_sweep(&map_ungated.points, &gt.points, &cfg.tolerances)?,
        ),
        Some(_) => {
            warnings.push("ground-truth map is empty; map quality not computed".into());
            (Vec::new(), Vec::new())
        }
        None => (Vec::new(), Vec::new()),
    };
    let mut total = StageTimings::default();
    for t in &timings {
        total.add(&t.stages);
    }
    let mean = total.scaled(1.0 / timings.len().max(1) as f64);
    Ok(RunOutput {
        summary: RunSummary {
            mode: cfg.mode.to_string(),
            cameras: cameras.to_vec(),
            frames_total,
            frames_processed: reports.len(),
            warnings,
            frames: reports,
            active_blocks: active,
            inactive_blocks: inactive,
            map_points: map.len(),
            map_points_ungated: map_ungated.len(),
            gt_points: gt_map.as_ref().map(PointCloud::len),
            quality,
            quality_ungated,
        },
        timing: RunTiming {
            threads,
            pipelined: cfg.pipelined,
            wall_seconds,
            total,
            mean,
            frames: timings,
        },
        map,
        map_ungated,
        gt_map,
    })
}

/// Per-frame `frame_id,median,mean,n` rows of the fused depth maps.
pub fn metrics_csv(summary: &RunSummary) -> String {
    let mut s = String::from("frame_id,median,mean,n\n");
    for f in &summary.frames {
        if let Some(e) = &f.error_final {
            let _ = writeln!(s, "{},{:.6},{:.6},{}", e.frame_id, e.median_abs_err, e.mean_abs_err, e.valid_evaluated);
        }
    }
    s
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Format {
        format: "json",
        message: e.to_string(),
    })
}

fn write_outputs(cfg: &RunConfig, out: &RunOutput) -> Result<()> {
    let dir = &cfg.output;
    out.map.write_ply(&dir.join(MAP_FILE), cfg.ply_format)?;
    out.map_ungated.write_ply(&dir.join(MAP_UNGATED_FILE), cfg.ply_format)?;
    if let Some(gt) = &out.gt_map {
        gt.write_ply(&dir.join(GT_MAP_FILE), cfg.ply_format)?;
    }
    write_file(&dir.join(METRICS_CSV_FILE), metrics_csv(&out.summary))?;
    write_file(&dir.join(METRICS_JSON_FILE), to_json(&out.summary)?)?;
    write_file(&dir.join(TIMING_FILE), to_json(&out.timing)?)?;
    Ok(())
}
