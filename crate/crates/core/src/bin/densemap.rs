use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use densemap::eval::{depth_error_stats, tolerance_sweep, DEFAULT_TOLERANCES};
use densemap::filter::apply_filters;
use densemap::pipeline::{
    depth_path, generate_dataset, run_pipeline, Dataset, GenerateConfig, RunConfig,
};
use densemap::planesweep::{estimate_depth, ScaleMode};
use densemap::synth::{presets, Scene, TrajectorySpec};
use densemap::{CameraRig, DepthMap, Error, PointCloud, Result, Vec3};

#[derive(Parser)]
#[command(name = "densemap", version, about = "Dense mapping from a multi-fisheye camera rig")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset.
    Generate(GenerateArgs),
    /// Run the mapping pipeline over a dataset.
    Run(RunArgs),
    /// Evaluate existing outputs.
    Eval(EvalArgs),
    /// Estimate the depth map of a single frame.
    Depth(DepthArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Built-in scene name or path to a scene file.
    #[arg(long, default_value = "urban")]
    scene: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Rig file; defaults to the built-in five-camera rig.
    #[arg(long)]
    rig: Option<PathBuf>,
    #[arg(long, default_value_t = 512)]
    width: usize,
    #[arg(long, default_value_t = 272)]
    height: usize,
    #[arg(long, default_value_t = 100)]
    frames: usize,
    /// Meters per second.
    #[arg(long, default_value_t = 10.0)]
    speed: f64,
    /// Frames per second.
    #[arg(long, default_value_t = 25.0)]
    rate: f64,
    /// Start position along the street, meters.
    #[arg(long, default_value_t = 0.0)]
    start_x: f64,
    /// Heading change per meter, radians.
    #[arg(long, default_value_t = 0.0)]
    curvature: f64,
    /// Write ground-truth depth for every camera, not just the reference.
    #[arg(long)]
    depth_all: bool,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// `key = value` configuration file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    rig: Option<PathBuf>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// full, half or multiscale.
    #[arg(long)]
    mode: Option<ScaleMode>,
    /// Comma-separated camera indices; must include the reference camera.
    #[arg(long)]
    cameras: Option<String>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    max_frames: Option<usize>,
    /// Overlap depth estimation of the next frame with fusion.
    #[arg(long)]
    pipelined: bool,
    #[arg(long)]
    no_filters: bool,
    #[arg(long)]
    no_cost_filter: bool,
    #[arg(long)]
    no_uniqueness_filter: bool,
    #[arg(long)]
    no_consistency_filter: bool,
    #[arg(long)]
    no_masking: bool,
    #[arg(long)]
    min_block_observations: Option<u32>,
    /// Write every fused depth map as PFM.
    #[arg(long)]
    write_depth: bool,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Reconstructed point cloud.
    #[arg(long)]
    map: Option<PathBuf>,
    /// Ground-truth point cloud.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Comma-separated tolerances in meters.
    #[arg(long)]
    tolerances: Option<String>,
    /// Directory of `<frame>.pfm` depth maps to compare against the dataset.
    #[arg(long)]
    depth_dir: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Args)]
struct DepthArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    frame: u64,
    #[arg(long)]
    mode: Option<ScaleMode>,
    #[arg(long)]
    cameras: Option<String>,
    /// Apply the configured filters.
    #[arg(long)]
    filter: bool,
    /// Output PFM path.
    #[arg(long, short)]
    output: PathBuf,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
}

fn apply_run_args(cfg: &mut RunConfig, a: &RunArgs) -> Result<()> {
    if let Some(d) = &a.dataset {
        cfg.dataset = d.clone();
    }
    if let Some(r) = &a.rig {
        cfg.rig = Some(r.clone());
    }
    if let Some(o) = &a.output {
        cfg.output = o.clone();
    }
    if let Some(m) = a.mode {
        cfg.mode = m;
    }
    if let Some(c) = &a.cameras {
        cfg.set("cameras", c)?;
    }
    if let Some(t) = a.threads {
        cfg.threads = Some(t);
    }
    if let Some(n) = a.max_frames {
        cfg.max_frames = Some(n);
    }
    if let Some(n) = a.min_block_observations {
        cfg.min_block_observations = n;
    }
    cfg.pipelined |= a.pipelined;
    cfg.write_depth |= a.write_depth;
    if a.no_filters || a.no_cost_filter {
        cfg.filter.enable_cost = false;
    }
    if a.no_filters || a.no_uniqueness_filter {
        cfg.filter.enable_uniqueness = false;
    }
    if a.no_filters || a.no_consistency_filter {
        cfg.filter.enable_consistency = false;
    }
    if a.no_masking {
        cfg.masking = false;
    }
    for kv in &a.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{kv}` is not `key=value`")))?;
        cfg.set(k, v)?;
    }
    Ok(())
}

fn generate(a: &GenerateArgs) -> Result<()> {
    let scene = match presets::by_name(&a.scene, a.seed) {
        Some(s) => s,
        None => Scene::load(Path::new(&a.scene))?,
    };
    let rig = match &a.rig {
        Some(p) => CameraRig::load(p)?,
        None => CameraRig::synthetic(a.width, a.height),
    };
    let mut trajectory = TrajectorySpec::with_frames(a.frames, a.speed, a.rate);
    trajectory.start = Vec3::new(a.start_x, 0.0, rig.body_height());
    trajectory.curvature = a.curvature;
    let summary = generate_dataset(&GenerateConfig {
        scene,
        rig,
        trajectory,
        output: a.output.clone(),
        depth_all_cameras: a.depth_all,
    })?;
    println!(
        "wrote {} frames: {} images, {} depth maps, {} detections to {}",
        summary.frames,
        summary.images,
        summary.depth_maps,
        summary.detections,
        a.output.display()
    );
    Ok(())
}

fn run(a: &RunArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    apply_run_args(&mut cfg, a)?;
    if a.print_config {
        print!("{}", cfg.to_config_string());
        return Ok(());
    }
    let out = run_pipeline(&cfg)?;
    let s = &out.summary;
    for w in &s.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "processed {}/{} frames, {} map points, {:.1} s",
        s.frames_processed, s.frames_total, s.map_points, out.timing.wall_seconds
    );
    for q in &s.quality {
        println!(
            "t = {:.2} m: accuracy {:.4}, completeness {:.4}",
            q.t1, q.accuracy, q.completeness
        );
    }
    println!("outputs in {}", cfg.output.display());
    Ok(())
}

fn parse_tolerances(text: Option<&str>) -> Result<Vec<f64>> {
    match text {
        None => Ok(DEFAULT_TOLERANCES.to_vec()),
        Some(t) => t
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad tolerance `{s}`")))
            })
            .collect(),
    }
}

fn eval(a: &EvalArgs) -> Result<()> {
    let mut did_something = false;
    if let (Some(map), Some(gt)) = (&a.map, &a.gt) {
        let sc = PointCloud::read_ply(map)?;
        let sgt = PointCloud::read_ply(gt)?;
        let tolerances = parse_tolerances(a.tolerances.as_deref())?;
        println!("tolerance,accuracy,completeness");
        for q in tolerance_sweep(&sc.points, &sgt.points, &tolerances)? {
            println!("{},{:.6},{:.6}", q.t1, q.accuracy, q.completeness);
        }
        did_something = true;
    }
    if let (Some(dir), Some(root)) = (&a.depth_dir, &a.dataset) {
        let data = Dataset::open(root, None)?;
        let cam = data.rig.reference_index();
        println!("frame_id,median,mean,n");
        for &(id, _) in &data.frames {
            let est_path = dir.join(format!("{id:06}.pfm"));
            if !est_path.exists() {
                continue;
            }
            let est = DepthMap::read_pfm(&est_path)?;
            let gt = DepthMap::read_pfm(&depth_path(root, cam, id))?;
            let s = depth_error_stats(&est, &gt)?;
            println!("{id},{:.6},{:.6},{}", s.median_abs_err, s.mean_abs_err, s.valid_evaluated);
        }
        did_something = true;
    }
    if !did_something {
        return Err(Error::Config(
            "eval needs --map and --gt, or --depth-dir and --dataset".into(),
        ));
    }
    Ok(())
}

fn depth(a: &DepthArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(d) = &a.dataset {
        cfg.dataset = d.clone();
    }
    if let Some(m) = a.mode {
        cfg.mode = m;
    }
    if let Some(c) = &a.cameras {
        cfg.set("cameras", c)?;
    }
    let data = Dataset::open(&cfg.dataset, cfg.rig.as_deref())?;
    let cameras: Vec<usize> = cfg.cameras.clone().unwrap_or_else(|| (0..data.rig.len()).collect());
    let rig = data.rig.subset(&cameras)?;
    let images = data.load_images(a.frame, &cameras)?;
    let sweep = cfg.sweep_for(rig.reference().width(), rig.reference().height());
    let est = estimate_depth(&images, &rig, &sweep, cfg.mode)?;
    let depth = if a.filter {
        apply_filters(&est.depth, &cfg.filter)
    } else {
        est.depth
    };
    depth.write_pfm(&a.output)?;
    println!(
        "frame {}: {} valid pixels, sweep {:.3} s",
        a.frame,
        depth.valid_count(),
        est.sweep_time.as_secs_f64()
    );
    if let Some(gt) = data.load_gt_depth(a.frame, cameras[rig.reference_index()])? {
        let s = depth_error_stats(&depth, &gt)?;
        println!(
            "median abs error {:.4} m, mean {:.4} m over {} pixels",
            s.median_abs_err, s.mean_abs_err, s.valid_evaluated
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Run(a) => run(a),
        Command::Eval(a) => eval(a),
        Command::Depth(a) => depth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
