//! The subcommands. Each reads its inputs, runs one pipeline stage and
//! writes deterministic outputs.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use rayalign_core::align::{optimize, AlignConfig, StageSummary};
use rayalign_core::camera::CameraSpec;
use rayalign_core::metrics::evaluate;
use rayalign_core::scenegraph::{prune, PruneConfig, ViewId};
use rayalign_core::simkit::{simulate, GroundTruth, SimConfig};
use rayalign_core::{Pose, Vec3};

use crate::camt::{Dtype, Tensor};
use crate::error::{CliError, CliResult};
use crate::json::{read_json, write_json};
use crate::ply::write_ply;
use crate::scene::{load_scene, parse_pose, save_scene, Meta};

pub const TRUTH_FILE: &str = "truth.json";
pub const REPORT_FILE: &str = "prune_report.json";
pub const ALIGNMENT_FILE: &str = "alignment.json";
pub const CLOUD_FILE: &str = "cloud.camt";

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Simulation config JSON; defaults apply to missing fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Writes `scene.json`, its tensors and the ground-truth sidecar `truth.json`.
pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let mut cfg: SimConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => SimConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let sim = simulate(&cfg)?;
    create_dir(&args.out)?;
    let meta = Meta {
        seed: Some(cfg.seed),
        profile: Some(cfg.profile),
        overlap_threshold: None,
    };
    save_scene(&sim.graph, &args.out, &meta, &[])?;
    write_json(&args.out.join(TRUTH_FILE), &sim.truth)?;
    eprintln!(
        "simulated {} views, {} pairs, {} directed edges",
        sim.graph.views().len(),
        sim.pairs.len(),
        sim.graph.edges().len()
    );
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct PruneArgs {
    /// Input scene file.
    #[arg(long)]
    pub scene: PathBuf,
    /// Pruning config JSON; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Rotation symmetry threshold in degrees.
    #[arg(long)]
    pub tau_rot: Option<f64>,
    /// Translation-direction symmetry threshold in degrees.
    #[arg(long)]
    pub tau_tra: Option<f64>,
    /// Overlap gate quantile in [0, 1].
    #[arg(long)]
    pub quantile: Option<f64>,
    /// Pixel stride for correspondence search.
    #[arg(long)]
    pub stride: Option<usize>,
}

/// Writes the pruned `scene.json` with cached matches and `prune_report.json`.
pub fn cmd_prune(args: &PruneArgs) -> CliResult<()> {
    let mut cfg: PruneConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => PruneConfig::default(),
    };
    cfg.tau_rot_deg = args.tau_rot.unwrap_or(cfg.tau_rot_deg);
    cfg.tau_tra_deg = args.tau_tra.unwrap_or(cfg.tau_tra_deg);
    cfg.quantile = args.quantile.unwrap_or(cfg.quantile);
    cfg.stride = args.stride.unwrap_or(cfg.stride);
    cfg.validate()?;
    let scene = load_scene(&args.scene)?;
    let (graph, report) = prune(&scene.graph, &cfg)?;
    create_dir(&args.out)?;
    save_scene(&graph, &args.out, &scene.meta, &scene.gt_poses)?;
    write_json(&args.out.join(REPORT_FILE), &report)?;
    eprintln!(
        "kept {} of {} edges and {} of {} views",
        graph.edges().len(),
        scene.graph.edges().len(),
        graph.views().len(),
        scene.graph.views().len()
    );
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct AlignArgs {
    /// Pruned scene file.
    #[arg(long)]
    pub scene: PathBuf,
    /// Alignment config JSON; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Alternating pose/scale cycles.
    #[arg(long)]
    pub cycles: Option<usize>,
    /// Iterations per alternating stage.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Iterations of the final joint stage.
    #[arg(long)]
    pub joint_iters: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Relative early-stopping tolerance; 0 runs every iteration.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedView {
    pub id: ViewId,
    pub pose: [[f64; 4]; 4],
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentFile {
    pub anchor: ViewId,
    pub views: Vec<AlignedView>,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub stages: Vec<StageSummary>,
    pub trace: Vec<f64>,
    pub config: AlignConfig,
    /// Fused cloud, relative to this file: float32 `[n, 4]` of x, y, z, confidence.
    pub cloud: String,
}

/// Writes `alignment.json` and the fused world-frame cloud `cloud.camt`.
pub fn cmd_align(args: &AlignArgs) -> CliResult<()> {
    let mut cfg: AlignConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => AlignConfig::default(),
    };
    cfg.cycles = args.cycles.unwrap_or(cfg.cycles);
    cfg.iters_per_stage = args.iters.unwrap_or(cfg.iters_per_stage);
    cfg.joint_iters = args.joint_iters.unwrap_or(cfg.joint_iters);
    cfg.lr_init = args.lr.unwrap_or(cfg.lr_init);
    cfg.tol = args.tol.unwrap_or(cfg.tol);
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    cfg.validate()?;
    let scene = load_scene(&args.scene)?;
    let res = optimize(&scene.graph, &cfg)?;
    create_dir(&args.out)?;
    let cloud: Vec<f64> = res
        .cloud
        .iter()
        .flat_map(|p| [p.xyz.x, p.xyz.y, p.xyz.z, p.conf])
        .collect();
    let cloud_path = args.out.join(CLOUD_FILE);
    Tensor::new(Dtype::F32, vec![res.cloud.len(), 4], cloud)
        .map_err(|e| CliError::write(&cloud_path, e))?
        .write(&cloud_path)?;
    let file = AlignmentFile {
        anchor: res.anchor,
        views: res
            .views
            .iter()
            .zip(&res.poses)
            .zip(&res.scales)
            .map(|((&id, p), &scale)| AlignedView {
                id,
                pose: p.to_rows(),
                scale,
            })
            .collect(),
        initial_objective: res.initial_objective,
        final_objective: res.final_objective,
        stages: res.stages,
        trace: res.trace,
        config: cfg,
        cloud: CLOUD_FILE.into(),
    };
    write_json(&args.out.join(ALIGNMENT_FILE), &file)?;
    eprintln!(
        "objective {:.6e} -> {:.6e} over {} iterations",
        file.initial_objective,
        file.final_objective,
        file.trace.len()
    );
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// `alignment.json` written by `align`.
    #[arg(long)]
    pub alignment: PathBuf,
    /// Ground-truth sidecar written by `simulate`.
    #[arg(long)]
    pub truth: PathBuf,
    /// Report path; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn aligned_poses(file: &AlignmentFile, path: &Path) -> CliResult<Vec<(ViewId, Pose)>> {
    file.views
        .iter()
        .map(|v| {
            let p = parse_pose(&v.pose).map_err(|e| {
                CliError::Input(format!("{}: pose of view {}: {e}", path.display(), v.id))
            })?;
            Ok((v.id, p))
        })
        .collect()
}

pub fn cmd_eval(args: &EvalArgs) -> CliResult<()> {
    let file: AlignmentFile = read_json(&args.alignment)?;
    let truth: GroundTruth = read_json(&args.truth)?;
    let est = aligned_poses(&file, &args.alignment)?;
    let gt = est
        .iter()
        .map(|(id, _)| {
            truth.pose(*id).ok_or_else(|| {
                CliError::Input(format!(
                    "{}: no valid pose for view {id}",
                    args.truth.display()
                ))
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let est: Vec<Pose> = est.into_iter().map(|(_, p)| p).collect();
    let report = evaluate(&est, &gt)?;
    match &args.out {
        Some(p) => write_json(p, &report),
        None => {
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("report serializes")
            );
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ExportPlyArgs {
    /// CAMT cloud `[n, 4]` (x, y, z, confidence) or `[n, 3]`.
    #[arg(long)]
    pub cloud: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_export_ply(args: &ExportPlyArgs) -> CliResult<()> {
    let t = Tensor::read(&args.cloud)?;
    let cols = match t.dims.as_slice() {
        [_, c @ (3 | 4)] => *c,
        d => {
            return Err(CliError::Input(format!(
                "{}: cloud needs dims [n, 3] or [n, 4], got {d:?}",
                args.cloud.display()
            )))
        }
    };
    let points: Vec<(Vec3, f64)> = t
        .data
        .chunks_exact(cols)
        .map(|c| {
            (
                Vec3::new(c[0], c[1], c[2]),
                if cols == 4 { c[3] } else { 1.0 },
            )
        })
        .collect();
    let mut buf = Vec::new();
    write_ply(&mut buf, &points).map_err(|e| CliError::write(&args.out, e))?;
    std::fs::write(&args.out, buf).map_err(|e| CliError::write(&args.out, e))?;
    eprintln!("wrote {} vertices", points.len());
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct RaysArgs {
    /// Camera spec JSON.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Dumps the camera's ray field as float32 `[height, width, 3]`; invalid
/// pixels are zero vectors.
pub fn cmd_rays(args: &RaysArgs) -> CliResult<()> {
    let spec: CameraSpec = read_json(&args.config)?;
    let rays = spec.rays();
    let data = rays
        .dirs()
        .iter()
        .zip(rays.valid())
        .flat_map(|(d, &ok)| if ok { [d.x, d.y, d.z] } else { [0.0; 3] })
        .collect();
    Tensor::new(Dtype::F32, vec![rays.height(), rays.width(), 3], data)
        .map_err(|e| CliError::write(&args.out, e))?
        .write(&args.out)
}
