//! Global alignment of pruned pairwise predictions: consensus fields,
//! anchor-based initialization and the alternating optimizer.

mod consensus;
mod init;
mod objective;

use serde::{Deserialize, Serialize};

use crate::geom::{Pose, Vec3};
use crate::par;
use crate::pointmap::ConfidenceMap;
use crate::scenegraph::{SceneGraph, ViewId};
use crate::{Error, Result};

pub use consensus::{consensus_rays, init_radial, EdgeFactors, RadialInit};
pub use init::{init_poses, select_anchor};
pub use objective::{
    effective_points, objective, objective_value, AlignmentState, EdgeTerms, Gradient, Problem,
    Term,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignConfig {
    pub lr_init: f64,
    pub iters_per_stage: usize,
    pub cycles: usize,
    pub joint_iters: usize,
    /// Final learning rate of each cosine schedule, relative to `lr_init`.
    pub lr_floor_ratio: f64,
    /// A stage stops once its best objective improved by less than this
    /// fraction over `patience` iterations. Zero runs every iteration.
    pub tol: f64,
    pub patience: usize,
    pub depth_prior: f64,
    pub optimize_depth: bool,
    /// When false every confidence is replaced by 1, both in the radial
    /// fusion and in the correspondence weights.
    pub use_confidence: bool,
    /// Recorded in outputs; the optimizer itself draws no random numbers.
    pub seed: u64,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            lr_init: 1e-2,
            iters_per_stage: 100,
            cycles: 3,
            joint_iters: 300,
            lr_floor_ratio: 1e-4,
            tol: 1e-8,
            patience: 10,
            depth_prior: 1e-3,
            optimize_depth: true,
            use_confidence: true,
            seed: 0,
        }
    }
}

impl AlignConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_init > 0.0 && self.lr_init.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lr_init {} must be positive",
                self.lr_init
            )));
        }
        if !(self.lr_floor_ratio > 0.0 && self.lr_floor_ratio < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "lr_floor_ratio {} outside (0, 1)",
                self.lr_floor_ratio
            )));
        }
        if self.iters_per_stage == 0 && self.joint_iters == 0 {
            return Err(Error::InvalidConfig("no iterations configured".into()));
        }
        if !(self.tol >= 0.0) || self.patience == 0 {
            return Err(Error::InvalidConfig(
                "tol must be >= 0 and patience >= 1".into(),
            ));
        }
        if !(self.depth_prior >= 0.0) {
            return Err(Error::InvalidConfig(
                "depth_prior must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Pose,
    Scale,
    Joint,
}

impl Stage {
    fn poses(self) -> bool {
        matches!(self, Stage::Pose | Stage::Joint)
    }

    fn scales(self) -> bool {
        matches!(self, Stage::Scale | Stage::Joint)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: Stage,
    pub iterations: usize,
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudPoint {
    pub xyz: Vec3,
    pub conf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    pub views: Vec<ViewId>,
    pub anchor: ViewId,
    pub poses: Vec<Pose>,
    pub scales: Vec<f64>,
    pub initial_poses: Vec<Pose>,
    pub initial_objective: f64,
    pub final_objective: f64,
    /// Objective at every evaluated iterate.
    pub trace: Vec<f64>,
    pub stages: Vec<StageSummary>,
    pub state: AlignmentState,
    pub cloud: Vec<CloudPoint>,
}

/// Consensus fields, anchor and initial state for a pruned graph.
pub fn initialize(graph: &SceneGraph, cfg: &AlignConfig) -> Result<(Problem, AlignmentState)> {
    if graph.views().is_empty() {
        return Err(Error::EmptyGraph);
    }
    let uniform;
    let graph = if cfg.use_confidence {
        graph
    } else {
        uniform = with_uniform_confidence(graph);
        &uniform
    };
    let anchor = select_anchor(graph)?;
    let poses = init_poses(graph, anchor)?;
    let rays = consensus_rays(graph)?;
    let radial = init_radial(graph, &rays)?;
    let problem = Problem::new(graph, rays, &radial, cfg.depth_prior, cfg.use_confidence)?;
    let state = AlignmentState {
        poses: problem.views.iter().map(|v| poses[v]).collect(),
        log_scales: vec![0.0; problem.views.len()],
        log_depths: problem.log_depth_init.clone(),
        anchor: problem
            .views
            .iter()
            .position(|&v| v == anchor)
            .expect("anchor is a view"),
    };
    Ok((problem, state))
}

fn with_uniform_confidence(graph: &SceneGraph) -> SceneGraph {
    let mut g = graph.clone();
    for e in g.edges_mut() {
        e.conf_dst = ConfidenceMap::uniform(e.conf_dst.width(), e.conf_dst.height(), 1.0);
        e.conf_src = ConfidenceMap::uniform(e.conf_src.width(), e.conf_src.height(), 1.0);
    }
    g
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-12;

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, g: &[f64], lr: f64) -> Vec<f64> {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        g.iter()
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
            .map(|(&g, (m, v))| {
                *m = BETA1 * *m + (1.0 - BETA1) * g;
                *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                lr * (*m / c1) / ((*v / c2).sqrt() + EPS)
            })
            .collect()
    }
}

/// Flattens the active part of a gradient: per view `[w, t, log s]`, then
/// every log-depth.
fn flatten(grad: &Gradient, state: &AlignmentState, stage: Stage, depth: bool) -> Vec<f64> {
    let mut out = Vec::new();
    for k in 0..state.poses.len() {
        let free = k != state.anchor;
        let p = free && stage.poses();
        for a in 0..3 {
            out.push(if p { grad.rotation[k][a] } else { 0.0 });
        }
        for a in 0..3 {
            out.push(if p { grad.translation[k][a] } else { 0.0 });
        }
        out.push(if free && stage.scales() {
            grad.log_scale[k]
        } else {
            0.0
        });
    }
    for d in &grad.log_depth {
        out.extend(
            d.iter()
                .map(|&g| if depth && stage.scales() { g } else { 0.0 }),
        );
    }
    out
}

fn apply_step(state: &mut AlignmentState, step: &[f64]) {
    let n = state.poses.len();
    for k in 0..n {
        let s = &step[7 * k..7 * k + 7];
        if s.iter().any(|&x| x != 0.0) {
            let w = -Vec3::new(s[0], s[1], s[2]);
            let dt = -Vec3::new(s[3], s[4], s[5]);
            objective::retract(&mut state.poses[k], &w, &dt);
            state.log_scales[k] -= s[6];
        }
    }
    let mut off = 7 * n;
    for d in &mut state.log_depths {
        for x in d.iter_mut() {
            *x -= step[off];
            off += 1;
        }
    }
}

fn run_stage(
    problem: &Problem,
    state: &mut AlignmentState,
    stage: Stage,
    iters: usize,
    cfg: &AlignConfig,
    trace: &mut Vec<f64>,
) -> Result<StageSummary> {
    let name = format!("{stage:?}").to_lowercase();
    let lr_min = cfg.lr_init * cfg.lr_floor_ratio;
    let mut adam: Option<Adam> = None;
    let mut best = state.clone();
    let mut best_f = f64::INFINITY;
    let mut best_hist = Vec::with_capacity(iters);
    let mut done = 0;
    for it in 0..iters {
        let (f, grad) = objective(state, problem);
        if !f.is_finite() {
            return Err(Error::NonFinite {
                stage: name,
                iteration: it,
            });
        }
        trace.push(f);
        done = it + 1;
        if f < best_f {
            best_f = f;
            best = state.clone();
        }
        best_hist.push(best_f);
        if best_f == 0.0 {
            break;
        }
        if cfg.tol > 0.0 && it >= cfg.patience {
            let past = best_hist[it - cfg.patience];
            if past - best_f <= cfg.tol * past {
                break;
            }
        }
        let g = flatten(&grad, state, stage, cfg.optimize_depth);
        let lr = lr_min
            + 0.5
                * (cfg.lr_init - lr_min)
                * (1.0 + (std::f64::consts::PI * it as f64 / iters as f64).cos());
        let step = adam.get_or_insert_with(|| Adam::new(g.len())).step(&g, lr);
        apply_step(state, &step);
    }
    if done > 0 {
        *state = best;
    }
    Ok(StageSummary {
        stage,
        iterations: done,
        objective: best_f,
    })
}

/// Alternates pose and scale stages `cycles` times, then optimizes jointly.
/// Each stage restarts the optimizer moments and the cosine schedule and
/// ends on its best iterate, so stage-end objectives never increase.
pub fn optimize_problem(
    problem: &Problem,
    mut state: AlignmentState,
    cfg: &AlignConfig,
) -> Result<(AlignmentState, Vec<f64>, Vec<StageSummary>)> {
    cfg.validate()?;
    let mut trace = Vec::new();
    let mut stages = Vec::new();
    let mut plan = Vec::new();
    for _ in 0..cfg.cycles {
        plan.push((Stage::Pose, cfg.iters_per_stage));
        plan.push((Stage::Scale, cfg.iters_per_stage));
    }
    plan.push((Stage::Joint, cfg.joint_iters));
    for (stage, iters) in plan {
        if iters > 0 {
            stages.push(run_stage(
                problem, &mut state, stage, iters, cfg, &mut trace,
            )?);
        }
    }
    Ok((state, trace, stages))
}

/// World-frame effective points of every view with their fused confidence.
pub fn fused_cloud(problem: &Problem, state: &AlignmentState) -> Vec<CloudPoint> {
    let mut out = Vec::new();
    for k in 0..problem.views.len() {
        let pm = effective_points(state, problem, k);
        for (u, p) in pm.valid_points() {
            let conf = problem.conf[k].sigma()[u];
            if conf > 0.0 {
                out.push(CloudPoint {
                    xyz: state.poses[k].apply(&p),
                    conf,
                });
            }
        }
    }
    out
}

/// Full alignment of a pruned graph.
pub fn optimize(graph: &SceneGraph, cfg: &AlignConfig) -> Result<AlignmentResult> {
    cfg.validate()?;
    let (problem, init) = initialize(graph, cfg)?;
    let initial_objective = objective_value(&init, &problem);
    let initial_poses = init.poses.clone();
    let (state, trace, stages) = optimize_problem(&problem, init, cfg)?;
    let final_objective = objective_value(&state, &problem);
    if !final_objective.is_finite() {
        return Err(Error::NonFinite {
            stage: "final".into(),
            iteration: trace.len(),
        });
    }
    Ok(AlignmentResult {
        views: problem.views.clone(),
        anchor: problem.views[state.anchor],
        poses: state.poses.clone(),
        scales: state.log_scales.iter().map(|s| s.exp()).collect(),
        initial_poses,
        initial_objective,
        final_objective,
        trace,
        stages,
        cloud: fused_cloud(&problem, &state),
        state,
    })
}

/// Largest relative disagreement between the analytic gradient and central
/// differences with step `h`, per variable class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradientCheck {
    pub rotation: f64,
    pub translation: f64,
    pub log_scale: f64,
    pub log_depth: f64,
}

impl GradientCheck {
    pub fn max(&self) -> f64 {
        self.rotation
            .max(self.translation)
            .max(self.log_scale)
            .max(self.log_depth)
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    if d == 0.0 {
        0.0
    } else {
        d / a.abs().max(b.abs())
    }
}

/// The part of the objective that depends on log-depth `u` of view `k`,
/// evaluated with that log-depth set to `ld`.
fn pixel_objective(state: &AlignmentState, problem: &Problem, k: usize, u: usize, ld: f64) -> f64 {
    let mut value = 0.0;
    for e in problem.edges.iter().filter(|e| e.j == k) {
        let (ti, tj) = (&state.poses[e.i], &state.poses[e.j]);
        let si = state.log_scales[e.i].exp();
        for t in e.terms.iter().filter(|t| t.pixel == u) {
            let qj = problem.rays[k].dirs()[u] * (state.log_scales[k] + ld).exp();
            value += t.weight * (ti.apply(&(t.target * si)) - tj.apply(&qj)).norm_squared();
        }
    }
    if problem.rays[k].valid()[u] {
        let d = ld - problem.log_depth_init[k][u];
        value += problem.depth_prior * d * d;
    }
    value
}

/// Pose and scale entries are differenced on the full objective; each
/// log-depth on the terms that involve it.
pub fn gradient_check(problem: &Problem, state: &AlignmentState, h: f64) -> GradientCheck {
    let (_, g) = objective(state, problem);
    let central = |f: &dyn Fn(&mut AlignmentState, f64)| {
        let mut p = state.clone();
        f(&mut p, h);
        let mut m = state.clone();
        f(&mut m, -h);
        (objective_value(&p, problem) - objective_value(&m, problem)) / (2.0 * h)
    };
    let mut out = GradientCheck {
        rotation: 0.0,
        translation: 0.0,
        log_scale: 0.0,
        log_depth: 0.0,
    };
    for k in 0..state.poses.len() {
        for a in 0..3 {
            let mut e = Vec3::zeros();
            e[a] = 1.0;
            let fd = central(&|s, d| objective::retract(&mut s.poses[k], &(e * d), &Vec3::zeros()));
            out.rotation = out.rotation.max(rel_err(g.rotation[k][a], fd));
            let fd = central(&|s, d| objective::retract(&mut s.poses[k], &Vec3::zeros(), &(e * d)));
            out.translation = out.translation.max(rel_err(g.translation[k][a], fd));
        }
        let fd = central(&|s, d| s.log_scales[k] += d);
        out.log_scale = out.log_scale.max(rel_err(g.log_scale[k], fd));
        let per_pixel = par::map_range(state.log_depths[k].len(), |u| {
            let local = |ld: f64| pixel_objective(state, problem, k, u, ld);
            let ld = state.log_depths[k][u];
            let fd = (local(ld + h) - local(ld - h)) / (2.0 * h);
            rel_err(g.log_depth[k][u], fd)
        });
        out.log_depth = per_pixel.into_iter().fold(out.log_depth, f64::max);
    }
    out
}
