//! Synthetic scenes standing in for a learned two-view predictor: analytic
//! geometry, ground-truth trajectories, pair curation and noisy edges.

mod curate;
mod geometry;
mod synth;

use serde::{Deserialize, Serialize};

use crate::camera::CameraSpec;
use crate::geom::{Pose, Rotation, Vec3};
use crate::par;
use crate::scenegraph::{SceneGraph, View, ViewId};
use crate::{Error, Result};

pub use curate::{curate_pairs, optical_axis_angle, DatasetProfile};
pub use geometry::{render_pointmap, Primitive, SceneGeometry};
pub use synth::{synthesize_edges, NoiseModel, SimView, SynthesizedEdges, OUTLIER_MIN_ROT_DEG};

/// Cameras on a horizontal circle, facing roughly +z with an oscillating yaw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopTrajectory {
    pub center: [f64; 3],
    pub radius: f64,
    pub yaw_amplitude_deg: f64,
}

impl Default for LoopTrajectory {
    fn default() -> Self {
        Self {
            center: [0.0; 3],
            radius: 1.0,
            yaw_amplitude_deg: 25.0,
        }
    }
}

impl LoopTrajectory {
    pub fn poses(&self, n: usize) -> Vec<Pose> {
        (0..n)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                let c = Vec3::from(self.center)
                    + Vec3::new(self.radius * a.cos(), 0.0, self.radius * a.sin());
                let yaw = self.yaw_amplitude_deg.to_radians() * a.sin();
                Pose::new(
                    Rotation::from_axis_angle(&Vec3::y(), yaw).expect("unit axis"),
                    c,
                )
            })
            .collect()
    }
}

/// Equirect 64x32, pinhole 64x64 (90 degree field of view) and a 200 degree
/// equidistant fisheye 64x64.
pub fn default_cameras() -> Vec<CameraSpec> {
    vec![
        CameraSpec::equirect(64, 32).expect("valid camera"),
        CameraSpec::pinhole(64, 64, 32.0, 32.0, 32.0, 32.0).expect("valid camera"),
        CameraSpec::fisheye(
            64,
            64,
            32.0 / 100f64.to_radians(),
            32.0,
            32.0,
            100f64.to_radians(),
        )
        .expect("valid camera"),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub num_views: usize,
    pub geometry: SceneGeometry,
    /// Assigned to views cyclically.
    pub cameras: Vec<CameraSpec>,
    pub trajectory: LoopTrajectory,
    pub profile: DatasetProfile,
    pub top_k: usize,
    pub noise: NoiseModel,
    /// Views rendered against a small private sphere instead of the scene.
    pub disjoint_views: Vec<u32>,
    pub disjoint_radius: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_views: 8,
            geometry: SceneGeometry::default_room(),
            cameras: default_cameras(),
            trajectory: LoopTrajectory::default(),
            profile: DatasetProfile::default(),
            top_k: 5,
            noise: NoiseModel::default(),
            disjoint_views: Vec::new(),
            disjoint_radius: 0.5,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_views < 2 {
            return Err(Error::InvalidConfig("num_views must be at least 2".into()));
        }
        if self.cameras.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one camera is required".into(),
            ));
        }
        if self.top_k == 0 {
            return Err(Error::InvalidConfig("top_k must be at least 1".into()));
        }
        if !(self.disjoint_radius > 0.0) {
            return Err(Error::InvalidConfig(
                "disjoint_radius must be positive".into(),
            ));
        }
        if let Some(v) = self
            .disjoint_views
            .iter()
            .find(|&&v| v as usize >= self.num_views)
        {
            return Err(Error::InvalidConfig(format!(
                "disjoint view {v} out of range"
            )));
        }
        self.geometry.validate()?;
        self.noise.validate()
    }
}

/// Everything the pipeline must not see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub poses: Vec<(ViewId, [[f64; 4]; 4])>,
    /// `(src, dst, scale)` per directed edge.
    pub edge_scales: Vec<(ViewId, ViewId, f64)>,
    /// Undirected pairs with one corrupted direction.
    pub corrupted_pairs: Vec<(ViewId, ViewId)>,
    pub disjoint_views: Vec<ViewId>,
}

impl GroundTruth {
    pub fn pose(&self, id: ViewId) -> Option<Pose> {
        self.poses
            .iter()
            .find(|(v, _)| *v == id)
            .and_then(|(_, m)| Pose::from_rows(m, 1e-6).ok())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub graph: SceneGraph,
    pub truth: GroundTruth,
    pub pairs: Vec<(ViewId, ViewId)>,
}

/// Renders every view, curates pairs and synthesizes both edge directions.
pub fn simulate(cfg: &SimConfig) -> Result<Simulation> {
    cfg.validate()?;
    let poses = cfg.trajectory.poses(cfg.num_views);
    let specs: Vec<CameraSpec> = (0..cfg.num_views)
        .map(|k| cfg.cameras[k % cfg.cameras.len()].clone())
        .collect();
    let rendered = par::map_range(cfg.num_views, |k| {
        let disjoint = cfg.disjoint_views.contains(&(k as u32));
        let bubble;
        let geom = if disjoint {
            bubble = SceneGeometry::bubble(&poses[k].translation, cfg.disjoint_radius);
            &bubble
        } else {
            &cfg.geometry
        };
        render_pointmap(geom, &poses[k], &specs[k]).map_err(|e| match e {
            Error::RayEscapes { pixel, .. } => Error::RayEscapes {
                view: k as u32,
                pixel,
            },
            other => other,
        })
    });
    let mut sim_views = Vec::with_capacity(cfg.num_views);
    for (k, r) in rendered.into_iter().enumerate() {
        let (_, radial) = r?;
        sim_views.push(SimView {
            id: ViewId(k as u32),
            camera: specs[k].clone(),
            pose: poses[k],
            radial,
        });
    }
    let pairs = curate_pairs(&poses, cfg.profile, cfg.top_k);
    let synth = synthesize_edges(&sim_views, &pairs, &cfg.noise, cfg.seed)?;
    let truth = GroundTruth {
        poses: sim_views.iter().map(|v| (v.id, v.pose.to_rows())).collect(),
        edge_scales: synth
            .edges
            .iter()
            .map(|e| (e.src, e.dst, e.pair_scale.unwrap_or(1.0)))
            .collect(),
        corrupted_pairs: synth
            .corrupted
            .iter()
            .map(|&p| (ViewId(pairs[p].0 as u32), ViewId(pairs[p].1 as u32)))
            .collect(),
        disjoint_views: cfg.disjoint_views.iter().map(|&v| ViewId(v)).collect(),
    };
    let views = sim_views
        .into_iter()
        .map(|v| View::new(v.id, v.camera))
        .collect();
    Ok(Simulation {
        graph: SceneGraph::new(views, synth.edges)?,
        truth,
        pairs: pairs
            .iter()
            .map(|&(a, b)| (ViewId(a as u32), ViewId(b as u32)))
            .collect(),
    })
}
