//! Directed pairwise predictions and the pruning cascade.

mod kdtree;
mod prune;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::camera::{CameraSpec, RayField};
use crate::geom::Pose;
use crate::pointmap::{ConfidenceMap, Pointmap, RadialMap};
use crate::{Error, Result};

pub use kdtree::KdTree;
pub use prune::{
    largest_component, mnn_matches, mnn_matches_brute_force, overlap_gate, prune,
    symmetric_pose_check, EdgeVerdict, PruneConfig, PruneReport, SymmetryCheck,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ViewId(pub u32);

impl std::fmt::Display for ViewId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub id: ViewId,
    pub camera: CameraSpec,
    pub rays: RayField,
}

impl View {
    pub fn new(id: ViewId, camera: CameraSpec) -> Self {
        let rays = camera.rays();
        Self { id, camera, rays }
    }
}

/// A mutual nearest-neighbour pair: pixel `dst` of the destination view and
/// pixel `src` of the source view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MnnMatch {
    pub dst: u32,
    pub src: u32,
    pub dist: f64,
}

/// One directed two-view prediction. `pose` maps source-frame coordinates
/// into the destination frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeObservation {
    pub src: ViewId,
    pub dst: ViewId,
    pub pose: Pose,
    pub radial_dst: RadialMap,
    pub radial_src: RadialMap,
    pub conf_dst: ConfidenceMap,
    pub conf_src: ConfidenceMap,
    /// Simulator-only diagnostic; never read by the pipeline.
    pub pair_scale: Option<f64>,
    /// Per-edge ray predictions; the view's camera rays are used when absent.
    pub rays_dst: Option<RayField>,
    pub rays_src: Option<RayField>,
    /// Mutual nearest neighbours found while pruning.
    pub matches: Option<Vec<MnnMatch>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneGraph {
    views: Vec<View>,
    edges: Vec<EdgeObservation>,
    overlap_threshold: Option<usize>,
}

fn check_map(what: &str, w: usize, h: usize, view: &View) -> Result<()> {
    if w != view.camera.width() || h != view.camera.height() {
        return Err(Error::InvalidGraph(format!(
            "{what} is {w}x{h} but view {} is {}x{}",
            view.id,
            view.camera.width(),
            view.camera.height()
        )));
    }
    Ok(())
}

impl SceneGraph {
    pub fn new(views: Vec<View>, edges: Vec<EdgeObservation>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for v in &views {
            if !seen.insert(v.id) {
                return Err(Error::InvalidGraph(format!("duplicate view id {}", v.id)));
            }
        }
        let g = Self {
            views,
            edges,
            overlap_threshold: None,
        };
        for e in &g.edges {
            if e.src == e.dst {
                return Err(Error::InvalidGraph(format!("self edge on view {}", e.src)));
            }
            let src = g
                .view(e.src)
                .ok_or_else(|| Error::InvalidGraph(format!("unknown view {}", e.src)))?;
            let dst = g
                .view(e.dst)
                .ok_or_else(|| Error::InvalidGraph(format!("unknown view {}", e.dst)))?;
            check_map(
                "radial_src",
                e.radial_src.width(),
                e.radial_src.height(),
                src,
            )?;
            check_map("conf_src", e.conf_src.width(), e.conf_src.height(), src)?;
            check_map(
                "radial_dst",
                e.radial_dst.width(),
                e.radial_dst.height(),
                dst,
            )?;
            check_map("conf_dst", e.conf_dst.width(), e.conf_dst.height(), dst)?;
            if let Some(r) = &e.rays_src {
                check_map("rays_src", r.width(), r.height(), src)?;
            }
            if let Some(r) = &e.rays_dst {
                check_map("rays_dst", r.width(), r.height(), dst)?;
            }
            if let Some(ms) = &e.matches {
                if ms
                    .iter()
                    .any(|m| m.dst as usize >= dst.rays.len() || m.src as usize >= src.rays.len())
                {
                    return Err(Error::InvalidGraph(format!(
                        "match index out of range on edge {}->{}",
                        e.src, e.dst
                    )));
                }
            }
        }
        Ok(g)
    }

    pub fn with_overlap_threshold(mut self, t: Option<usize>) -> Self {
        self.overlap_threshold = t;
        self
    }

    pub fn overlap_threshold(&self) -> Option<usize> {
        self.overlap_threshold
    }

    pub fn views(&self) -> &[View] {
        &self.views
    }

    pub fn edges(&self) -> &[EdgeObservation] {
        &self.edges
    }

    pub fn view(&self, id: ViewId) -> Option<&View> {
        self.views.iter().find(|v| v.id == id)
    }

    pub fn view_ids(&self) -> Vec<ViewId> {
        let mut ids: Vec<_> = self.views.iter().map(|v| v.id).collect();
        ids.sort();
        ids
    }

    /// Index of the edge `src -> dst`, if present.
    pub fn find_edge(&self, src: ViewId, dst: ViewId) -> Option<usize> {
        self.edges.iter().position(|e| e.src == src && e.dst == dst)
    }

    /// Undirected neighbours per view, in ascending id order.
    pub fn adjacency(&self) -> BTreeMap<ViewId, BTreeSet<ViewId>> {
        let mut adj: BTreeMap<ViewId, BTreeSet<ViewId>> =
            self.views.iter().map(|v| (v.id, BTreeSet::new())).collect();
        for e in &self.edges {
            adj.entry(e.src).or_default().insert(e.dst);
            adj.entry(e.dst).or_default().insert(e.src);
        }
        adj
    }

    /// Number of distinct undirected neighbours.
    pub fn degree(&self, id: ViewId) -> usize {
        self.adjacency().get(&id).map_or(0, BTreeSet::len)
    }

    /// Edge indices touching `id`, in edge order.
    pub fn incident_edges(&self, id: ViewId) -> Vec<usize> {
        (0..self.edges.len())
            .filter(|&k| self.edges[k].src == id || self.edges[k].dst == id)
            .collect()
    }

    pub fn rays_dst<'a>(&'a self, e: &'a EdgeObservation) -> &'a RayField {
        e.rays_dst
            .as_ref()
            .unwrap_or_else(|| &self.view(e.dst).expect("validated edge").rays)
    }

    pub fn rays_src<'a>(&'a self, e: &'a EdgeObservation) -> &'a RayField {
        e.rays_src
            .as_ref()
            .unwrap_or_else(|| &self.view(e.src).expect("validated edge").rays)
    }

    /// The edge's two predictions expressed in the destination frame.
    pub fn edge_pointmaps(&self, e: &EdgeObservation) -> Result<(Pointmap, Pointmap)> {
        let dst = crate::pointmap::make_pointmap(self.rays_dst(e), &e.radial_dst)?;
        let src = crate::pointmap::make_pointmap(self.rays_src(e), &e.radial_src)?;
        Ok((dst, crate::pointmap::transform_pointmap(&src, &e.pose)))
    }

    /// Keeps the listed views and the edges between them.
    pub fn restrict(&self, keep: &BTreeSet<ViewId>, edge_keep: &[bool]) -> SceneGraph {
        SceneGraph {
            views: self
                .views
                .iter()
                .filter(|v| keep.contains(&v.id))
                .cloned()
                .collect(),
            edges: self
                .edges
                .iter()
                .zip(edge_keep)
                .filter(|(e, &k)| k && keep.contains(&e.src) && keep.contains(&e.dst))
                .map(|(e, _)| e.clone())
                .collect(),
            overlap_threshold: self.overlap_threshold,
        }
    }

    pub(crate) fn edges_mut(&mut self) -> &mut [EdgeObservation] {
        &mut self.edges
    }
}
