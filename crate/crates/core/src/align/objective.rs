use crate::camera::RayField;
use crate::geom::{Pose, Rotation, Vec3};
use crate::par;
use crate::pointmap::{ConfidenceMap, Pointmap, RadialMap};
use crate::scenegraph::{SceneGraph, ViewId};
use crate::{Error, Result};

use super::consensus::RadialInit;

/// One correspondence: pixel `pixel` of view `j`, whose position in view
/// `i`'s frame (at `i`'s consensus scale) the edge predicts as `target`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub pixel: usize,
    pub target: Vec3,
    pub weight: f64,
}

/// Correspondences contributed by one directed edge `j -> i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeTerms {
    pub i: usize,
    pub j: usize,
    pub terms: Vec<Term>,
}

/// Everything the objective needs that never changes during optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub views: Vec<ViewId>,
    pub rays: Vec<RayField>,
    pub conf: Vec<ConfidenceMap>,
    pub log_depth_init: Vec<Vec<f64>>,
    pub edges: Vec<EdgeTerms>,
    pub depth_prior: f64,
}

impl Problem {
    /// Builds correspondence terms from the match lists cached by pruning.
    /// `use_confidence = false` gives every term weight 1.
    pub fn new(
        graph: &SceneGraph,
        rays: Vec<RayField>,
        init: &RadialInit,
        depth_prior: f64,
        use_confidence: bool,
    ) -> Result<Self> {
        let views: Vec<ViewId> = graph.views().iter().map(|v| v.id).collect();
        let slot = |id: ViewId| views.iter().position(|&v| v == id).expect("validated edge");
        let log_depth_init = init
            .radial
            .iter()
            .zip(&rays)
            .map(|(r, d)| log_depths(r, d))
            .collect::<Vec<_>>();
        let mut edges = Vec::with_capacity(graph.edges().len());
        for (k, e) in graph.edges().iter().enumerate() {
            let matches = e.matches.as_ref().ok_or_else(|| {
                Error::InvalidGraph(format!(
                    "edge {}->{} has no cached matches; prune the graph first",
                    e.src, e.dst
                ))
            })?;
            let (i, j) = (slot(e.dst), slot(e.src));
            let k_i = init.factors[k].dst;
            let src_rays = graph.rays_src(e);
            let terms = matches
                .iter()
                .filter_map(|m| {
                    let (u, v) = (m.dst as usize, m.src as usize);
                    let r = e.radial_src.r()[v];
                    if !rays[j].valid()[v]
                        || init.radial[j].r()[v] <= 0.0
                        || r <= 0.0
                        || !src_rays.valid()[v]
                    {
                        return None;
                    }
                    let weight = if use_confidence {
                        (e.conf_dst.sigma()[u] * e.conf_src.sigma()[v]).sqrt()
                    } else {
                        1.0
                    };
                    let target = e.pose.apply(&(src_rays.dirs()[v] * r)) * k_i;
                    Some(Term {
                        pixel: v,
                        target,
                        weight,
                    })
                })
                .collect();
            edges.push(EdgeTerms { i, j, terms });
        }
        Ok(Problem {
            views,
            rays,
            conf: init.conf.clone(),
            log_depth_init,
            edges,
            depth_prior,
        })
    }

    pub fn num_terms(&self) -> usize {
        self.edges.iter().map(|e| e.terms.len()).sum()
    }
}

fn log_depths(r: &RadialMap, rays: &RayField) -> Vec<f64> {
    r.r()
        .iter()
        .zip(rays.valid())
        .map(|(&x, &ok)| if ok && x > 0.0 { x.ln() } else { 0.0 })
        .collect()
}

/// Optimization variables. Rays stay in [`Problem`] and are never touched.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentState {
    pub poses: Vec<Pose>,
    pub log_scales: Vec<f64>,
    pub log_depths: Vec<Vec<f64>>,
    pub anchor: usize,
}

/// Gradient with respect to each variable class. Rotation entries are in the
/// right tangent space: `R <- R Exp(w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub rotation: Vec<Vec3>,
    pub translation: Vec<Vec3>,
    pub log_scale: Vec<f64>,
    pub log_depth: Vec<Vec<f64>>,
}

impl Gradient {
    fn zeros(state: &AlignmentState) -> Self {
        let n = state.poses.len();
        Gradient {
            rotation: vec![Vec3::zeros(); n],
            translation: vec![Vec3::zeros(); n],
            log_scale: vec![0.0; n],
            log_depth: state
                .log_depths
                .iter()
                .map(|d| vec![0.0; d.len()])
                .collect(),
        }
    }
}

/// Per-pixel `exp(log d + log s) * D(u)` in the view's own frame.
pub fn effective_points(state: &AlignmentState, problem: &Problem, view: usize) -> Pointmap {
    let rays = &problem.rays[view];
    let s = state.log_scales[view];
    let xyz = rays
        .dirs()
        .iter()
        .zip(&state.log_depths[view])
        .zip(rays.valid())
        .map(|((d, ld), &ok)| {
            if ok {
                d * (ld + s).exp()
            } else {
                Vec3::zeros()
            }
        })
        .collect();
    Pointmap::new(rays.width(), rays.height(), xyz, rays.valid().to_vec())
        .expect("ray field dimensions")
}

struct EdgePartial {
    value: f64,
    gi: [f64; 7],
    gj: [f64; 7],
    depth: Vec<(usize, f64)>,
}

fn edge_partial(state: &AlignmentState, problem: &Problem, e: &EdgeTerms) -> EdgePartial {
    let (ti, tj) = (&state.poses[e.i], &state.poses[e.j]);
    let (ri, rj) = (ti.rotation.matrix(), tj.rotation.matrix());
    let si = state.log_scales[e.i].exp();
    let mut out = EdgePartial {
        value: 0.0,
        gi: [0.0; 7],
        gj: [0.0; 7],
        depth: Vec::with_capacity(e.terms.len()),
    };
    for t in &e.terms {
        let qi = t.target * si;
        let qj = problem.rays[e.j].dirs()[t.pixel]
            * (state.log_scales[e.j] + state.log_depths[e.j][t.pixel]).exp();
        let rqi = ri * qi;
        let rqj = rj * qj;
        let r = rqi + ti.translation - rqj - tj.translation;
        out.value += t.weight * r.norm_squared();
        let g = r * (2.0 * t.weight);
        let wi = qi.cross(&(ri.transpose() * g));
        let wj = -qj.cross(&(rj.transpose() * g));
        for a in 0..3 {
            out.gi[a] += wi[a];
            out.gi[3 + a] += g[a];
            out.gj[a] += wj[a];
            out.gj[3 + a] -= g[a];
        }
        out.gi[6] += g.dot(&rqi);
        let dj = -g.dot(&rqj);
        out.gj[6] += dj;
        out.depth.push((t.pixel, dj));
    }
    out
}

/// Weighted squared distance between matched effective points plus the
/// log-depth prior, with analytic gradients.
///
/// Edge contributions are evaluated in parallel and summed in edge order, so
/// the result does not depend on the thread count.
pub fn objective(state: &AlignmentState, problem: &Problem) -> (f64, Gradient) {
    let partials = par::map_slice(&problem.edges, |e| edge_partial(state, problem, e));
    let mut grad = Gradient::zeros(state);
    let mut value = 0.0;
    for (e, p) in problem.edges.iter().zip(partials) {
        value += p.value;
        for a in 0..3 {
            grad.rotation[e.i][a] += p.gi[a];
            grad.translation[e.i][a] += p.gi[3 + a];
            grad.rotation[e.j][a] += p.gj[a];
            grad.translation[e.j][a] += p.gj[3 + a];
        }
        grad.log_scale[e.i] += p.gi[6];
        grad.log_scale[e.j] += p.gj[6];
        for (pixel, g) in p.depth {
            grad.log_depth[e.j][pixel] += g;
        }
    }
    let rho = problem.depth_prior;
    if rho > 0.0 {
        for (k, (ld, ld0)) in state
            .log_depths
            .iter()
            .zip(&problem.log_depth_init)
            .enumerate()
        {
            for (u, (a, b)) in ld.iter().zip(ld0).enumerate() {
                if problem.rays[k].valid()[u] {
                    let d = a - b;
                    value += rho * d * d;
                    grad.log_depth[k][u] += 2.0 * rho * d;
                }
            }
        }
    }
    (value, grad)
}

/// Objective value alone.
pub fn objective_value(state: &AlignmentState, problem: &Problem) -> f64 {
    objective(state, problem).0
}

/// `R Exp(w)` applied in place.
pub(crate) fn retract(pose: &mut Pose, w: &Vec3, dt: &Vec3) {
    pose.rotation = pose.rotation.compose(&Rotation::exp(w));
    pose.translation += dt;
}
