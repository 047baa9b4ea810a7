use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{EdgeObservation, KdTree, MnnMatch, SceneGraph, ViewId};
use crate::geom::{direction_angle, Vec3};
use crate::par;
use crate::pointmap::Pointmap;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PruneConfig {
    pub tau_rot_deg: f64,
    pub tau_tra_deg: f64,
    pub quantile: f64,
    /// Pixel stride for match subsampling (1 = every pixel).
    pub stride: usize,
    /// Per-edge floor as a fraction of the smaller view's sampled valid
    /// pixels; `None` disables it.
    pub absolute_floor: Option<f64>,
    /// Drop mutual pairs farther apart than this.
    pub match_radius: Option<f64>,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            tau_rot_deg: 5.0,
            tau_tra_deg: 10.0,
            quantile: 0.2,
            stride: 4,
            absolute_floor: None,
            match_radius: None,
        }
    }
}

impl PruneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_rot_deg >= 0.0 && self.tau_tra_deg >= 0.0) {
            return Err(Error::InvalidConfig(
                "thresholds must be non-negative".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.quantile) {
            return Err(Error::InvalidConfig(format!(
                "quantile {} outside [0, 1]",
                self.quantile
            )));
        }
        if self.stride == 0 {
            return Err(Error::InvalidConfig("stride must be at least 1".into()));
        }
        if let Some(f) = self.absolute_floor {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::InvalidConfig(format!(
                    "absolute_floor {f} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeVerdict {
    Kept,
    FailedSymmetryRot,
    FailedSymmetryTrans,
    FailedOverlap,
    DroppedBySymmetricPartner,
    OutsideLargestComponent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeReport {
    pub src: ViewId,
    pub dst: ViewId,
    pub verdict: EdgeVerdict,
    pub theta_rot_deg: f64,
    pub theta_tra_deg: Option<f64>,
    pub n_matches: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub config: PruneConfig,
    pub overlap_threshold: usize,
    pub edges: Vec<EdgeReport>,
    pub kept_views: Vec<ViewId>,
}

impl PruneReport {
    pub fn count(&self, v: EdgeVerdict) -> usize {
        self.edges.iter().filter(|e| e.verdict == v).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetryCheck {
    pub theta_rot_deg: f64,
    /// `None` when a translation is too short to define a direction.
    pub theta_tra_deg: Option<f64>,
    pub pass_rot: bool,
    pub pass_tra: bool,
}

impl SymmetryCheck {
    pub fn pass(&self) -> bool {
        self.pass_rot && self.pass_tra
    }
}

/// Checks that `e_ji` undoes `e_ij`: `R_ji R_ij ~ I` and `t_ji` points along
/// `-R_ij^T t_ij`.
pub fn symmetric_pose_check(
    e_ij: &EdgeObservation,
    e_ji: &EdgeObservation,
    tau_rot_deg: f64,
    tau_tra_deg: f64,
) -> Result<SymmetryCheck> {
    if e_ij.src != e_ji.dst || e_ij.dst != e_ji.src {
        return Err(Error::NotReciprocal(format!(
            "{}->{} and {}->{}",
            e_ij.src, e_ij.dst, e_ji.src, e_ji.dst
        )));
    }
    let (r_ij, t_ij) = (&e_ij.pose.rotation, &e_ij.pose.translation);
    let (r_ji, t_ji) = (&e_ji.pose.rotation, &e_ji.pose.translation);
    let theta_rot_deg = r_ji.compose(r_ij).angle().to_degrees();
    let theta_tra_deg = if t_ij.norm() < 1e-9 || t_ji.norm() < 1e-9 {
        None
    } else {
        let expected = -(r_ij.transpose().apply(t_ij));
        Some(direction_angle(t_ji, &expected)?.to_degrees())
    };
    Ok(SymmetryCheck {
        theta_rot_deg,
        theta_tra_deg,
        pass_rot: theta_rot_deg <= tau_rot_deg,
        pass_tra: theta_tra_deg.is_none_or(|t| t <= tau_tra_deg),
    })
}

fn valid_points(pm: &Pointmap) -> (Vec<Vec3>, Vec<usize>) {
    pm.valid_points().map(|(i, p)| (p, i)).unzip()
}

/// Mutual nearest neighbours between the valid points of `a` and `b`, as
/// `(index in a, index in b, distance)` sorted by the index in `a`.
pub fn mnn_matches(a: &Pointmap, b: &Pointmap) -> Result<Vec<(usize, usize, f64)>> {
    let (pa, ia) = valid_points(a);
    let (pb, ib) = valid_points(b);
    if pa.is_empty() || pb.is_empty() {
        return Err(Error::EmptyPointmap);
    }
    let ta = KdTree::new(&pa, &ia);
    let tb = KdTree::new(&pb, &ib);
    let a_to_b = par::map_slice(&pa, |p| tb.nearest(p).expect("non-empty tree"));
    let b_to_a: BTreeMap<usize, usize> = ib
        .iter()
        .zip(par::map_slice(&pb, |p| {
            ta.nearest(p).expect("non-empty tree").0
        }))
        .map(|(&j, i)| (j, i))
        .collect();
    Ok(ia
        .iter()
        .zip(a_to_b)
        .filter(|(i, (j, _))| b_to_a[j] == **i)
        .map(|(&i, (j, d2))| (i, j, d2.sqrt()))
        .collect())
}

/// Quadratic reference for [`mnn_matches`] with identical tie handling.
pub fn mnn_matches_brute_force(a: &Pointmap, b: &Pointmap) -> Result<Vec<(usize, usize, f64)>> {
    let (pa, ia) = valid_points(a);
    let (pb, ib) = valid_points(b);
    if pa.is_empty() || pb.is_empty() {
        return Err(Error::EmptyPointmap);
    }
    let nearest = |q: &Vec3, pts: &[Vec3], ids: &[usize]| {
        let mut best = (usize::MAX, f64::INFINITY);
        for (p, &id) in pts.iter().zip(ids) {
            let d = (p - q).norm_squared();
            if d < best.1 || (d == best.1 && id < best.0) {
                best = (id, d);
            }
        }
        best
    };
    let mut out = Vec::new();
    for (p, &i) in pa.iter().zip(&ia) {
        let (j, d2) = nearest(p, &pb, &ib);
        let q = &pb[ib.iter().position(|&x| x == j).expect("id present")];
        if nearest(q, &pa, &ia).0 == i {
            out.push((i, j, d2.sqrt()));
        }
    }
    Ok(out)
}

/// Outcome of the match-count gate.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapOutcome {
    pub threshold: usize,
    /// The edge's own count cleared its threshold.
    pub own_pass: Vec<bool>,
    /// Own pass and the reciprocal edge's own pass.
    pub pass: Vec<bool>,
}

/// Nearest-rank quantile of the counts (rank `ceil(q * n)`, at least 1).
pub fn nearest_rank(counts: &[usize], quantile: f64) -> usize {
    if counts.is_empty() {
        return 0;
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let rank = ((quantile * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Gates edges on their match counts. The threshold is the nearest-rank
/// quantile of `counts` unless `fixed` is given; with `floor_fraction`,
/// each edge must also reach that fraction of its `pixel_counts` entry.
/// An edge survives only if its reciprocal (`partner`) also clears.
pub fn overlap_gate(
    counts: &[usize],
    pixel_counts: &[usize],
    partner: &[Option<usize>],
    quantile: f64,
    floor_fraction: Option<f64>,
    fixed: Option<usize>,
) -> OverlapOutcome {
    let threshold = fixed.unwrap_or_else(|| nearest_rank(counts, quantile));
    let own_pass: Vec<bool> = counts
        .iter()
        .zip(pixel_counts)
        .map(|(&n, &px)| {
            let floor = floor_fraction.map_or(0, |f| (f * px as f64).ceil() as usize);
            n >= threshold.max(floor)
        })
        .collect();
    let pass = own_pass
        .iter()
        .zip(partner)
        .map(|(&own, p)| own && p.is_none_or(|k| own_pass[k]))
        .collect();
    OverlapOutcome {
        threshold,
        own_pass,
        pass,
    }
}

/// Views of the largest connected component of the undirected edge support.
/// Equal sizes resolve to the component holding the smallest id.
pub fn largest_component(views: &[ViewId], edges: &[(ViewId, ViewId)]) -> BTreeSet<ViewId> {
    let mut adj: BTreeMap<ViewId, BTreeSet<ViewId>> =
        views.iter().map(|&v| (v, BTreeSet::new())).collect();
    for &(a, b) in edges {
        adj.entry(a).or_default().insert(b);
        adj.entry(b).or_default().insert(a);
    }
    let mut seen = BTreeSet::new();
    let mut best: BTreeSet<ViewId> = BTreeSet::new();
    for &start in adj.keys() {
        if seen.contains(&start) {
            continue;
        }
        let mut comp = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &n in &adj[&v] {
                if comp.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        seen.extend(comp.iter().copied());
        // keys are visited in ascending order, so the first maximum has the smallest id
        if comp.len() > best.len() {
            best = comp;
        }
    }
    best
}

fn stride_mask(width: usize, height: usize, stride: usize) -> Vec<bool> {
    (0..width * height)
        .map(|k| (k % width).is_multiple_of(stride) && (k / width).is_multiple_of(stride))
        .collect()
}

fn edge_matches(
    graph: &SceneGraph,
    e: &EdgeObservation,
    cfg: &PruneConfig,
) -> Result<(Vec<MnnMatch>, usize)> {
    let (dst, src) = graph.edge_pointmaps(e)?;
    let dst = dst.masked(&stride_mask(dst.width(), dst.height(), cfg.stride));
    let src = src.masked(&stride_mask(src.width(), src.height(), cfg.stride));
    let pixels = dst.valid_count().min(src.valid_count());
    if pixels == 0 {
        return Ok((Vec::new(), 0));
    }
    let matches = mnn_matches(&dst, &src)?
        .into_iter()
        .filter(|m| cfg.match_radius.is_none_or(|r| m.2 <= r))
        .map(|(d, s, dist)| MnnMatch {
            dst: d as u32,
            src: s as u32,
            dist,
        })
        .collect();
    Ok((matches, pixels))
}

/// Symmetric pose check, match-count gate, then largest component.
///
/// A graph that already carries an overlap threshold (from an earlier prune)
/// reuses it, which makes pruning idempotent.
pub fn prune(graph: &SceneGraph, cfg: &PruneConfig) -> Result<(SceneGraph, PruneReport)> {
    cfg.validate()?;
    let edges = graph.edges();
    let index: BTreeMap<(ViewId, ViewId), usize> = edges
        .iter()
        .enumerate()
        .map(|(k, e)| ((e.src, e.dst), k))
        .collect();
    if index.len() != edges.len() {
        return Err(Error::InvalidGraph("duplicate directed edge".into()));
    }
    let partner: Vec<usize> = edges
        .iter()
        .map(|e| {
            index.get(&(e.dst, e.src)).copied().ok_or_else(|| {
                Error::NotReciprocal(format!("edge {}->{} has no reverse edge", e.src, e.dst))
            })
        })
        .collect::<Result<_>>()?;

    let mut verdict = vec![EdgeVerdict::Kept; edges.len()];
    let mut checks = Vec::with_capacity(edges.len());
    for (k, e) in edges.iter().enumerate() {
        let (a, b) = (k.min(partner[k]), k.max(partner[k]));
        let c = symmetric_pose_check(&edges[a], &edges[b], cfg.tau_rot_deg, cfg.tau_tra_deg)?;
        if !c.pass_rot {
            verdict[k] = EdgeVerdict::FailedSymmetryRot;
        } else if !c.pass_tra {
            verdict[k] = EdgeVerdict::FailedSymmetryTrans;
        }
        debug_assert!(e.src == edges[partner[k]].dst);
        checks.push(c);
    }

    let alive: Vec<usize> = (0..edges.len())
        .filter(|&k| verdict[k] == EdgeVerdict::Kept)
        .collect();
    let found = par::map_slice(&alive, |&k| edge_matches(graph, &edges[k], cfg));
    let mut matches: Vec<Option<Vec<MnnMatch>>> = vec![None; edges.len()];
    let mut counts = Vec::with_capacity(alive.len());
    let mut pixels = Vec::with_capacity(alive.len());
    for (&k, r) in alive.iter().zip(found) {
        let (m, px) = r?;
        counts.push(m.len());
        pixels.push(px);
        matches[k] = Some(m);
    }
    let slot: BTreeMap<usize, usize> = alive.iter().enumerate().map(|(s, &k)| (k, s)).collect();
    let alive_partner: Vec<Option<usize>> = alive
        .iter()
        .map(|k| slot.get(&partner[*k]).copied())
        .collect();
    let gate = overlap_gate(
        &counts,
        &pixels,
        &alive_partner,
        cfg.quantile,
        cfg.absolute_floor,
        graph.overlap_threshold(),
    );
    for (s, &k) in alive.iter().enumerate() {
        if !gate.own_pass[s] {
            verdict[k] = EdgeVerdict::FailedOverlap;
        } else if !gate.pass[s] {
            verdict[k] = EdgeVerdict::DroppedBySymmetricPartner;
        }
    }

    let survivors: Vec<(ViewId, ViewId)> = (0..edges.len())
        .filter(|&k| verdict[k] == EdgeVerdict::Kept)
        .map(|k| (edges[k].src, edges[k].dst))
        .collect();
    let keep_views = largest_component(&graph.view_ids(), &survivors);
    for (k, e) in edges.iter().enumerate() {
        if verdict[k] == EdgeVerdict::Kept
            && !(keep_views.contains(&e.src) && keep_views.contains(&e.dst))
        {
            verdict[k] = EdgeVerdict::OutsideLargestComponent;
        }
    }

    let keep: Vec<bool> = verdict.iter().map(|v| *v == EdgeVerdict::Kept).collect();
    let mut full = graph.clone();
    for (e, m) in full.edges_mut().iter_mut().zip(&matches) {
        e.matches = m.clone();
    }
    let pruned = full
        .with_overlap_threshold(Some(gate.threshold))
        .restrict(&keep_views, &keep);
    let report = PruneReport {
        config: *cfg,
        overlap_threshold: gate.threshold,
        edges: edges
            .iter()
            .enumerate()
            .map(|(k, e)| EdgeReport {
                src: e.src,
                dst: e.dst,
                verdict: verdict[k],
                theta_rot_deg: checks[k].theta_rot_deg,
                theta_tra_deg: checks[k].theta_tra_deg,
                n_matches: matches[k].as_ref().map(Vec::len),
            })
            .collect(),
        kept_views: keep_views.into_iter().collect(),
    };
    Ok((pruned, report))
}
