use std::collections::{BTreeMap, VecDeque};

use crate::geom::Pose;
use crate::scenegraph::{SceneGraph, ViewId};
use crate::{Error, Result};

/// Highest-degree view; ties go to the smallest id.
pub fn select_anchor(graph: &SceneGraph) -> Result<ViewId> {
    let adj = graph.adjacency();
    adj.iter()
        .map(|(id, n)| (n.len(), std::cmp::Reverse(*id)))
        .max()
        .map(|(_, std::cmp::Reverse(id))| id)
        .ok_or(Error::EmptyGraph)
}

/// Chains edge poses outward from `anchor` in breadth-first order, visiting
/// neighbours by ascending id. A view's pose comes from the first tree edge
/// that reaches it; `src -> parent` is used directly, otherwise the inverse
/// of `parent -> src`.
pub fn init_poses(graph: &SceneGraph, anchor: ViewId) -> Result<BTreeMap<ViewId, Pose>> {
    if graph.view(anchor).is_none() {
        return Err(Error::InvalidGraph(format!(
            "anchor {anchor} is not a view"
        )));
    }
    let adj = graph.adjacency();
    let mut poses = BTreeMap::from([(anchor, Pose::identity())]);
    let mut queue = VecDeque::from([anchor]);
    while let Some(v) = queue.pop_front() {
        let tv = poses[&v];
        for &n in &adj[&v] {
            if poses.contains_key(&n) {
                continue;
            }
            let rel = match graph.find_edge(n, v) {
                Some(k) => graph.edges()[k].pose,
                None => graph.edges()[graph.find_edge(v, n).expect("adjacent views share an edge")]
                    .pose
                    .inverse(),
            };
            poses.insert(n, tv.compose(&rel));
            queue.push_back(n);
        }
    }
    if let Some(v) = graph
        .view_ids()
        .into_iter()
        .find(|v| !poses.contains_key(v))
    {
        return Err(Error::Disconnected(v.0));
    }
    Ok(poses)
}
