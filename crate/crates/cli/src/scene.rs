//! Scene files: a JSON graph description whose bulk per-pixel data lives in
//! CAMT tensors next to it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rayalign_core::camera::{CameraSpec, RayField};
use rayalign_core::pointmap::{ConfidenceMap, RadialMap};
use rayalign_core::scenegraph::{EdgeObservation, MnnMatch, SceneGraph, View, ViewId};
use rayalign_core::simkit::DatasetProfile;
use rayalign_core::{Pose, Vec3};

use crate::camt::{Dtype, Tensor};
use crate::error::{CliError, CliResult};
use crate::json::{read_json, write_json};

pub const SCENE_VERSION: u32 = 1;
pub const SCENE_FILE: &str = "scene.json";
pub const TENSOR_DIR: &str = "tensors";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub version: u32,
    pub views: Vec<ViewEntry>,
    pub edges: Vec<EdgeEntry>,
    pub meta: Meta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewEntry {
    pub id: ViewId,
    pub camera: CameraSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_pose: Option<[[f64; 4]; 4]>,
}

/// Tensor fields are paths relative to the scene file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeEntry {
    pub src: ViewId,
    pub dst: ViewId,
    pub pose: [[f64; 4]; 4],
    pub radial_src: String,
    pub radial_dst: String,
    pub conf_src: String,
    pub conf_dst: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rays_src: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rays_dst: Option<String>,
    /// Mutual nearest-neighbour pairs cached by pruning.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matches: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<DatasetProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlap_threshold: Option<usize>,
}

/// A graph as read from disk, with whatever else the file carried.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedScene {
    pub graph: SceneGraph,
    pub meta: Meta,
    pub gt_poses: Vec<(ViewId, Pose)>,
}

fn map_tensor(width: usize, height: usize, values: &[f64]) -> Tensor {
    Tensor::new(Dtype::F32, vec![height, width], values.to_vec()).expect("validated map")
}

fn ray_tensor(rays: &RayField) -> Tensor {
    let data = rays
        .dirs()
        .iter()
        .zip(rays.valid())
        .flat_map(|(d, &ok)| if ok { [d.x, d.y, d.z] } else { [0.0; 3] })
        .collect();
    Tensor::new(Dtype::F64, vec![rays.height(), rays.width(), 3], data).expect("finite rays")
}

fn match_tensor(m: &[MnnMatch]) -> Tensor {
    let data = m
        .iter()
        .flat_map(|m| [m.dst as f64, m.src as f64, m.dist])
        .collect();
    Tensor::new(Dtype::F64, vec![m.len(), 3], data).expect("finite matches")
}

/// Writes `dir/scene.json` and `dir/tensors/*.camt`. Output depends only on
/// the graph and `meta`.
pub fn save_scene(
    graph: &SceneGraph,
    dir: &Path,
    meta: &Meta,
    gt: &[(ViewId, Pose)],
) -> CliResult<PathBuf> {
    let tdir = dir.join(TENSOR_DIR);
    std::fs::create_dir_all(&tdir).map_err(|e| CliError::write(&tdir, e))?;
    let mut edges = Vec::with_capacity(graph.edges().len());
    for (k, e) in graph.edges().iter().enumerate() {
        let stem = format!("e{k:04}_{}_{}", e.src, e.dst);
        let put = |name: &str, t: Tensor| -> CliResult<String> {
            let rel = format!("{TENSOR_DIR}/{stem}_{name}.camt");
            t.write(&dir.join(&rel))?;
            Ok(rel)
        };
        edges.push(EdgeEntry {
            src: e.src,
            dst: e.dst,
            pose: e.pose.to_rows(),
            radial_src: put(
                "radial_src",
                map_tensor(
                    e.radial_src.width(),
                    e.radial_src.height(),
                    e.radial_src.r(),
                ),
            )?,
            radial_dst: put(
                "radial_dst",
                map_tensor(
                    e.radial_dst.width(),
                    e.radial_dst.height(),
                    e.radial_dst.r(),
                ),
            )?,
            conf_src: put(
                "conf_src",
                map_tensor(e.conf_src.width(), e.conf_src.height(), e.conf_src.sigma()),
            )?,
            conf_dst: put(
                "conf_dst",
                map_tensor(e.conf_dst.width(), e.conf_dst.height(), e.conf_dst.sigma()),
            )?,
            pair_scale: e.pair_scale,
            rays_src: e
                .rays_src
                .as_ref()
                .map(|r| put("rays_src", ray_tensor(r)))
                .transpose()?,
            rays_dst: e
                .rays_dst
                .as_ref()
                .map(|r| put("rays_dst", ray_tensor(r)))
                .transpose()?,
            matches: e
                .matches
                .as_ref()
                .map(|m| put("matches", match_tensor(m)))
                .transpose()?,
        });
    }
    let views = graph
        .views()
        .iter()
        .map(|v| ViewEntry {
            id: v.id,
            camera: v.camera.clone(),
            gt_pose: gt
                .iter()
                .find(|(id, _)| *id == v.id)
                .map(|(_, p)| p.to_rows()),
        })
        .collect();
    let meta = Meta {
        overlap_threshold: graph.overlap_threshold(),
        ..meta.clone()
    };
    let file = SceneFile {
        version: SCENE_VERSION,
        views,
        edges,
        meta,
    };
    let path = dir.join(SCENE_FILE);
    write_json(&path, &file)?;
    Ok(path)
}

/// Rotation blocks are kept verbatim when orthonormal to 1e-9 and projected
/// onto SO(3) when only within 1e-6.
pub fn parse_pose(m: &[[f64; 4]; 4]) -> rayalign_core::Result<Pose> {
    Pose::from_rows(m, 1e-9).or_else(|_| Pose::from_rows(m, 1e-6))
}

fn load_map(
    base: &Path,
    rel: &str,
    camera: &CameraSpec,
    what: &str,
) -> CliResult<(Vec<f64>, PathBuf)> {
    let path = base.join(rel);
    let t = Tensor::read(&path)?;
    let want = vec![camera.height(), camera.width()];
    if t.dims != want {
        return Err(CliError::Input(format!(
            "{}: {what} has dims {:?}, camera needs {:?}",
            path.display(),
            t.dims,
            want
        )));
    }
    Ok((t.data, path))
}

fn load_rays(base: &Path, rel: &str, camera: &CameraSpec) -> CliResult<RayField> {
    let path = base.join(rel);
    let t = Tensor::read(&path)?;
    let want = vec![camera.height(), camera.width(), 3];
    if t.dims != want {
        return Err(CliError::Input(format!(
            "{}: rays have dims {:?}, camera needs {:?}",
            path.display(),
            t.dims,
            want
        )));
    }
    let dirs: Vec<Vec3> = t
        .data
        .chunks_exact(3)
        .map(|c| Vec3::new(c[0], c[1], c[2]))
        .collect();
    let valid = dirs.iter().map(|d| d.norm() > 0.0).collect();
    RayField::from_directions(camera.width(), camera.height(), dirs, valid)
        .map_err(|e| CliError::read(&path, e))
}

fn load_matches(base: &Path, rel: &str) -> CliResult<Vec<MnnMatch>> {
    let path = base.join(rel);
    let t = Tensor::read(&path)?;
    if t.dims.len() != 2 || t.dims[1] != 3 {
        return Err(CliError::Input(format!(
            "{}: matches need dims [n, 3], got {:?}",
            path.display(),
            t.dims
        )));
    }
    t.data
        .chunks_exact(3)
        .map(|c| {
            let index =
                |x: f64| (x >= 0.0 && x.fract() == 0.0 && x <= u32::MAX as f64).then_some(x as u32);
            match (index(c[0]), index(c[1])) {
                (Some(dst), Some(src)) => Ok(MnnMatch {
                    dst,
                    src,
                    dist: c[2],
                }),
                _ => Err(CliError::Input(format!(
                    "{}: match indices must be non-negative integers",
                    path.display()
                ))),
            }
        })
        .collect()
}

/// Reads a scene file and every tensor it references.
pub fn load_scene(path: &Path) -> CliResult<LoadedScene> {
    let file: SceneFile = read_json(path)?;
    if file.version != SCENE_VERSION {
        return Err(CliError::Input(format!(
            "{}: unsupported scene version {}",
            path.display(),
            file.version
        )));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut gt_poses = Vec::new();
    let mut views = Vec::with_capacity(file.views.len());
    for v in &file.views {
        if let Some(m) = &v.gt_pose {
            let p = parse_pose(m).map_err(|e| {
                CliError::Input(format!("{}: gt_pose of view {}: {e}", path.display(), v.id))
            })?;
            gt_poses.push((v.id, p));
        }
        views.push(View::new(v.id, v.camera.clone()));
    }
    let camera = |id: ViewId| -> CliResult<&CameraSpec> {
        file.views
            .iter()
            .find(|v| v.id == id)
            .map(|v| &v.camera)
            .ok_or_else(|| {
                CliError::Input(format!(
                    "{}: edge references unknown view {id}",
                    path.display()
                ))
            })
    };
    let mut edges = Vec::with_capacity(file.edges.len());
    for e in &file.edges {
        let (cs, cd) = (camera(e.src)?, camera(e.dst)?);
        let pose = parse_pose(&e.pose).map_err(|err| {
            CliError::Input(format!(
                "{}: pose of edge {}->{}: {err}",
                path.display(),
                e.src,
                e.dst
            ))
        })?;
        let (rs, p) = load_map(base, &e.radial_src, cs, "radial_src")?;
        let radial_src =
            RadialMap::new(cs.width(), cs.height(), rs).map_err(|err| CliError::read(&p, err))?;
        let (rd, p) = load_map(base, &e.radial_dst, cd, "radial_dst")?;
        let radial_dst =
            RadialMap::new(cd.width(), cd.height(), rd).map_err(|err| CliError::read(&p, err))?;
        let (c, p) = load_map(base, &e.conf_src, cs, "conf_src")?;
        let conf_src = ConfidenceMap::new(cs.width(), cs.height(), c)
            .map_err(|err| CliError::read(&p, err))?;
        let (c, p) = load_map(base, &e.conf_dst, cd, "conf_dst")?;
        let conf_dst = ConfidenceMap::new(cd.width(), cd.height(), c)
            .map_err(|err| CliError::read(&p, err))?;
        edges.push(EdgeObservation {
            src: e.src,
            dst: e.dst,
            pose,
            radial_dst,
            radial_src,
            conf_dst,
            conf_src,
            pair_scale: e.pair_scale,
            rays_dst: e
                .rays_dst
                .as_deref()
                .map(|r| load_rays(base, r, cd))
                .transpose()?,
            rays_src: e
                .rays_src
                .as_deref()
                .map(|r| load_rays(base, r, cs))
                .transpose()?,
            matches: e
                .matches
                .as_deref()
                .map(|m| load_matches(base, m))
                .transpose()?,
        });
    }
    let graph = SceneGraph::new(views, edges)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        .with_overlap_threshold(file.meta.overlap_threshold);
    Ok(LoadedScene {
        graph,
        meta: file.meta,
        gt_poses,
    })
}
