use crate::camera::RayField;
use crate::geom::Vec3;
use crate::par;
use crate::pointmap::{ConfidenceMap, RadialMap};
use crate::scenegraph::{EdgeObservation, SceneGraph, ViewId};
use crate::{Error, Result};

/// Weighted sums shorter than this make a consensus pixel invalid.
const MIN_RAY_SUM: f64 = 1e-9;

/// One view's slice of an edge: its rays, radials and confidences.
struct Side<'a> {
    rays: &'a RayField,
    radial: &'a RadialMap,
    conf: &'a ConfidenceMap,
}

fn side<'a>(graph: &'a SceneGraph, e: &'a EdgeObservation, view: ViewId) -> Side<'a> {
    if e.dst == view {
        Side {
            rays: graph.rays_dst(e),
            radial: &e.radial_dst,
            conf: &e.conf_dst,
        }
    } else {
        Side {
            rays: graph.rays_src(e),
            radial: &e.radial_src,
            conf: &e.conf_src,
        }
    }
}

fn incident(graph: &SceneGraph, view: ViewId) -> Result<Vec<usize>> {
    let edges = graph.incident_edges(view);
    if edges.is_empty() {
        return Err(Error::IsolatedView(view.0));
    }
    Ok(edges)
}

/// Confidence-weighted mean of every incident edge's ray prediction, per
/// view, in `graph.views()` order.
pub fn consensus_rays(graph: &SceneGraph) -> Result<Vec<RayField>> {
    let per_view = par::map_slice(graph.views(), |view| -> Result<RayField> {
        let edges = incident(graph, view.id)?;
        let n = view.rays.len();
        let mut sum = vec![Vec3::zeros(); n];
        let mut any = vec![false; n];
        for &k in &edges {
            let s = side(graph, &graph.edges()[k], view.id);
            for u in 0..n {
                if s.rays.valid()[u] {
                    sum[u] += s.rays.dirs()[u] * s.conf.sigma()[u];
                    any[u] = true;
                }
            }
        }
        let valid: Vec<bool> = sum
            .iter()
            .zip(&any)
            .map(|(v, &a)| a && v.norm() > MIN_RAY_SUM)
            .collect();
        RayField::from_directions(view.rays.width(), view.rays.height(), sum, valid)
    });
    per_view.into_iter().collect()
}

/// Per-edge median factors that bring an edge's radials into its view's
/// consensus scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeFactors {
    pub dst: f64,
    pub src: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialInit {
    pub radial: Vec<RadialMap>,
    pub conf: Vec<ConfidenceMap>,
    /// Indexed like `graph.edges()`.
    pub factors: Vec<EdgeFactors>,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Projects each edge's radials onto the consensus rays, rescales each edge
/// by the median ratio to the view's first incident edge, and fuses with
/// confidence weights.
pub fn init_radial(graph: &SceneGraph, rays: &[RayField]) -> Result<RadialInit> {
    if rays.len() != graph.views().len() {
        return Err(Error::LengthMismatch {
            left: rays.len(),
            right: graph.views().len(),
        });
    }
    struct ViewInit {
        radial: RadialMap,
        conf: ConfidenceMap,
        factors: Vec<(usize, f64)>,
    }
    let per_view = par::map_range(graph.views().len(), |vi| -> Result<ViewInit> {
        let view = &graph.views()[vi];
        let cons = &rays[vi];
        let edges = incident(graph, view.id)?;
        let n = cons.len();
        let projected: Vec<(Vec<f64>, &ConfidenceMap)> = edges
            .iter()
            .map(|&k| {
                let s = side(graph, &graph.edges()[k], view.id);
                let r = (0..n)
                    .map(|u| {
                        if !cons.valid()[u] || !s.rays.valid()[u] || s.radial.r()[u] <= 0.0 {
                            return 0.0;
                        }
                        let along = s.radial.r()[u] * s.rays.dirs()[u].dot(&cons.dirs()[u]);
                        along.max(0.0)
                    })
                    .collect();
                (r, s.conf)
            })
            .collect();
        let reference = &projected[0].0;
        let mut factors = Vec::with_capacity(edges.len());
        for (slot, (r, _)) in projected.iter().enumerate() {
            if slot == 0 {
                factors.push(1.0);
                continue;
            }
            let mut ratios: Vec<f64> = reference
                .iter()
                .zip(r)
                .filter(|(a, b)| **a > 0.0 && **b > 0.0)
                .map(|(a, b)| a / b)
                .collect();
            if ratios.is_empty() {
                return Err(Error::NoValidPixels(view.id.0));
            }
            factors.push(median(&mut ratios));
        }
        let mut fused = vec![0.0; n];
        let mut conf = vec![0.0; n];
        for u in 0..n {
            let (mut num, mut den, mut cnt) = (0.0, 0.0, 0usize);
            for ((r, c), k) in projected.iter().zip(&factors) {
                if r[u] > 0.0 {
                    let s = c.sigma()[u];
                    num += s * k * r[u];
                    den += s;
                    cnt += 1;
                }
            }
            if den > 0.0 {
                fused[u] = num / den;
                conf[u] = den / cnt as f64;
            }
        }
        if fused.iter().all(|&r| r == 0.0) {
            return Err(Error::NoValidPixels(view.id.0));
        }
        Ok(ViewInit {
            radial: RadialMap::new(cons.width(), cons.height(), fused)?,
            conf: ConfidenceMap::new(cons.width(), cons.height(), conf)?,
            factors: edges.into_iter().zip(factors).collect(),
        })
    });

    let mut out = RadialInit {
        radial: Vec::new(),
        conf: Vec::new(),
        factors: vec![
            EdgeFactors {
                dst: f64::NAN,
                src: f64::NAN
            };
            graph.edges().len()
        ],
    };
    for (vi, v) in per_view.into_iter().enumerate() {
        let v = v?;
        let id = graph.views()[vi].id;
        for (k, f) in v.factors {
            if graph.edges()[k].dst == id {
                out.factors[k].dst = f;
            } else {
                out.factors[k].src = f;
            }
        }
        out.radial.push(v.radial);
        out.conf.push(v.conf);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::CameraSpec;
    use crate::geom::Pose;
    use crate::scenegraph::View;

    fn edge(
        src: u32,
        dst: u32,
        r_dst: Vec<f64>,
        c_dst: Vec<f64>,
        rays_dst: Option<RayField>,
    ) -> EdgeObservation {
        let n = r_dst.len();
        EdgeObservation {
            src: ViewId(src),
            dst: ViewId(dst),
            pose: Pose::identity(),
            radial_dst: RadialMap::new(n, 1, r_dst).unwrap(),
            radial_src: RadialMap::new(n, 1, vec![1.0; n]).unwrap(),
            conf_dst: ConfidenceMap::new(n, 1, c_dst).unwrap(),
            conf_src: ConfidenceMap::uniform(n, 1, 1.0),
            pair_scale: None,
            rays_dst,
            rays_src: None,
            matches: None,
        }
    }

    fn graph(edges: Vec<EdgeObservation>, n: usize) -> SceneGraph {
        let cam = CameraSpec::pinhole(n, 1, 1.0, 1.0, 0.0, 0.0).unwrap();
        let views = (0..3).map(|k| View::new(ViewId(k), cam.clone())).collect();
        SceneGraph::new(views, edges).unwrap()
    }

    fn rays(dirs: &[Vec3]) -> RayField {
        RayField::from_directions(dirs.len(), 1, dirs.to_vec(), vec![true; dirs.len()]).unwrap()
    }

    #[test]
    fn ray_averaging_examples() {
        let z = rays(&[Vec3::z()]);
        let g = graph(
            vec![
                edge(1, 0, vec![1.0], vec![1.0], Some(z.clone())),
                edge(2, 0, vec![1.0], vec![1.0], Some(z)),
            ],
            1,
        );
        assert_eq!(consensus_rays(&g).unwrap()[0].dirs()[0], Vec3::z());

        let g = graph(
            vec![
                edge(1, 0, vec![1.0], vec![1.0], Some(rays(&[Vec3::x()]))),
                edge(2, 0, vec![1.0], vec![1.0], Some(rays(&[Vec3::y()]))),
            ],
            1,
        );
        let d = consensus_rays(&g).unwrap()[0].dirs()[0];
        assert!((d - Vec3::new(1.0, 1.0, 0.0).normalize()).norm() < 1e-15);

        let g = graph(
            vec![
                edge(1, 0, vec![1.0], vec![1.0], Some(rays(&[Vec3::x()]))),
                edge(2, 0, vec![1.0], vec![1.0], Some(rays(&[-Vec3::x()]))),
            ],
            1,
        );
        assert!(!consensus_rays(&g).unwrap()[0].valid()[0]);
    }

    #[test]
    fn isolated_view_is_an_error() {
        let g = graph(vec![edge(1, 0, vec![1.0], vec![1.0], None)], 1);
        assert_eq!(consensus_rays(&g), Err(Error::IsolatedView(2)));
    }

    #[test]
    fn radial_examples() {
        let base = vec![1.0, 2.0, 3.0, 4.0];
        let g = graph(
            vec![
                edge(1, 0, base.clone(), vec![1.0; 4], None),
                edge(2, 1, vec![1.0; 4], vec![1.0; 4], None),
            ],
            4,
        );
        let rays = consensus_rays(&g).unwrap();
        let init = init_radial(&g, &rays).unwrap();
        for (a, b) in init.radial[0].r().iter().zip(&base) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(init.factors[0].dst, 1.0);

        let doubled: Vec<f64> = base.iter().map(|r| 2.0 * r).collect();
        let g = graph(
            vec![
                edge(1, 0, base.clone(), vec![1.0, 0.5, 0.2, 3.0], None),
                edge(2, 0, doubled, vec![0.7, 0.1, 2.0, 1.0], None),
                edge(1, 2, vec![1.0; 4], vec![1.0; 4], None),
                edge(2, 1, vec![1.0; 4], vec![1.0; 4], None),
            ],
            4,
        );
        let rays = consensus_rays(&g).unwrap();
        let init = init_radial(&g, &rays).unwrap();
        assert_eq!(init.factors[1].dst, 0.5);
        for (a, b) in init.radial[0].r().iter().zip(&base) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
    }
}
