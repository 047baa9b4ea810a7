use serde::{Deserialize, Serialize};

use crate::camera::CameraSpec;
use crate::geom::{Pose, Vec3};
use crate::par;
use crate::pointmap::{Pointmap, RadialMap};
use crate::{Error, Result};

/// Intersections closer than this are ignored.
const T_MIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Primitive {
    AxisAlignedBox { min: [f64; 3], max: [f64; 3] },
    Sphere { center: [f64; 3], radius: f64 },
    Plane { point: [f64; 3], normal: [f64; 3] },
}

impl Primitive {
    /// Nearest intersection distance greater than zero along a unit ray.
    pub fn intersect(&self, o: &Vec3, d: &Vec3) -> Option<f64> {
        match self {
            Primitive::AxisAlignedBox { min, max } => {
                let mut t0 = f64::NEG_INFINITY;
                let mut t1 = f64::INFINITY;
                for a in 0..3 {
                    if d[a] == 0.0 {
                        if o[a] < min[a] || o[a] > max[a] {
                            return None;
                        }
                        continue;
                    }
                    let ta = (min[a] - o[a]) / d[a];
                    let tb = (max[a] - o[a]) / d[a];
                    t0 = t0.max(ta.min(tb));
                    t1 = t1.min(ta.max(tb));
                }
                if t1 < t0 {
                    None
                } else if t0 > T_MIN {
                    Some(t0)
                } else if t1 > T_MIN {
                    Some(t1)
                } else {
                    None
                }
            }
            Primitive::Sphere { center, radius } => {
                let oc = o - Vec3::from(*center);
                let b = oc.dot(d);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                [-b - s, -b + s].into_iter().find(|&t| t > T_MIN)
            }
            Primitive::Plane { point, normal } => {
                let n = Vec3::from(*normal);
                let denom = n.dot(d);
                if denom == 0.0 {
                    return None;
                }
                let t = n.dot(&(Vec3::from(*point) - o)) / denom;
                (t > T_MIN).then_some(t)
            }
        }
    }

    /// Signed distance-like residual of the implicit surface; zero on it.
    pub fn surface_residual(&self, p: &Vec3) -> f64 {
        match self {
            Primitive::AxisAlignedBox { min, max } => {
                // distance to the nearest face plane among faces the point lies within
                let mut best = f64::INFINITY;
                for a in 0..3 {
                    let inside_others = (0..3)
                        .filter(|&b| b != a)
                        .all(|b| p[b] >= min[b] - 1e-9 && p[b] <= max[b] + 1e-9);
                    if inside_others {
                        best = best.min((p[a] - min[a]).abs()).min((p[a] - max[a]).abs());
                    }
                }
                best
            }
            Primitive::Sphere { center, radius } => {
                ((p - Vec3::from(*center)).norm() - radius).abs()
            }
            Primitive::Plane { point, normal } => {
                let n = Vec3::from(*normal);
                ((p - Vec3::from(*point)).dot(&n) / n.norm()).abs()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneGeometry {
    pub primitives: Vec<Primitive>,
}

impl SceneGeometry {
    /// A 6 x 3 x 4 room (y down) with two boxes and a sphere inside.
    pub fn default_room() -> Self {
        SceneGeometry {
            primitives: vec![
                Primitive::AxisAlignedBox {
                    min: [-3.0, -1.5, -2.0],
                    max: [3.0, 1.5, 2.0],
                },
                Primitive::AxisAlignedBox {
                    min: [1.8, 0.5, 1.0],
                    max: [2.6, 1.5, 1.8],
                },
                Primitive::AxisAlignedBox {
                    min: [-2.6, 0.8, -1.6],
                    max: [-1.6, 1.5, -0.6],
                },
                Primitive::Sphere {
                    center: [-1.2, 0.2, 1.4],
                    radius: 0.4,
                },
            ],
        }
    }

    /// Sphere of radius `r` around `center`.
    pub fn bubble(center: &Vec3, r: f64) -> Self {
        SceneGeometry {
            primitives: vec![Primitive::Sphere {
                center: (*center).into(),
                radius: r,
            }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.primitives.is_empty() {
            return Err(Error::InvalidConfig(
                "scene geometry has no primitives".into(),
            ));
        }
        for p in &self.primitives {
            let ok = match p {
                Primitive::AxisAlignedBox { min, max } => (0..3).all(|a| min[a] < max[a]),
                Primitive::Sphere { radius, .. } => *radius > 0.0,
                Primitive::Plane { normal, .. } => Vec3::from(*normal).norm() > 0.0,
            };
            if !ok {
                return Err(Error::InvalidConfig(format!("degenerate primitive {p:?}")));
            }
        }
        Ok(())
    }

    /// Nearest hit over all primitives.
    pub fn cast(&self, o: &Vec3, d: &Vec3) -> Option<f64> {
        self.primitives
            .iter()
            .filter_map(|p| p.intersect(o, d))
            .min_by(f64::total_cmp)
    }

    /// Smallest surface residual over all primitives.
    pub fn surface_residual(&self, p: &Vec3) -> f64 {
        self.primitives
            .iter()
            .map(|s| s.surface_residual(p))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Ray-casts every valid pixel of `spec` from `pose` (camera to world).
/// Returns the camera-frame pointmap and its radials.
pub fn render_pointmap(
    geom: &SceneGeometry,
    pose: &Pose,
    spec: &CameraSpec,
) -> Result<(Pointmap, RadialMap)> {
    let rays = spec.rays();
    let hits = par::map_range(rays.len(), |k| {
        if !rays.valid()[k] {
            return Ok(0.0);
        }
        let d = pose.rotation.apply(&rays.dirs()[k]);
        geom.cast(&pose.translation, &d)
            .ok_or(Error::RayEscapes { view: 0, pixel: k })
    });
    let r = hits.into_iter().collect::<Result<Vec<f64>>>()?;
    let radial = RadialMap::new(rays.width(), rays.height(), r)?;
    let pm = crate::pointmap::make_pointmap(&rays, &radial)?;
    Ok((pm, radial))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rotation;
    use crate::pointmap::transform_pointmap;

    fn unit_box() -> SceneGeometry {
        SceneGeometry {
            primitives: vec![Primitive::AxisAlignedBox {
                min: [-1.0; 3],
                max: [1.0; 3],
            }],
        }
    }

    #[test]
    fn intersection_examples() {
        let g = unit_box();
        assert_eq!(g.cast(&Vec3::zeros(), &Vec3::z()), Some(1.0));
        let d = Vec3::new(1.0, 1.0, 1.0).normalize();
        assert!((g.cast(&Vec3::zeros(), &d).unwrap() - 3f64.sqrt()).abs() < 1e-12);
        let s = SceneGeometry::bubble(&Vec3::zeros(), 2.0);
        for d in [Vec3::x(), -Vec3::y(), Vec3::new(0.3, -0.2, 0.9).normalize()] {
            assert!((s.cast(&Vec3::zeros(), &d).unwrap() - 2.0).abs() < 1e-12);
        }
        let p = Primitive::Plane {
            point: [0.0, 0.0, 5.0],
            normal: [0.0, 0.0, 1.0],
        };
        assert_eq!(p.intersect(&Vec3::zeros(), &Vec3::z()), Some(5.0));
        assert_eq!(p.intersect(&Vec3::zeros(), &-Vec3::z()), None);
        let outside = Primitive::Sphere {
            center: [0.0, 0.0, 5.0],
            radius: 1.0,
        };
        assert_eq!(outside.intersect(&Vec3::zeros(), &Vec3::z()), Some(4.0));
        assert_eq!(outside.intersect(&Vec3::zeros(), &Vec3::x()), None);
    }

    #[test]
    fn render_hits_surfaces() {
        let geom = SceneGeometry::default_room();
        let pose = Pose::new(
            Rotation::from_axis_angle(&Vec3::y(), 0.4).unwrap(),
            Vec3::new(0.5, 0.1, -0.3),
        );
        for spec in [
            CameraSpec::equirect(32, 16).unwrap(),
            CameraSpec::pinhole(16, 16, 8.0, 8.0, 8.0, 8.0).unwrap(),
            CameraSpec::fisheye(16, 16, 4.6, 8.0, 8.0, 1.7).unwrap(),
        ] {
            let (pm, radial) = render_pointmap(&geom, &pose, &spec).unwrap();
            assert_eq!(pm.valid_count(), radial.valid_count());
            let world = transform_pointmap(&pm, &pose);
            for (_, p) in world.valid_points() {
                assert!(geom.surface_residual(&p) < 1e-9);
            }
        }
    }

    #[test]
    fn render_reports_escaping_rays() {
        let geom = SceneGeometry {
            primitives: vec![Primitive::Plane {
                point: [0.0, 0.0, 5.0],
                normal: [0.0, 0.0, 1.0],
            }],
        };
        let r = render_pointmap(
            &geom,
            &Pose::identity(),
            &CameraSpec::equirect(8, 4).unwrap(),
        );
        assert!(matches!(r, Err(Error::RayEscapes { .. })));
    }

    #[test]
    fn overlapping_views_agree() {
        let geom = SceneGeometry::default_room();
        let spec = CameraSpec::equirect(64, 32).unwrap();
        let a = Pose::identity();
        let b = Pose::new(
            Rotation::from_axis_angle(&Vec3::y(), 0.7).unwrap(),
            Vec3::new(0.6, -0.2, 0.4),
        );
        let (pb, _) = render_pointmap(&geom, &b, &spec).unwrap();
        let mut shared = 0;
        for (_, p) in transform_pointmap(&pb, &b).valid_points() {
            let to = p - a.translation;
            let d = to.normalize();
            let hit = geom.cast(&a.translation, &d).unwrap();
            if (hit - to.norm()).abs() < 1e-6 {
                shared += 1;
                assert!((a.translation + d * hit - p).norm() < 1e-9);
            }
        }
        assert!(shared > 1000);
    }
}
