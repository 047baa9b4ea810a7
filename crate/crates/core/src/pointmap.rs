//! Dense pointmaps: `X(u) = d(u) * r(u)`.
//!
//! Invalid pixels are encoded as `r = 0` plus a cleared mask bit; NaN is never
//! used as a sentinel.

use crate::camera::RayField;
use crate::geom::{Pose, Vec3};
use crate::par;
use crate::{Error, Result};

/// Per-pixel radial distance; `0` marks an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialMap {
    width: usize,
    height: usize,
    r: Vec<f64>,
}

impl RadialMap {
    pub fn new(width: usize, height: usize, r: Vec<f64>) -> Result<Self> {
        if r.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} radials for a {width}x{height} map",
                r.len()
            )));
        }
        if let Some(bad) = r.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::DimensionMismatch(format!(
                "radial {bad} is negative or non-finite"
            )));
        }
        Ok(Self { width, height, r })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn valid_count(&self) -> usize {
        self.r.iter().filter(|&&v| v > 0.0).count()
    }
}

/// Per-pixel confidence (higher is more reliable).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMap {
    width: usize,
    height: usize,
    sigma: Vec<f64>,
}

impl ConfidenceMap {
    pub fn new(width: usize, height: usize, sigma: Vec<f64>) -> Result<Self> {
        if sigma.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} confidences for a {width}x{height} map",
                sigma.len()
            )));
        }
        if let Some(bad) = sigma.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::DimensionMismatch(format!(
                "confidence {bad} is negative or non-finite"
            )));
        }
        Ok(Self {
            width,
            height,
            sigma,
        })
    }

    pub fn uniform(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            sigma: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }
}

/// Per-pixel 3D points with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Pointmap {
    width: usize,
    height: usize,
    xyz: Vec<Vec3>,
    valid: Vec<bool>,
}

impl Pointmap {
    /// Non-finite points are forced invalid.
    pub fn new(width: usize, height: usize, xyz: Vec<Vec3>, valid: Vec<bool>) -> Result<Self> {
        if xyz.len() != width * height || valid.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} pointmap with {} points and {} mask entries",
                width,
                height,
                xyz.len(),
                valid.len()
            )));
        }
        let (xyz, valid) = xyz
            .into_iter()
            .zip(valid)
            .map(|(p, ok)| {
                if ok && p.iter().all(|c| c.is_finite()) {
                    (p, true)
                } else {
                    (Vec3::zeros(), false)
                }
            })
            .unzip();
        Ok(Self {
            width,
            height,
            xyz,
            valid,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.xyz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xyz.is_empty()
    }

    pub fn xyz(&self) -> &[Vec3] {
        &self.xyz
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Indices and points of valid pixels.
    pub fn valid_points(&self) -> impl Iterator<Item = (usize, Vec3)> + '_ {
        self.xyz
            .iter()
            .enumerate()
            .filter(|(i, _)| self.valid[*i])
            .map(|(i, p)| (i, *p))
    }

    pub fn scaled(&self, k: f64) -> Pointmap {
        Pointmap {
            width: self.width,
            height: self.height,
            xyz: self
                .xyz
                .iter()
                .zip(&self.valid)
                .map(|(p, &ok)| if ok { p * k } else { *p })
                .collect(),
            valid: self.valid.clone(),
        }
    }

    /// Same points with the mask restricted to `keep`.
    pub fn masked(&self, keep: &[bool]) -> Pointmap {
        let valid: Vec<bool> = self.valid.iter().zip(keep).map(|(a, b)| *a && *b).collect();
        Pointmap {
            width: self.width,
            height: self.height,
            xyz: self
                .xyz
                .iter()
                .zip(&valid)
                .map(|(p, &ok)| if ok { *p } else { Vec3::zeros() })
                .collect(),
            valid,
        }
    }
}

/// `xyz(u) = d(u) * r(u)`; valid where the ray is valid and `r > 0`.
pub fn make_pointmap(rays: &RayField, radial: &RadialMap) -> Result<Pointmap> {
    if rays.width() != radial.width || rays.height() != radial.height {
        return Err(Error::DimensionMismatch(format!(
            "rays {}x{} vs radial {}x{}",
            rays.width(),
            rays.height(),
            radial.width,
            radial.height
        )));
    }
    let (xyz, valid) = rays
        .dirs()
        .iter()
        .zip(rays.valid())
        .zip(&radial.r)
        .map(|((d, &ok), &r)| {
            if ok && r > 0.0 {
                (d * r, true)
            } else {
                (Vec3::zeros(), false)
            }
        })
        .unzip();
    Ok(Pointmap {
        width: rays.width(),
        height: rays.height(),
        xyz,
        valid,
    })
}

/// Applies a rigid transform to every valid point; the mask is unchanged.
pub fn transform_pointmap(pm: &Pointmap, pose: &Pose) -> Pointmap {
    let xyz = par::map_range(pm.len(), |i| {
        if pm.valid[i] {
            pose.apply(&pm.xyz[i])
        } else {
            Vec3::zeros()
        }
    });
    Pointmap {
        width: pm.width,
        height: pm.height,
        xyz,
        valid: pm.valid.clone(),
    }
}

/// Mean distance to the origin over valid pixels.
pub fn norm_factor(pm: &Pointmap) -> Result<f64> {
    let (sum, n) = pm
        .valid_points()
        .fold((0.0, 0usize), |(s, n), (_, p)| (s + p.norm(), n + 1));
    if n == 0 {
        return Err(Error::EmptyPointmap);
    }
    Ok(sum / n as f64)
}

/// Splits a pointmap into unit rays and radial distances; zero points become
/// invalid.
pub fn decompose_pointmap(pm: &Pointmap) -> (RayField, RadialMap) {
    let mut dirs = Vec::with_capacity(pm.len());
    let mut valid = Vec::with_capacity(pm.len());
    let mut r = Vec::with_capacity(pm.len());
    for (p, &ok) in pm.xyz.iter().zip(&pm.valid) {
        let n = p.norm();
        if ok && n > 0.0 {
            dirs.push(p / n);
            valid.push(true);
            r.push(n);
        } else {
            dirs.push(Vec3::zeros());
            valid.push(false);
            r.push(0.0);
        }
    }
    (
        RayField::from_parts_unchecked(pm.width, pm.height, dirs, valid),
        RadialMap {
            width: pm.width,
            height: pm.height,
            r,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{equirect_rays, RayField};
    use crate::geom::Rotation;
    use proptest::prelude::*;

    fn single(d: Vec3, r: f64) -> (RayField, RadialMap) {
        (
            RayField::from_directions(1, 1, vec![d], vec![true]).unwrap(),
            RadialMap::new(1, 1, vec![r]).unwrap(),
        )
    }

    #[test]
    fn make_pointmap_examples() {
        let (rays, radial) = single(Vec3::z(), 2.5);
        let pm = make_pointmap(&rays, &radial).unwrap();
        assert_eq!(pm.xyz()[0], Vec3::new(0.0, 0.0, 2.5));
        let (rays, radial) = single(Vec3::z(), 0.0);
        assert!(!make_pointmap(&rays, &radial).unwrap().valid()[0]);
        let bad = RadialMap::new(2, 1, vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            make_pointmap(&rays, &bad),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn transform_examples() {
        let pm = Pointmap::new(1, 1, vec![Vec3::z()], vec![true]).unwrap();
        assert_eq!(transform_pointmap(&pm, &Pose::identity()), pm);
        let moved = transform_pointmap(&pm, &Pose::from_translation(Vec3::x()));
        assert_eq!(moved.xyz()[0], Vec3::new(1.0, 0.0, 1.0));
    }

    #[test]
    fn norm_factor_examples() {
        let pm = Pointmap::new(
            3,
            1,
            vec![Vec3::z(), Vec3::new(0.0, 0.0, 3.0), Vec3::x() * 100.0],
            vec![true, true, false],
        )
        .unwrap();
        assert_eq!(norm_factor(&pm).unwrap(), 2.0);
        let rays = equirect_rays(8, 4);
        let pm = make_pointmap(&rays, &RadialMap::new(8, 4, vec![5.0; 32]).unwrap()).unwrap();
        assert!((norm_factor(&pm).unwrap() - 5.0).abs() < 1e-12);
        let empty = Pointmap::new(1, 1, vec![Vec3::x()], vec![false]).unwrap();
        assert_eq!(norm_factor(&empty), Err(Error::EmptyPointmap));
    }

    #[test]
    fn decompose_examples() {
        let pm = Pointmap::new(
            2,
            1,
            vec![Vec3::new(0.0, 0.0, 2.5), Vec3::zeros()],
            vec![true, true],
        )
        .unwrap();
        let (rays, radial) = decompose_pointmap(&pm);
        assert_eq!(rays.dirs()[0], Vec3::z());
        assert_eq!(radial.r()[0], 2.5);
        assert!(!rays.valid()[1]);
        assert_eq!(radial.r()[1], 0.0);
    }

    fn arb_vec() -> impl Strategy<Value = Vec3> {
        (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    fn arb_pointmap() -> impl Strategy<Value = Pointmap> {
        prop::collection::vec((arb_vec(), any::<bool>()), 12).prop_map(|v| {
            let (xyz, valid) = v.into_iter().unzip();
            Pointmap::new(4, 3, xyz, valid).unwrap()
        })
    }

    proptest! {
        #[test]
        fn make_and_decompose_are_inverse(pm in arb_pointmap()) {
            let (rays, radial) = decompose_pointmap(&pm);
            let back = make_pointmap(&rays, &radial).unwrap();
            for (i, p) in pm.valid_points() {
                if p.norm() > 0.0 {
                    prop_assert!((back.xyz()[i] - p).norm() < 1e-9);
                    prop_assert!((back.xyz()[i].norm() - radial.r()[i]).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn transform_is_rigid(pm in arb_pointmap(), axis in arb_vec(), angle in -3.0..3.0f64, t in arb_vec()) {
            prop_assume!(axis.norm() > 1e-3);
            let pose = Pose::new(Rotation::from_axis_angle(&axis, angle).unwrap(), t);
            let moved = transform_pointmap(&pm, &pose);
            let pts: Vec<_> = pm.valid_points().collect();
            for (i, a) in &pts {
                for (j, b) in &pts {
                    let d0 = (a - b).norm();
                    let d1 = (moved.xyz()[*i] - moved.xyz()[*j]).norm();
                    prop_assert!((d0 - d1).abs() < 1e-9);
                }
            }
            let back = transform_pointmap(&moved, &pose.inverse());
            for (i, p) in pts {
                prop_assert!((back.xyz()[i] - p).norm() < 1e-9);
            }
        }

        #[test]
        fn norm_factor_is_homogeneous(pm in arb_pointmap(), k in 0.01..100.0f64) {
            prop_assume!(pm.valid_count() > 0);
            let a = norm_factor(&pm).unwrap();
            let b = norm_factor(&pm.scaled(k)).unwrap();
            prop_assert!((b - k * a).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }
}
