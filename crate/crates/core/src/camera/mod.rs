//! Per-pixel ray fields for the supported camera descriptions.
//!
//! Axis convention for every model: x right, y down, z forward. Equirect "up"
//! is therefore `-y`. Fields are stored row-major with index `v * width + u`.

mod sh;

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::geom::Vec3;
use crate::par;
use crate::pointmap::RadialMap;
use crate::{Error, Result};

pub use sh::{fit_sh_coeffs, sh_basis, sh_basis_len, sh_ray_field, ShCoefficients, ShFit};

/// SH degree used when none is given.
pub const DEFAULT_SH_DEGREE: usize = 3;

/// How normalized pixel coordinates are placed on the sphere before the SH
/// basis is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SphereMap {
    /// Image center at the pole; polar angle grows linearly with the
    /// normalized radius so that the image corners land on the equator.
    #[default]
    OpticalAxis,
    /// The equirectangular map of [`pixel_to_sphere`].
    Equirect,
}

/// Serialized form of a camera; validated into [`CameraSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum CameraModel {
    Equirect {
        width: usize,
        height: usize,
    },
    Pinhole {
        width: usize,
        height: usize,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
    },
    FisheyeEquidistant {
        width: usize,
        height: usize,
        /// Pixels per radian.
        f: f64,
        cx: f64,
        cy: f64,
        theta_max: f64,
    },
    SphericalHarmonic {
        width: usize,
        height: usize,
        max_degree: usize,
        /// `c_{l,m}` for `l = 1..=L`, `m = -l..=l`, in that order.
        coefficients: Vec<[f64; 3]>,
        #[serde(default)]
        sphere_map: SphereMap,
    },
}

/// A validated camera description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraModel", into = "CameraModel")]
pub struct CameraSpec(CameraModel);

impl TryFrom<CameraModel> for CameraSpec {
    type Error = Error;

    fn try_from(model: CameraModel) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidCamera(msg));
        let (w, h) = model.dims();
        if w == 0 || h == 0 {
            return bad(format!("image size {w}x{h} must be at least 1x1"));
        }
        let finite = |vals: &[f64]| vals.iter().all(|v| v.is_finite());
        match &model {
            CameraModel::Equirect { .. } => {}
            CameraModel::Pinhole { fx, fy, cx, cy, .. } => {
                if !finite(&[*fx, *fy, *cx, *cy]) || *fx <= 0.0 || *fy <= 0.0 {
                    return bad(format!(
                        "pinhole focal lengths must be positive (fx={fx}, fy={fy})"
                    ));
                }
            }
            CameraModel::FisheyeEquidistant {
                f,
                cx,
                cy,
                theta_max,
                ..
            } => {
                if !finite(&[*f, *cx, *cy, *theta_max]) || *f <= 0.0 {
                    return bad(format!("fisheye focal length must be positive (f={f})"));
                }
                if !(*theta_max > 0.0 && *theta_max <= PI) {
                    return bad(format!("theta_max {theta_max} outside (0, pi]"));
                }
            }
            CameraModel::SphericalHarmonic {
                max_degree,
                coefficients,
                ..
            } => {
                if *max_degree < 1 {
                    return bad("spherical harmonic max_degree must be >= 1".into());
                }
                let expected = sh_basis_len(*max_degree);
                if coefficients.len() != expected {
                    return bad(format!(
                        "degree {max_degree} needs {expected} coefficient vectors, got {}",
                        coefficients.len()
                    ));
                }
                if !coefficients.iter().flatten().all(|v| v.is_finite()) {
                    return bad("non-finite SH coefficient".into());
                }
            }
        }
        Ok(Self(model))
    }
}

impl From<CameraSpec> for CameraModel {
    fn from(spec: CameraSpec) -> Self {
        spec.0
    }
}

impl CameraModel {
    fn dims(&self) -> (usize, usize) {
        match *self {
            CameraModel::Equirect { width, height }
            | CameraModel::Pinhole { width, height, .. }
            | CameraModel::FisheyeEquidistant { width, height, .. }
            | CameraModel::SphericalHarmonic { width, height, .. } => (width, height),
        }
    }
}

impl CameraSpec {
    pub fn new(model: CameraModel) -> Result<Self> {
        Self::try_from(model)
    }

    pub fn equirect(width: usize, height: usize) -> Result<Self> {
        Self::new(CameraModel::Equirect { width, height })
    }

    pub fn pinhole(
        width: usize,
        height: usize,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
    ) -> Result<Self> {
        Self::new(CameraModel::Pinhole {
            width,
            height,
            fx,
            fy,
            cx,
            cy,
        })
    }

    pub fn fisheye(
        width: usize,
        height: usize,
        f: f64,
        cx: f64,
        cy: f64,
        theta_max: f64,
    ) -> Result<Self> {
        Self::new(CameraModel::FisheyeEquidistant {
            width,
            height,
            f,
            cx,
            cy,
            theta_max,
        })
    }

    pub fn spherical_harmonic(
        width: usize,
        height: usize,
        coeffs: &ShCoefficients,
        sphere_map: SphereMap,
    ) -> Result<Self> {
        Self::new(CameraModel::SphericalHarmonic {
            width,
            height,
            max_degree: coeffs.max_degree(),
            coefficients: coeffs.vectors().iter().map(|c| [c.x, c.y, c.z]).collect(),
            sphere_map,
        })
    }

    pub fn model(&self) -> &CameraModel {
        &self.0
    }

    pub fn width(&self) -> usize {
        self.0.dims().0
    }

    pub fn height(&self) -> usize {
        self.0.dims().1
    }

    /// Short lowercase name of the projection model.
    pub fn kind(&self) -> &'static str {
        match self.0 {
            CameraModel::Equirect { .. } => "equirect",
            CameraModel::Pinhole { .. } => "pinhole",
            CameraModel::FisheyeEquidistant { .. } => "fisheye_equidistant",
            CameraModel::SphericalHarmonic { .. } => "spherical_harmonic",
        }
    }

    /// Ray field of this camera.
    pub fn rays(&self) -> RayField {
        match &self.0 {
            CameraModel::Equirect { width, height } => equirect_rays(*width, *height),
            CameraModel::Pinhole {
                width,
                height,
                fx,
                fy,
                cx,
                cy,
            } => pinhole_rays(*width, *height, *fx, *fy, *cx, *cy),
            CameraModel::FisheyeEquidistant {
                width,
                height,
                f,
                cx,
                cy,
                theta_max,
            } => fisheye_rays(*width, *height, *f, *cx, *cy, *theta_max),
            CameraModel::SphericalHarmonic {
                width,
                height,
                max_degree,
                coefficients,
                sphere_map,
            } => {
                let coeffs = ShCoefficients::new(
                    *max_degree,
                    coefficients
                        .iter()
                        .map(|c| Vec3::new(c[0], c[1], c[2]))
                        .collect(),
                )
                .expect("validated at construction");
                sh_ray_field(*width, *height, &coeffs, *sphere_map)
                    .expect("validated at construction")
            }
        }
    }
}

/// Unit directions plus a validity mask, one per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct RayField {
    width: usize,
    height: usize,
    dirs: Vec<Vec3>,
    valid: Vec<bool>,
}

impl RayField {
    /// Builds a field from raw directions. Valid directions are normalized;
    /// zero-length or non-finite ones become invalid.
    pub fn from_directions(
        width: usize,
        height: usize,
        dirs: Vec<Vec3>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        if dirs.len() != width * height || valid.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} field with {} directions and {} mask entries",
                width,
                height,
                dirs.len(),
                valid.len()
            )));
        }
        let (dirs, valid) = dirs
            .into_iter()
            .zip(valid)
            .map(|(d, ok)| unit_or_invalid(d, ok))
            .unzip();
        Ok(Self {
            width,
            height,
            dirs,
            valid,
        })
    }

    pub(crate) fn from_parts_unchecked(
        width: usize,
        height: usize,
        dirs: Vec<Vec3>,
        valid: Vec<bool>,
    ) -> Self {
        Self {
            width,
            height,
            dirs,
            valid,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }

    pub fn dirs(&self) -> &[Vec3] {
        &self.dirs
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn dir(&self, idx: usize) -> Option<Vec3> {
        self.valid[idx].then(|| self.dirs[idx])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

fn unit_or_invalid(d: Vec3, ok: bool) -> (Vec3, bool) {
    let n = d.norm();
    if ok && n.is_finite() && n > 1e-12 {
        (d / n, true)
    } else {
        (Vec3::zeros(), false)
    }
}

fn generate(
    width: usize,
    height: usize,
    f: impl Fn(usize, usize) -> Option<Vec3> + Sync + Send,
) -> RayField {
    let (dirs, valid) = par::map_range(width * height, |i| match f(i % width, i / width) {
        Some(d) => unit_or_invalid(d, true),
        None => (Vec3::zeros(), false),
    })
    .into_iter()
    .unzip();
    RayField {
        width,
        height,
        dirs,
        valid,
    }
}

/// Normalized pixel coordinates of pixel `(u_idx, v_idx)` under the
/// pixel-center convention.
pub fn normalized_pixel(u_idx: usize, v_idx: usize, width: usize, height: usize) -> (f64, f64) {
    (
        (u_idx as f64 + 0.5) / width as f64,
        (v_idx as f64 + 0.5) / height as f64,
    )
}

/// Maps normalized image coordinates to `(polar, azimuth)` on the sphere:
/// azimuth `(u - 0.5) * 2pi`, polar `v * pi`.
pub fn pixel_to_sphere(u: f64, v: f64) -> Result<(f64, f64)> {
    if !(u > 0.0 && u < 1.0 && v > 0.0 && v < 1.0) {
        return Err(Error::OutOfDomain(u, v));
    }
    Ok((v * PI, (u - 0.5) * 2.0 * PI))
}

/// Optical-axis sphere map: `(polar, azimuth)` with the image center at the
/// pole and the corners at polar angle pi/2.
pub fn pixel_to_axis_sphere(u: f64, v: f64) -> Result<(f64, f64)> {
    if !(u > 0.0 && u < 1.0 && v > 0.0 && v < 1.0) {
        return Err(Error::OutOfDomain(u, v));
    }
    let (du, dv) = (u - 0.5, v - 0.5);
    let rho = (du * du + dv * dv).sqrt() / std::f64::consts::FRAC_1_SQRT_2;
    Ok((rho * FRAC_PI_2, dv.atan2(du)))
}

/// Full-sphere panorama rays: longitude `(u - 0.5) 2pi`, latitude `(0.5 - v) pi`.
pub fn equirect_rays(width: usize, height: usize) -> RayField {
    generate(width, height, |ui, vi| {
        let (u, v) = normalized_pixel(ui, vi, width, height);
        let lon = (u - 0.5) * 2.0 * PI;
        let lat = (0.5 - v) * PI;
        Some(Vec3::new(
            lat.cos() * lon.sin(),
            -lat.sin(),
            lat.cos() * lon.cos(),
        ))
    })
}

/// Inverse projection through `K`; pixel coordinates are the integer indices.
pub fn pinhole_rays(width: usize, height: usize, fx: f64, fy: f64, cx: f64, cy: f64) -> RayField {
    generate(width, height, |u, v| {
        Some(Vec3::new((u as f64 - cx) / fx, (v as f64 - cy) / fy, 1.0))
    })
}

/// Equidistant fisheye: image radius `rho = f * theta`. Pixels beyond
/// `theta_max` are invalid.
pub fn fisheye_rays(
    width: usize,
    height: usize,
    f: f64,
    cx: f64,
    cy: f64,
    theta_max: f64,
) -> RayField {
    generate(width, height, |u, v| {
        let (du, dv) = (u as f64 - cx, v as f64 - cy);
        let theta = (du * du + dv * dv).sqrt() / f;
        if theta > theta_max {
            return None;
        }
        let alpha = dv.atan2(du);
        Some(Vec3::new(
            theta.sin() * alpha.cos(),
            theta.sin() * alpha.sin(),
            theta.cos(),
        ))
    })
}

/// Forward equidistant projection of a direction to pixel coordinates.
pub fn fisheye_project(f: f64, cx: f64, cy: f64, dir: &Vec3) -> Option<(f64, f64)> {
    let n = dir.norm();
    if n < 1e-12 {
        return None;
    }
    let theta = (dir.z / n).clamp(-1.0, 1.0).acos();
    let alpha = dir.y.atan2(dir.x);
    let rho = f * theta;
    Some((cx + rho * alpha.cos(), cy + rho * alpha.sin()))
}

/// Converts pinhole Z-depth to radial distance along each pixel's ray.
/// Zero depth stays zero (invalid).
pub fn zdepth_to_radial(spec: &CameraSpec, zdepth: &[f64]) -> Result<RadialMap> {
    let CameraModel::Pinhole {
        width,
        height,
        fx,
        fy,
        cx,
        cy,
    } = *spec.model()
    else {
        return Err(Error::InvalidCamera(format!(
            "zdepth_to_radial needs a pinhole camera, got {}",
            spec.kind()
        )));
    };
    if zdepth.len() != width * height {
        return Err(Error::DimensionMismatch(format!(
            "depth map has {} entries for a {width}x{height} camera",
            zdepth.len()
        )));
    }
    let r = zdepth
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            if z > 0.0 && z.is_finite() {
                let (u, v) = ((i % width) as f64, (i / width) as f64);
                z * Vec3::new((u - cx) / fx, (v - cy) / fy, 1.0).norm()
            } else {
                0.0
            }
        })
        .collect();
    RadialMap::new(width, height, r)
}
