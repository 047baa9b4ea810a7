//! Real spherical harmonics and SH-encoded ray fields.
//!
//! Basis: orthonormal real harmonics built from associated Legendre functions
//! that include the Condon-Shortley phase, so `Y_1^1 = -sqrt(3/4pi) sin(theta) cos(phi)`
//! and `Y_1^-1 = -sqrt(3/4pi) sin(theta) sin(phi)`.
//!
//! The ray sum starts at `l = 1`: there is no constant term, so a field can
//! never carry a direction bias that is uniform over the whole sphere map.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::{normalized_pixel, pixel_to_axis_sphere, pixel_to_sphere, RayField, SphereMap};
use crate::geom::Vec3;
use crate::par;
use crate::{Error, Result};

/// Number of coefficient vectors for degrees `1..=max_degree`.
pub fn sh_basis_len(max_degree: usize) -> usize {
    max_degree * max_degree + 2 * max_degree
}

/// `c_{l,m}` for `l = 1..=L`, `m = -l..=l`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShCoefficients {
    max_degree: usize,
    vectors: Vec<Vec3>,
}

impl ShCoefficients {
    pub fn new(max_degree: usize, vectors: Vec<Vec3>) -> Result<Self> {
        let expected = sh_basis_len(max_degree);
        if max_degree == 0 || vectors.len() != expected {
            return Err(Error::CoefficientMismatch {
                expected,
                got: vectors.len(),
            });
        }
        Ok(Self {
            max_degree,
            vectors,
        })
    }

    pub fn zeros(max_degree: usize) -> Self {
        Self {
            max_degree,
            vectors: vec![Vec3::zeros(); sh_basis_len(max_degree)],
        }
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn vectors(&self) -> &[Vec3] {
        &self.vectors
    }

    /// Flat index of `(l, m)`.
    pub fn index(l: usize, m: i32) -> usize {
        (l * l - 1) + (m + l as i32) as usize
    }

    pub fn get(&self, l: usize, m: i32) -> Vec3 {
        self.vectors[Self::index(l, m)]
    }

    pub fn set(&mut self, l: usize, m: i32, c: Vec3) {
        self.vectors[Self::index(l, m)] = c;
    }
}

/// Associated Legendre `P_l^m(x)` for `m >= 0`, Condon-Shortley phase included.
fn assoc_legendre(l: usize, m: usize, x: f64) -> f64 {
    let somx2 = ((1.0 - x) * (1.0 + x)).max(0.0).sqrt();
    let mut pmm = 1.0;
    let mut fact = 1.0;
    for _ in 0..m {
        pmm *= -fact * somx2;
        fact += 2.0;
    }
    if l == m {
        return pmm;
    }
    let mut pmmp1 = x * (2 * m + 1) as f64 * pmm;
    if l == m + 1 {
        return pmmp1;
    }
    let mut pll = 0.0;
    for ll in (m + 2)..=l {
        pll = ((2 * ll - 1) as f64 * x * pmmp1 - (ll + m - 1) as f64 * pmm) / (ll - m) as f64;
        pmm = pmmp1;
        pmmp1 = pll;
    }
    pll
}

fn norm_const(l: usize, m: usize) -> f64 {
    // (l-m)!/(l+m)! as a running product
    let ratio: f64 = ((l - m + 1)..=(l + m)).map(|k| 1.0 / k as f64).product();
    ((2 * l + 1) as f64 / (4.0 * PI) * ratio).sqrt()
}

/// Real orthonormal spherical harmonic `Y_l^m(theta, phi)`, `theta` polar,
/// `phi` azimuth.
pub fn sh_basis(l: usize, m: i32, theta: f64, phi: f64) -> Result<f64> {
    let am = m.unsigned_abs() as usize;
    if am > l {
        return Err(Error::InvalidOrder { l: l as i32, m });
    }
    let p = assoc_legendre(l, am, theta.cos());
    let k = norm_const(l, am);
    Ok(match m {
        0 => k * p,
        m if m > 0 => std::f64::consts::SQRT_2 * k * (am as f64 * phi).cos() * p,
        _ => std::f64::consts::SQRT_2 * k * (am as f64 * phi).sin() * p,
    })
}

/// All basis values for degrees `1..=max_degree` in coefficient order.
fn basis_row(max_degree: usize, theta: f64, phi: f64) -> Vec<f64> {
    let mut row = Vec::with_capacity(sh_basis_len(max_degree));
    for l in 1..=max_degree {
        for m in -(l as i32)..=(l as i32) {
            row.push(sh_basis(l, m, theta, phi).expect("|m| <= l by construction"));
        }
    }
    row
}

fn sphere_coords(map: SphereMap, u: usize, v: usize, width: usize, height: usize) -> (f64, f64) {
    let (nu, nv) = normalized_pixel(u, v, width, height);
    match map {
        SphereMap::OpticalAxis => pixel_to_axis_sphere(nu, nv),
        SphereMap::Equirect => pixel_to_sphere(nu, nv),
    }
    .expect("pixel centers lie inside (0,1)")
}

/// Normalized coefficient-weighted basis sum at every pixel. Pixels whose
/// un-normalized sum has norm below 1e-9 are invalid.
pub fn sh_ray_field(
    width: usize,
    height: usize,
    coeffs: &ShCoefficients,
    map: SphereMap,
) -> Result<RayField> {
    let expected = sh_basis_len(coeffs.max_degree);
    if coeffs.vectors.len() != expected {
        return Err(Error::CoefficientMismatch {
            expected,
            got: coeffs.vectors.len(),
        });
    }
    let (dirs, valid) = par::map_range(width * height, |i| {
        let (theta, phi) = sphere_coords(map, i % width, i / width, width, height);
        let sum: Vec3 = basis_row(coeffs.max_degree, theta, phi)
            .iter()
            .zip(&coeffs.vectors)
            .map(|(y, c)| c * *y)
            .sum();
        let n = sum.norm();
        if n < 1e-9 || !n.is_finite() {
            (Vec3::zeros(), false)
        } else {
            (sum / n, true)
        }
    })
    .into_iter()
    .unzip();
    Ok(RayField::from_parts_unchecked(width, height, dirs, valid))
}

/// Least-squares SH coefficients for a ray field.
#[derive(Debug, Clone)]
pub struct ShFit {
    pub coeffs: ShCoefficients,
    /// RMS of `|B c - d|` over the valid pixels, before normalization.
    pub rms_residual: f64,
}

/// Fits coefficients by per-component linear least squares of the unit
/// directions against the basis evaluated at each valid pixel.
pub fn fit_sh_coeffs(field: &RayField, max_degree: usize, map: SphereMap) -> Result<ShFit> {
    let k = sh_basis_len(max_degree);
    let (w, h) = (field.width(), field.height());
    let pixels: Vec<usize> = (0..field.len()).filter(|&i| field.valid()[i]).collect();
    if max_degree == 0 || pixels.len() < k {
        return Err(Error::RankDeficient {
            rank: pixels.len().min(k),
            basis: k,
        });
    }
    let rows = par::map_slice(&pixels, |&i| {
        let (theta, phi) = sphere_coords(map, i % w, i / w, w, h);
        basis_row(max_degree, theta, phi)
    });
    let design = DMatrix::from_fn(pixels.len(), k, |r, c| rows[r][c]);
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-10;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < k {
        return Err(Error::RankDeficient { rank, basis: k });
    }
    let mut vectors = vec![Vec3::zeros(); k];
    let mut sq = 0.0;
    for comp in 0..3 {
        let target =
            DVector::from_iterator(pixels.len(), pixels.iter().map(|&i| field.dirs()[i][comp]));
        let sol = svd
            .solve(&target, tol)
            .map_err(|_| Error::RankDeficient { rank, basis: k })?;
        sq += (&design * &sol - target).norm_squared();
        for (v, s) in vectors.iter_mut().zip(sol.iter()) {
            v[comp] = *s;
        }
    }
    Ok(ShFit {
        coeffs: ShCoefficients {
            max_degree,
            vectors,
        },
        rms_residual: (sq / pixels.len() as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::pinhole_rays;
    use crate::geom::Rotation;

    /// Gauss-Legendre nodes/weights on [-1, 1] by Newton iteration.
    fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
        (0..n)
            .map(|i| {
                let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
                let mut dp = 0.0;
                for _ in 0..100 {
                    let (mut p0, mut p1) = (1.0, x);
                    for k in 2..=n {
                        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                        p0 = p1;
                        p1 = p2;
                    }
                    dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                    let dx = p1 / dp;
                    x -= dx;
                    if dx.abs() < 1e-16 {
                        break;
                    }
                }
                (x, 2.0 / ((1.0 - x * x) * dp * dp))
            })
            .collect()
    }

    /// Exact sphere quadrature for band-limited products up to degree ~2n-1.
    fn sphere_inner(f: impl Fn(f64, f64) -> f64, n: usize) -> f64 {
        let nodes = gauss_legendre(n);
        let nphi = 2 * n;
        let mut total = 0.0;
        for (x, wgt) in nodes {
            let theta = x.acos();
            for j in 0..nphi {
                let phi = 2.0 * PI * j as f64 / nphi as f64;
                total += wgt * (2.0 * PI / nphi as f64) * f(theta, phi);
            }
        }
        total
    }

    #[test]
    fn closed_form_values() {
        let c1 = (3.0 / (4.0 * PI)).sqrt();
        assert!((sh_basis(1, 0, 0.0, 0.3).unwrap() - c1).abs() < 1e-12);
        assert!((sh_basis(1, 0, 0.0, 0.0).unwrap() - 0.48860).abs() < 1e-5);
        assert!((sh_basis(1, 1, PI / 2.0, 0.0).unwrap() + c1).abs() < 1e-12);
        assert!((sh_basis(1, -1, PI / 2.0, PI / 2.0).unwrap() + c1).abs() < 1e-12);
        // tabulated degree-2 forms in Cartesian coordinates
        let (theta, phi) = (0.7f64, 1.1f64);
        let (x, y, z) = (
            theta.sin() * phi.cos(),
            theta.sin() * phi.sin(),
            theta.cos(),
        );
        let s = (15.0 / PI).sqrt();
        assert!((sh_basis(2, -2, theta, phi).unwrap() - 0.5 * s * x * y).abs() < 1e-12);
        assert!((sh_basis(2, 1, theta, phi).unwrap() + 0.5 * s * x * z).abs() < 1e-12);
        assert!((sh_basis(2, 2, theta, phi).unwrap() - 0.25 * s * (x * x - y * y)).abs() < 1e-12);
        let s0 = 0.25 * (5.0 / PI).sqrt();
        assert!((sh_basis(2, 0, theta, phi).unwrap() - s0 * (3.0 * z * z - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn invalid_order() {
        assert_eq!(
            sh_basis(1, 2, 0.1, 0.1),
            Err(Error::InvalidOrder { l: 1, m: 2 })
        );
    }

    #[test]
    fn orthonormal_under_quadrature() {
        let lm: Vec<(usize, i32)> = (1..=3)
            .flat_map(|l| (-(l as i32)..=l as i32).map(move |m| (l, m)))
            .collect();
        for &(l1, m1) in &lm {
            for &(l2, m2) in &lm {
                let ip = sphere_inner(
                    |t, p| sh_basis(l1, m1, t, p).unwrap() * sh_basis(l2, m2, t, p).unwrap(),
                    12,
                );
                let expect = if (l1, m1) == (l2, m2) { 1.0 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-10, "<Y{l1}{m1},Y{l2}{m2}> = {ip}");
            }
        }
    }

    #[test]
    fn zero_coefficients_give_invalid_field() {
        let f = sh_ray_field(8, 8, &ShCoefficients::zeros(3), SphereMap::OpticalAxis).unwrap();
        assert_eq!(f.valid_count(), 0);
    }

    fn rotation_coeffs(rot: &Rotation, scale: f64) -> ShCoefficients {
        // degree-1 harmonics are (-y, z, -x) * sqrt(3/4pi); pick c so that the
        // sum equals scale * R * n(theta, phi)
        let mut c = ShCoefficients::zeros(3);
        let m = rot.matrix() * scale;
        c.set(1, -1, -m.column(1).into_owned());
        c.set(1, 0, m.column(2).into_owned());
        c.set(1, 1, -m.column(0).into_owned());
        c
    }

    #[test]
    fn unit_norm_and_scale_invariance() {
        let rot = Rotation::from_axis_angle(&Vec3::new(0.3, -1.0, 0.4), 0.9).unwrap();
        let mut c = rotation_coeffs(&rot, 1.0);
        c.set(2, 1, Vec3::new(0.2, -0.1, 0.05));
        c.set(3, -2, Vec3::new(-0.05, 0.1, 0.02));
        let a = sh_ray_field(16, 12, &c, SphereMap::Equirect).unwrap();
        let scaled = ShCoefficients::new(3, c.vectors().iter().map(|v| v * 3.7).collect()).unwrap();
        let b = sh_ray_field(16, 12, &scaled, SphereMap::Equirect).unwrap();
        for i in 0..a.len() {
            assert!(a.valid()[i]);
            assert!((a.dirs()[i].norm() - 1.0).abs() < 1e-9);
            assert!((a.dirs()[i] - b.dirs()[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn fit_round_trip_on_constant_norm_field() {
        let rot = Rotation::from_axis_angle(&Vec3::new(1.0, 2.0, -0.5), 1.3).unwrap();
        for map in [SphereMap::OpticalAxis, SphereMap::Equirect] {
            let c = rotation_coeffs(&rot, 2.0);
            let field = sh_ray_field(24, 20, &c, map).unwrap();
            let fit = fit_sh_coeffs(&field, 3, map).unwrap();
            let back = sh_ray_field(24, 20, &fit.coeffs, map).unwrap();
            for i in 0..field.len() {
                let ang = field.dirs()[i].dot(&back.dirs()[i]).clamp(-1.0, 1.0).acos();
                assert!(ang < 1e-6, "pixel {i}: {ang}");
            }
            // recovered up to a positive global factor
            let k = fit.coeffs.get(1, 0).norm() / c.get(1, 0).norm();
            for (a, b) in fit.coeffs.vectors().iter().zip(c.vectors()) {
                assert!((a - b * k).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn pinhole_fit_is_accurate_on_optical_axis_map() {
        let f = 32.0 / (30f64.to_radians()).tan();
        let field = pinhole_rays(64, 64, f, f, 31.5, 31.5);
        let fit = fit_sh_coeffs(&field, 3, SphereMap::OpticalAxis).unwrap();
        let back = sh_ray_field(64, 64, &fit.coeffs, SphereMap::OpticalAxis).unwrap();
        let mean: f64 = (0..field.len())
            .map(|i| field.dirs()[i].dot(&back.dirs()[i]).clamp(-1.0, 1.0).acos())
            .sum::<f64>()
            / field.len() as f64;
        assert!(
            mean.to_degrees() < 1.0,
            "mean error {} deg",
            mean.to_degrees()
        );
    }

    #[test]
    fn equirect_truncation_error_is_bounded() {
        let field = crate::camera::equirect_rays(32, 16);
        let fit = fit_sh_coeffs(&field, 3, SphereMap::Equirect).unwrap();
        let back = sh_ray_field(32, 16, &fit.coeffs, SphereMap::Equirect).unwrap();
        let mean: f64 = (0..field.len())
            .filter(|&i| back.valid()[i])
            .map(|i| field.dirs()[i].dot(&back.dirs()[i]).clamp(-1.0, 1.0).acos())
            .sum::<f64>()
            / field.len() as f64;
        assert!(mean.is_finite() && mean < PI);
        assert!(fit.rms_residual > 0.0);
    }

    #[test]
    fn single_pixel_is_rank_deficient() {
        let mut valid = vec![false; 16];
        valid[5] = true;
        let field = RayField::from_directions(4, 4, vec![Vec3::z(); 16], valid).unwrap();
        assert!(matches!(
            fit_sh_coeffs(&field, 3, SphereMap::OpticalAxis),
            Err(Error::RankDeficient { .. })
        ));
    }
}
