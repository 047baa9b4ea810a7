//! Rotations, rigid poses, similarity alignment and angular distances.
//!
//! Poses are camera-to-world throughout the crate: `pose.apply(x)` maps a point
//! expressed in the camera frame into the world frame.

use crate::{Error, Result};
use nalgebra::{Matrix3, Vector3, SVD};

pub type Vec3 = Vector3<f64>;

const ORTHO_TOL: f64 = 1e-9;

/// Element of SO(3), stored as a 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Validates orthonormality and a positive determinant.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        Self::from_matrix_tol(m, ORTHO_TOL)
    }

    /// Like [`Rotation::from_matrix`] with a caller-chosen tolerance, then
    /// re-orthonormalized. Used for matrices that went through float32 storage.
    pub fn from_matrix_tol(m: Matrix3<f64>, tol: f64) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::NotARotation("non-finite entry".into()));
        }
        let err = (m.transpose() * m - Matrix3::identity()).abs().max();
        if err > tol {
            return Err(Error::NotARotation(format!("|R^T R - I| = {err:e}")));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > tol {
            return Err(Error::NotARotation(format!("det = {det}")));
        }
        if tol > ORTHO_TOL {
            Ok(Self::project(m))
        } else {
            Ok(Self(m))
        }
    }

    /// Nearest rotation in the Frobenius sense.
    fn project(m: Matrix3<f64>) -> Self {
        let svd = SVD::new(m, true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut d = Matrix3::identity();
        if (u * vt).determinant() < 0.0 {
            d[(2, 2)] = -1.0;
        }
        Self(u * d * vt)
    }

    /// Rotation of `angle` radians about `axis` (any non-zero length).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Result<Self> {
        let n = axis.norm();
        if n < 1e-12 {
            return Err(Error::ZeroVector);
        }
        Ok(Self::exp(&(axis * (angle / n))))
    }

    /// Rotation from a quaternion `(w, x, y, z)`; normalized before use.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if n < 1e-12 {
            return Err(Error::ZeroVector);
        }
        let (w, x, y, z) = (w / n, x / n, y / n, z / n);
        Ok(Self(Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )))
    }

    /// Exponential map (Rodrigues) of a rotation vector.
    pub fn exp(omega: &Vec3) -> Self {
        let theta2 = omega.norm_squared();
        let k = skew(omega);
        let (a, b) = if theta2 < 1e-16 {
            (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
        } else {
            let theta = theta2.sqrt();
            (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
        };
        Self(Matrix3::identity() + k * a + k * k * b)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn inverse(&self) -> Self {
        self.transpose()
    }

    pub fn compose(&self, other: &Rotation) -> Self {
        Self(self.0 * other.0)
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Rotation angle in radians, in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        clamped_acos((self.0.trace() - 1.0) / 2.0)
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        let m = &self.0;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        self.compose(&rhs)
    }
}

/// Cross-product matrix `[v]x`.
pub fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn clamped_acos(c: f64) -> f64 {
    c.clamp(-1.0, 1.0).acos()
}

/// Rigid transform `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl Pose {
    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self::new(Rotation::identity(), t)
    }

    pub fn apply(&self, x: &Vec3) -> Vec3 {
        self.rotation.apply(x) + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::new(rt, -rt.apply(&self.translation))
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Self {
        compose(self, other)
    }

    /// Camera center, for camera-to-world poses.
    pub fn center(&self) -> Vec3 {
        self.translation
    }

    /// Homogeneous 4x4 matrix, row-major.
    pub fn to_rows(&self) -> [[f64; 4]; 4] {
        let r = self.rotation.rows();
        let t = self.translation;
        [
            [r[0][0], r[0][1], r[0][2], t.x],
            [r[1][0], r[1][1], r[1][2], t.y],
            [r[2][0], r[2][1], r[2][2], t.z],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    /// Parses a row-major 4x4 matrix; the rotation block is validated with
    /// `tol` and re-orthonormalized when `tol` is looser than 1e-9.
    pub fn from_rows(m: &[[f64; 4]; 4], tol: f64) -> Result<Self> {
        let last = m[3];
        if last != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::NotARotation(format!("bottom row {last:?}")));
        }
        let rot = Matrix3::new(
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        );
        let t = Vec3::new(m[0][3], m[1][3], m[2][3]);
        if !t.iter().all(|v| v.is_finite()) {
            return Err(Error::NotARotation("non-finite translation".into()));
        }
        Ok(Self::new(Rotation::from_matrix_tol(rot, tol)?, t))
    }
}

/// Similarity transform `x -> s R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl SimilarityTransform {
    pub fn apply(&self, x: &Vec3) -> Vec3 {
        self.rotation.apply(x) * self.scale + self.translation
    }

    pub fn apply_all(&self, xs: &[Vec3]) -> Vec<Vec3> {
        xs.iter().map(|x| self.apply(x)).collect()
    }
}

/// `a ∘ b`, i.e. `x -> a(b(x))`.
pub fn compose(a: &Pose, b: &Pose) -> Pose {
    Pose::new(
        a.rotation.compose(&b.rotation),
        a.rotation.apply(&b.translation) + a.translation,
    )
}

/// Transform taking frame-`i` coordinates to frame-`j` coordinates, for
/// camera-to-world poses `p_i`, `p_j`.
///
/// With world-to-camera extrinsics `E = P^-1` this is
/// `R_{j<-i} = R^E_j (R^E_i)^T`, `t_{j<-i} = t^E_j - R_{j<-i} t^E_i`.
pub fn relative_pose(p_i: &Pose, p_j: &Pose) -> Pose {
    let (e_i, e_j) = (p_i.inverse(), p_j.inverse());
    let r = e_j.rotation.compose(&e_i.rotation.transpose());
    let t = e_j.translation - r.apply(&e_i.translation);
    Pose::new(r, t)
}

/// `arccos((tr(R1^T R2) - 1) / 2)`, argument clamped to `[-1, 1]`.
pub fn geodesic_angle(r1: &Rotation, r2: &Rotation) -> f64 {
    let tr = (r1.matrix().transpose() * r2.matrix()).trace();
    clamped_acos((tr - 1.0) / 2.0)
}

/// Angle between two non-zero vectors, in `[0, pi]`.
pub fn direction_angle(t1: &Vec3, t2: &Vec3) -> Result<f64> {
    let (n1, n2) = (t1.norm(), t2.norm());
    if n1 < 1e-12 || n2 < 1e-12 {
        return Err(Error::ZeroVector);
    }
    Ok(clamped_acos(t1.dot(t2) / (n1 * n2)))
}

/// Least-squares similarity (or rigid, with `with_scale = false`) transform
/// mapping `src` onto `dst` (Umeyama 1991).
pub fn umeyama_align(src: &[Vec3], dst: &[Vec3], with_scale: bool) -> Result<SimilarityTransform> {
    if src.len() != dst.len() {
        return Err(Error::LengthMismatch {
            left: src.len(),
            right: dst.len(),
        });
    }
    if src.len() < 3 {
        return Err(Error::DegenerateConfiguration(format!(
            "{} correspondences, need at least 3",
            src.len()
        )));
    }
    let n = src.len() as f64;
    let mu_s = src.iter().sum::<Vec3>() / n;
    let mu_d = dst.iter().sum::<Vec3>() / n;

    let mut cov_s = Matrix3::zeros();
    let mut cross = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let (sc, dc) = (s - mu_s, d - mu_d);
        cov_s += sc * sc.transpose();
        cross += dc * sc.transpose();
        var_s += sc.norm_squared();
    }
    cov_s /= n;
    cross /= n;
    var_s /= n;

    let sv = cov_s.symmetric_eigenvalues();
    let mut sv: Vec<f64> = sv.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if sv[0] <= 1e-24 || sv[1] <= 1e-12 * sv[0] {
        return Err(Error::DegenerateConfiguration(
            "source points are coincident or collinear".into(),
        ));
    }

    let svd = SVD::new(cross, true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut s = Matrix3::identity();
    if u.determinant() * vt.determinant() < 0.0 {
        s[(2, 2)] = -1.0;
    }
    let r = u * s * vt;
    let scale = if with_scale {
        let d = svd.singular_values;
        (d[0] * s[(0, 0)] + d[1] * s[(1, 1)] + d[2] * s[(2, 2)]) / var_s
    } else {
        1.0
    };
    let rotation = Rotation(r);
    let translation = mu_d - rotation.apply(&mu_s) * scale;
    Ok(SimilarityTransform {
        scale,
        rotation,
        translation,
    })
}
