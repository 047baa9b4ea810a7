//! Reference implementations of the two-view training objectives.
//!
//! These are plain formula evaluators (no autodiff); sums run over pixels,
//! not means, so values grow with resolution.

use serde::{Deserialize, Serialize};

use crate::geom::{geodesic_angle, Pose, Rotation, Vec3};
use crate::pointmap::Pointmap;
use crate::{Error, Result};

/// Quantile used for the polar-angle term.
pub const ALPHA_THETA: f64 = 0.7;
/// Quantile used for the azimuth term.
pub const ALPHA_PHI: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub alpha_theta: f64,
    pub alpha_phi: f64,
    pub beta: f64,
    pub lambda_pose: f64,
    pub lambda_a: f64,
    pub lambda_regr: f64,
    pub lambda_pose_total: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha_theta: ALPHA_THETA,
            alpha_phi: ALPHA_PHI,
            beta: 0.5,
            lambda_pose: 1.0,
            lambda_a: 1.0,
            lambda_regr: 1.0,
            lambda_pose_total: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, q) in [
            ("alpha_theta", self.alpha_theta),
            ("alpha_phi", self.alpha_phi),
            ("beta", self.beta),
        ] {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::InvalidConfig(format!("{name} = {q} outside [0, 1]")));
            }
        }
        for (name, w) in [
            ("lambda_pose", self.lambda_pose),
            ("lambda_a", self.lambda_a),
            ("lambda_regr", self.lambda_regr),
            ("lambda_pose_total", self.lambda_pose_total),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "{name} = {w} must be a finite non-negative weight"
                )));
            }
        }
        Ok(())
    }
}

/// Pinball loss: underestimates cost `alpha`, overestimates `1 - alpha`.
pub fn asym_angular_loss(pred: &[f64], gt: &[f64], alpha: f64) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: gt.len(),
        });
    }
    Ok(pred
        .iter()
        .zip(gt)
        .map(|(p, g)| {
            let d = (p - g).abs();
            if p < g {
                alpha * d
            } else {
                (1.0 - alpha) * d
            }
        })
        .sum())
}

pub fn total_angular_loss(
    pred_theta: &[f64],
    gt_theta: &[f64],
    pred_phi: &[f64],
    gt_phi: &[f64],
    weights: &LossWeights,
) -> Result<f64> {
    let lt = asym_angular_loss(pred_theta, gt_theta, weights.alpha_theta)?;
    let lp = asym_angular_loss(pred_phi, gt_phi, weights.alpha_phi)?;
    Ok(weights.beta * lt + (1.0 - weights.beta) * lp)
}

fn check_dims(a: &Pointmap, b: &Pointmap) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

fn view_term(pred: &Pointmap, gt: &Pointmap) -> Result<f64> {
    check_dims(pred, gt)?;
    let mask: Vec<bool> = pred
        .valid()
        .iter()
        .zip(gt.valid())
        .map(|(a, b)| *a && *b)
        .collect();
    let mean_norm = |pts: &[Vec3]| -> Result<f64> {
        let (s, n) = pts
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| m)
            .fold((0.0, 0usize), |(s, n), (p, _)| (s + p.norm(), n + 1));
        if n == 0 || s == 0.0 {
            return Err(Error::EmptyPointmap);
        }
        Ok(s / n as f64)
    };
    let eta = mean_norm(pred.xyz())?;
    let eta_gt = mean_norm(gt.xyz())?;
    Ok(pred
        .xyz()
        .iter()
        .zip(gt.xyz())
        .zip(&mask)
        .filter(|(_, &m)| m)
        .map(|((p, g), _)| (p / eta - g / eta_gt).norm_squared())
        .sum())
}

/// Scale-normalized point regression over both views of a pair.
pub fn local_regression_loss(
    pred1: &Pointmap,
    gt1: &Pointmap,
    pred2: &Pointmap,
    gt2: &Pointmap,
) -> Result<f64> {
    Ok(view_term(pred1, gt1)? + view_term(pred2, gt2)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseLoss {
    pub rot: f64,
    pub trans: f64,
    pub total: f64,
}

/// Geodesic rotation error plus squared error against the rescaled target
/// translation `s * t_gt`.
pub fn pose_loss(
    pred: &Pose,
    gt_rot: &Rotation,
    gt_trans: &Vec3,
    scale_s: f64,
    lambda: f64,
) -> Result<PoseLoss> {
    if !(scale_s > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "scale {scale_s} must be positive"
        )));
    }
    let rot = geodesic_angle(&pred.rotation, gt_rot);
    let trans = (pred.translation - gt_trans * scale_s).norm_squared();
    Ok(PoseLoss {
        rot,
        trans,
        total: lambda * (rot + trans),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossComponents {
    pub angular: f64,
    pub regression: f64,
    pub pose: f64,
}

pub fn total_loss(c: &LossComponents, weights: &LossWeights) -> f64 {
    weights.lambda_a * c.angular
        + weights.lambda_regr * c.regression
        + weights.lambda_pose_total * c.pose
}
