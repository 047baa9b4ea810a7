//! Relative pose accuracy and trajectory error.

use serde::{Deserialize, Serialize};

use crate::geom::{direction_angle, geodesic_angle, relative_pose, umeyama_align, Pose, Vec3};
use crate::{Error, Result};

/// Angular errors of one relative pose, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairErrors {
    pub rot_err: f64,
    pub trans_dir_err: f64,
}

fn percent_below(
    errors: &[PairErrors],
    tau: f64,
    pick: impl Fn(&PairErrors) -> f64,
) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::EmptyList);
    }
    let hits = errors.iter().filter(|e| pick(e) < tau).count();
    Ok(100.0 * hits as f64 / errors.len() as f64)
}

/// Percentage of pairs with rotation error strictly below `tau` degrees.
pub fn rra_at(errors: &[PairErrors], tau: f64) -> Result<f64> {
    percent_below(errors, tau, |e| e.rot_err)
}

/// Percentage of pairs with translation-direction error strictly below `tau`.
pub fn rta_at(errors: &[PairErrors], tau: f64) -> Result<f64> {
    percent_below(errors, tau, |e| e.trans_dir_err)
}

/// Mean accuracy over integer thresholds `1..=tau_max`, gating each pair on
/// the larger of its two errors.
pub fn maa(errors: &[PairErrors], tau_max: u32) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::EmptyList);
    }
    if tau_max == 0 {
        return Err(Error::InvalidConfig("tau_max must be at least 1".into()));
    }
    let mut acc = 0.0;
    for t in 1..=tau_max {
        acc += percent_below(errors, t as f64, |e| e.rot_err.max(e.trans_dir_err))?;
    }
    Ok(acc / tau_max as f64)
}

/// RMSE between camera centres after a with-scale similarity fit of `est`
/// onto `gt`.
pub fn ate_rmse(est: &[Vec3], gt: &[Vec3]) -> Result<f64> {
    let sim = umeyama_align(est, gt, true)?;
    let sq: f64 = est
        .iter()
        .zip(gt)
        .map(|(e, g)| (sim.apply(e) - g).norm_squared())
        .sum();
    Ok((sq / est.len() as f64).sqrt())
}

/// Relative pose errors over every unordered view pair `(a, b)`, `a < b`.
///
/// Translation direction error is reported as 0 when both relative
/// translations vanish and 180 when only one does.
pub fn pair_errors(est: &[Pose], gt: &[Pose]) -> Result<Vec<PairErrors>> {
    if est.len() != gt.len() {
        return Err(Error::LengthMismatch {
            left: est.len(),
            right: gt.len(),
        });
    }
    let mut out = Vec::new();
    for a in 0..est.len() {
        for b in a + 1..est.len() {
            let re = relative_pose(&est[a], &est[b]);
            let rg = relative_pose(&gt[a], &gt[b]);
            let rot_err = geodesic_angle(&re.rotation, &rg.rotation).to_degrees();
            let trans_dir_err = match direction_angle(&re.translation, &rg.translation) {
                Ok(v) => v.to_degrees(),
                Err(_) if re.translation.norm() < 1e-12 && rg.translation.norm() < 1e-12 => 0.0,
                Err(_) => 180.0,
            };
            out.push(PairErrors {
                rot_err,
                trans_dir_err,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(rename = "rra@15")]
    pub rra15: f64,
    #[serde(rename = "rta@15")]
    pub rta15: f64,
    #[serde(rename = "rra@30")]
    pub rra30: f64,
    #[serde(rename = "rta@30")]
    pub rta30: f64,
    #[serde(rename = "maa@30")]
    pub maa30: f64,
    pub ate_rmse: f64,
    pub n_pairs: usize,
}

pub fn evaluate(est: &[Pose], gt: &[Pose]) -> Result<EvalReport> {
    let errs = pair_errors(est, gt)?;
    let centers = |p: &[Pose]| p.iter().map(Pose::center).collect::<Vec<_>>();
    Ok(EvalReport {
        rra15: rra_at(&errs, 15.0)?,
        rta15: rta_at(&errs, 15.0)?,
        rra30: rra_at(&errs, 30.0)?,
        rta30: rta_at(&errs, 30.0)?,
        maa30: maa(&errs, 30)?,
        ate_rmse: ate_rmse(&centers(est), &centers(gt))?,
        n_pairs: errs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rotation;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pe(r: f64, t: f64) -> PairErrors {
        PairErrors {
            rot_err: r,
            trans_dir_err: t,
        }
    }

    #[test]
    fn rra_rta_examples() {
        let e: Vec<_> = [5.0, 10.0, 20.0].iter().map(|&r| pe(r, 0.0)).collect();
        assert!((rra_at(&e, 15.0).unwrap() - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(rra_at(&[pe(0.0, 0.0); 4], 15.0).unwrap(), 100.0);
        assert_eq!(rra_at(&[pe(180.0, 0.0); 4], 15.0).unwrap(), 0.0);
        let e: Vec<_> = [5.0, 10.0, 20.0].iter().map(|&t| pe(90.0, t)).collect();
        assert!((rta_at(&e, 15.0).unwrap() - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(rta_at(&[pe(0.0, 29.0), pe(0.0, 31.0)], 30.0).unwrap(), 50.0);
        assert_eq!(rta_at(&[pe(0.0, 30.0)], 30.0).unwrap(), 0.0);
        assert_eq!(rra_at(&[], 15.0), Err(Error::EmptyList));
    }

    #[test]
    fn maa_examples() {
        assert_eq!(maa(&[pe(0.0, 0.0)], 30).unwrap(), 100.0);
        assert_eq!(maa(&[pe(0.5, 0.5)], 30).unwrap(), 100.0);
        assert_eq!(maa(&[pe(15.5, 0.0)], 30).unwrap(), 50.0);
        assert_eq!(maa(&[], 30), Err(Error::EmptyList));
    }

    fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation {
        let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        Rotation::from_quaternion(q[0], q[1], q[2], q[3]).unwrap()
    }

    fn random_trajectory(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
        (0..n)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                )
            })
            .collect()
    }

    #[test]
    fn ate_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gt = random_trajectory(&mut rng, 10);
        assert!(ate_rmse(&gt, &gt).unwrap() < 1e-12);
        let r = random_rotation(&mut rng);
        let t = Vec3::new(1.0, -2.0, 0.5);
        let est: Vec<_> = gt.iter().map(|p| r.apply(p) * 2.0 + t).collect();
        assert!(ate_rmse(&est, &gt).unwrap() < 1e-9);
        let line: Vec<_> = (0..5).map(|k| Vec3::x() * k as f64).collect();
        assert!(matches!(
            ate_rmse(&line, &line),
            Err(Error::DegenerateConfiguration(_))
        ));
    }

    #[test]
    fn ate_single_displacement_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let n = rng.random_range(4..30);
            let gt = random_trajectory(&mut rng, n);
            let mut est = gt.clone();
            let delta = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let k = rng.random_range(0..n);
            est[k] += delta;
            let ate = ate_rmse(&est, &gt).unwrap();
            // unaligned error is exactly |delta|/sqrt(n); alignment can only lower it
            assert!(ate <= delta.norm() / (n as f64).sqrt() + 1e-12);
        }
    }

    #[test]
    fn pair_errors_on_identical_trajectories() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let poses: Vec<_> = (0..5)
            .map(|_| Pose::new(random_rotation(&mut rng), random_trajectory(&mut rng, 1)[0]))
            .collect();
        let errs = pair_errors(&poses, &poses).unwrap();
        assert_eq!(errs.len(), 10);
        assert!(errs
            .iter()
            .all(|e| e.rot_err < 1e-4 && e.trans_dir_err < 1e-4));
        let rep = evaluate(&poses, &poses).unwrap();
        assert_eq!(rep.rra15, 100.0);
        assert_eq!(rep.n_pairs, 10);
    }

    fn arb_errors() -> impl Strategy<Value = Vec<PairErrors>> {
        prop::collection::vec(
            (0.0..180.0f64, 0.0..180.0f64).prop_map(|(r, t)| pe(r, t)),
            1..40,
        )
    }

    proptest! {
        #[test]
        fn accuracies_monotone(e in arb_errors(), a in 0.0..180.0f64, b in 0.0..180.0f64) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(rra_at(&e, lo).unwrap() <= rra_at(&e, hi).unwrap());
            prop_assert!(rta_at(&e, lo).unwrap() <= rta_at(&e, hi).unwrap());
        }

        #[test]
        fn maa_bounded_by_components(e in arb_errors()) {
            let m = maa(&e, 30).unwrap();
            prop_assert!(m <= rra_at(&e, 30.0).unwrap() + 1e-12);
            prop_assert!(m <= rta_at(&e, 30.0).unwrap() + 1e-12);
        }

        #[test]
        fn ate_similarity_invariant(seed in any::<u64>(), s in 0.1..10.0f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let gt = random_trajectory(&mut rng, 8);
            let est: Vec<_> = gt.iter().map(|p| p + Vec3::new(rng.random_range(-0.2..0.2), 0.1, 0.0)).collect();
            let r = random_rotation(&mut rng);
            let moved: Vec<_> = est.iter().map(|p| r.apply(p) * s + Vec3::new(4.0, 1.0, -2.0)).collect();
            let a = ate_rmse(&est, &gt).unwrap();
            let b = ate_rmse(&moved, &gt).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
