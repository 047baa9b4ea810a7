use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::camera::CameraSpec;
use crate::geom::{geodesic_angle, relative_pose, Pose, Rotation, Vec3};
use crate::par;
use crate::pointmap::{ConfidenceMap, RadialMap};
use crate::scenegraph::{EdgeObservation, ViewId};
use crate::{Error, Result};

/// Minimum rotation error of a corrupted edge, in degrees.
pub const OUTLIER_MIN_ROT_DEG: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Standard deviation of the log of the multiplicative radial error.
    pub radial_rel_sigma: f64,
    pub rot_sigma_deg: f64,
    pub trans_dir_sigma_deg: f64,
    /// Each directed edge draws its own global scale from this range.
    pub edge_scale_range: [f64; 2],
    pub outlier_fraction: f64,
    /// Confidence is `1 / (1 + conf_k * relative radial error)`.
    pub conf_k: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            radial_rel_sigma: 0.0,
            rot_sigma_deg: 0.0,
            trans_dir_sigma_deg: 0.0,
            edge_scale_range: [0.5, 2.0],
            outlier_fraction: 0.0,
            conf_k: 10.0,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.edge_scale_range;
        let sigmas = [
            self.radial_rel_sigma,
            self.rot_sigma_deg,
            self.trans_dir_sigma_deg,
            self.conf_k,
        ];
        if sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidConfig(
                "noise sigmas and conf_k must be finite and non-negative".into(),
            ));
        }
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "edge_scale_range [{lo}, {hi}] must satisfy 0 < lo <= hi"
            )));
        }
        if !(0.0..=1.0).contains(&self.outlier_fraction) {
            return Err(Error::InvalidConfig(format!(
                "outlier_fraction {} outside [0, 1]",
                self.outlier_fraction
            )));
        }
        Ok(())
    }
}

/// Ground-truth description of one simulated view.
#[derive(Debug, Clone, PartialEq)]
pub struct SimView {
    pub id: ViewId,
    pub camera: CameraSpec,
    pub pose: Pose,
    pub radial: RadialMap,
}

/// Edges plus the bookkeeping needed to score them.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesizedEdges {
    pub edges: Vec<EdgeObservation>,
    /// Index into the input pair list of every corrupted pair.
    pub corrupted: Vec<usize>,
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        if v.norm() > 1e-6 {
            return v.normalize();
        }
    }
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        if let Ok(r) = Rotation::from_quaternion(q[0], q[1], q[2], q[3]) {
            return r;
        }
    }
}

fn edge_rng(seed: u64, src: ViewId, dst: ViewId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + ((dst.0 as u64) << 32 | src.0 as u64));
    rng
}

fn noisy_radial(
    gt: &RadialMap,
    scale: f64,
    noise: &NoiseModel,
    rng: &mut ChaCha8Rng,
) -> Result<(RadialMap, ConfidenceMap)> {
    let mut r = Vec::with_capacity(gt.r().len());
    let mut c = Vec::with_capacity(gt.r().len());
    for &v in gt.r() {
        let n: f64 = rng.sample(StandardNormal);
        let factor = (noise.radial_rel_sigma * n).exp();
        r.push(v * scale * factor);
        c.push(1.0 / (1.0 + noise.conf_k * (factor - 1.0).abs()));
    }
    Ok((
        RadialMap::new(gt.width(), gt.height(), r)?,
        ConfidenceMap::new(gt.width(), gt.height(), c)?,
    ))
}

fn one_edge(
    src: &SimView,
    dst: &SimView,
    noise: &NoiseModel,
    seed: u64,
) -> Result<EdgeObservation> {
    let mut rng = edge_rng(seed, src.id, dst.id);
    let [lo, hi] = noise.edge_scale_range;
    let scale = if lo < hi {
        rng.random_range(lo..hi)
    } else {
        lo
    };
    let truth = relative_pose(&src.pose, &dst.pose);

    let rot_axis = unit_vector(&mut rng);
    let rot_angle = noise.rot_sigma_deg.to_radians() * rng.sample::<f64, _>(StandardNormal);
    let tra_axis = unit_vector(&mut rng);
    let tra_angle = noise.trans_dir_sigma_deg.to_radians() * rng.sample::<f64, _>(StandardNormal);
    let mut rotation = truth.rotation;
    if noise.rot_sigma_deg > 0.0 {
        rotation = rotation.compose(&Rotation::exp(&(rot_axis * rot_angle)));
    }
    let mut translation = truth.translation;
    if noise.trans_dir_sigma_deg > 0.0 {
        let perp = translation.cross(&tra_axis);
        if perp.norm() > 1e-12 {
            translation = Rotation::exp(&(perp.normalize() * tra_angle)).apply(&translation);
        }
    }

    let (radial_dst, conf_dst) = noisy_radial(&dst.radial, scale, noise, &mut rng)?;
    let (radial_src, conf_src) = noisy_radial(&src.radial, scale, noise, &mut rng)?;
    Ok(EdgeObservation {
        src: src.id,
        dst: dst.id,
        pose: Pose::new(rotation, translation * scale),
        radial_dst,
        radial_src,
        conf_dst,
        conf_src,
        pair_scale: Some(scale),
        rays_dst: None,
        rays_src: None,
        matches: None,
    })
}

/// Both directed edges for every pair `(a, b)`: first `b -> a`, then `a -> b`.
/// Exactly `floor(outlier_fraction * pairs)` pairs get one direction replaced
/// by a random pose at least 30 degrees off in rotation.
pub fn synthesize_edges(
    views: &[SimView],
    pairs: &[(usize, usize)],
    noise: &NoiseModel,
    seed: u64,
) -> Result<SynthesizedEdges> {
    noise.validate()?;
    if let Some(&(a, b)) = pairs
        .iter()
        .find(|(a, b)| a == b || *a >= views.len() || *b >= views.len())
    {
        return Err(Error::InvalidConfig(format!("invalid pair ({a}, {b})")));
    }
    let directed: Vec<(usize, usize)> = pairs.iter().flat_map(|&(a, b)| [(b, a), (a, b)]).collect();
    let mut edges = par::map_slice(&directed, |&(s, d)| {
        one_edge(&views[s], &views[d], noise, seed)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let n_bad = (noise.outlier_fraction * pairs.len() as f64).floor() as usize;
    let mut corrupted = sample(&mut rng, pairs.len(), n_bad).into_vec();
    corrupted.sort_unstable();
    for &p in &corrupted {
        let k = 2 * p + rng.random_range(0..2usize);
        let truth = edges[k].pose.rotation;
        let rotation = loop {
            let r = random_rotation(&mut rng);
            if geodesic_angle(&r, &truth).to_degrees() >= OUTLIER_MIN_ROT_DEG {
                break r;
            }
        };
        edges[k].pose = Pose::new(rotation, unit_vector(&mut rng));
    }
    Ok(SynthesizedEdges { edges, corrupted })
}
