use serde::{Deserialize, Serialize};

use crate::geom::{Pose, Vec3};

/// Pair selection rules modelled on common indoor/outdoor capture setups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetProfile {
    /// Indoor panoramas: baseline 0.1 to 2.2.
    #[default]
    #[serde(rename = "2d3ds")]
    TwoD3ds,
    /// Outdoor localisation: baseline 1.5 to 10.
    #[serde(rename = "360loc")]
    Loc360,
    /// Head-mounted capture: baseline 0.35 to 1.75 and viewing angle 25 to 65 degrees.
    Adt,
}

impl DatasetProfile {
    pub fn baseline(&self) -> (f64, f64) {
        match self {
            DatasetProfile::TwoD3ds => (0.1, 2.2),
            DatasetProfile::Loc360 => (1.5, 10.0),
            DatasetProfile::Adt => (0.35, 1.75),
        }
    }

    /// Allowed angle between optical axes, in degrees.
    pub fn view_angle(&self) -> Option<(f64, f64)> {
        match self {
            DatasetProfile::Adt => Some((25.0, 65.0)),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DatasetProfile::TwoD3ds => "2d3ds",
            DatasetProfile::Loc360 => "360loc",
            DatasetProfile::Adt => "adt",
        }
    }

    pub fn accepts(&self, a: &Pose, b: &Pose) -> bool {
        let baseline = (a.center() - b.center()).norm();
        let (lo, hi) = self.baseline();
        if !(lo..=hi).contains(&baseline) {
            return false;
        }
        match self.view_angle() {
            None => true,
            Some((lo, hi)) => (lo..=hi).contains(&optical_axis_angle(a, b)),
        }
    }
}

/// Angle in degrees between the two cameras' forward (+z) axes.
pub fn optical_axis_angle(a: &Pose, b: &Pose) -> f64 {
    let za = a.rotation.apply(&Vec3::z());
    let zb = b.rotation.apply(&Vec3::z());
    za.dot(&zb).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Undirected pairs `(i, j)`, `i < j`, accepted by `profile`, keeping each
/// anchor's `top_k` shortest baselines. Output is sorted.
pub fn curate_pairs(poses: &[Pose], profile: DatasetProfile, top_k: usize) -> Vec<(usize, usize)> {
    let mut pairs = std::collections::BTreeSet::new();
    for i in 0..poses.len() {
        let mut cands: Vec<(f64, usize)> = (0..poses.len())
            .filter(|&j| j != i && profile.accepts(&poses[i], &poses[j]))
            .map(|j| ((poses[i].center() - poses[j].center()).norm(), j))
            .collect();
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in cands.iter().take(top_k) {
            pairs.insert((i.min(j), i.max(j)));
        }
    }
    pairs.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rotation;

    fn at(x: f64) -> Pose {
        Pose::from_translation(Vec3::new(x, 0.0, 0.0))
    }

    #[test]
    fn baseline_interval() {
        let p = DatasetProfile::TwoD3ds;
        assert!(!p.accepts(&at(0.0), &at(0.05)));
        assert!(p.accepts(&at(0.0), &at(1.0)));
        assert!(!p.accepts(&at(0.0), &at(2.5)));
        assert!(DatasetProfile::Loc360.accepts(&at(0.0), &at(5.0)));
        assert!(!DatasetProfile::Loc360.accepts(&at(0.0), &at(1.0)));
    }

    #[test]
    fn adt_viewing_angle() {
        let turned = |deg: f64| {
            Pose::new(
                Rotation::from_axis_angle(&Vec3::y(), deg.to_radians()).unwrap(),
                Vec3::new(1.0, 0.0, 0.0),
            )
        };
        let p = DatasetProfile::Adt;
        assert!(p.accepts(&Pose::identity(), &turned(45.0)));
        assert!(!p.accepts(&Pose::identity(), &turned(10.0)));
        assert!(!p.accepts(&Pose::identity(), &turned(80.0)));
    }

    #[test]
    fn top_k_truncation() {
        let poses: Vec<Pose> = [0.0, 0.2, 0.5, 0.9, 1.4, 2.0].into_iter().map(at).collect();
        let pairs = curate_pairs(&poses, DatasetProfile::TwoD3ds, 1);
        assert_eq!(pairs, vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]);
        let all = curate_pairs(&poses, DatasetProfile::TwoD3ds, 10);
        assert_eq!(all.len(), 15);
        assert!(curate_pairs(&poses[..1], DatasetProfile::TwoD3ds, 5).is_empty());
    }
}
