use crate::geom::Vec3;

/// Static 3-d tree over a point set. Each subrange `[lo, hi)` of the permuted
/// arrays is a subtree rooted at its midpoint.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    ids: Vec<usize>,
    axes: Vec<u8>,
}

const LEAF: usize = 8;

impl KdTree {
    /// `ids[k]` is the caller's label for `points[k]`; nearest-neighbour ties
    /// resolve to the smaller label.
    pub fn new(points: &[Vec3], ids: &[usize]) -> Self {
        assert_eq!(points.len(), ids.len());
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut axes = vec![0u8; points.len()];
        build(points, &mut order, &mut axes, 0);
        KdTree {
            points: order.iter().map(|&k| points[k]).collect(),
            ids: order.iter().map(|&k| ids[k]).collect(),
            axes,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Label and squared distance of the closest point.
    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        let mut best = None;
        self.search(q, 0, self.points.len(), &mut best);
        best
    }

    fn search(&self, q: &Vec3, lo: usize, hi: usize, best: &mut Option<(usize, f64)>) {
        if hi - lo <= LEAF {
            for k in lo..hi {
                consider(best, self.ids[k], (self.points[k] - q).norm_squared());
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        consider(best, self.ids[mid], (self.points[mid] - q).norm_squared());
        let axis = self.axes[mid] as usize;
        let diff = q[axis] - self.points[mid][axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(q, near.0, near.1, best);
        if best.is_none_or(|(_, d)| diff * diff <= d) {
            self.search(q, far.0, far.1, best);
        }
    }
}

fn consider(best: &mut Option<(usize, f64)>, id: usize, d: f64) {
    match best {
        Some((bid, bd)) if d > *bd || (d == *bd && id > *bid) => {}
        _ => *best = Some((id, d)),
    }
}

fn build(points: &[Vec3], order: &mut [usize], axes: &mut [u8], offset: usize) {
    if order.len() <= LEAF {
        return;
    }
    let mut lo = points[order[0]];
    let mut hi = lo;
    for &k in order.iter() {
        lo = lo.inf(&points[k]);
        hi = hi.sup(&points[k]);
    }
    let axis = (hi - lo).imax();
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
    });
    axes[offset + mid] = axis as u8;
    let (left, right) = order.split_at_mut(mid);
    build(points, left, axes, offset);
    build(points, &mut right[1..], axes, offset + mid + 1);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(points: &[Vec3], q: &Vec3) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (k, p) in points.iter().enumerate() {
            let d = (p - q).norm_squared();
            if d < best.1 || (d == best.1 && k < best.0) {
                best = (k, d);
            }
        }
        best
    }

    #[test]
    fn matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1, 2, 7, 9, 50, 300] {
            let pts: Vec<Vec3> = (0..n)
                .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
                .collect();
            let ids: Vec<usize> = (0..n).collect();
            let tree = KdTree::new(&pts, &ids);
            for _ in 0..200 {
                let q = Vec3::new(rng.random_range(-0.5..1.5), rng.random(), rng.random());
                assert_eq!(tree.nearest(&q), Some(brute(&pts, &q)));
            }
        }
    }

    #[test]
    fn ties_prefer_smaller_label() {
        // lattice points produce many exact ties
        let pts: Vec<Vec3> = (0..64)
            .map(|k| Vec3::new((k % 4) as f64, ((k / 4) % 4) as f64, (k / 16) as f64))
            .collect();
        let ids: Vec<usize> = (0..64).collect();
        let tree = KdTree::new(&pts, &ids);
        for k in 0..27 {
            let q = Vec3::new(
                (k % 3) as f64 + 0.5,
                ((k / 3) % 3) as f64 + 0.5,
                (k / 9) as f64 + 0.5,
            );
            assert_eq!(tree.nearest(&q), Some(brute(&pts, &q)));
        }
    }

    #[test]
    fn empty_tree() {
        assert_eq!(KdTree::new(&[], &[]).nearest(&Vec3::zeros()), None);
    }
}
