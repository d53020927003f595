//! Thin wrapper over an R*-tree for neighbourhood queries on point sets.

use rstar::primitives::GeomWithData;
use rstar::RTree;

use crate::geometry::Point3;

type Entry = GeomWithData<[f64; 3], usize>;

pub struct PointIndex {
    tree: RTree<Entry>,
    len: usize,
}

impl PointIndex {
    pub fn new(points: &[Point3]) -> Self {
        let entries: Vec<Entry> = points
            .iter()
            .enumerate()
            .map(|(i, p)| GeomWithData::new([p.x, p.y, p.z], i))
            .collect();
        Self {
            tree: RTree::bulk_load(entries),
            len: points.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// The `k` nearest points as `(index, distance)`, nearest first. Ties are
    /// broken by index so results do not depend on tree layout.
    pub fn knn(&self, q: &Point3, k: usize) -> Vec<(usize, f64)> {
        if self.len == 0 || k == 0 {
            return Vec::new();
        }
        let k = k.min(self.len);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(k + 4);
        let mut kth = f64::INFINITY;
        for (e, d2) in self.tree.nearest_neighbor_iter_with_distance_2(&[q.x, q.y, q.z]) {
            if out.len() >= k && d2 > kth {
                break;
            }
            if out.len() + 1 == k {
                kth = d2;
            }
            out.push((e.data, d2));
        }
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        out.truncate(k);
        out.into_iter().map(|(i, d2)| (i, d2.sqrt())).collect()
    }

    pub fn nearest(&self, q: &Point3) -> Option<(usize, f64)> {
        self.knn(q, 1).into_iter().next()
    }

    /// Indices of all points within `radius` (inclusive), sorted ascending.
    pub fn within(&self, q: &Point3, radius: f64) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .tree
            .locate_within_distance([q.x, q.y, q.z], radius * radius)
            .map(|e| e.data)
            .collect();
        out.sort_unstable();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knn_and_radius_queries_match_brute_force() {
        let pts: Vec<Point3> = (0..200)
            .map(|i| {
                let t = i as f64 * 0.37;
                Point3::new(t.sin() * 2.0, (t * 1.3).cos(), (i % 7) as f64 * 0.1)
            })
            .collect();
        let index = PointIndex::new(&pts);
        let q = Point3::new(0.3, -0.2, 0.25);
        let mut brute: Vec<(usize, f64)> = pts
            .iter()
            .enumerate()
            .map(|(i, p)| (i, (p - q).norm()))
            .collect();
        brute.sort_by(|a, b| a.1.total_cmp(&b.1));
        let knn = index.knn(&q, 10);
        for (a, b) in knn.iter().zip(&brute) {
            assert!((a.1 - b.1).abs() < 1e-12);
        }
        let within = index.within(&q, 0.5);
        let expected: Vec<usize> = (0..pts.len()).filter(|&i| (pts[i] - q).norm() <= 0.5).collect();
        assert_eq!(within, expected);
        assert_eq!(index.nearest(&q).unwrap().0, brute[0].0);
    }

    #[test]
    fn collinear_points_are_handled() {
        let pts: Vec<Point3> = (0..500).map(|i| Point3::new(i as f64 * 0.01, 0.0, 0.0)).collect();
        let index = PointIndex::new(&pts);
        let knn = index.knn(&Point3::new(2.0, 0.0, 0.0), 3);
        assert_eq!(knn[0].0, 200);
        assert_eq!(index.within(&Point3::new(0.0, 0.0, 0.0), 0.025), vec![0, 1, 2]);
    }
}
