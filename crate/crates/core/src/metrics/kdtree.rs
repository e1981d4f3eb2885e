//! Exact nearest-neighbor queries over 3D points.

use nalgebra::Vector3;

#[inline]
pub(crate) fn dist2(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}

const LEAF_SIZE: usize = 16;

enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

/// Static k-d tree over a borrowed point set.
pub struct KdTree {
    points: Vec<Vector3<f64>>,
    root: Node,
}

impl KdTree {
    pub fn new(points: &[Vector3<f64>]) -> Self {
        let mut points = points.to_vec();
        let len = points.len();
        let root = build(&mut points, 0, len);
        Self { points, root }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Squared distance to the closest stored point (infinite when empty).
    pub fn nearest_dist2(&self, q: &Vector3<f64>) -> f64 {
        let mut best = f64::INFINITY;
        self.search(&self.root, q, &mut best);
        best
    }

    fn search(&self, node: &Node, q: &Vector3<f64>, best: &mut f64) {
        match node {
            Node::Leaf { start, end } => {
                for p in &self.points[*start..*end] {
                    let d = dist2(p, q);
                    if d < *best {
                        *best = d;
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let delta = q[*axis] - value;
                let (near, far) = if delta < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, q, best);
                if delta * delta <= *best {
                    self.search(far, q, best);
                }
            }
        }
    }
}

fn build(points: &mut [Vector3<f64>], start: usize, end: usize) -> Node {
    let slice = &mut points[start..end];
    if slice.len() <= LEAF_SIZE {
        return Node::Leaf { start, end };
    }
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in slice.iter() {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let axis = (hi - lo).imax();
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |a, b| a[axis].total_cmp(&b[axis]));
    let value = slice[mid][axis];
    // Left holds coordinates <= value, right holds >= value.
    let left = build(points, start, start + mid);
    let right = build(points, start + mid, end);
    Node::Split {
        axis,
        value,
        left: Box::new(left),
        right: Box::new(right),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut pt = || Vector3::new(rng.random(), rng.random(), rng.random::<f64>());
        let pts: Vec<_> = (0..2000).map(|_| pt()).collect();
        let tree = KdTree::new(&pts);
        for _ in 0..500 {
            let q = pt() * 1.2;
            let brute = pts.iter().map(|p| dist2(p, &q)).fold(f64::INFINITY, f64::min);
            assert_eq!(tree.nearest_dist2(&q), brute);
        }
    }

    #[test]
    fn duplicate_coordinates() {
        let pts = vec![Vector3::new(1.0, 0.0, 0.0); 100];
        let tree = KdTree::new(&pts);
        assert_eq!(tree.nearest_dist2(&Vector3::zeros()), 1.0);
    }
}
