//! Static k-d tree over a point set.
//!
//! Neighbor results are ordered by `(squared distance, point index)`, so
//! equidistant points always resolve to the lowest index.

use super::pose::Point3;

const LEAF_SIZE: usize = 10;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: u32, end: u32 },
    Split { dim: u8, value: f64, left: u32, right: u32 },
}

#[derive(Debug, Clone)]
pub struct SpatialIndex {
    pts: Vec<[f64; 3]>,
    ids: Vec<u32>,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist_sq: f64,
}

impl Neighbor {
    fn key(&self) -> (f64, usize) {
        (self.dist_sq, self.index)
    }

    fn before(&self, other: &Neighbor) -> bool {
        self.key() < other.key()
    }
}

impl SpatialIndex {
    pub fn new(points: &[Point3]) -> Self {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            build(points, &mut order, 0, &mut nodes);
        }
        let pts = order
            .iter()
            .map(|&i| {
                let p = points[i as usize];
                [p.x, p.y, p.z]
            })
            .collect();
        Self {
            pts,
            ids: order,
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.pts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    pub fn nearest(&self, q: &Point3) -> Option<Neighbor> {
        self.knn(q, 1).into_iter().next()
    }

    /// The `k` nearest points sorted by distance, ties by index.
    pub fn knn(&self, q: &Point3, k: usize) -> Vec<Neighbor> {
        let mut out = Vec::with_capacity(k + 1);
        if k == 0 || self.nodes.is_empty() {
            return out;
        }
        self.knn_into(q, k, &mut out);
        out
    }

    /// Like [`knn`](Self::knn) but reuses `out`.
    pub fn knn_into(&self, q: &Point3, k: usize, out: &mut Vec<Neighbor>) {
        out.clear();
        if k == 0 || self.nodes.is_empty() {
            return;
        }
        let qa = [q.x, q.y, q.z];
        self.knn_rec(0, &qa, k, out);
    }

    fn knn_rec(&self, node: usize, q: &[f64; 3], k: usize, out: &mut Vec<Neighbor>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for slot in start as usize..end as usize {
                    let p = &self.pts[slot];
                    let d = sq(p[0] - q[0]) + sq(p[1] - q[1]) + sq(p[2] - q[2]);
                    let cand = Neighbor {
                        index: self.ids[slot] as usize,
                        dist_sq: d,
                    };
                    if out.len() == k && !cand.before(&out[k - 1]) {
                        continue;
                    }
                    let pos = out.partition_point(|n| n.before(&cand));
                    out.insert(pos, cand);
                    if out.len() > k {
                        out.pop();
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[dim as usize] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.knn_rec(near as usize, q, k, out);
                if out.len() < k || diff * diff <= out[k - 1].dist_sq {
                    self.knn_rec(far as usize, q, k, out);
                }
            }
        }
    }

    /// All points within `radius` (inclusive), sorted by distance then index.
    pub fn within(&self, q: &Point3, radius: f64) -> Vec<Neighbor> {
        let mut out = Vec::new();
        if self.nodes.is_empty() {
            return out;
        }
        let qa = [q.x, q.y, q.z];
        self.within_rec(0, &qa, radius * radius, &mut out);
        out.sort_by(|a, b| a.key().partial_cmp(&b.key()).unwrap());
        out
    }

    /// Number of points within `radius` (inclusive).
    pub fn count_within(&self, q: &Point3, radius: f64) -> usize {
        if self.nodes.is_empty() {
            return 0;
        }
        let mut out = Vec::new();
        self.within_rec(0, &[q.x, q.y, q.z], radius * radius, &mut out);
        out.len()
    }

    fn within_rec(&self, node: usize, q: &[f64; 3], r2: f64, out: &mut Vec<Neighbor>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for slot in start as usize..end as usize {
                    let p = &self.pts[slot];
                    let d = sq(p[0] - q[0]) + sq(p[1] - q[1]) + sq(p[2] - q[2]);
                    if d <= r2 {
                        out.push(Neighbor {
                            index: self.ids[slot] as usize,
                            dist_sq: d,
                        });
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[dim as usize] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.within_rec(near as usize, q, r2, out);
                if diff * diff <= r2 {
                    self.within_rec(far as usize, q, r2, out);
                }
            }
        }
    }
}

#[inline]
fn sq(x: f64) -> f64 {
    x * x
}

fn build(points: &[Point3], order: &mut [u32], offset: usize, nodes: &mut Vec<Node>) -> u32 {
    let id = nodes.len() as u32;
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: offset as u32,
            end: (offset + order.len()) as u32,
        });
        return id;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order.iter() {
        let p = points[i as usize];
        for d in 0..3 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let dim = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).partial_cmp(&(hi[b] - lo[b])).unwrap())
        .unwrap();
    if hi[dim] - lo[dim] <= 0.0 {
        // all points coincide
        nodes.push(Node::Leaf {
            start: offset as u32,
            end: (offset + order.len()) as u32,
        });
        return id;
    }
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a as usize][dim]
            .partial_cmp(&points[b as usize][dim])
            .unwrap()
            .then(a.cmp(&b))
    });
    let value = points[order[mid] as usize][dim];
    nodes.push(Node::Split {
        dim: dim as u8,
        value,
        left: 0,
        right: 0,
    });
    let (l, r) = order.split_at_mut(mid);
    let left = build(points, l, offset, nodes);
    let right = build(points, r, offset + mid, nodes);
    if let Node::Split {
        left: ref mut lref,
        right: ref mut rref,
        ..
    } = nodes[id as usize]
    {
        *lref = left;
        *rref = right;
    }
    id
}
