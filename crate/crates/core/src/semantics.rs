//! Trunk segmentation and the trunk-attraction keypoint loss.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::local_pca;
use crate::geometry::{Label, LabeledCloud, Neighbor, Point3, SpatialIndex};

/// Per-point class, aligned with its cloud.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticMask(pub Vec<Label>);

impl SemanticMask {
    pub fn from_cloud(cloud: &LabeledCloud) -> Option<Self> {
        cloud.labels.clone().map(SemanticMask)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn trunk_points(&self, cloud: &LabeledCloud) -> Vec<Point3> {
        cloud
            .points
            .iter()
            .zip(&self.0)
            .filter(|(_, l)| **l == Label::Trunk)
            .map(|(p, _)| *p)
            .collect()
    }
}

/// Keypoint coordinates with a per-keypoint saliency uncertainty (lower is better).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KeypointSet {
    pub coords: Vec<Point3>,
    pub uncertainty: Vec<f64>,
}

impl KeypointSet {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Indices of the `n` lowest-uncertainty keypoints (ties by index).
    pub fn best_indices(&self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            self.uncertainty[a]
                .partial_cmp(&self.uncertainty[b])
                .unwrap()
                .then(a.cmp(&b))
        });
        idx.truncate(n);
        idx
    }

    pub fn select(&self, idx: &[usize]) -> KeypointSet {
        KeypointSet {
            coords: idx.iter().map(|&i| self.coords[i]).collect(),
            uncertainty: idx.iter().map(|&i| self.uncertainty[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmenterParams {
    pub k: usize,
    pub max_angle_deg: f64,
    pub min_linearity: f64,
    /// Points lower than this above the local floor are ground candidates.
    pub ground_band: f64,
    pub floor_cell: f64,
}

impl Default for SegmenterParams {
    fn default() -> Self {
        Self {
            k: 15,
            max_angle_deg: 25.0,
            min_linearity: 0.6,
            ground_band: 0.3,
            floor_cell: 2.0,
        }
    }
}

/// Geometric trunk segmentation: vertical, linear neighbourhoods are trunk;
/// flat returns near the local floor are ground; the rest is vegetation.
pub fn segment_trunks_heuristic(cloud: &LabeledCloud, params: &SegmenterParams) -> Result<SemanticMask> {
    if cloud.len() < 50.max(params.k) {
        return Err(Error::InvalidInput(format!(
            "segmentation needs at least 50 points, got {}",
            cloud.len()
        )));
    }
    let index = SpatialIndex::new(&cloud.points);
    let pca = local_pca(&cloud.points, &index, params.k);
    let cell = |p: &Point3| {
        (
            (p.x / params.floor_cell).floor() as i64,
            (p.y / params.floor_cell).floor() as i64,
        )
    };
    let mut floor: HashMap<(i64, i64), f64> = HashMap::new();
    for p in &cloud.points {
        let e = floor.entry(cell(p)).or_insert(f64::INFINITY);
        *e = e.min(p.z);
    }
    let cos_max = params.max_angle_deg.to_radians().cos();
    let labels = cloud
        .points
        .iter()
        .zip(&pca)
        .map(|(p, f)| {
            let h = p.z - floor[&cell(p)];
            if f.verticality() >= cos_max && f.linearity() > params.min_linearity {
                Label::Trunk
            } else if h < params.ground_band && f.normal().z.abs() >= cos_max {
                Label::Ground
            } else {
                Label::Vegetation
            }
        })
        .collect();
    Ok(SemanticMask(labels))
}

/// The `k` nearest trunk points of `q`; ties resolve to the lower index.
fn neighbors(index: &SpatialIndex, q: &Point3, k: usize, buf: &mut Vec<Neighbor>) {
    index.knn_into(q, k, buf);
}

fn check(s: &[Point3], k_seg: usize) -> Result<()> {
    if k_seg == 0 || s.len() < k_seg {
        return Err(Error::InsufficientTrunkPoints {
            have: s.len(),
            need: k_seg.max(1),
        });
    }
    Ok(())
}

/// Mean distance of every keypoint to its `k_seg` nearest trunk points, summed
/// over keypoints.
pub fn seg_loss(q: &[Point3], s: &[Point3], k_seg: usize) -> Result<f64> {
    check(s, k_seg)?;
    let index = SpatialIndex::new(s);
    Ok(seg_loss_indexed(q, s, &index, k_seg))
}

fn term(qt: &Point3, s: &[Point3], nbrs: &[Neighbor]) -> f64 {
    nbrs.iter().map(|n| (qt - s[n.index]).norm()).sum()
}

fn seg_loss_indexed(q: &[Point3], s: &[Point3], index: &SpatialIndex, k_seg: usize) -> f64 {
    let mut buf = Vec::with_capacity(k_seg);
    let total: f64 = q
        .iter()
        .map(|qt| {
            neighbors(index, qt, k_seg, &mut buf);
            term(qt, s, &buf)
        })
        .sum();
    total / k_seg as f64
}

/// Analytic gradient of [`seg_loss`] with the neighbour sets held fixed.
/// A keypoint coinciding with a trunk point gets a zero subgradient for that term.
pub fn seg_loss_grad(q: &[Point3], s: &[Point3], k_seg: usize) -> Result<Vec<Point3>> {
    check(s, k_seg)?;
    let index = SpatialIndex::new(s);
    let mut buf = Vec::with_capacity(k_seg);
    Ok(q.iter()
        .map(|qt| {
            neighbors(&index, qt, k_seg, &mut buf);
            grad_term(qt, s, &buf) / k_seg as f64
        })
        .collect())
}

fn grad_term(qt: &Point3, s: &[Point3], nbrs: &[Neighbor]) -> Point3 {
    let mut g = Point3::zeros();
    for n in nbrs {
        let d = qt - s[n.index];
        let len = d.norm();
        if len > 0.0 {
            g += d / len;
        }
    }
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineParams {
    pub k_seg: usize,
    pub steps: usize,
    pub step_size: f64,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self {
            k_seg: 5,
            steps: 50,
            step_size: 0.05,
        }
    }
}

/// Gradient descent on the loss, re-associating neighbours every step.
///
/// Keypoint terms are independent, so each keypoint keeps its own step
/// length, halved whenever a step would raise its term. No keypoint moves
/// more than `steps · step_size`.
pub fn refine_keypoints(q: &KeypointSet, s: &[Point3], params: &RefineParams) -> Result<KeypointSet> {
    check(s, params.k_seg)?;
    let index = SpatialIndex::new(s);
    let k = params.k_seg;
    let mut buf = Vec::with_capacity(k);
    let mut out = q.clone();
    for qt in out.coords.iter_mut() {
        let mut alpha = params.step_size;
        neighbors(&index, qt, k, &mut buf);
        let mut cur = term(qt, s, &buf);
        for _ in 0..params.steps {
            let g = grad_term(qt, s, &buf) / k as f64;
            let gn = g.norm();
            if gn == 0.0 || alpha < 1e-9 {
                break;
            }
            let cand = *qt - g * (alpha / gn.max(1.0));
            neighbors(&index, &cand, k, &mut buf);
            let next = term(&cand, s, &buf);
            if next <= cur {
                *qt = cand;
                cur = next;
            } else {
                alpha *= 0.5;
                neighbors(&index, qt, k, &mut buf);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_loss(q: &[Point3], s: &[Point3], k: usize) -> f64 {
        let mut total = 0.0;
        for qt in q {
            let mut d: Vec<(f64, usize)> = s.iter().enumerate().map(|(i, p)| ((qt - p).norm(), i)).collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            total += d[..k].iter().map(|x| x.0).sum::<f64>();
        }
        total / k as f64
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Vec<Point3> {
        (0..n)
            .map(|_| Point3::new(rng.random_range(-r..r), rng.random_range(-r..r), rng.random_range(-r..r)))
            .collect()
    }

    #[test]
    fn direct_evaluations() {
        let s = vec![Point3::zeros(); 5];
        assert_eq!(seg_loss(&[Point3::zeros()], &s, 5).unwrap(), 0.0);
        let s = vec![Point3::zeros(), Point3::new(3.0, 0.0, 0.0)];
        assert!((seg_loss(&[Point3::zeros()], &s, 2).unwrap() - 1.5).abs() < 1e-15);
        assert!(matches!(
            seg_loss(&[Point3::zeros()], &s, 3),
            Err(Error::InsufficientTrunkPoints { have: 2, need: 3 })
        ));
    }

    #[test]
    fn loss_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let q = random_points(&mut rng, 8, 5.0);
            let s = random_points(&mut rng, 50, 5.0);
            let a = seg_loss(&q, &s, 5).unwrap();
            assert!((a - brute_loss(&q, &s, 5)).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_cases() {
        let g = seg_loss_grad(&[Point3::new(2.0, 0.0, 0.0)], &[Point3::zeros()], 1).unwrap();
        assert!((g[0] - Point3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
        let s = [Point3::new(1.0, 0.0, 0.0), Point3::new(-1.0, 0.0, 0.0)];
        let g = seg_loss_grad(&[Point3::zeros()], &s, 2).unwrap();
        assert!(g[0].norm() < 1e-15);
    }

    #[test]
    fn loss_is_rigid_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = random_points(&mut rng, 8, 5.0);
        let s = random_points(&mut rng, 50, 5.0);
        let t = crate::geometry::Pose6::exp(&crate::geometry::Tangent6::from_slice(&[0.3, -1.0, 2.0, 4.0, 5.0, -6.0]));
        let qt: Vec<Point3> = q.iter().map(|p| t.transform_point(p)).collect();
        let st: Vec<Point3> = s.iter().map(|p| t.transform_point(p)).collect();
        let a = seg_loss(&q, &s, 5).unwrap();
        let b = seg_loss(&qt, &st, 5).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn moving_away_does_not_decrease() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_points(&mut rng, 40, 2.0);
        let q = Point3::new(5.0, 0.5, -0.2);
        let before = seg_loss(&[q], &s, 5).unwrap();
        let after = seg_loss(&[q * 1.5], &s, 5).unwrap();
        assert!(after >= before);
    }

    #[test]
    fn refinement_converges_on_isolated_point() {
        let s = [Point3::zeros()];
        let q = KeypointSet {
            coords: vec![Point3::new(1.0, 0.0, 0.0)],
            uncertainty: vec![1.0],
        };
        let params = RefineParams {
            k_seg: 1,
            steps: 200,
            step_size: 0.05,
        };
        let r = refine_keypoints(&q, &s, &params).unwrap();
        assert!(r.coords[0].norm() < 1e-3);
    }

    #[test]
    fn refinement_is_monotone_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = random_points(&mut rng, 60, 3.0);
        let q = KeypointSet {
            coords: random_points(&mut rng, 10, 4.0),
            uncertainty: vec![1.0; 10],
        };
        let params = RefineParams::default();
        let r = refine_keypoints(&q, &s, &params).unwrap();
        assert!(seg_loss(&r.coords, &s, 5).unwrap() <= seg_loss(&q.coords, &s, 5).unwrap());
        for (a, b) in q.coords.iter().zip(&r.coords) {
            assert!((a - b).norm() <= params.steps as f64 * params.step_size + 1e-12);
        }
    }

    #[test]
    fn keypoints_on_trunk_points_stay() {
        let s: Vec<Point3> = (0..5).map(|_| Point3::new(1.0, 2.0, 3.0)).collect();
        let q = KeypointSet {
            coords: vec![Point3::new(1.0, 2.0, 3.0)],
            uncertainty: vec![1.0],
        };
        assert_eq!(refine_keypoints(&q, &s, &RefineParams::default()).unwrap(), q);
    }

    #[test]
    fn segmenter_cylinder_and_plane() {
        let mut cyl = Vec::new();
        for i in 0..30 {
            for j in 0..4 {
                let a = j as f64 * std::f64::consts::TAU / 4.0;
                cyl.push(Point3::new(0.15 * a.cos(), 0.15 * a.sin(), 0.5 + i as f64 * 0.3));
            }
        }
        let cloud = LabeledCloud::new(cyl);
        let m = segment_trunks_heuristic(&cloud, &SegmenterParams::default()).unwrap();
        let trunk = m.0.iter().filter(|l| **l == Label::Trunk).count();
        assert!(trunk as f64 >= 0.95 * m.len() as f64, "{trunk}");

        let mut plane = Vec::new();
        for i in 0..20 {
            for j in 0..20 {
                plane.push(Point3::new(i as f64 * 0.3, j as f64 * 0.3, 5.0));
            }
        }
        let m = segment_trunks_heuristic(&LabeledCloud::new(plane), &SegmenterParams::default()).unwrap();
        assert!(m.0.iter().all(|l| *l != Label::Trunk));
    }
}
