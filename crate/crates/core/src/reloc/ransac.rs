use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::descriptors::descriptor_distance;
use crate::geometry::{umeyama_points, LabeledCloud, Point3, Pose6, SpatialIndex};
use crate::semantics::KeypointSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacParams {
    pub top_keypoints: usize,
    pub iterations: usize,
    pub inlier_threshold: f64,
    pub early_exit_ratio: f64,
    pub min_inliers: usize,
    /// Triplets with a side shorter than this are skipped as degenerate.
    pub min_sample_spacing: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            top_keypoints: 128,
            iterations: 2000,
            inlier_threshold: 1.0,
            early_exit_ratio: 0.8,
            min_inliers: 5,
            min_sample_spacing: 0.5,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoarseRegistration {
    /// Maps query coordinates into the candidate frame.
    pub pose: Pose6,
    /// (query keypoint, candidate keypoint) pairs.
    pub inliers: Vec<(usize, usize)>,
    pub inlier_ratio: f64,
    pub matches: usize,
    pub success: bool,
}

impl CoarseRegistration {
    fn failure(matches: usize) -> Self {
        Self {
            pose: Pose6::identity(),
            inliers: Vec::new(),
            inlier_ratio: 0.0,
            matches,
            success: false,
        }
    }
}

/// Keypoints with a descriptor, restricted to the `n` lowest-uncertainty ones.
pub fn usable(kps: &KeypointSet, descs: &[Option<Vec<f64>>], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..kps.len()).filter(|&i| descs[i].is_some()).collect();
    idx.sort_by(|&a, &b| kps.uncertainty[a].partial_cmp(&kps.uncertainty[b]).unwrap().then(a.cmp(&b)));
    idx.truncate(n);
    idx
}

fn nearest(q: &[f64], pool: &[usize], descs: &[Option<Vec<f64>>]) -> usize {
    let mut best = (f64::INFINITY, usize::MAX);
    for &j in pool {
        let d = descriptor_distance(q, descs[j].as_ref().unwrap());
        if (d, j) < best {
            best = (d, j);
        }
    }
    best.1
}

/// Mutual nearest neighbours in descriptor space, ordered by query index.
pub fn mutual_matches(
    q_kps: &KeypointSet,
    q_descs: &[Option<Vec<f64>>],
    c_kps: &KeypointSet,
    c_descs: &[Option<Vec<f64>>],
    top: usize,
) -> Vec<(usize, usize)> {
    let qi = usable(q_kps, q_descs, top);
    let ci = usable(c_kps, c_descs, top);
    if qi.is_empty() || ci.is_empty() {
        return Vec::new();
    }
    let mut out: Vec<(usize, usize)> = qi
        .iter()
        .filter_map(|&a| {
            let b = nearest(q_descs[a].as_ref().unwrap(), &ci, c_descs);
            (nearest(c_descs[b].as_ref().unwrap(), &qi, q_descs) == a).then_some((a, b))
        })
        .collect();
    out.sort();
    out
}

fn inliers_of(pose: &Pose6, q: &[Point3], c: &[Point3], matches: &[(usize, usize)], thr: f64) -> Vec<(usize, usize)> {
    matches
        .iter()
        .copied()
        .filter(|&(a, b)| (pose.transform_point(&q[a]) - c[b]).norm() < thr)
        .collect()
}

/// Three-point RANSAC over mutual descriptor matches, refit on the best
/// consensus set.
pub fn ransac_register(
    q_kps: &KeypointSet,
    q_descs: &[Option<Vec<f64>>],
    c_kps: &KeypointSet,
    c_descs: &[Option<Vec<f64>>],
    params: &RansacParams,
) -> CoarseRegistration {
    let matches = mutual_matches(q_kps, q_descs, c_kps, c_descs, params.top_keypoints);
    let m = matches.len();
    if m < 3 {
        return CoarseRegistration::failure(m);
    }
    let (qp, cp) = (&q_kps.coords, &c_kps.coords);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Vec<(usize, usize)> = Vec::new();
    let mut best_pose = Pose6::identity();
    for _ in 0..params.iterations {
        let i = rng.random_range(0..m);
        let mut j = rng.random_range(0..m - 1);
        if j >= i {
            j += 1;
        }
        let mut k = rng.random_range(0..m - 2);
        for s in [i.min(j), i.max(j)] {
            if k >= s {
                k += 1;
            }
        }
        let sample = [matches[i], matches[j], matches[k]];
        let sq: Vec<Point3> = sample.iter().map(|s| qp[s.0]).collect();
        let sc: Vec<Point3> = sample.iter().map(|s| cp[s.1]).collect();
        let spaced = |p: &[Point3]| {
            (p[0] - p[1]).norm() >= params.min_sample_spacing
                && (p[1] - p[2]).norm() >= params.min_sample_spacing
                && (p[0] - p[2]).norm() >= params.min_sample_spacing
        };
        if !spaced(&sq) || !spaced(&sc) {
            continue;
        }
        let Ok(pose) = umeyama_points(&sc, &sq) else {
            continue;
        };
        let inl = inliers_of(&pose, qp, cp, &matches, params.inlier_threshold);
        if inl.len() > best.len() {
            best = inl;
            best_pose = pose;
            if best.len() as f64 / m as f64 > params.early_exit_ratio {
                break;
            }
        }
    }
    if best.len() < params.min_inliers {
        return CoarseRegistration::failure(m);
    }
    let sq: Vec<Point3> = best.iter().map(|s| qp[s.0]).collect();
    let sc: Vec<Point3> = best.iter().map(|s| cp[s.1]).collect();
    if let Ok(pose) = umeyama_points(&sc, &sq) {
        let inl = inliers_of(&pose, qp, cp, &matches, params.inlier_threshold);
        if inl.len() >= best.len() {
            best = inl;
            best_pose = pose;
        }
    }
    CoarseRegistration {
        pose: best_pose,
        inlier_ratio: best.len() as f64 / m as f64,
        inliers: best,
        matches: m,
        success: true,
    }
}

/// Fraction of ground points, mapped by `pose`, with an aerial point within `tau`.
pub fn verify_fitness(ground: &[Point3], aerial: &SpatialIndex, pose: &Pose6, tau: f64) -> f64 {
    if ground.is_empty() || aerial.is_empty() {
        return 0.0;
    }
    let hits = ground
        .iter()
        .filter(|p| {
            aerial
                .nearest(&pose.transform_point(p))
                .is_some_and(|n| n.dist_sq <= tau * tau)
        })
        .count();
    hits as f64 / ground.len() as f64
}

pub fn cloud_fitness(ground: &LabeledCloud, aerial: &LabeledCloud, pose: &Pose6, tau: f64) -> f64 {
    verify_fitness(&ground.points, &SpatialIndex::new(&aerial.points), pose, tau)
}
