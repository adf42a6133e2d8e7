use serde::{Deserialize, Serialize};

use super::features::AnalyzedCloud;
use crate::geometry::{Label, Point3, SpatialIndex};
use crate::semantics::{refine_keypoints, KeypointSet, RefineParams, SemanticMask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KeypointParams {
    pub max_keypoints: usize,
    pub nms_radius: f64,
    pub saliency_eps: f64,
    /// Distance to the trunk set at which the guided uncertainty doubles.
    pub trunk_distance_scale: f64,
    pub refine: RefineParams,
}

impl Default for KeypointParams {
    fn default() -> Self {
        Self {
            max_keypoints: 256,
            nms_radius: 1.0,
            saliency_eps: 1e-3,
            trunk_distance_scale: 0.5,
            refine: RefineParams::default(),
        }
    }
}

/// Greedy suppression in the order given; keeps points farther than
/// `radius` from every kept point.
fn nms(coords: &[Point3], order: &[usize], radius: f64, limit: usize) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    let mut grid: std::collections::HashMap<(i64, i64, i64), Vec<usize>> = Default::default();
    let cell = |p: &Point3| {
        (
            (p.x / radius).floor() as i64,
            (p.y / radius).floor() as i64,
            (p.z / radius).floor() as i64,
        )
    };
    'outer: for &i in order {
        if kept.len() >= limit {
            break;
        }
        let p = coords[i];
        let (cx, cy, cz) = cell(&p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(v) = grid.get(&(cx + dx, cy + dy, cz + dz)) {
                        if v.iter().any(|&j| (coords[j] - p).norm() < radius) {
                            continue 'outer;
                        }
                    }
                }
            }
        }
        grid.entry((cx, cy, cz)).or_default().push(i);
        kept.push(i);
    }
    kept
}

fn by_key(keys: &[f64], descending: bool) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| {
        let o = keys[a].partial_cmp(&keys[b]).unwrap();
        (if descending { o.reverse() } else { o }).then(a.cmp(&b))
    });
    idx
}

/// Saliency peaks after non-maximum suppression. With a mask, every peak is
/// pulled toward the trunk points and ranked by an uncertainty that grows
/// with its remaining distance to them.
pub fn detect_keypoints(cloud: &AnalyzedCloud, mask: Option<&SemanticMask>, params: &KeypointParams) -> KeypointSet {
    if cloud.pca.is_empty() || params.max_keypoints == 0 {
        return KeypointSet::default();
    }
    let sal = cloud.saliency();
    let order = by_key(&sal, true);
    let peaks = nms(&cloud.points, &order, params.nms_radius, params.max_keypoints);
    let plain = KeypointSet {
        coords: peaks.iter().map(|&i| cloud.points[i]).collect(),
        uncertainty: peaks.iter().map(|&i| 1.0 / (sal[i] + params.saliency_eps)).collect(),
    };
    let Some(mask) = mask else {
        return plain;
    };
    let trunk: Vec<Point3> = cloud
        .points
        .iter()
        .zip(&mask.0)
        .filter(|(_, l)| **l == Label::Trunk)
        .map(|(p, _)| *p)
        .collect();
    let k = params.refine.k_seg;
    let Ok(refined) = refine_keypoints(&plain, &trunk, &params.refine) else {
        return plain;
    };
    let index = SpatialIndex::new(&trunk);
    let (lo, hi) = bounds(&cloud.points);
    let mut coords = Vec::with_capacity(refined.len());
    let mut unc = Vec::with_capacity(refined.len());
    for (q, u) in refined.coords.iter().zip(&refined.uncertainty) {
        let q = q.sup(&lo).inf(&hi);
        let d = index.knn(&q, k).iter().map(|n| n.dist_sq.sqrt()).sum::<f64>() / k as f64;
        coords.push(q);
        unc.push(u * (1.0 + d / params.trunk_distance_scale));
    }
    let kept = nms(&coords, &by_key(&unc, false), params.nms_radius, params.max_keypoints);
    KeypointSet {
        coords: kept.iter().map(|&i| coords[i]).collect(),
        uncertainty: kept.iter().map(|&i| unc[i]).collect(),
    }
}

fn bounds(points: &[Point3]) -> (Point3, Point3) {
    points.iter().fold(
        (Point3::repeat(f64::INFINITY), Point3::repeat(f64::NEG_INFINITY)),
        |(lo, hi), p| (lo.inf(p), hi.sup(p)),
    )
}
