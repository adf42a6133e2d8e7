use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::features::{AnalyzedCloud, DENSITY_RADIUS, PCA_K};
use crate::features::{pca_of, LocalPca};
use crate::geometry::{LabeledCloud, Point3, SpatialIndex};
use crate::error::{Error, Result};
use crate::semantics::KeypointSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DescriptorParams {
    pub local_radius: f64,
    pub local_min_neighbors: usize,
    pub radial_bins: usize,
    pub height_bins: usize,
    /// Principal-direction |cos| separating the two verticality bins.
    pub vertical_split: f64,
    pub global_dim: usize,
    pub gem_p: f64,
    pub projection_seed: u64,
    /// Normalisers for height and horizontal range in the global features.
    pub height_scale: f64,
    pub range_scale: f64,
    /// About one point in this many is pooled into the global descriptor.
    pub global_stride: usize,
}

impl Default for DescriptorParams {
    fn default() -> Self {
        Self {
            local_radius: 8.0,
            local_min_neighbors: 10,
            radial_bins: 4,
            height_bins: 4,
            vertical_split: 0.7,
            global_dim: 64,
            gem_p: 3.0,
            projection_seed: 2024,
            height_scale: 20.0,
            range_scale: 30.0,
            global_stride: 4,
        }
    }
}

impl DescriptorParams {
    pub fn local_dim(&self) -> usize {
        self.radial_bins * self.height_bins * 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.local_radius <= 0.0 || self.radial_bins == 0 || self.height_bins == 0 || self.global_dim == 0 {
            return Err(Error::Config("descriptor bins, radius and dimension must be positive".into()));
        }
        if self.global_stride == 0 {
            return Err(Error::Config("global_stride must be positive".into()));
        }
        if self.gem_p < 1.0 {
            return Err(Error::Config(format!("gem_p must be >= 1, got {}", self.gem_p)));
        }
        Ok(())
    }
}

/// Linear split of a continuous coordinate in [0, n) across two bins.
fn soft_bin(x: f64, n: usize) -> [(usize, f64); 2] {
    let x = (x - 0.5).clamp(0.0, n as f64 - 1.0);
    let lo = x.floor() as usize;
    let w = x - lo as f64;
    [(lo, 1.0 - w), ((lo + 1).min(n - 1), w)]
}

/// Yaw-invariant histogram over horizontal range, relative height and
/// neighbour verticality. `None` marks a keypoint with too few neighbours.
pub fn compute_local_descriptors(
    cloud: &AnalyzedCloud,
    kps: &KeypointSet,
    params: &DescriptorParams,
) -> Vec<Option<Vec<f64>>> {
    let r = params.local_radius;
    let (nr, nh) = (params.radial_bins, params.height_bins);
    kps.coords
        .iter()
        .map(|q| {
            let nbrs = cloud.index.within(q, r);
            if nbrs.len() < params.local_min_neighbors || cloud.pca.is_empty() {
                return None;
            }
            let mut h = vec![0.0; params.local_dim()];
            for n in &nbrs {
                let d = cloud.points[n.index] - q;
                let wgt = 1.0 / cloud.density[n.index].max(1) as f64;
                let rho = (d.x * d.x + d.y * d.y).sqrt() / r * nr as f64;
                let z = (d.z + r) / (2.0 * r) * nh as f64;
                let v = usize::from(cloud.pca[n.index].verticality() >= params.vertical_split);
                for (ri, rw) in soft_bin(rho, nr) {
                    for (zi, zw) in soft_bin(z, nh) {
                        h[(v * nr + ri) * nh + zi] += rw * zw * wgt;
                    }
                }
            }
            let norm = h.iter().map(|x| x * x).sum::<f64>().sqrt();
            (norm > 0.0).then(|| h.iter().map(|x| x / norm).collect())
        })
        .collect()
}

/// Generalized-mean pooling over rows; negative entries are clamped to zero.
pub fn gem_pool(features: &[Vec<f64>], p: f64) -> Result<Vec<f64>> {
    let first = features
        .first()
        .ok_or_else(|| Error::InvalidInput("cannot pool zero features".into()))?;
    if p < 1.0 {
        return Err(Error::InvalidInput(format!("pooling exponent must be >= 1, got {p}")));
    }
    let d = first.len();
    let mut acc = vec![0.0; d];
    for f in features {
        if f.len() != d {
            return Err(Error::InvalidInput("ragged feature rows".into()));
        }
        for (a, x) in acc.iter_mut().zip(f) {
            *a += x.max(0.0).powf(p);
        }
    }
    let k = features.len() as f64;
    Ok(acc.iter().map(|a| (a / k).powf(1.0 / p)).collect())
}

/// Number of per-point features entering the global head.
pub const POINT_FEATURES: usize = 6;

/// Seeded random lift from point features to the global dimension.
#[derive(Debug, Clone)]
pub struct Projection {
    weights: DMatrix<f64>,
    bias: DVector<f64>,
}

impl Projection {
    pub fn new(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = DMatrix::from_fn(dim, POINT_FEATURES, |_, _| StandardNormal.sample(&mut rng));
        let u = Uniform::new(-0.5, 0.5).unwrap();
        let bias = DVector::from_fn(dim, |_, _| u.sample(&mut rng));
        Self { weights, bias }
    }
}

fn point_feature(p: &Point3, f: &LocalPca, density: u32, floor: f64, params: &DescriptorParams) -> [f64; POINT_FEATURES] {
    let ball = std::f64::consts::PI * 4.0 / 3.0 * DENSITY_RADIUS.powi(3);
    [
        (p.z - floor) / params.height_scale,
        f.verticality(),
        f.linearity(),
        f.planarity(),
        (density as f64 / ball / 10.0).min(3.0),
        (p.x * p.x + p.y * p.y).sqrt() / params.range_scale,
    ]
}

fn pool(features: impl Iterator<Item = [f64; POINT_FEATURES]>, projection: &Projection, p: f64) -> Result<Vec<f64>> {
    let mut lifted: Vec<Vec<f64>> = features
        .map(|f| {
            let x = &projection.weights * DVector::from_row_slice(&f) + &projection.bias;
            x.iter().map(|v| v.max(0.0)).collect()
        })
        .collect();
    // Summation order must not depend on point order.
    lifted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    gem_pool(&lifted, p)
}

/// Order-independent subsampling: a point is pooled when a hash of its
/// coordinate bits falls in the first residue class.
fn pooled(p: &Point3, stride: usize) -> bool {
    let mut h: u64 = 0x9e37_79b9_7f4a_7c15;
    for x in p.iter() {
        h ^= x.to_bits();
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
    }
    h % stride as u64 == 0
}

/// The pooled subset; small clouds pool every point.
fn pooled_indices(points: &[Point3], stride: usize) -> Vec<usize> {
    let sel: Vec<usize> = (0..points.len()).filter(|&i| pooled(&points[i], stride)).collect();
    if sel.len() < 16 {
        (0..points.len()).collect()
    } else {
        sel
    }
}

fn check_size(n: usize) -> Result<()> {
    if n < 50 {
        return Err(Error::InvalidInput(format!(
            "global descriptor needs at least 50 points, got {n}"
        )));
    }
    Ok(())
}

fn floor_of(points: &[Point3]) -> f64 {
    points.iter().map(|p| p.z).fold(f64::INFINITY, f64::min)
}

/// GeM over randomly lifted per-point geometry of a hashed subset of about
/// one in `global_stride` points. Point features are expressed in the submap frame, so the
/// horizontal range is measured from the submap origin.
pub fn compute_global_descriptor(
    cloud: &AnalyzedCloud,
    projection: &Projection,
    params: &DescriptorParams,
) -> Result<Vec<f64>> {
    check_size(cloud.len())?;
    let floor = floor_of(&cloud.points);
    let feats = pooled_indices(&cloud.points, params.global_stride)
        .into_iter()
        .map(|i| point_feature(&cloud.points[i], &cloud.pca[i], cloud.density[i], floor, params));
    pool(feats, projection, params.gem_p)
}

/// Same value as [`compute_global_descriptor`] without analysing the
/// points that are not pooled.
pub fn global_descriptor_of(cloud: &LabeledCloud, projection: &Projection, params: &DescriptorParams) -> Result<Vec<f64>> {
    check_size(cloud.len())?;
    let points = &cloud.points;
    let index = SpatialIndex::new(points);
    let floor = floor_of(points);
    let k = PCA_K.min(points.len());
    let mut buf = Vec::with_capacity(k);
    let feats = pooled_indices(points, params.global_stride).into_iter().map(|i| {
        index.knn_into(&points[i], k, &mut buf);
        let f = pca_of(points, &buf);
        let density = index.count_within(&points[i], DENSITY_RADIUS) as u32;
        point_feature(&points[i], &f, density, floor, params)
    });
    pool(feats, projection, params.gem_p)
}

pub fn descriptor_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose6;
    use rand::Rng;

    #[test]
    fn gem_reductions() {
        let f = vec![vec![1.0], vec![3.0]];
        assert!((gem_pool(&f, 1.0).unwrap()[0] - 2.0).abs() < 1e-12);
        assert!((gem_pool(&f, 3.0).unwrap()[0] - 14f64.cbrt()).abs() < 1e-12);
        assert!((gem_pool(&f, 3.0).unwrap()[0] - 2.4101).abs() < 1e-4);
        assert!((gem_pool(&f, 100.0).unwrap()[0] - 3.0).abs() / 3.0 < 0.02);
        assert!(gem_pool(&[], 3.0).is_err());
    }

    fn random_cloud(seed: u64, n: usize) -> LabeledCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = Vec::new();
        for _ in 0..n / 2 {
            pts.push(Point3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-2.0..2.0)));
        }
        for _ in n / 2..n {
            pts.push(Point3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-2.0..2.0)));
        }
        LabeledCloud::new(pts)
    }

    #[test]
    fn local_descriptor_yaw_invariance() {
        let cloud = random_cloud(1, 600);
        let p = DescriptorParams::default();
        let kps = KeypointSet {
            coords: vec![Point3::zeros(), Point3::new(1.0, 0.5, 0.3)],
            uncertainty: vec![1.0, 1.0],
        };
        let a = compute_local_descriptors(&AnalyzedCloud::new(&cloud), &kps, &p);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for yaw in [std::f64::consts::FRAC_PI_2, rng.random_range(0.0..6.28)] {
            let t = Pose6::from_yaw(yaw, Point3::zeros());
            let rot = cloud.transformed(&t);
            let rk = KeypointSet {
                coords: kps.coords.iter().map(|q| t.transform_point(q)).collect(),
                uncertainty: kps.uncertainty.clone(),
            };
            let b = compute_local_descriptors(&AnalyzedCloud::new(&rot), &rk, &p);
            for (x, y) in a.iter().zip(&b) {
                let (x, y) = (x.as_ref().unwrap(), y.as_ref().unwrap());
                assert!((x.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-9);
                assert!(descriptor_distance(x, y) <= 0.05);
            }
        }
    }

    #[test]
    fn sparse_keypoint_is_excluded() {
        let cloud = random_cloud(2, 600);
        let kps = KeypointSet {
            coords: vec![Point3::new(50.0, 0.0, 0.0)],
            uncertainty: vec![1.0],
        };
        let d = compute_local_descriptors(&AnalyzedCloud::new(&cloud), &kps, &DescriptorParams::default());
        assert!(d[0].is_none());
    }

    #[test]
    fn global_descriptor_is_order_invariant() {
        let cloud = random_cloud(3, 400);
        let p = DescriptorParams::default();
        let proj = Projection::new(p.global_dim, p.projection_seed);
        let a = compute_global_descriptor(&AnalyzedCloud::new(&cloud), &proj, &p).unwrap();
        let mut rev = cloud.clone();
        rev.points.reverse();
        let b = compute_global_descriptor(&AnalyzedCloud::new(&rev), &proj, &p).unwrap();
        assert_eq!(a.len(), 64);
        assert!(descriptor_distance(&a, &b) < 1e-12);
        assert!(compute_global_descriptor(&AnalyzedCloud::new(&random_cloud(3, 20)), &proj, &p).is_err());
        assert_eq!(global_descriptor_of(&cloud, &proj, &p).unwrap(), a);
    }
}
