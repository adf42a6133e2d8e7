use crate::features::{local_pca, LocalPca};
use crate::geometry::{LabeledCloud, Point3, SpatialIndex};

/// Neighbourhood size for per-point PCA.
pub const PCA_K: usize = 15;

/// Radius of the per-point density count.
pub const DENSITY_RADIUS: f64 = 0.6;

/// A cloud with its search index and per-point PCA, shared by the detector
/// and both descriptor heads.
#[derive(Debug, Clone)]
pub struct AnalyzedCloud {
    pub points: Vec<Point3>,
    pub index: SpatialIndex,
    pub pca: Vec<LocalPca>,
    /// Points within [`DENSITY_RADIUS`], the point itself included.
    pub density: Vec<u32>,
}

impl AnalyzedCloud {
    pub fn new(cloud: &LabeledCloud) -> Self {
        let points = cloud.points.clone();
        let index = SpatialIndex::new(&points);
        let pca = if points.len() >= 3 {
            local_pca(&points, &index, PCA_K.min(points.len()))
        } else {
            Vec::new()
        };
        let density = points
            .iter()
            .map(|p| index.count_within(p, DENSITY_RADIUS) as u32)
            .collect();
        Self {
            points,
            index,
            pca,
            density,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Curvature times verticality of every point.
    pub fn saliency(&self) -> Vec<f64> {
        self.pca.iter().map(|f| f.curvature() * f.verticality()).collect()
    }
}
