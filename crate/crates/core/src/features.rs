//! Per-point local geometry from k-nearest-neighbour PCA.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::geometry::{Neighbor, Point3, SpatialIndex};

/// Eigen-decomposition of a neighbourhood scatter matrix, eigenvalues
/// sorted descending.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalPca {
    pub mean: Point3,
    pub values: [f64; 3],
    /// Columns are the eigenvectors matching `values`.
    pub vectors: Matrix3<f64>,
    /// Distance to the farthest neighbour used.
    pub radius: f64,
}

impl LocalPca {
    pub fn principal(&self) -> Vector3<f64> {
        self.vectors.column(0).into()
    }

    pub fn normal(&self) -> Vector3<f64> {
        self.vectors.column(2).into()
    }

    pub fn linearity(&self) -> f64 {
        if self.values[0] <= 0.0 {
            0.0
        } else {
            (self.values[0] - self.values[1]) / self.values[0]
        }
    }

    pub fn planarity(&self) -> f64 {
        if self.values[0] <= 0.0 {
            0.0
        } else {
            (self.values[1] - self.values[2]) / self.values[0]
        }
    }

    /// Surface variation λ3 / (λ1 + λ2 + λ3).
    pub fn curvature(&self) -> f64 {
        let s: f64 = self.values.iter().sum();
        if s <= 0.0 {
            0.0
        } else {
            self.values[2] / s
        }
    }

    /// |cos| of the principal direction against the z axis.
    pub fn verticality(&self) -> f64 {
        self.principal().z.abs()
    }

    pub fn is_degenerate(&self) -> bool {
        self.values[0] <= 1e-18
    }
}

pub fn pca_of(points: &[Point3], neighbors: &[Neighbor]) -> LocalPca {
    let n = neighbors.len().max(1) as f64;
    let mean = neighbors.iter().map(|nb| points[nb.index]).sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for nb in neighbors {
        let d = points[nb.index] - mean;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap().then(a.cmp(&b)));
    let values = order.map(|i| eig.eigenvalues[i].max(0.0));
    let vectors = Matrix3::from_columns(&order.map(|i| eig.eigenvectors.column(i).into_owned()));
    let radius = neighbors.iter().map(|nb| nb.dist_sq).fold(0.0, f64::max).sqrt();
    LocalPca {
        mean,
        values,
        vectors,
        radius,
    }
}

/// PCA over the `k` nearest neighbours (including the point itself) of every point.
pub fn local_pca(points: &[Point3], index: &SpatialIndex, k: usize) -> Vec<LocalPca> {
    let mut buf = Vec::with_capacity(k);
    points
        .iter()
        .map(|p| {
            index.knn_into(p, k, &mut buf);
            pca_of(points, &buf)
        })
        .collect()
}
