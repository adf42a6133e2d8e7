use nalgebra::{Matrix3, Vector3};

use super::pose::{Point3, Pose6};
use crate::error::{Error, Result};

/// Relative threshold on the second singular value of the cross-covariance.
const RANK_TOL: f64 = 1e-10;

/// Rigid (scale fixed to 1) least-squares fit of `T` with `T·reference ≈ estimate`.
///
/// Minimizes `Σ ‖estimate_i − T·reference_i‖²`. Applying `T⁻¹` to the
/// estimate aligns it onto the reference.
pub fn umeyama_points(estimate: &[Point3], reference: &[Point3]) -> Result<Pose6> {
    if estimate.len() != reference.len() {
        return Err(Error::InvalidInput(format!(
            "length mismatch: {} vs {}",
            estimate.len(),
            reference.len()
        )));
    }
    if estimate.len() < 3 {
        return Err(Error::RankDeficient(format!(
            "{} correspondences, need at least 3",
            estimate.len()
        )));
    }
    let n = estimate.len() as f64;
    let mu_e = estimate.iter().sum::<Vector3<f64>>() / n;
    let mu_r = reference.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for (e, r) in estimate.iter().zip(reference) {
        cov += (e - mu_e) * (r - mu_r).transpose();
    }
    cov /= n;
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    // singular values are not sorted by nalgebra
    let mut s = [svd.singular_values[0], svd.singular_values[1], svd.singular_values[2]];
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if !(s[0] > 0.0) || s[1] <= RANK_TOL * s[0] {
        return Err(Error::RankDeficient(
            "correspondences are collinear or coincident".into(),
        ));
    }
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        // flip the axis of the smallest singular value
        let smallest = (0..3)
            .min_by(|&a, &b| {
                svd.singular_values[a]
                    .partial_cmp(&svd.singular_values[b])
                    .unwrap()
            })
            .unwrap();
        d[(smallest, smallest)] = -1.0;
    }
    let r = u * d * v_t;
    let t = mu_e - r * mu_r;
    Ok(Pose6::from_matrix(&r, t))
}

/// Aligns trajectories by their translations: returns `T` with
/// `T·reference_k ≈ estimate_k`.
pub fn umeyama_align(estimate: &[Pose6], reference: &[Pose6]) -> Result<Pose6> {
    let e: Vec<Point3> = estimate.iter().map(|p| *p.translation()).collect();
    let r: Vec<Point3> = reference.iter().map(|p| *p.translation()).collect();
    umeyama_points(&e, &r)
}
