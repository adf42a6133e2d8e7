//! Generalized-ICP between a ground cloud (source) and an aerial cloud
//! (target), with the inverse Gauss-Newton Hessian as pose covariance.

use nalgebra::{Matrix3, Matrix6, SymmetricEigen, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::pca_of;
use crate::geometry::{hat, Point3, Pose6, SpatialIndex, Tangent6};

/// Smallest regularised covariance eigenvalue.
pub const EPS_REG: f64 = 1e-3;

/// Points with plane-regularised covariances and a search index.
pub struct GaussianCloud {
    pub points: Vec<Point3>,
    pub covariances: Vec<Matrix3<f64>>,
    pub index: SpatialIndex,
}

impl GaussianCloud {
    pub fn from_parts(points: Vec<Point3>, covariances: Vec<Matrix3<f64>>) -> Result<Self> {
        if points.len() != covariances.len() {
            return Err(Error::InvalidInput("points and covariances must align".into()));
        }
        let index = SpatialIndex::new(&points);
        Ok(Self {
            points,
            covariances,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Every covariance multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::from_parts(self.points.clone(), self.covariances.iter().map(|c| c * s).collect())
    }

    pub fn transformed(&self, pose: &Pose6) -> Result<Self> {
        let r = pose.rotation_matrix();
        Self::from_parts(
            self.points.iter().map(|p| pose.transform_point(p)).collect(),
            self.covariances.iter().map(|c| r * c * r.transpose()).collect(),
        )
    }

    /// Keeps every `stride`-th point (covariances unchanged).
    pub fn subsample(&self, max_points: usize) -> Result<Self> {
        if self.len() <= max_points || max_points == 0 {
            return Self::from_parts(self.points.clone(), self.covariances.clone());
        }
        let stride = self.len().div_ceil(max_points);
        let idx: Vec<usize> = (0..self.len()).step_by(stride).collect();
        Self::from_parts(
            idx.iter().map(|&i| self.points[i]).collect(),
            idx.iter().map(|&i| self.covariances[i]).collect(),
        )
    }
}

/// k-NN PCA covariances with eigenvalues replaced by (1, 1, ε).
pub fn estimate_point_covariances(points: &[Point3], k: usize) -> Result<GaussianCloud> {
    estimate_subset_covariances(points, k, usize::MAX)
}

/// As [`estimate_point_covariances`] for an evenly strided subset of at
/// most `max_points` points; neighbourhoods still use the full cloud.
pub fn estimate_subset_covariances(points: &[Point3], k: usize, max_points: usize) -> Result<GaussianCloud> {
    if k < 4 || points.len() < k {
        return Err(Error::InvalidInput(format!(
            "need N >= k >= 4 (N = {}, k = {k})",
            points.len()
        )));
    }
    let full = SpatialIndex::new(points);
    let stride = if points.len() > max_points && max_points > 0 {
        points.len().div_ceil(max_points)
    } else {
        1
    };
    let subset: Vec<Point3> = points.iter().step_by(stride).copied().collect();
    let index = if stride == 1 { full.clone() } else { SpatialIndex::new(&subset) };
    let mut buf = Vec::with_capacity(k);
    let covariances = subset
        .iter()
        .map(|p| {
            full.knn_into(p, k, &mut buf);
            let pca = pca_of(points, &buf);
            if pca.is_degenerate() {
                Matrix3::identity() * EPS_REG
            } else {
                let n = pca.normal();
                Matrix3::identity() - n * n.transpose() * (1.0 - EPS_REG)
            }
        })
        .collect();
    Ok(GaussianCloud {
        points: subset,
        covariances,
        index,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GicpConfig {
    pub max_corr_dist: f64,
    pub max_iterations: usize,
    pub step_tolerance: f64,
    pub relative_cost_tolerance: f64,
    pub max_halvings: usize,
    pub max_stalls: usize,
    pub min_correspondences: usize,
    pub fitness_tau: f64,
    pub max_condition: f64,
    pub covariance_k: usize,
}

impl Default for GicpConfig {
    fn default() -> Self {
        Self {
            max_corr_dist: 2.0,
            max_iterations: 64,
            step_tolerance: 1e-6,
            relative_cost_tolerance: 1e-9,
            max_halvings: 8,
            max_stalls: 3,
            min_correspondences: 6,
            fitness_tau: 0.5,
            max_condition: 1e8,
            covariance_k: 20,
        }
    }
}

impl GicpConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.max_corr_dist, self.step_tolerance, self.fitness_tau, self.max_condition];
        if positive.iter().any(|v| !(*v > 0.0)) || !(self.relative_cost_tolerance >= 0.0) {
            return Err(Error::Config("gicp tolerances and distances must be positive".into()));
        }
        if self.max_iterations == 0 || self.min_correspondences < 6 || self.covariance_k < 3 {
            return Err(Error::Config(
                "gicp needs max_iterations >= 1, min_correspondences >= 6 and covariance_k >= 3".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GicpFailure {
    TooFewCorrespondences,
    Diverged,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    pub pose: Pose6,
    /// Inverse Hessian; zero when the Hessian is singular.
    pub covariance: Matrix6<f64>,
    pub hessian: Matrix6<f64>,
    pub fitness: f64,
    pub iterations: usize,
    pub converged: bool,
    pub degenerate: bool,
    pub condition: f64,
    pub final_cost: f64,
    pub correspondences: usize,
    pub failure: Option<GicpFailure>,
}

impl RegistrationResult {
    /// Usable pose and covariance; hitting the iteration cap is allowed.
    pub fn is_success(&self) -> bool {
        self.failure.is_none() && !self.degenerate
    }
}

/// Source-target index pairs within `max_dist` under `pose`.
pub fn associate(source: &GaussianCloud, target: &GaussianCloud, pose: &Pose6, max_dist: f64) -> Vec<(usize, usize)> {
    let d2 = max_dist * max_dist;
    source
        .points
        .iter()
        .enumerate()
        .filter_map(|(i, g)| {
            let nb = target.index.nearest(&pose.transform_point(g))?;
            (nb.dist_sq <= d2).then_some((i, nb.index))
        })
        .collect()
}

/// The registration cost Σ dᵀ Ω d over fixed pairs, Ω evaluated at `pose`.
pub fn gicp_cost(source: &GaussianCloud, target: &GaussianCloud, pairs: &[(usize, usize)], pose: &Pose6) -> f64 {
    let r = pose.rotation_matrix();
    pairs
        .iter()
        .map(|&(i, j)| {
            let d = target.points[j] - pose.transform_point(&source.points[i]);
            let c = target.covariances[j] + r * source.covariances[i] * r.transpose();
            let omega = c.try_inverse().unwrap_or_else(Matrix3::zeros);
            d.dot(&(omega * d))
        })
        .sum()
}

/// Gauss-Newton normal equations: H = Σ Jᵀ Ω J and g = Σ Jᵀ Ω d.
pub fn normal_equations(
    source: &GaussianCloud,
    target: &GaussianCloud,
    pairs: &[(usize, usize)],
    pose: &Pose6,
) -> (Matrix6<f64>, Vector6<f64>, f64) {
    let r = pose.rotation_matrix();
    let mut h = Matrix6::zeros();
    let mut g = Vector6::zeros();
    let mut cost = 0.0;
    for &(i, j) in pairs {
        let p = &source.points[i];
        let d = target.points[j] - pose.transform_point(p);
        let c = target.covariances[j] + r * source.covariances[i] * r.transpose();
        let Some(omega) = c.try_inverse() else { continue };
        // d(d)/dξ for the right perturbation pose ∘ exp(ξ), ξ = [ω, v]
        let mut jac = nalgebra::Matrix3x6::zeros();
        jac.fixed_view_mut::<3, 3>(0, 0).copy_from(&(r * hat(p)));
        jac.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-r));
        let jt_omega = jac.transpose() * omega;
        h += jt_omega * jac;
        g += jt_omega * d;
        cost += d.dot(&(omega * d));
    }
    (h, g, cost)
}

fn fitness(source: &GaussianCloud, target: &GaussianCloud, pose: &Pose6, tau: f64) -> f64 {
    if source.is_empty() {
        return 0.0;
    }
    let t2 = tau * tau;
    let hits = source
        .points
        .iter()
        .filter(|g| target.index.nearest(&pose.transform_point(g)).is_some_and(|nb| nb.dist_sq <= t2))
        .count();
    hits as f64 / source.len() as f64
}

/// Λ = H⁻¹ with a conditioning check.
pub fn hessian_covariance(h: &Matrix6<f64>, max_condition: f64) -> Result<(Matrix6<f64>, f64)> {
    let sym = (h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 0.0) {
        return Err(Error::DegenerateHessian(f64::INFINITY));
    }
    let cond = max / min;
    if cond > max_condition {
        return Err(Error::DegenerateHessian(cond));
    }
    let inv = sym.try_inverse().ok_or(Error::DegenerateHessian(cond))?;
    Ok(((inv + inv.transpose()) * 0.5, cond))
}

/// Registers `source` (ground) onto `target` (aerial) starting at `init`;
/// the returned pose maps source coordinates into the target frame.
pub fn gicp_align(source: &GaussianCloud, target: &GaussianCloud, init: &Pose6, cfg: &GicpConfig) -> RegistrationResult {
    let mut pose = *init;
    let mut iterations = 0;
    let mut converged = false;
    let mut failure = None;
    let mut stalls = 0;
    let mut cost = f64::INFINITY;

    let fail = |pose: Pose6, f: GicpFailure, iterations: usize, cost: f64, n: usize| RegistrationResult {
        pose,
        covariance: Matrix6::zeros(),
        hessian: Matrix6::zeros(),
        fitness: fitness(source, target, &pose, cfg.fitness_tau),
        iterations,
        converged: false,
        degenerate: f == GicpFailure::Degenerate,
        condition: f64::INFINITY,
        final_cost: cost,
        correspondences: n,
        failure: Some(f),
    };
    if source.len() < cfg.min_correspondences || target.is_empty() || !init.is_finite() {
        return fail(pose, GicpFailure::TooFewCorrespondences, 0, cost, 0);
    }

    let mut prev_c0 = f64::INFINITY;
    let mut stall_start = pose;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let pairs = associate(source, target, &pose, cfg.max_corr_dist);
        if pairs.len() < cfg.min_correspondences {
            return fail(pose, GicpFailure::TooFewCorrespondences, iterations, cost, pairs.len());
        }
        let (h, g, c0) = normal_equations(source, target, &pairs, &pose);
        cost = c0;
        // cost after re-association failing to drop repeatedly: either
        // association flicker around the optimum or divergence
        if c0 >= prev_c0 {
            if stalls == 0 {
                stall_start = pose;
            }
            stalls += 1;
            if stalls >= cfg.max_stalls {
                let (ang, dist) = pose.error_to(&stall_start);
                if dist < 0.01 && ang < 0.1f64.to_radians() {
                    converged = true;
                } else {
                    failure = Some(GicpFailure::Diverged);
                }
                break;
            }
        } else {
            stalls = 0;
        }
        prev_c0 = c0;
        let Some(chol) = h.cholesky() else {
            return fail(pose, GicpFailure::Degenerate, iterations, cost, pairs.len());
        };
        let step = Tangent6(-chol.solve(&g));
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let cand = pose.retract(&step.scale(scale));
            let c1 = gicp_cost(source, target, &pairs, &cand);
            if c1 < c0 {
                accepted = Some((cand, c1));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, c1)) = accepted else {
            // no descent along the Gauss-Newton direction: stationary point
            converged = true;
            break;
        };
        pose = cand;
        cost = c1;
        if step.norm() * scale < cfg.step_tolerance || (c0 - c1) <= cfg.relative_cost_tolerance * c0 {
            converged = true;
            break;
        }
    }

    let pairs = associate(source, target, &pose, cfg.max_corr_dist);
    if pairs.len() < cfg.min_correspondences {
        return fail(pose, GicpFailure::TooFewCorrespondences, iterations, cost, pairs.len());
    }
    let (h, _, final_cost) = normal_equations(source, target, &pairs, &pose);
    let (covariance, condition, degenerate) = match hessian_covariance(&h, cfg.max_condition) {
        Ok((c, cond)) => (c, cond, false),
        Err(Error::DegenerateHessian(cond)) => (Matrix6::zeros(), cond, true),
        Err(_) => (Matrix6::zeros(), f64::INFINITY, true),
    };
    if degenerate && failure.is_none() {
        failure = Some(GicpFailure::Degenerate);
    }
    RegistrationResult {
        pose,
        covariance,
        hessian: h,
        fitness: fitness(source, target, &pose, cfg.fitness_tau),
        iterations,
        converged: converged && failure.is_none(),
        degenerate,
        condition,
        final_cost,
        correspondences: pairs.len(),
        failure,
    }
}

/// One line per registration, space separated:
/// `query target converged iterations fitness correspondences tx ty tz qx qy qz qw`
/// followed by the 21 upper-triangular entries of the covariance, row major.
pub fn write_registration_line<W: std::io::Write>(
    query: u64,
    target: u64,
    reg: &RegistrationResult,
    w: &mut W,
) -> Result<()> {
    let t = reg.pose.translation();
    let q = reg.pose.quat_xyzw();
    let mut line = format!(
        "{query} {target} {} {} {:.6} {} {:.9} {:.9} {:.9} {:.12} {:.12} {:.12} {:.12}",
        reg.converged as u8, reg.iterations, reg.fitness, reg.correspondences, t.x, t.y, t.z, q[0], q[1], q[2], q[3]
    );
    for i in 0..6 {
        for j in i..6 {
            line += &format!(" {:.9e}", reg.covariance[(i, j)]);
        }
    }
    writeln!(w, "{line}")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Non-degenerate synthetic scene: ground plane, two walls and posts.
    fn scene(rng: &mut ChaCha8Rng) -> Vec<Point3> {
        let mut pts = Vec::new();
        for _ in 0..1500 {
            pts.push(Point3::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), 0.0));
        }
        for _ in 0..600 {
            pts.push(Point3::new(8.0, rng.random_range(-10.0..10.0), rng.random_range(0.0..4.0)));
            pts.push(Point3::new(rng.random_range(-10.0..10.0), -7.0, rng.random_range(0.0..3.0)));
        }
        for c in [(-3.0, 2.0), (2.0, 5.0), (4.0, -2.0)] {
            for _ in 0..200 {
                let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                pts.push(Point3::new(c.0 + 0.4 * a.cos(), c.1 + 0.4 * a.sin(), rng.random_range(0.0..5.0)));
            }
        }
        pts
    }

    #[test]
    fn plane_covariance_normal_is_vertical() {
        let mut pts = Vec::new();
        for i in 0..20 {
            for j in 0..20 {
                pts.push(Point3::new(i as f64 * 0.2, j as f64 * 0.2, 0.0));
            }
        }
        let gc = estimate_point_covariances(&pts, 20).unwrap();
        for c in &gc.covariances {
            let eig = SymmetricEigen::new(*c);
            let k = eig.eigenvalues.imin();
            assert!((eig.eigenvalues[k] - EPS_REG).abs() < 1e-12);
            let n: Vector3<f64> = eig.eigenvectors.column(k).into();
            assert!(n.z.abs() > 1f64.to_radians().cos());
        }
    }

    #[test]
    fn identical_points_get_isotropic_covariance() {
        let pts = vec![Point3::new(1.0, 2.0, 3.0); 30];
        let gc = estimate_point_covariances(&pts, 20).unwrap();
        assert_eq!(gc.covariances[0], Matrix3::identity() * EPS_REG);
    }

    #[test]
    fn self_registration_at_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = scene(&mut rng);
        let gc = estimate_point_covariances(&pts, 20).unwrap();
        let res = gicp_align(&gc, &gc, &Pose6::identity(), &GicpConfig::default());
        assert!(res.is_success());
        let (ang, d) = res.pose.error_to(&Pose6::identity());
        assert!(ang < 1e-9 && d < 1e-9);
        assert!(res.final_cost < 1e-12);
    }

    #[test]
    fn recovers_small_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = scene(&mut rng);
        let src = estimate_point_covariances(&pts, 20).unwrap();
        let truth = Pose6::exp(&Tangent6::from_slice(&[0.05, -0.08, 0.12, 0.6, -0.5, 0.3]));
        let tgt = src.transformed(&truth).unwrap();
        let res = gicp_align(&src, &tgt, &Pose6::identity(), &GicpConfig::default());
        assert!(res.is_success(), "{:?}", res.failure);
        let (ang, d) = res.pose.error_to(&truth);
        assert!(d < 1e-3 && ang.to_degrees() < 0.01, "{d} {ang}");
    }

    #[test]
    fn covariance_scales_with_point_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = scene(&mut rng);
        let src = estimate_point_covariances(&pts, 20).unwrap();
        let a = gicp_align(&src, &src, &Pose6::identity(), &GicpConfig::default());
        let s2 = src.scaled(2.0).unwrap();
        let b = gicp_align(&s2, &s2, &Pose6::identity(), &GicpConfig::default());
        let rel = (b.covariance - a.covariance * 2.0).norm() / a.covariance.norm();
        assert!(rel < 1e-9, "{rel}");
        assert!(a.covariance.cholesky().is_some());
    }

    #[test]
    fn single_plane_is_weak_in_plane_and_line_is_degenerate() {
        let mut pts = Vec::new();
        for i in 0..30 {
            for j in 0..30 {
                pts.push(Point3::new(i as f64 * 0.3, j as f64 * 0.3, 0.0));
            }
        }
        let gc = estimate_point_covariances(&pts, 20).unwrap();
        let res = gicp_align(&gc, &gc, &Pose6::identity(), &GicpConfig::default());
        let normal_var = res.covariance[(5, 5)];
        assert!(normal_var.is_finite() && normal_var > 0.0);
        assert!(res.covariance[(3, 3)] > 100.0 * normal_var);
        assert!(res.covariance[(2, 2)] > 100.0 * res.covariance[(0, 0)]);

        let line: Vec<Point3> = (0..200).map(|i| Point3::new(0.0, 0.0, i as f64 * 0.05)).collect();
        let gc = estimate_point_covariances(&line, 20).unwrap();
        let res = gicp_align(&gc, &gc, &Pose6::identity(), &GicpConfig::default());
        assert!(res.degenerate);
        assert!(!res.is_success());
    }

    #[test]
    fn too_few_correspondences_fail() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts = scene(&mut rng);
        let gc = estimate_point_covariances(&pts, 20).unwrap();
        let far = Pose6::from_translation(Vector3::new(100.0, 0.0, 0.0));
        let res = gicp_align(&gc, &gc, &far, &GicpConfig::default());
        assert_eq!(res.failure, Some(GicpFailure::TooFewCorrespondences));
    }

    #[test]
    fn equivariant_under_target_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts = scene(&mut rng);
        let src = estimate_point_covariances(&pts, 20).unwrap();
        let truth = Pose6::exp(&Tangent6::from_slice(&[0.02, 0.01, -0.1, 0.3, 0.4, -0.2]));
        let tgt = src.transformed(&truth).unwrap();
        let g = Pose6::exp(&Tangent6::from_slice(&[0.3, -0.2, 1.0, 5.0, -3.0, 2.0]));
        let tgt_g = tgt.transformed(&g).unwrap();
        let a = gicp_align(&src, &tgt, &Pose6::identity(), &GicpConfig::default());
        let b = gicp_align(&src, &tgt_g, &g, &GicpConfig::default());
        let (ang, d) = b.pose.error_to(&(g * a.pose));
        assert!(ang < 1e-6 && d < 1e-6);
    }
}
