//! Fixed-lag Gauss-Newton smoother over SE(3) states with prior, odometry
//! and map factors.
//!
//! Every pose measurement has the residual `log(meas⁻¹ ∘ pred)` and states
//! are perturbed on the right, `x ∘ exp(δ)`. Costs are `Σ rᵀ Ω r`.

use nalgebra::{DMatrix, DVector, Matrix6, Vector6};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::geometry::{so3_right_jacobian_inv, Pose6, Tangent6};

#[derive(Debug, Clone, PartialEq)]
pub struct StateNode {
    pub id: u64,
    pub pose: Pose6,
    pub timestamp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorFactor {
    pub node: u64,
    pub pose: Pose6,
    pub information: Matrix6<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdomFactor {
    pub from: u64,
    pub to: u64,
    pub delta: Pose6,
    pub information: Matrix6<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapFactor {
    pub node: u64,
    pub pose: Pose6,
    pub information: Matrix6<f64>,
    pub fitness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmootherParams {
    /// Number of states kept in the window.
    pub lag: usize,
    pub max_iterations: usize,
    pub step_tolerance: f64,
    /// Chi-square quantile used by the map-factor gate.
    pub gate_probability: f64,
}

impl Default for SmootherParams {
    fn default() -> Self {
        Self {
            lag: 25,
            max_iterations: 50,
            step_tolerance: 1e-8,
            gate_probability: 0.999,
        }
    }
}

impl SmootherParams {
    pub fn validate(&self) -> Result<()> {
        if self.lag < 2 {
            return Err(Error::Config("smoother lag must be at least 2".into()));
        }
        if !(self.gate_probability > 0.0 && self.gate_probability < 1.0) {
            return Err(Error::Config("gate_probability must lie in (0, 1)".into()));
        }
        if self.max_iterations == 0 || !(self.step_tolerance > 0.0) {
            return Err(Error::Config("max_iterations and step_tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeReport {
    pub iterations: usize,
    pub converged: bool,
    pub initial_cost: f64,
    pub final_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateDecision {
    /// Squared Mahalanobis distance.
    pub distance: f64,
    pub threshold: f64,
    pub accepted: bool,
}

/// Chi-square quantile for a 6-DoF pose residual.
pub fn chi2_threshold(probability: f64) -> f64 {
    ChiSquared::new(6.0).expect("6 degrees of freedom").inverse_cdf(probability)
}

/// `∂ log(E ∘ exp(δ)) / ∂δ` at δ = 0.
fn residual_jacobian(e: &Pose6, r: &Tangent6) -> Matrix6<f64> {
    let mut j = Matrix6::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&so3_right_jacobian_inv(&r.rot()));
    j.fixed_view_mut::<3, 3>(3, 3).copy_from(&e.rotation_matrix());
    j
}

/// Residual and Jacobian of a unary pose measurement.
pub fn unary_residual(meas: &Pose6, x: &Pose6) -> Result<(Vector6<f64>, Matrix6<f64>)> {
    let e = meas.between(x);
    let r = e.log()?;
    Ok((r.0, residual_jacobian(&e, &r)))
}

/// Residual of `log(delta⁻¹ ∘ xi⁻¹ ∘ xj)` with Jacobians wrt `xi` and `xj`.
pub fn odom_residual(delta: &Pose6, xi: &Pose6, xj: &Pose6) -> Result<(Vector6<f64>, Matrix6<f64>, Matrix6<f64>)> {
    let p = xi.between(xj);
    let e = delta.between(&p);
    let r = e.log()?;
    let jj = residual_jacobian(&e, &r);
    let ji = -jj * Pose6::perturbation_transfer(&p);
    Ok((r.0, ji, jj))
}

fn symmetrize(m: &Matrix6<f64>) -> Matrix6<f64> {
    (m + m.transpose()) * 0.5
}

/// Normal equations over a subset of nodes.
struct System {
    h: DMatrix<f64>,
    g: DVector<f64>,
    cost: f64,
}

impl System {
    fn new(n: usize) -> Self {
        Self {
            h: DMatrix::zeros(6 * n, 6 * n),
            g: DVector::zeros(6 * n),
            cost: 0.0,
        }
    }

    fn add_unary(&mut self, i: usize, r: &Vector6<f64>, j: &Matrix6<f64>, info: &Matrix6<f64>) {
        let jt_w = j.transpose() * info;
        let mut hb = self.h.view_mut((6 * i, 6 * i), (6, 6));
        hb += jt_w * j;
        let mut gb = self.g.rows_mut(6 * i, 6);
        gb += jt_w * r;
        self.cost += (r.transpose() * info * r)[0];
    }

    #[allow(clippy::too_many_arguments)]
    fn add_binary(
        &mut self,
        a: usize,
        b: usize,
        r: &Vector6<f64>,
        ja: &Matrix6<f64>,
        jb: &Matrix6<f64>,
        info: &Matrix6<f64>,
    ) {
        let wa = ja.transpose() * info;
        let wb = jb.transpose() * info;
        for (p, wp) in [(a, &wa), (b, &wb)] {
            for (q, jq) in [(a, ja), (b, jb)] {
                let mut hb = self.h.view_mut((6 * p, 6 * q), (6, 6));
                hb += wp * jq;
            }
            let mut gb = self.g.rows_mut(6 * p, 6);
            gb += wp * r;
        }
        self.cost += (r.transpose() * info * r)[0];
    }
}

fn check_information(info: &Matrix6<f64>) -> Result<()> {
    if !info.iter().all(|v| v.is_finite()) || (info - info.transpose()).amax() > 1e-9 * info.amax().max(1.0) {
        return Err(Error::InvalidInput("information must be finite and symmetric".into()));
    }
    if info.cholesky().is_none() {
        return Err(Error::InvalidInput("information must be positive definite".into()));
    }
    Ok(())
}

/// Sliding-window pose graph. States enter through [`FactorGraph::add_prior`]
/// (first state) and [`FactorGraph::add_odom_factor`] (every later state).
#[derive(Debug, Clone)]
pub struct FactorGraph {
    params: SmootherParams,
    nodes: Vec<StateNode>,
    priors: Vec<PriorFactor>,
    odoms: Vec<OdomFactor>,
    maps: Vec<MapFactor>,
}

impl FactorGraph {
    pub fn new(params: SmootherParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            nodes: Vec::new(),
            priors: Vec::new(),
            odoms: Vec::new(),
            maps: Vec::new(),
        })
    }

    pub fn params(&self) -> &SmootherParams {
        &self.params
    }

    pub fn nodes(&self) -> &[StateNode] {
        &self.nodes
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn newest(&self) -> Option<&StateNode> {
        self.nodes.last()
    }

    pub fn priors(&self) -> &[PriorFactor] {
        &self.priors
    }

    pub fn odom_factors(&self) -> &[OdomFactor] {
        &self.odoms
    }

    pub fn map_factors(&self) -> &[MapFactor] {
        &self.maps
    }

    fn position(&self, id: u64) -> Option<usize> {
        self.nodes.binary_search_by_key(&id, |n| n.id).ok()
    }

    pub fn node(&self, id: u64) -> Option<&StateNode> {
        self.position(id).map(|i| &self.nodes[i])
    }

    /// Window state closest in time; ties go to the earlier state.
    pub fn nearest_node(&self, timestamp: f64) -> Option<&StateNode> {
        self.nodes.iter().min_by(|a, b| {
            (a.timestamp - timestamp)
                .abs()
                .partial_cmp(&(b.timestamp - timestamp).abs())
                .unwrap()
                .then(a.id.cmp(&b.id))
        })
    }

    /// Adds a prior; on an empty graph this also creates the state.
    pub fn add_prior(&mut self, node: u64, timestamp: f64, pose: Pose6, information: Matrix6<f64>) -> Result<()> {
        check_information(&information)?;
        if self.nodes.is_empty() {
            self.nodes.push(StateNode {
                id: node,
                pose,
                timestamp,
            });
        } else if self.position(node).is_none() {
            return Err(Error::NodeOutsideWindow(node));
        }
        self.priors.push(PriorFactor {
            node,
            pose,
            information,
        });
        Ok(())
    }

    /// Appends state `to` after the newest state `from`, initialised by
    /// dead reckoning.
    pub fn add_odom_factor(
        &mut self,
        from: u64,
        to: u64,
        timestamp: f64,
        delta: Pose6,
        information: Matrix6<f64>,
    ) -> Result<()> {
        check_information(&information)?;
        let last = self.nodes.last().ok_or(Error::NodeOutsideWindow(from))?;
        if last.id != from {
            return Err(Error::InvalidInput(format!(
                "odometry must extend the newest state {} (got {from})",
                last.id
            )));
        }
        if to <= from || timestamp < last.timestamp {
            return Err(Error::InvalidInput("state ids and timestamps must increase".into()));
        }
        let pose = last.pose.compose(&delta);
        self.nodes.push(StateNode { id: to, pose, timestamp });
        self.odoms.push(OdomFactor {
            from,
            to,
            delta,
            information,
        });
        Ok(())
    }

    pub fn add_map_factor(&mut self, factor: MapFactor) -> Result<()> {
        check_information(&factor.information)?;
        if self.position(factor.node).is_none() {
            return Err(Error::NodeOutsideWindow(factor.node));
        }
        self.maps.push(factor);
        Ok(())
    }

    fn linearize(&self) -> Result<System> {
        let mut sys = System::new(self.nodes.len());
        let unary = self
            .priors
            .iter()
            .map(|p| (p.node, &p.pose, &p.information))
            .chain(self.maps.iter().map(|m| (m.node, &m.pose, &m.information)));
        for (node, pose, info) in unary {
            let i = self.position(node).expect("factor references a window state");
            let (r, j) = unary_residual(pose, &self.nodes[i].pose)?;
            sys.add_unary(i, &r, &j, info);
        }
        for o in &self.odoms {
            let a = self.position(o.from).expect("factor references a window state");
            let b = self.position(o.to).expect("factor references a window state");
            let (r, ja, jb) = odom_residual(&o.delta, &self.nodes[a].pose, &self.nodes[b].pose)?;
            sys.add_binary(a, b, &r, &ja, &jb, &o.information);
        }
        Ok(sys)
    }

    /// Total cost at the current estimates.
    pub fn cost(&self) -> Result<f64> {
        Ok(self.linearize()?.cost)
    }

    /// Gauss-Newton on all window states.
    pub fn optimize(&mut self) -> Result<OptimizeReport> {
        if self.priors.is_empty() {
            return Err(Error::NoPrior);
        }
        let mut report = OptimizeReport {
            iterations: 0,
            converged: false,
            initial_cost: f64::NAN,
            final_cost: f64::NAN,
        };
        while report.iterations < self.params.max_iterations {
            let sys = self.linearize()?;
            if report.iterations == 0 {
                report.initial_cost = sys.cost;
            }
            report.final_cost = sys.cost;
            let chol = sys.h.cholesky().ok_or(Error::IndefiniteSystem)?;
            let step = chol.solve(&(-&sys.g));
            report.iterations += 1;
            for (k, node) in self.nodes.iter_mut().enumerate() {
                let d = Vector6::from_iterator(step.rows(6 * k, 6).iter().copied());
                node.pose = node.pose.retract(&Tangent6(d));
            }
            if step.norm() < self.params.step_tolerance {
                report.converged = true;
                break;
            }
        }
        report.final_cost = self.cost()?;
        if !report.converged {
            log::warn!("smoother stopped after {} iterations without converging", report.iterations);
        }
        Ok(report)
    }

    /// Marginal covariances of the window states at the current estimates.
    pub fn marginals(&self) -> Result<Vec<(u64, Matrix6<f64>)>> {
        if self.priors.is_empty() {
            return Err(Error::NoPrior);
        }
        let sys = self.linearize()?;
        let inv = sys.h.cholesky().ok_or(Error::IndefiniteSystem)?.inverse();
        Ok(self
            .nodes
            .iter()
            .enumerate()
            .map(|(k, n)| (n.id, symmetrize(&inv.fixed_view::<6, 6>(6 * k, 6 * k).into_owned())))
            .collect())
    }

    pub fn marginal(&self, id: u64) -> Result<Matrix6<f64>> {
        let k = self.position(id).ok_or(Error::NodeOutsideWindow(id))?;
        Ok(self.marginals()?[k].1)
    }

    /// Chi-square test of a candidate map factor against the current
    /// estimate and its marginal.
    pub fn gate_map_factor(&self, candidate: &MapFactor) -> Result<GateDecision> {
        let k = self.position(candidate.node).ok_or(Error::NodeOutsideWindow(candidate.node))?;
        let marginal = self.marginals()?[k].1;
        let meas_cov = candidate.information.cholesky().ok_or(Error::IndefiniteSystem)?.inverse();
        let (r, _) = unary_residual(&candidate.pose, &self.nodes[k].pose)?;
        let s = symmetrize(&(meas_cov + marginal));
        let s_chol = s.cholesky().ok_or(Error::IndefiniteSystem)?;
        let distance = r.dot(&s_chol.solve(&r));
        let threshold = chi2_threshold(self.params.gate_probability);
        Ok(GateDecision {
            distance,
            threshold,
            accepted: distance <= threshold,
        })
    }

    /// Marginalises states older than the newest `lag` into a prior on the
    /// oldest kept state; returns the removed states.
    pub fn slide_window(&mut self) -> Result<Vec<StateNode>> {
        let lag = self.params.lag;
        if self.nodes.len() <= lag {
            return Ok(Vec::new());
        }
        let cut = self.nodes.len() - lag;
        let boundary = self.nodes[cut].id;
        let removed_max = self.nodes[cut - 1].id;
        let gone = |id: u64| id <= removed_max;
        // local system over the removed states plus the boundary state (last slot)
        let n = cut + 1;
        let mut sys = System::new(n);
        let unary = self
            .priors
            .iter()
            .map(|p| (p.node, &p.pose, &p.information))
            .chain(self.maps.iter().map(|m| (m.node, &m.pose, &m.information)))
            .filter(|(node, _, _)| gone(*node));
        for (node, pose, info) in unary {
            let i = self.position(node).unwrap();
            let (r, j) = unary_residual(pose, &self.nodes[i].pose)?;
            sys.add_unary(i, &r, &j, info);
        }
        for o in self.odoms.iter().filter(|o| gone(o.from)) {
            let a = self.position(o.from).unwrap();
            let b = self.position(o.to).unwrap();
            debug_assert!(b <= cut);
            let (r, ja, jb) = odom_residual(&o.delta, &self.nodes[a].pose, &self.nodes[b].pose)?;
            sys.add_binary(a, b, &r, &ja, &jb, &o.information);
        }
        let m = 6 * cut;
        let hmm = sys.h.view((0, 0), (m, m)).into_owned();
        let hmk = sys.h.view((0, m), (m, 6)).into_owned();
        let hkk = sys.h.view((m, m), (6, 6)).into_owned();
        let gm = sys.g.rows(0, m).into_owned();
        let gk = sys.g.rows(m, 6).into_owned();
        let chol = hmm.cholesky().ok_or(Error::IndefiniteSystem)?;
        let x = chol.solve(&hmk);
        let y = chol.solve(&gm);
        let h_new = hkk - hmk.transpose() * &x;
        let g_new = gk - hmk.transpose() * &y;
        let info = symmetrize(&Matrix6::from_iterator(h_new.iter().copied()));
        let info_chol = info.cholesky().ok_or(Error::IndefiniteSystem)?;
        // quadratic ½δᵀHδ + gᵀδ has its minimum at δ = −H⁻¹g
        let g6 = Vector6::from_iterator(g_new.iter().copied());
        let shift = -info_chol.solve(&g6);
        let boundary_pose = self.nodes[cut].pose;
        let prior_pose = boundary_pose.retract(&Tangent6(shift));

        let removed: Vec<StateNode> = self.nodes.drain(..cut).collect();
        self.priors.retain(|p| !gone(p.node));
        self.maps.retain(|f| !gone(f.node));
        self.odoms.retain(|o| !gone(o.from));
        self.priors.push(PriorFactor {
            node: boundary,
            pose: prior_pose,
            information: info,
        });
        Ok(removed)
    }
}

/// Covariance of `a ∘ b` from independent covariances of `a` and `b`
/// (right perturbations).
pub fn compose_covariance(cov_a: &Matrix6<f64>, b: &Pose6, cov_b: &Matrix6<f64>) -> Matrix6<f64> {
    let t = Pose6::perturbation_transfer(b);
    symmetrize(&(t * cov_a * t.transpose() + cov_b))
}

/// Covariance of `a ∘ b` for a right perturbation of `a` only.
pub fn transfer_covariance(cov: &Matrix6<f64>, b: &Pose6) -> Matrix6<f64> {
    let t = Pose6::perturbation_transfer(b);
    symmetrize(&(t * cov * t.transpose()))
}

/// Information matrix from a covariance, symmetrised.
pub fn information_from_covariance(cov: &Matrix6<f64>) -> Result<Matrix6<f64>> {
    let inv = cov.cholesky().ok_or(Error::IndefiniteSystem)?.inverse();
    Ok(symmetrize(&inv))
}

pub fn isotropic_information(sigma_rot: f64, sigma_trans: f64) -> Matrix6<f64> {
    let (a, b) = (sigma_rot.powi(-2), sigma_trans.powi(-2));
    Matrix6::from_diagonal(&Vector6::new(a, a, a, b, b, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn random_tangent(rng: &mut ChaCha8Rng, rot: f64, trans: f64) -> Tangent6 {
        Tangent6::from_slice(&std::array::from_fn(|i| {
            if i < 3 {
                rng.random_range(-rot..rot)
            } else {
                rng.random_range(-trans..trans)
            }
        }))
    }

    fn noisy(rng: &mut ChaCha8Rng, p: &Pose6, sr: f64, st: f64) -> Pose6 {
        let nr = Normal::new(0.0, sr).unwrap();
        let nt = Normal::new(0.0, st).unwrap();
        let v: [f64; 6] = std::array::from_fn(|i| if i < 3 { nr.sample(rng) } else { nt.sample(rng) });
        p.retract(&Tangent6::from_slice(&v))
    }

    fn fd_jacobian(f: impl Fn(&Tangent6) -> Vector6<f64>) -> Matrix6<f64> {
        let h = 1e-6;
        let mut j = Matrix6::zeros();
        for c in 0..6 {
            let mut e = [0.0; 6];
            e[c] = h;
            let p = f(&Tangent6::from_slice(&e));
            e[c] = -h;
            let m = f(&Tangent6::from_slice(&e));
            j.set_column(c, &((p - m) / (2.0 * h)));
        }
        j
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let meas = Pose6::exp(&random_tangent(&mut rng, 1.0, 10.0));
            let xi = Pose6::exp(&random_tangent(&mut rng, 1.0, 10.0));
            let xj = xi.compose(&meas).retract(&random_tangent(&mut rng, 0.3, 1.0));
            let (_, j) = unary_residual(&meas, &xj).unwrap();
            let fd = fd_jacobian(|d| unary_residual(&meas, &xj.retract(d)).unwrap().0);
            assert!((j - fd).amax() < 1e-6, "unary {}", (j - fd).amax());
            let (_, ji, jj) = odom_residual(&meas, &xi, &xj).unwrap();
            let fdi = fd_jacobian(|d| odom_residual(&meas, &xi.retract(d), &xj).unwrap().0);
            let fdj = fd_jacobian(|d| odom_residual(&meas, &xi, &xj.retract(d)).unwrap().0);
            assert!((ji - fdi).amax() < 1e-6, "from {}", (ji - fdi).amax());
            assert!((jj - fdj).amax() < 1e-6, "to {}", (jj - fdj).amax());
        }
    }

    fn graph(lag: usize) -> FactorGraph {
        FactorGraph::new(SmootherParams {
            lag,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn single_prior_is_a_fixed_point() {
        let p = Pose6::from_yaw(0.4, Vector3::new(1.0, 2.0, 3.0));
        let mut g = graph(25);
        g.add_prior(0, 0.0, p, Matrix6::identity()).unwrap();
        g.optimize().unwrap();
        let (er, et) = g.nodes()[0].pose.error_to(&p);
        assert!(er < 1e-12 && et < 1e-12);
    }

    #[test]
    fn chain_composition_and_initialisation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let start = Pose6::exp(&random_tangent(&mut rng, 1.0, 5.0));
        let mut g = graph(25);
        g.add_prior(0, 0.0, start, Matrix6::identity()).unwrap();
        let mut expected = start;
        for k in 0..9u64 {
            let d = Pose6::exp(&random_tangent(&mut rng, 0.2, 2.0));
            expected = expected.compose(&d);
            g.add_odom_factor(k, k + 1, k as f64 + 1.0, d, Matrix6::identity()).unwrap();
            let (er, et) = g.newest().unwrap().pose.error_to(&expected);
            assert!(er < 1e-12 && et < 1e-12);
        }
        g.optimize().unwrap();
        let (er, et) = g.newest().unwrap().pose.error_to(&expected);
        assert!(er < 1e-9 && et < 1e-9);
    }

    #[test]
    fn optimize_requires_prior() {
        let mut g = graph(25);
        assert!(matches!(g.optimize(), Err(Error::NoPrior)));
    }

    #[test]
    fn map_factor_outside_window_is_rejected() {
        let mut g = graph(25);
        g.add_prior(3, 0.0, Pose6::identity(), Matrix6::identity()).unwrap();
        let f = MapFactor {
            node: 2,
            pose: Pose6::identity(),
            information: Matrix6::identity(),
            fitness: 1.0,
        };
        assert!(matches!(g.add_map_factor(f), Err(Error::NodeOutsideWindow(2))));
    }

    #[test]
    fn bad_information_is_rejected() {
        let mut g = graph(25);
        let mut info = Matrix6::identity();
        info[(0, 0)] = -1.0;
        assert!(g.add_prior(0, 0.0, Pose6::identity(), info).is_err());
    }

    #[test]
    fn information_scaling_keeps_argmin_and_scales_marginals() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let build = |s: f64, rng: &mut ChaCha8Rng| {
            let mut g = graph(50);
            g.add_prior(0, 0.0, Pose6::identity(), Matrix6::identity() * s).unwrap();
            for k in 0..10u64 {
                let d = Pose6::exp(&random_tangent(rng, 0.2, 2.0));
                g.add_odom_factor(k, k + 1, k as f64 + 1.0, d, Matrix6::identity() * 4.0 * s).unwrap();
                if k % 3 == 0 {
                    let p = noisy(rng, &g.newest().unwrap().pose, 0.05, 0.5);
                    g.add_map_factor(MapFactor {
                        node: k + 1,
                        pose: p,
                        information: Matrix6::identity() * 2.0 * s,
                        fitness: 1.0,
                    })
                    .unwrap();
                }
            }
            g.optimize().unwrap();
            g
        };
        let a = build(1.0, &mut rng.clone());
        let b = build(7.0, &mut rng);
        for (x, y) in a.nodes().iter().zip(b.nodes()) {
            let (er, et) = x.pose.error_to(&y.pose);
            assert!(er < 1e-9 && et < 1e-9);
        }
        for ((_, ca), (_, cb)) in a.marginals().unwrap().iter().zip(b.marginals().unwrap()) {
            assert!((ca / 7.0 - cb).amax() < 1e-9 * ca.amax());
        }
    }

    #[test]
    fn gate_accepts_agreement_and_rejects_far_factor() {
        let mut g = graph(25);
        let p = Pose6::from_yaw(0.3, Vector3::new(4.0, 5.0, 0.0));
        g.add_prior(0, 0.0, p, isotropic_information(0.01, 0.1)).unwrap();
        let ok = MapFactor {
            node: 0,
            pose: p,
            information: isotropic_information(0.01, 0.1),
            fitness: 1.0,
        };
        assert!(g.gate_map_factor(&ok).unwrap().accepted);
        let far = MapFactor {
            pose: p.compose(&Pose6::from_translation(Vector3::new(10.0, 0.0, 0.0))),
            ..ok
        };
        let d = g.gate_map_factor(&far).unwrap();
        assert!(!d.accepted && d.distance > d.threshold);
        assert!((d.threshold - 22.457744484825326).abs() < 1e-6);
    }

    #[test]
    fn lag_larger_than_graph_is_noop() {
        let mut g = graph(10);
        g.add_prior(0, 0.0, Pose6::identity(), Matrix6::identity()).unwrap();
        for k in 0..5u64 {
            g.add_odom_factor(k, k + 1, k as f64 + 1.0, Pose6::identity(), Matrix6::identity()).unwrap();
        }
        assert!(g.slide_window().unwrap().is_empty());
        assert_eq!(g.nodes().len(), 6);
        assert_eq!(g.priors().len(), 1);
    }

    #[test]
    fn marginal_covariance_composes_along_chain() {
        let d = Pose6::from_yaw(0.1, Vector3::new(1.0, 0.0, 0.0));
        let mut g = graph(25);
        let c0 = Matrix6::identity() * 0.01;
        let c1 = Matrix6::identity() * 0.04;
        g.add_prior(0, 0.0, Pose6::identity(), c0.try_inverse().unwrap()).unwrap();
        g.add_odom_factor(0, 1, 1.0, d, c1.try_inverse().unwrap()).unwrap();
        g.optimize().unwrap();
        let expected = compose_covariance(&c0, &d, &c1);
        assert!((g.marginal(1).unwrap() - expected).amax() < 1e-12);
    }

    #[test]
    fn nearest_node_ties_go_earlier() {
        let mut g = graph(25);
        g.add_prior(0, 0.0, Pose6::identity(), Matrix6::identity()).unwrap();
        g.add_odom_factor(0, 1, 1.0, Pose6::identity(), Matrix6::identity()).unwrap();
        assert_eq!(g.nearest_node(0.5).unwrap().id, 0);
        assert_eq!(g.nearest_node(0.6).unwrap().id, 1);
    }
}
