use nalgebra::{Matrix3, Matrix6, UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::raycast::{Scene, SensorModel, View};
use super::world::ForestWorld;
use crate::error::{Error, Result};
use crate::geometry::{LabeledCloud, Pose6, Tangent6};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdometryModel {
    /// Scale error as a fraction of distance travelled.
    pub drift_rate: f64,
    /// Heading drift in degrees per metre travelled.
    pub rot_drift_rate: f64,
    pub noise_sigma_t: f64,
    pub noise_sigma_r: f64,
    pub seed: u64,
}

impl Default for OdometryModel {
    fn default() -> Self {
        Self {
            drift_rate: 0.01,
            rot_drift_rate: 0.005,
            noise_sigma_t: 0.01,
            noise_sigma_r: 0.001,
            seed: 11,
        }
    }
}

/// Smallest standard deviation put into a reported covariance, so that
/// noiseless odometry still yields invertible information.
pub const MIN_REPORTED_SIGMA: f64 = 1e-4;

impl OdometryModel {
    pub fn validate(&self) -> Result<()> {
        if [self.drift_rate, self.rot_drift_rate, self.noise_sigma_t, self.noise_sigma_r]
            .iter()
            .any(|v| !(*v >= 0.0))
        {
            return Err(Error::InvalidInput("odometry rates must be non-negative".into()));
        }
        Ok(())
    }

    pub fn covariance(&self) -> Matrix6<f64> {
        let sr = self.noise_sigma_r.max(MIN_REPORTED_SIGMA).powi(2);
        let st = self.noise_sigma_t.max(MIN_REPORTED_SIGMA).powi(2);
        Matrix6::from_diagonal(&nalgebra::Vector6::new(sr, sr, sr, st, st, st))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraverseParams {
    /// m/s
    pub speed: f64,
    /// Hz
    pub scan_rate: f64,
    pub sensor_height: f64,
    pub render_seed: u64,
}

impl Default for TraverseParams {
    fn default() -> Self {
        Self {
            speed: 1.5,
            scan_rate: 4.0,
            sensor_height: 1.5,
            render_seed: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdomIncrement {
    pub delta: Pose6,
    pub covariance: Matrix6<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Traverse {
    pub times: Vec<f64>,
    pub poses: Vec<Pose6>,
    /// `increments[k]` measures `poses[k]⁻¹ ∘ poses[k+1]`.
    pub increments: Vec<OdomIncrement>,
    /// Sensor-frame scans, one per pose (empty when rendering is skipped).
    pub scans: Vec<LabeledCloud>,
}

/// Arc-length parameterised smooth path through planar waypoints.
#[derive(Debug, Clone)]
pub struct Path2 {
    pts: Vec<[f64; 2]>,
    cum: Vec<f64>,
}

impl Path2 {
    pub fn new(waypoints: &[[f64; 2]]) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::InvalidInput("a traverse needs at least 2 waypoints".into()));
        }
        let mut pts = waypoints.to_vec();
        // Chaikin corner cutting keeps the ends fixed
        for _ in 0..5 {
            let mut next = vec![pts[0]];
            for w in pts.windows(2) {
                let (a, b) = (w[0], w[1]);
                next.push([0.75 * a[0] + 0.25 * b[0], 0.75 * a[1] + 0.25 * b[1]]);
                next.push([0.25 * a[0] + 0.75 * b[0], 0.25 * a[1] + 0.75 * b[1]]);
            }
            next.push(*pts.last().unwrap());
            pts = next;
        }
        let mut cum = vec![0.0];
        for w in pts.windows(2) {
            let d = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
            cum.push(cum.last().unwrap() + d);
        }
        Ok(Self { pts, cum })
    }

    pub fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub fn at(&self, s: f64) -> [f64; 2] {
        let s = s.clamp(0.0, self.length());
        let i = match self.cum.binary_search_by(|c| c.partial_cmp(&s).unwrap()) {
            Ok(i) => i.min(self.pts.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.pts.len() - 2),
        };
        let seg = self.cum[i + 1] - self.cum[i];
        let u = if seg > 0.0 { (s - self.cum[i]) / seg } else { 0.0 };
        let (a, b) = (self.pts[i], self.pts[i + 1]);
        [a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])]
    }

    pub fn tangent(&self, s: f64) -> [f64; 2] {
        let h = 0.5;
        let (lo, hi) = ((s - h).max(0.0), (s + h).min(self.length()));
        let (a, b) = (self.at(lo), self.at(hi));
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let n = (dx * dx + dy * dy).sqrt().max(1e-12);
        [dx / n, dy / n]
    }
}

/// True sensor poses sampled at the scan rate along a terrain-following path.
pub fn plan_trajectory(
    world: &ForestWorld,
    waypoints: &[[f64; 2]],
    params: &TraverseParams,
) -> Result<(Vec<f64>, Vec<Pose6>)> {
    for w in waypoints {
        if !world.contains_xy(&Vector3::new(w[0], w[1], 0.0)) {
            return Err(Error::InvalidInput(format!(
                "waypoint ({}, {}) outside the world extent",
                w[0], w[1]
            )));
        }
    }
    if !(params.speed > 0.0 && params.scan_rate > 0.0) {
        return Err(Error::InvalidInput("speed and scan_rate must be positive".into()));
    }
    let path = Path2::new(waypoints)?;
    let duration = path.length() / params.speed;
    let n = ((duration * params.scan_rate) - 1e-9).ceil().max(1.0) as usize;
    let mut times = Vec::with_capacity(n);
    let mut poses = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 / params.scan_rate;
        let s = t * params.speed;
        let [x, y] = path.at(s);
        let [tx, ty] = path.tangent(s);
        let normal = world.ground.normal(x, y, 1.0);
        let fwd = Vector3::new(tx, ty, 0.0);
        let xa = (fwd - normal * fwd.dot(&normal)).normalize();
        let ya = normal.cross(&xa);
        let r = Matrix3::from_columns(&[xa, ya, normal]);
        let z = world.ground.height(x, y) + params.sensor_height;
        times.push(t);
        poses.push(Pose6::from_matrix(&r, Vector3::new(x, y, z)));
    }
    Ok((times, poses))
}

/// Drifting, noisy odometry between consecutive true poses.
pub fn simulate_odometry(poses: &[Pose6], odom: &OdometryModel) -> Result<Vec<OdomIncrement>> {
    odom.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(odom.seed);
    let nr = Normal::new(0.0, odom.noise_sigma_r).unwrap();
    let nt = Normal::new(0.0, odom.noise_sigma_t).unwrap();
    let covariance = odom.covariance();
    let mut out = Vec::with_capacity(poses.len().saturating_sub(1));
    for w in poses.windows(2) {
        let truth = w[0].between(&w[1]);
        let dist = truth.translation().norm();
        let yaw = (odom.rot_drift_rate * dist).to_radians();
        let drifted = Pose6::new(
            truth.rotation() * UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
            truth.translation() * (1.0 + odom.drift_rate),
        );
        let mut v = [0.0; 6];
        for (i, x) in v.iter_mut().enumerate() {
            *x = if i < 3 { nr.sample(&mut rng) } else { nt.sample(&mut rng) };
        }
        out.push(OdomIncrement {
            delta: drifted.retract(&Tangent6::from_slice(&v)),
            covariance,
        });
    }
    Ok(out)
}

/// Plans the path, simulates odometry and renders one scan per pose.
pub fn simulate_traverse(
    world: &ForestWorld,
    waypoints: &[[f64; 2]],
    params: &TraverseParams,
    model: &SensorModel,
    odom: &OdometryModel,
) -> Result<Traverse> {
    model.validate()?;
    let (times, poses) = plan_trajectory(world, waypoints, params)?;
    let increments = simulate_odometry(&poses, odom)?;
    let scene = Scene::new(world, model.epoch);
    let scans = poses
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let seed = params.render_seed.wrapping_mul(1_000_003).wrapping_add(k as u64);
            scene.render(p, View::Ground, model, seed)
        })
        .collect();
    Ok(Traverse {
        times,
        poses,
        increments,
        scans,
    })
}

/// Dead-reckoned trajectory from a start pose and increments.
pub fn integrate(start: &Pose6, increments: &[OdomIncrement]) -> Vec<Pose6> {
    let mut out = vec![*start];
    for inc in increments {
        let next = out.last().unwrap().compose(&inc.delta);
        out.push(next);
    }
    out
}
