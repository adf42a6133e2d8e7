//! Pose-chain fixtures shared by the smoother tests and the acceptance suite.

use arborloc::geometry::{Pose6, Tangent6};
use arborloc::graph::*;
use nalgebra::{Matrix6, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn params(lag: usize) -> SmootherParams {
    SmootherParams {
        lag,
        ..Default::default()
    }
}

pub fn noise(rng: &mut ChaCha8Rng, sr: f64, st: f64) -> Tangent6 {
    let nr = Normal::new(0.0, sr).unwrap();
    let nt = Normal::new(0.0, st).unwrap();
    Tangent6::from_slice(&std::array::from_fn(|i| if i < 3 { nr.sample(rng) } else { nt.sample(rng) }))
}

pub struct Chain {
    pub truth: Vec<Pose6>,
    pub odom: Vec<Pose6>,
    pub maps: Vec<(usize, Pose6)>,
}

/// Gently curving path with noisy odometry and map factors every `every` nodes.
pub fn chain(n: usize, seed: u64, sr: f64, st: f64, every: usize, planar: bool) -> Chain {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut truth = vec![Pose6::from_yaw(0.3, Vector3::new(2.0, -1.0, 0.5))];
    for _ in 1..n {
        let step = if planar {
            Pose6::from_translation(Vector3::new(1.0, rng.random_range(-0.2..0.2), 0.0))
        } else {
            Pose6::new(
                UnitQuaternion::from_euler_angles(0.0, 0.0, rng.random_range(-0.1..0.1)),
                Vector3::new(1.0, 0.0, rng.random_range(-0.05..0.05)),
            )
        };
        truth.push(truth.last().unwrap().compose(&step));
    }
    let odom = truth
        .windows(2)
        .map(|w| {
            let d = w[0].between(&w[1]);
            if planar {
                let t = noise(&mut rng, 0.0, st).trans();
                Pose6::new(*d.rotation(), d.translation() + t)
            } else {
                d.retract(&noise(&mut rng, sr, st))
            }
        })
        .collect();
    let maps = (0..n)
        .step_by(every)
        .skip(1)
        .map(|k| {
            let p = if planar {
                Pose6::new(*truth[k].rotation(), truth[k].translation() + noise(&mut rng, 0.0, 0.2).trans())
            } else {
                truth[k].retract(&noise(&mut rng, sr * 3.0, if st > 0.0 { 0.2 } else { 0.0 }))
            };
            (k, p)
        })
        .collect();
    Chain { truth, odom, maps }
}

pub fn info(sr: f64, st: f64) -> Matrix6<f64> {
    isotropic_information(sr.max(1e-3), st.max(1e-3))
}

/// Runs the chain through a smoother, optimizing after every state.
pub fn run(c: &Chain, lag: usize, sr: f64, st: f64) -> (FactorGraph, Vec<StateNode>) {
    let mut g = FactorGraph::new(params(lag)).unwrap();
    g.add_prior(0, 0.0, c.truth[0], info(0.01, 0.05)).unwrap();
    let mut done = Vec::new();
    let mut maps = c.maps.iter().peekable();
    for (k, d) in c.odom.iter().enumerate() {
        g.add_odom_factor(k as u64, k as u64 + 1, k as f64 + 1.0, *d, info(sr, st)).unwrap();
        while let Some((m, p)) = maps.peek() {
            if *m != k + 1 {
                break;
            }
            g.add_map_factor(MapFactor {
                node: *m as u64,
                pose: *p,
                information: info(sr * 3.0, 0.2),
                fitness: 1.0,
            })
            .unwrap();
            maps.next();
        }
        g.optimize().unwrap();
        done.extend(g.slide_window().unwrap());
    }
    (g, done)
}

pub fn batch(c: &Chain, sr: f64, st: f64) -> FactorGraph {
    let (g, done) = run(c, usize::MAX, sr, st);
    assert!(done.is_empty());
    g
}

pub fn max_window_gap(c: &Chain, lag: usize, sr: f64, st: f64) -> f64 {
    let full = batch(c, sr, st);
    let (g, done) = run(c, lag, sr, st);
    assert!(!done.is_empty());
    g.nodes()
        .iter()
        .map(|n| {
            let (er, et) = n.pose.error_to(&full.node(n.id).unwrap().pose);
            er.max(et)
        })
        .fold(0.0, f64::max)
}
