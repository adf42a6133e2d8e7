use arborloc::eval::*;
use arborloc::geometry::{Point3, Pose6, Tangent6};
use arborloc::io::Stamped;
use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_pose(rng: &mut ChaCha8Rng) -> Pose6 {
    let v: [f64; 6] = std::array::from_fn(|i| rng.random_range(if i < 3 { -1.0..1.0 } else { -50.0..50.0 }));
    Pose6::exp(&Tangent6::from_slice(&v))
}

fn judgements(seed: u64, n: usize) -> Vec<RetrievalJudgement> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|q| {
            // quantized distances force ties
            let d = (rng.random_range(0.0..1.0f64) * 40.0).round() / 40.0;
            let planar = rng.random_range(0.0..40.0);
            RetrievalJudgement::new(q as u64, 0, d, planar, rng.random_bool(0.8))
        })
        .collect()
}

#[test]
fn pr_curve_matches_per_threshold_recomputation() {
    for seed in 0..5 {
        let js = judgements(seed, 100);
        let curve = pr_curve_f1max(&js).unwrap();
        let mut thresholds: Vec<f64> = js.iter().map(|j| j.descriptor_distance).collect();
        thresholds.sort_by(f64::total_cmp);
        thresholds.dedup();
        assert_eq!(curve.points.len(), thresholds.len());
        let mut best: f64 = 0.0;
        for (p, t) in curve.points.iter().zip(&thresholds) {
            let b = pr_at_threshold(&js, *t).unwrap();
            assert_eq!(*p, b);
            best = best.max(b.f1);
        }
        assert_eq!(curve.f1max, best);
    }
}

fn brute_repeatability(q: &[Point3], qt: &[Point3], pose: &Pose6, eps: f64) -> f64 {
    let mut hits = 0;
    for p in q {
        let m = pose.transform_point(p);
        let mut best = f64::INFINITY;
        for c in qt {
            best = best.min((m - c).norm());
        }
        if best < eps {
            hits += 1;
        }
    }
    hits as f64 / q.len() as f64
}

#[test]
fn repeatability_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let pose = random_pose(&mut rng);
        let q: Vec<Point3> = (0..128)
            .map(|_| Point3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(0.0..10.0)))
            .collect();
        let mut qt: Vec<Point3> = q
            .iter()
            .map(|p| pose.transform_point(p) + Vector3::from_fn(|_, _| rng.random_range(-0.6..0.6)))
            .collect();
        for _ in 0..50 {
            qt.push(Point3::new(rng.random_range(-70.0..70.0), rng.random_range(-70.0..70.0), 0.0));
        }
        assert_eq!(keypoint_repeatability(&q, &qt, &pose, 0.5), brute_repeatability(&q, &qt, &pose, 0.5));
    }
}

#[test]
fn repeatability_ignores_extra_candidates() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pose = random_pose(&mut rng);
    let q: Vec<Point3> = (0..40).map(|_| Point3::from_fn(|_, _| rng.random_range(-10.0..10.0))).collect();
    let mut qt: Vec<Point3> = q.iter().map(|p| pose.transform_point(p)).collect();
    qt.extend((0..200).map(|_| Point3::from_fn(|_, _| rng.random_range(-30.0..30.0))));
    assert_eq!(keypoint_repeatability(&q, &qt, &pose, 0.5), 1.0);
}

fn stamped(poses: &[Pose6]) -> Vec<Stamped> {
    poses
        .iter()
        .enumerate()
        .map(|(k, p)| Stamped {
            time: k as f64 * 0.5,
            pose: *p,
        })
        .collect()
}

fn wiggly_path(n: usize) -> Vec<Pose6> {
    (0..n)
        .map(|k| {
            let s = k as f64;
            Pose6::new(
                UnitQuaternion::from_euler_angles(0.02 * (s * 0.3).sin(), 0.0, 0.01 * s),
                Vector3::new(s, 10.0 * (s * 0.05).sin(), 0.3 * (s * 0.1).cos()),
            )
        })
        .collect()
}

#[test]
fn identical_and_rigidly_moved_trajectories_have_zero_error() {
    let path = stamped(&wiggly_path(100));
    let g = Pose6::from_yaw(0.7, Vector3::new(100.0, -40.0, 3.0));
    let moved: Vec<Stamped> = path
        .iter()
        .map(|s| Stamped {
            time: s.time,
            pose: g.compose(&s.pose),
        })
        .collect();
    for mode in [ErrorMode::ThreeDof, ErrorMode::SixDof] {
        for est in [&path, &moved] {
            let e = absolute_errors(est, &path, mode).unwrap();
            assert!(e.translation.max < 1e-9 && e.rotation.max < 1e-7, "{e:?}");
        }
    }
    let rte = relative_translation_error(&moved, &path, &[5.0, 20.0]).unwrap();
    assert!(rte.bins.iter().all(|b| b.errors.iter().all(|e| *e < 1e-9)));
}

#[test]
fn constructed_errors_give_hand_computed_summary() {
    // translation offsets along z only, constant yaw offset; alignment of a
    // planar path cannot absorb a non-constant vertical error pattern
    let path = wiggly_path(12);
    let dz = [0.3, -0.3, 0.3, -0.3, 0.3, -0.3, 0.3, -0.3, 0.3, -0.3, 0.3, -0.3];
    let est: Vec<Pose6> = path
        .iter()
        .zip(dz)
        .map(|(p, d)| Pose6::new(*p.rotation(), p.translation() + Vector3::new(0.0, 0.0, d)))
        .collect();
    let e = absolute_errors(&stamped(&est), &stamped(&path), ErrorMode::SixDof).unwrap();
    // alignment leaves the alternating pattern in place (it is uncorrelated
    // with the path), so every error is close to 0.3
    assert!((e.translation.mean - 0.3).abs() < 0.02, "{e:?}");
    // exact check against the aligned pairs
    let pairs = aligned_pairs(&stamped(&est), &stamped(&path)).unwrap();
    let errs: Vec<f64> = pairs.iter().map(|(a, b)| (a.translation() - b.translation()).norm()).collect();
    let n = errs.len() as f64;
    let mean = errs.iter().sum::<f64>() / n;
    let rmse = (errs.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    let std = (errs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let mut sorted = errs.clone();
    sorted.sort_by(f64::total_cmp);
    let median = 0.5 * (sorted[5] + sorted[6]);
    assert!((e.translation.mean - mean).abs() < 1e-9);
    assert!((e.translation.rmse - rmse).abs() < 1e-9);
    assert!((e.translation.std - std).abs() < 1e-9);
    assert!((e.translation.median - median).abs() < 1e-9);
    assert!((e.translation.max - sorted[11]).abs() < 1e-9);
}

#[test]
fn heading_error_is_yaw_of_relative_rotation() {
    let path = wiggly_path(50);
    let est: Vec<Pose6> = path
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let yaw = if k % 2 == 0 { 0.02 } else { -0.02 };
            p.compose(&Pose6::from_yaw(yaw, Vector3::zeros()))
        })
        .collect();
    let e = absolute_errors(&stamped(&est), &stamped(&path), ErrorMode::ThreeDof).unwrap();
    assert!((e.rotation.median - 0.02f64.to_degrees()).abs() < 1e-6, "{e:?}");
}

#[test]
fn scale_drift_gives_one_percent_rte() {
    let n = 301;
    let path: Vec<Pose6> = (0..n).map(|k| Pose6::from_translation(Vector3::new(k as f64, 0.0, 0.0))).collect();
    let est: Vec<Pose6> = (0..n).map(|k| Pose6::from_translation(Vector3::new(1.01 * k as f64, 0.0, 0.0))).collect();
    let rte = relative_translation_error(&stamped(&est), &stamped(&path), &[100.0, 400.0]).unwrap();
    assert_eq!(rte.bins.len(), 1);
    assert_eq!(rte.skipped, vec![400.0]);
    assert!((rte.bins[0].stats.median - 1.0).abs() < 1e-9);
}

#[test]
fn metrics_are_invariant_to_common_rigid_transform() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let path = wiggly_path(80);
    let est: Vec<Pose6> = path
        .iter()
        .map(|p| p.retract(&Tangent6::from_slice(&std::array::from_fn(|i| rng.random_range(if i < 3 { -0.01..0.01 } else { -0.3..0.3 })))))
        .collect();
    let g = Pose6::from_yaw(2.0, Vector3::new(-30.0, 12.0, 4.0));
    let moved = |v: &[Pose6]| stamped(&v.iter().map(|p| g.compose(p)).collect::<Vec<_>>());
    for mode in [ErrorMode::ThreeDof, ErrorMode::SixDof] {
        let a = absolute_errors(&stamped(&est), &stamped(&path), mode).unwrap();
        let b = absolute_errors(&moved(&est), &moved(&path), mode).unwrap();
        assert!((a.translation.rmse - b.translation.rmse).abs() < 1e-9);
        assert!((a.rotation.rmse - b.rotation.rmse).abs() < 1e-9);
    }
    let a = relative_translation_error(&stamped(&est), &stamped(&path), &[10.0, 30.0]).unwrap();
    let b = relative_translation_error(&moved(&est), &moved(&path), &[10.0, 30.0]).unwrap();
    for (x, y) in a.bins.iter().zip(&b.bins) {
        for (u, v) in x.errors.iter().zip(&y.errors) {
            assert!((u - v).abs() < 1e-9);
        }
    }
    let q: Vec<Point3> = est.iter().map(|p| *p.translation()).collect();
    let qt: Vec<Point3> = path.iter().map(|p| *p.translation()).collect();
    let gq: Vec<Point3> = qt.iter().map(|p| g.transform_point(p)).collect();
    assert_eq!(
        keypoint_repeatability(&q, &qt, &Pose6::identity(), 0.5),
        keypoint_repeatability(&q, &gq, &g, 0.5)
    );
}

#[test]
fn too_few_pairs_is_an_error() {
    let path = stamped(&wiggly_path(2));
    assert!(absolute_errors(&path, &path, ErrorMode::SixDof).is_err());
}
