//! Trajectory I/O, association and alignment.

use meshslam::evaluation::Association;
use meshslam::*;
use nalgebra::{UnitQuaternion, Vector3};
use proptest::prelude::*;

fn helix(n: usize, hz: f64) -> Trajectory {
    Trajectory::new(
        (0..n)
            .map(|i| {
                let t = i as f64 / hz;
                let p = Vector3::new(t.cos(), 0.3 * t, t.sin());
                (t, RigidPose::new(UnitQuaternion::from_euler_angles(0.1 * t, t, 0.0), p))
            })
            .collect(),
    )
    .unwrap()
}

fn sim(scale: f64, axis: Vector3<f64>, t: Vector3<f64>) -> Sim3 {
    Sim3 {
        scale,
        rotation: UnitQuaternion::from_scaled_axis(axis),
        translation: t,
    }
}

#[test]
fn known_similarity_is_recovered() {
    let s = sim(2.5, Vector3::new(0.3, -1.1, 0.4), Vector3::new(1.0, -2.0, 0.5));
    let pts: Vec<Vector3<f64>> = helix(40, 10.0).samples().iter().map(|(_, p)| p.translation).collect();
    let pairs: Vec<_> = pts.iter().map(|p| (*p, s.apply(p))).collect();
    let found = align_sim3(&pairs).unwrap();
    assert!((found.scale - 2.5).abs() < 1e-9);
    assert!(found.rotation.angle_to(&s.rotation) < 1e-9);
    assert!((found.translation - s.translation).norm() < 1e-9);
}

#[test]
fn alignment_needs_three_spread_points() {
    let p = |x: f64| Vector3::new(x, 2.0 * x, 0.0);
    assert!(matches!(align_sim3(&[(p(0.0), p(0.0)), (p(1.0), p(1.0))]), Err(EvalError::TooFewPairs(2))));
    let line: Vec<_> = (0..10).map(|i| (p(i as f64), p(i as f64))).collect();
    assert!(matches!(align_sim3(&line), Err(EvalError::Degenerate)));
}

#[test]
fn scaled_estimate_has_zero_ate() {
    let gt = helix(100, 30.0);
    let s = sim(0.37, Vector3::new(0.0, 0.7, 0.2), Vector3::new(3.0, 0.0, -1.0));
    let est = Trajectory::new(gt.samples().iter().map(|(t, p)| (*t, s.apply_pose(p))).collect()).unwrap();
    let r = ate_rmse(&est, &gt, 0.001).unwrap();
    assert_eq!(r.n_matched, 100);
    assert!(r.rmse < 1e-9);
}

#[test]
fn one_displaced_sample_is_bounded() {
    let gt = helix(50, 30.0);
    let d = 0.2;
    let mut samples = gt.samples().to_vec();
    samples[17].1.translation.x += d;
    let est = Trajectory::new(samples).unwrap();
    let r = ate_rmse(&est, &gt, 0.001).unwrap();
    // The identity alignment already achieves d / √N; the optimum can only do better.
    assert!(r.rmse > 0.0);
    assert!(r.rmse <= d / (50f64).sqrt() + 1e-12);
}

#[test]
fn ate_without_overlap_fails() {
    let a = helix(10, 30.0);
    let b = Trajectory::new(a.samples().iter().map(|(t, p)| (t + 100.0, *p)).collect()).unwrap();
    assert!(matches!(ate_rmse(&a, &b, 0.01), Err(EvalError::NoOverlap)));
    assert!(matches!(associate_by_timestamp(&a, &b, -1.0), Err(EvalError::NegativeMaxDt)));
}

/// Repeatedly take the closest unused pair over all pairs.
fn greedy_oracle(est: &[f64], gt: &[f64], max_dt: f64) -> Vec<(usize, usize)> {
    let mut used_e = vec![false; est.len()];
    let mut used_g = vec![false; gt.len()];
    let mut out = Vec::new();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for (i, e) in est.iter().enumerate() {
            for (j, g) in gt.iter().enumerate() {
                let dt = (e - g).abs();
                if used_e[i] || used_g[j] || dt > max_dt {
                    continue;
                }
                if best.map_or(true, |(b, bi, bj)| (dt, i, j) < (b, bi, bj)) {
                    best = Some((dt, i, j));
                }
            }
        }
        let Some((_, i, j)) = best else { break };
        used_e[i] = true;
        used_g[j] = true;
        out.push((i, j));
    }
    out.sort();
    out
}

fn pairs(a: &[Association]) -> Vec<(usize, usize)> {
    a.iter().map(|x| (x.est_index, x.gt_index)).collect()
}

#[test]
fn thirty_against_seventy_five_hz() {
    let est = helix(60, 30.0);
    let gt = helix(150, 75.0);
    let max_dt = 0.010;
    let got = associate_by_timestamp(&est, &gt, max_dt).unwrap();
    let e: Vec<f64> = est.timestamps().collect();
    let g: Vec<f64> = gt.timestamps().collect();
    assert_eq!(pairs(&got), greedy_oracle(&e, &g, max_dt));
    assert_eq!(got.len(), 60);
    assert!(got.iter().all(|a| a.dt.abs() <= max_dt));
}

#[test]
fn half_window_offset_pairs_everything() {
    let gt = helix(40, 30.0);
    let max_dt = 0.01;
    let est = Trajectory::new(gt.samples().iter().map(|(t, p)| (t + max_dt / 2.0, *p)).collect()).unwrap();
    let got = associate_by_timestamp(&est, &gt, max_dt).unwrap();
    assert_eq!(pairs(&got), (0..40).map(|i| (i, i)).collect::<Vec<_>>());
}

#[test]
fn tum_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traj.txt");
    let traj = helix(25, 30.0);
    traj.save(&path).unwrap();
    let back = Trajectory::load(&path).unwrap();
    for ((ta, pa), (tb, pb)) in traj.samples().iter().zip(back.samples()) {
        assert!((ta - tb).abs() < 1e-9);
        assert_eq!(pa, pb);
    }
    assert!(matches!(Trajectory::parse_tum("0 1 2 3\n"), Err(EvalError::Parse { line: 1, .. })));
    assert!(matches!(Trajectory::parse_tum("# only a comment\n"), Err(EvalError::Empty)));
}

fn arb_sim() -> impl Strategy<Value = Sim3> {
    (0.1f64..10.0, prop::array::uniform3(-2.0f64..2.0), prop::array::uniform3(-5.0f64..5.0))
        .prop_map(|(s, r, t)| sim(s, Vector3::from(r), Vector3::from(t)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ate_is_invariant_to_similarity(s in arb_sim(), wobble in 0.0f64..0.05) {
        let gt = helix(60, 30.0);
        let est_samples: Vec<_> = gt
            .samples()
            .iter()
            .enumerate()
            .map(|(i, (t, p))| {
                let off = Vector3::new((i as f64).sin(), (i as f64 * 0.7).cos(), 0.0) * wobble;
                (*t, RigidPose::new(p.rotation, p.translation + off))
            })
            .collect();
        let est = Trajectory::new(est_samples.clone()).unwrap();
        let moved = Trajectory::new(est_samples.iter().map(|(t, p)| (*t, s.apply_pose(p))).collect()).unwrap();
        let a = ate_rmse(&est, &gt, 0.001).unwrap().rmse;
        let b = ate_rmse(&moved, &gt, 0.001).unwrap().rmse;
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn tum_text_round_trip(
        rows in prop::collection::vec((0.0f64..1.0, prop::array::uniform3(-3.0f64..3.0), prop::array::uniform3(-1e3f64..1e3)), 1..40)
    ) {
        let mut t = 0.0;
        let samples: Vec<_> = rows
            .into_iter()
            .map(|(dt, r, p)| {
                t += dt + 1e-3;
                (t, RigidPose::new(UnitQuaternion::from_scaled_axis(Vector3::from(r)), Vector3::from(p)))
            })
            .collect();
        let traj = Trajectory::new(samples).unwrap();
        let back = Trajectory::parse_tum(&traj.to_tum_string()).unwrap();
        prop_assert_eq!(back.len(), traj.len());
        for ((ta, pa), (tb, pb)) in traj.samples().iter().zip(back.samples()) {
            prop_assert!((ta - tb).abs() < 1e-9);
            prop_assert_eq!(pa.translation, pb.translation);
            prop_assert!(pa.rotation.angle_to(&pb.rotation) < 1e-12);
        }
    }

    #[test]
    fn association_matches_greedy_oracle(
        e in prop::collection::btree_set(0u32..2000, 1..60),
        g in prop::collection::btree_set(0u32..2000, 1..60),
        max_dt in 0.0f64..0.05,
    ) {
        let traj = |ts: &std::collections::BTreeSet<u32>| {
            Trajectory::new(ts.iter().map(|&t| (t as f64 * 1e-3, RigidPose::identity())).collect()).unwrap()
        };
        let (est, gt) = (traj(&e), traj(&g));
        let et: Vec<f64> = est.timestamps().collect();
        let gtt: Vec<f64> = gt.timestamps().collect();
        let oracle = greedy_oracle(&et, &gtt, max_dt);
        match associate_by_timestamp(&est, &gt, max_dt) {
            Ok(got) => prop_assert_eq!(pairs(&got), oracle),
            Err(EvalError::NoOverlap) => prop_assert!(oracle.is_empty()),
            Err(other) => prop_assert!(false, "{other}"),
        }
    }
}
