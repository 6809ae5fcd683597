//! Synthetic problems with known answers, shared by the test suites, the benches and the
//! harness self-checks.

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::optimize::{project_point, reprojection_residual, BundleProblem, BundleState, Factor};
use crate::pose::{RigidPose, Se3Tangent};
use crate::projection::CameraIntrinsics;

/// A bundle problem generated from a known configuration.
#[derive(Clone, Debug)]
pub struct BaFixture {
    pub problem: BundleProblem,
    pub truth: BundleState,
    pub perturbed: BundleState,
}

/// `n_keyframes` cameras on an arc looking at `n_points` points spread around the
/// origin. The first two cameras are fixed; the others are perturbed by `rot` radians and
/// `trans` units along random axes. Measurements are exact projections.
pub fn ba_fixture(n_keyframes: usize, n_points: usize, rot: f64, trans: f64, seed: u64) -> BaFixture {
    assert!(n_keyframes >= 2, "two anchors are needed");
    let intrinsics = CameraIntrinsics::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poses: Vec<RigidPose> = (0..n_keyframes)
        .map(|i| {
            let a = -0.4 + 0.8 * i as f64 / (n_keyframes - 1) as f64;
            let eye = Vector3::new(4.0 * a.sin(), 0.3 * a, 4.0 * a.cos());
            RigidPose::look_at(eye, Vector3::zeros(), Vector3::y()).expect("valid look-at")
        })
        .collect();
    let mut points = Vec::with_capacity(n_points);
    while points.len() < n_points {
        let p = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let visible = poses.iter().all(|pose| {
            project_point(&p, pose, &intrinsics).is_some_and(|q| intrinsics.contains(q.x, q.y))
        });
        if visible {
            points.push(p);
        }
    }
    // Free poses come first in the problem, then the two anchors.
    let n_free = n_keyframes - 2;
    let order: Vec<usize> = (2..n_keyframes).chain(0..2).collect();
    let mut factors = Vec::new();
    for (pi, p) in points.iter().enumerate() {
        for (slot, &k) in order.iter().enumerate() {
            let m = project_point(p, &poses[k], &intrinsics).expect("visible");
            factors.push(Factor {
                pose: slot,
                point: pi,
                measurement: m,
                weight: 1.0,
            });
        }
    }
    let truth = BundleState {
        free_poses: poses[2..].to_vec(),
        points: points.clone(),
    };
    let perturbed = BundleState {
        free_poses: truth
            .free_poses
            .iter()
            .map(|p| {
                let w = random_unit(&mut rng) * rot;
                let t = random_unit(&mut rng) * trans;
                p.retract(&Se3Tangent::new(w, t))
            })
            .collect(),
        points,
    };
    BaFixture {
        problem: BundleProblem {
            intrinsics,
            fixed_poses: poses[..2].to_vec(),
            factors,
            n_free,
            n_points,
        },
        truth,
        perturbed,
    }
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Largest deviation between the analytic reprojection Jacobians and central finite
/// differences (step `eps`) over `samples` random poses, points and intrinsics.
/// Each entry's deviation is `|analytic − numeric| / max(|analytic|, |numeric|, 1)`.
pub fn jacobian_max_relative_error(samples: usize, eps: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < samples {
        let intrinsics = CameraIntrinsics {
            fov_y_deg: rng.gen_range(30.0..120.0),
            width_px: rng.gen_range(64..2048),
            height_px: rng.gen_range(64..2048),
            near: 0.1,
            far: 100.0,
        };
        let pose = Se3Tangent::new(
            random_unit(&mut rng) * rng.gen_range(0.0..3.0),
            Vector3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)),
        )
        .exp();
        let local = Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), -rng.gen_range(0.5..10.0));
        let point = pose.transform_point(&local);
        let meas = Vector2::new(rng.gen_range(0.0..500.0), rng.gen_range(0.0..500.0));
        let Some(r) = reprojection_residual(&point, &pose, &intrinsics, &meas) else {
            continue;
        };
        let mut rel = |a: f64, n: f64| {
            worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(1.0));
        };
        for k in 0..6 {
            let mut d = nalgebra::Vector6::zeros();
            d[k] = eps;
            let plus = pose.retract(&Se3Tangent(d));
            let minus = pose.retract(&Se3Tangent(-d));
            let num = (project_point(&point, &plus, &intrinsics).expect("in front")
                - project_point(&point, &minus, &intrinsics).expect("in front"))
                / (2.0 * eps);
            rel(r.d_pose[(0, k)], num.x);
            rel(r.d_pose[(1, k)], num.y);
        }
        for k in 0..3 {
            let mut d = Vector3::zeros();
            d[k] = eps;
            let num = (project_point(&(point + d), &pose, &intrinsics).expect("in front")
                - project_point(&(point - d), &pose, &intrinsics).expect("in front"))
                / (2.0 * eps);
            rel(r.d_point[(0, k)], num.x);
            rel(r.d_point[(1, k)], num.y);
        }
        done += 1;
    }
    worst
}
