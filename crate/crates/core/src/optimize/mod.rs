//! Numerical core: reprojection factors, Levenberg–Marquardt, triangulation, motion-only
//! and windowed bundle adjustment.

mod bundle;
mod lm;
mod reprojection;
mod triangulate;

pub use bundle::{
    windowed_ba, BlockSystem, BundleProblem, BundleState, Factor, WindowOutcome, WindowedBaReport,
    WindowedBaStatus,
};
pub use lm::{
    solve_lm, DenseSystem, IterationRecord, LeastSquaresProblem, LmSettings, LmStatus, Solution,
};
pub use reprojection::{project_point, reprojection_residual, Reprojection, MIN_DEPTH};
pub use triangulate::{parallax_deg, triangulate_dlt, triangulate_normalized, Degenerate, Triangulated};

use nalgebra::{DVector, Vector2, Vector3, Vector6};
use thiserror::Error;

use crate::pose::{RigidPose, Se3Tangent};
use crate::projection::CameraIntrinsics;

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("cost is not finite at the initial estimate")]
    NonFiniteCost,
    #[error("solver stalled: damped normal equations unsolvable")]
    Stalled(Solution),
    #[error("motion-only BA needs at least 4 correspondences, got {0}")]
    TooFewPairs(usize),
    #[error("no valid factors")]
    NoFactors,
}

/// Single-pose problem: the camera moves, the points stay put.
pub struct MotionProblem<'a> {
    pub pairs: &'a [(Vector3<f64>, Vector2<f64>)],
    pub intrinsics: &'a CameraIntrinsics,
}

impl LeastSquaresProblem for MotionProblem<'_> {
    type State = RigidPose;
    type System = DenseSystem;

    fn cost(&self, pose: &RigidPose) -> f64 {
        0.5 * self
            .pairs
            .iter()
            .filter_map(|(p, m)| reprojection_residual(p, pose, self.intrinsics, m))
            .map(|r| r.residual.norm_squared())
            .sum::<f64>()
    }

    fn linearize(&self, pose: &RigidPose) -> DenseSystem {
        let mut sys = DenseSystem::zeros(6);
        for (p, m) in self.pairs {
            if let Some(r) = reprojection_residual(p, pose, self.intrinsics, m) {
                sys.hessian += r.d_pose.transpose() * r.d_pose;
                sys.gradient += r.d_pose.transpose() * r.residual;
            }
        }
        sys
    }

    fn gradient_norm(&self, system: &DenseSystem) -> f64 {
        system.gradient_norm()
    }

    fn solve_damped(&self, system: &DenseSystem, damping: f64) -> Option<DVector<f64>> {
        system.solve_damped(damping)
    }

    fn retract(&self, pose: &RigidPose, step: &DVector<f64>) -> RigidPose {
        pose.retract(&Se3Tangent(Vector6::from_iterator(step.iter().copied())))
    }
}

/// Refines a camera pose against fixed 3-D points.
pub fn motion_only_ba(
    pose_init: &RigidPose,
    pairs: &[(Vector3<f64>, Vector2<f64>)],
    intrinsics: &CameraIntrinsics,
    settings: &LmSettings,
) -> Result<(RigidPose, Solution), OptimizeError> {
    if pairs.len() < 4 {
        return Err(OptimizeError::TooFewPairs(pairs.len()));
    }
    let problem = MotionProblem { pairs, intrinsics };
    if pairs
        .iter()
        .all(|(p, _)| project_point(p, pose_init, intrinsics).is_none())
    {
        return Err(OptimizeError::NoFactors);
    }
    solve_lm(&problem, *pose_init, settings)
}

/// RMS pixel reprojection error of `pairs` seen from `pose`; points behind the camera are skipped.
pub fn rms_reprojection(
    pose: &RigidPose,
    pairs: &[(Vector3<f64>, Vector2<f64>)],
    intrinsics: &CameraIntrinsics,
) -> f64 {
    let errs: Vec<f64> = pairs
        .iter()
        .filter_map(|(p, m)| project_point(p, pose, intrinsics).map(|q| (q - m).norm_squared()))
        .collect();
    if errs.is_empty() {
        return 0.0;
    }
    (errs.iter().sum::<f64>() / errs.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scene(n: usize, seed: u64) -> (RigidPose, Vec<(Vector3<f64>, Vector2<f64>)>, CameraIntrinsics) {
        let k = CameraIntrinsics::default();
        let pose = Se3Tangent::new(Vector3::new(0.05, -0.1, 0.02), Vector3::new(0.2, 0.1, 0.5)).exp();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pairs = Vec::new();
        while pairs.len() < n {
            let local = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-4.0..-2.0));
            let p = pose.transform_point(&local);
            if let Some(m) = project_point(&p, &pose, &k) {
                pairs.push((p, m));
            }
        }
        (pose, pairs, k)
    }

    #[test]
    fn ground_truth_init_is_unchanged() {
        let (pose, pairs, k) = scene(50, 1);
        let (out, _) = motion_only_ba(&pose, &pairs, &k, &LmSettings::default()).unwrap();
        assert!((out.translation - pose.translation).norm() < 1e-10);
        assert!(out.rotation.angle_to(&pose.rotation) < 1e-10);
    }

    #[test]
    fn recovers_perturbed_pose() {
        let (pose, pairs, k) = scene(100, 2);
        let init = pose.retract(&Se3Tangent::new(Vector3::new(0.05, 0.0, 0.0), Vector3::new(0.0, 0.05, 0.0)));
        let (out, sol) = motion_only_ba(&init, &pairs, &k, &LmSettings::default()).unwrap();
        assert!(sol.converged());
        assert!((out.translation - pose.translation).norm() < 1e-7);
        assert!(out.rotation.angle_to(&pose.rotation) < 1e-7);
        assert!(sol.cost_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn three_pairs_rejected() {
        let (pose, pairs, k) = scene(3, 3);
        assert!(matches!(
            motion_only_ba(&pose, &pairs, &k, &LmSettings::default()),
            Err(OptimizeError::TooFewPairs(3))
        ));
    }
}
