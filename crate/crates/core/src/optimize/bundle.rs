//! Joint pose/point bundle adjustment and the sliding-window driver.
//!
//! The normal equations are assembled in block form (dense camera block, 3×3 point
//! blocks) and solved by eliminating the points first. [`BlockSystem::to_dense`] exposes
//! the equivalent dense system for cross-checking.

use std::collections::BTreeMap;

use log::warn;
use nalgebra::{DMatrix, DVector, Matrix3, Matrix6x3, Vector2, Vector3, Vector6};

use super::lm::{solve_lm, LeastSquaresProblem, LmSettings, Solution};
use super::reprojection::{reprojection_residual, Reprojection};
use super::OptimizeError;
use crate::geometry::VertexId;
use crate::pose::{RigidPose, Se3Tangent};
use crate::projection::CameraIntrinsics;
use crate::slam::{KeyFrameId, MapError, SlamMap};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Factor {
    /// Index into the problem's poses (free poses first, then fixed ones).
    pub pose: usize,
    pub point: usize,
    pub measurement: Vector2<f64>,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BundleState {
    pub free_poses: Vec<RigidPose>,
    pub points: Vec<Vector3<f64>>,
}

/// Poses `0..free_poses.len()` are variables; the remaining `fixed_poses` are constants.
#[derive(Clone, Debug)]
pub struct BundleProblem {
    pub intrinsics: CameraIntrinsics,
    pub fixed_poses: Vec<RigidPose>,
    pub factors: Vec<Factor>,
    pub n_free: usize,
    pub n_points: usize,
}

/// Normal equations in camera/point block form.
#[derive(Clone, Debug)]
pub struct BlockSystem {
    pub hcc: DMatrix<f64>,
    pub gc: DVector<f64>,
    pub hpp: Vec<Matrix3<f64>>,
    pub gp: Vec<Vector3<f64>>,
    /// per point: (free pose index, ∂²/∂pose∂point block)
    pub hcp: Vec<Vec<(usize, Matrix6x3<f64>)>>,
}

impl BlockSystem {
    pub fn dim(&self) -> usize {
        self.gc.len() + 3 * self.gp.len()
    }

    pub fn to_dense(&self) -> super::DenseSystem {
        let nc = self.gc.len();
        let n = self.dim();
        let mut h = DMatrix::zeros(n, n);
        let mut g = DVector::zeros(n);
        h.view_mut((0, 0), (nc, nc)).copy_from(&self.hcc);
        g.rows_mut(0, nc).copy_from(&self.gc);
        for (p, (hpp, gp)) in self.hpp.iter().zip(&self.gp).enumerate() {
            let o = nc + 3 * p;
            h.fixed_view_mut::<3, 3>(o, o).copy_from(hpp);
            g.fixed_rows_mut::<3>(o).copy_from(gp);
            for (c, w) in &self.hcp[p] {
                h.fixed_view_mut::<6, 3>(6 * c, o).copy_from(w);
                h.fixed_view_mut::<3, 6>(o, 6 * c).copy_from(&w.transpose());
            }
        }
        super::DenseSystem {
            hessian: h,
            gradient: g,
        }
    }

    /// Solves `(H + λI) δ = −g` by Schur complement on the point blocks.
    pub fn solve_schur(&self, damping: f64) -> Option<DVector<f64>> {
        let nc = self.gc.len();
        let np = self.gp.len();
        let mut v_inv = Vec::with_capacity(np);
        for hpp in &self.hpp {
            let v = hpp + Matrix3::identity() * damping;
            v_inv.push(v.cholesky()?.inverse());
        }
        let mut step = DVector::zeros(nc + 3 * np);
        let mut dc = DVector::zeros(nc);
        if nc > 0 {
            let mut s = self.hcc.clone();
            for i in 0..nc {
                s[(i, i)] += damping;
            }
            let mut rhs = -&self.gc;
            for p in 0..np {
                let vi = &v_inv[p];
                for (i, wi) in &self.hcp[p] {
                    let wv = wi * vi;
                    let r = wv * self.gp[p];
                    let mut seg = rhs.fixed_rows_mut::<6>(6 * i);
                    seg += r;
                    for (j, wj) in &self.hcp[p] {
                        let block = wv * wj.transpose();
                        let mut sv = s.fixed_view_mut::<6, 6>(6 * i, 6 * j);
                        sv -= block;
                    }
                }
            }
            dc = s.cholesky()?.solve(&rhs);
            step.rows_mut(0, nc).copy_from(&dc);
        }
        for p in 0..np {
            let mut b = -self.gp[p];
            for (i, wi) in &self.hcp[p] {
                b -= wi.transpose() * dc.fixed_rows::<6>(6 * i);
            }
            step.fixed_rows_mut::<3>(nc + 3 * p).copy_from(&(v_inv[p] * b));
        }
        step.iter().all(|v| v.is_finite()).then_some(step)
    }
}

impl BundleProblem {
    fn pose<'a>(&'a self, state: &'a BundleState, i: usize) -> &'a RigidPose {
        if i < self.n_free {
            &state.free_poses[i]
        } else {
            &self.fixed_poses[i - self.n_free]
        }
    }

    fn evaluate(&self, state: &BundleState) -> Vec<Option<Reprojection>> {
        let one = |f: &Factor| {
            reprojection_residual(
                &state.points[f.point],
                self.pose(state, f.pose),
                &self.intrinsics,
                &f.measurement,
            )
        };
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            self.factors.par_iter().with_min_len(256).map(one).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            self.factors.iter().map(one).collect()
        }
    }

    /// Root-mean-square pixel error over the factors in front of their cameras.
    pub fn rms(&self, state: &BundleState) -> f64 {
        let evals = self.evaluate(state);
        let (sum, n) = evals
            .iter()
            .flatten()
            .fold((0.0, 0usize), |(s, n), r| (s + r.residual.norm_squared(), n + 1));
        if n == 0 {
            0.0
        } else {
            (sum / n as f64).sqrt()
        }
    }

    pub fn solve(&self, initial: BundleState, settings: &LmSettings) -> Result<(BundleState, Solution), OptimizeError> {
        if self.factors.is_empty() {
            return Err(OptimizeError::NoFactors);
        }
        solve_lm(self, initial, settings)
    }
}

impl LeastSquaresProblem for BundleProblem {
    type State = BundleState;
    type System = BlockSystem;

    fn cost(&self, state: &BundleState) -> f64 {
        let evals = self.evaluate(state);
        let mut cost = 0.0;
        for (f, r) in self.factors.iter().zip(&evals) {
            if let Some(r) = r {
                cost += 0.5 * f.weight * r.residual.norm_squared();
            }
        }
        cost
    }

    fn linearize(&self, state: &BundleState) -> BlockSystem {
        let nc = 6 * self.n_free;
        let mut sys = BlockSystem {
            hcc: DMatrix::zeros(nc, nc),
            gc: DVector::zeros(nc),
            hpp: vec![Matrix3::zeros(); self.n_points],
            gp: vec![Vector3::zeros(); self.n_points],
            hcp: vec![Vec::new(); self.n_points],
        };
        let evals = self.evaluate(state);
        for (f, r) in self.factors.iter().zip(&evals) {
            let Some(r) = r else { continue };
            let w = f.weight;
            let jp = r.d_point;
            sys.hpp[f.point] += w * jp.transpose() * jp;
            sys.gp[f.point] += w * jp.transpose() * r.residual;
            if f.pose < self.n_free {
                let jc = r.d_pose;
                let o = 6 * f.pose;
                let mut hcc = sys.hcc.fixed_view_mut::<6, 6>(o, o);
                hcc += w * jc.transpose() * jc;
                let mut gc = sys.gc.fixed_rows_mut::<6>(o);
                gc += w * jc.transpose() * r.residual;
                let block = w * jc.transpose() * jp;
                let cross = &mut sys.hcp[f.point];
                match cross.iter_mut().find(|(c, _)| *c == f.pose) {
                    Some((_, b)) => *b += block,
                    None => cross.push((f.pose, block)),
                }
            }
        }
        sys
    }

    fn gradient_norm(&self, system: &BlockSystem) -> f64 {
        let gp = system.gp.iter().map(|g| g.amax()).fold(0.0, f64::max);
        system.gc.amax().max(gp)
    }

    fn solve_damped(&self, system: &BlockSystem, damping: f64) -> Option<DVector<f64>> {
        system.solve_schur(damping)
    }

    fn retract(&self, state: &BundleState, step: &DVector<f64>) -> BundleState {
        let nc = 6 * self.n_free;
        BundleState {
            free_poses: state
                .free_poses
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    p.retract(&Se3Tangent(Vector6::from_iterator(
                        step.rows(6 * i, 6).iter().copied(),
                    )))
                })
                .collect(),
            points: state
                .points
                .iter()
                .enumerate()
                .map(|(i, p)| p + step.fixed_rows::<3>(nc + 3 * i))
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WindowedBaStatus {
    Applied,
    InsufficientFreeVariables,
    Stalled,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowedBaReport {
    pub status: WindowedBaStatus,
    pub free_keyframes: Vec<KeyFrameId>,
    pub anchored_keyframes: Vec<KeyFrameId>,
    pub n_points: usize,
    pub n_factors: usize,
    pub rms_before: f64,
    pub rms_after: f64,
    pub solution: Option<Solution>,
}

impl WindowedBaReport {
    fn insufficient() -> Self {
        Self {
            status: WindowedBaStatus::InsufficientFreeVariables,
            free_keyframes: Vec::new(),
            anchored_keyframes: Vec::new(),
            n_points: 0,
            n_factors: 0,
            rms_before: 0.0,
            rms_after: 0.0,
            solution: None,
        }
    }
}

/// A window problem extracted from the map, solvable without holding the map.
#[derive(Clone, Debug)]
pub struct WindowOutcome {
    pub report: WindowedBaReport,
    pub poses: Vec<(KeyFrameId, RigidPose)>,
    pub points: Vec<(VertexId, Vector3<f64>)>,
}

impl WindowOutcome {
    /// Reads the last `window` keyframes and every point they observe, then optimizes.
    /// The two oldest keyframes in the window stay fixed; keyframes outside the window
    /// contribute constant-pose factors.
    pub fn compute(map: &SlamMap, window: usize, intrinsics: &CameraIntrinsics, settings: &LmSettings) -> Self {
        let none = |report| Self {
            report,
            poses: Vec::new(),
            points: Vec::new(),
        };
        let window_ids: Vec<KeyFrameId> = {
            let mut ids: Vec<_> = map.keyframes().rev().take(window).map(|k| k.id).collect();
            ids.reverse();
            ids
        };
        if window_ids.len() < 2 {
            return none(WindowedBaReport::insufficient());
        }
        let anchored = window_ids[..2].to_vec();
        let free = window_ids[2..].to_vec();

        let mut point_ids: Vec<VertexId> = window_ids.iter().flat_map(|k| map.points_seen_by(*k)).collect();
        point_ids.sort_unstable();
        point_ids.dedup();
        if free.is_empty() && point_ids.is_empty() {
            return none(WindowedBaReport::insufficient());
        }

        let mut pose_index: BTreeMap<KeyFrameId, usize> =
            free.iter().enumerate().map(|(i, k)| (*k, i)).collect();
        let mut fixed_poses = Vec::new();
        let mut factors = Vec::new();
        for (pi, id) in point_ids.iter().enumerate() {
            for (kf, meas) in map.observations_of(*id) {
                let idx = *pose_index.entry(kf).or_insert_with(|| {
                    fixed_poses.push(map.keyframe(kf).expect("observation keyframe exists").pose);
                    free.len() + fixed_poses.len() - 1
                });
                factors.push(Factor {
                    pose: idx,
                    point: pi,
                    measurement: *meas,
                    weight: 1.0,
                });
            }
        }
        let problem = BundleProblem {
            intrinsics: *intrinsics,
            fixed_poses,
            n_free: free.len(),
            n_points: point_ids.len(),
            factors,
        };
        let initial = BundleState {
            free_poses: free.iter().map(|k| map.keyframe(*k).expect("window kf").pose).collect(),
            points: point_ids.iter().map(|id| map.point(*id).expect("observed point").position).collect(),
        };
        let rms_before = problem.rms(&initial);
        let mut report = WindowedBaReport {
            status: WindowedBaStatus::Applied,
            free_keyframes: free.clone(),
            anchored_keyframes: anchored,
            n_points: problem.n_points,
            n_factors: problem.factors.len(),
            rms_before,
            rms_after: rms_before,
            solution: None,
        };
        match problem.solve(initial, settings) {
            Ok((state, sol)) => {
                report.rms_after = problem.rms(&state);
                report.solution = Some(sol);
                Self {
                    report,
                    poses: free.into_iter().zip(state.free_poses).collect(),
                    points: point_ids.into_iter().zip(state.points).collect(),
                }
            }
            Err(e) => {
                warn!("windowed BA left the map unchanged: {e}");
                report.status = WindowedBaStatus::Stalled;
                if let OptimizeError::Stalled(sol) = e {
                    report.solution = Some(sol);
                }
                none(report)
            }
        }
    }

    /// Writes the result into the map as one versioned update. No-op unless applied and
    /// at least one step was accepted.
    pub fn commit(&self, map: &mut SlamMap) -> Result<(), MapError> {
        let moved = self.report.solution.as_ref().is_some_and(|s| s.cost_trace.len() > 1);
        if self.report.status != WindowedBaStatus::Applied || !moved {
            return Ok(());
        }
        map.commit_adjustment(&self.poses, &self.points)
    }
}

/// Windowed bundle adjustment over the last `window` keyframes of `map`.
pub fn windowed_ba(
    map: &mut SlamMap,
    window: usize,
    intrinsics: &CameraIntrinsics,
    settings: &LmSettings,
) -> WindowedBaReport {
    let outcome = WindowOutcome::compute(map, window, intrinsics, settings);
    if let Err(e) = outcome.commit(map) {
        warn!("windowed BA commit failed: {e}");
        let mut report = outcome.report;
        report.status = WindowedBaStatus::Stalled;
        return report;
    }
    outcome.report
}
