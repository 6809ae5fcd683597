//! Trajectory I/O, timestamp association, similarity alignment and absolute trajectory
//! error.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use thiserror::Error;

use crate::pose::RigidPose;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("trajectory has no samples")]
    Empty,
    #[error("timestamps must be strictly increasing (sample {index})")]
    NonMonotonic { index: usize },
    #[error("no overlapping samples")]
    NoOverlap,
    #[error("alignment needs at least 3 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("alignment is degenerate: positions are collinear or coincident")]
    Degenerate,
    #[error("max_dt must be non-negative")]
    NegativeMaxDt,
}

/// Timestamped camera-to-world poses with strictly increasing timestamps.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    samples: Vec<(f64, RigidPose)>,
}

impl Trajectory {
    pub fn new(samples: Vec<(f64, RigidPose)>) -> Result<Self, EvalError> {
        if samples.is_empty() {
            return Err(EvalError::Empty);
        }
        for (i, w) in samples.windows(2).enumerate() {
            if !(w[1].0 > w[0].0) {
                return Err(EvalError::NonMonotonic { index: i + 1 });
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[(f64, RigidPose)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn timestamps(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|(t, _)| *t)
    }

    /// Pose at `t` by linear interpolation of position and slerp of orientation; clamps
    /// outside the sampled range.
    pub fn pose_at(&self, t: f64) -> RigidPose {
        let s = &self.samples;
        let k = s.partition_point(|(ts, _)| *ts <= t);
        if k == 0 {
            return s[0].1;
        }
        if k == s.len() {
            return s[s.len() - 1].1;
        }
        let (t0, p0) = s[k - 1];
        let (t1, p1) = s[k];
        p0.interpolate(&p1, (t - t0) / (t1 - t0))
    }

    /// One `timestamp tx ty tz qx qy qz qw` line per sample.
    pub fn to_tum_string(&self) -> String {
        let mut out = String::from("# timestamp tx ty tz qx qy qz qw\n");
        for (t, pose) in &self.samples {
            write_tum_line(&mut out, *t, pose);
        }
        out
    }

    pub fn parse_tum(text: &str) -> Result<Self, EvalError> {
        let mut samples = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<Result<_, _>>()
                .map_err(|e| EvalError::Parse {
                    line: i + 1,
                    msg: e.to_string(),
                })?;
            if vals.len() != 8 {
                return Err(EvalError::Parse {
                    line: i + 1,
                    msg: format!("expected 8 fields, found {}", vals.len()),
                });
            }
            let q_norm = vals[4..8].iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(q_norm > 0.0) || vals.iter().any(|v| !v.is_finite()) {
                return Err(EvalError::Parse {
                    line: i + 1,
                    msg: "invalid pose".into(),
                });
            }
            let c = [vals[1], vals[2], vals[3], vals[4], vals[5], vals[6], vals[7]];
            samples.push((vals[0], RigidPose::from_components(c)));
        }
        Self::new(samples)
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = fs::read_to_string(path).map_err(|source| EvalError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_tum(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        fs::write(path, self.to_tum_string()).map_err(|source| EvalError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

pub fn write_tum_line(out: &mut String, t: f64, pose: &RigidPose) {
    let c = pose.components();
    let _ = write!(out, "{t:.9}");
    for v in c {
        let _ = write!(out, " {v:?}");
    }
    out.push('\n');
}

/// One associated pair of samples.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Association {
    pub est_index: usize,
    pub gt_index: usize,
    pub dt: f64,
}

/// Greedy nearest-timestamp association: candidate pairs within `max_dt` are taken in
/// order of increasing `|dt|`, each sample of either trajectory used at most once.
/// Returned in estimate order.
pub fn associate_by_timestamp(est: &Trajectory, gt: &Trajectory, max_dt: f64) -> Result<Vec<Association>, EvalError> {
    if !(max_dt >= 0.0) {
        return Err(EvalError::NegativeMaxDt);
    }
    let gts: Vec<f64> = gt.timestamps().collect();
    let mut candidates = Vec::new();
    for (i, t) in est.timestamps().enumerate() {
        // The window is widened slightly; membership is decided by |dt| alone.
        let slack = 1e-9 * (1.0 + t.abs());
        let lo = gts.partition_point(|g| *g < t - max_dt - slack);
        for (j, g) in gts.iter().enumerate().skip(lo) {
            if *g > t + max_dt + slack {
                break;
            }
            if (t - g).abs() > max_dt {
                continue;
            }
            candidates.push(Association {
                est_index: i,
                gt_index: j,
                dt: t - g,
            });
        }
    }
    candidates.sort_by(|a, b| {
        a.dt.abs()
            .total_cmp(&b.dt.abs())
            .then(a.est_index.cmp(&b.est_index))
            .then(a.gt_index.cmp(&b.gt_index))
    });
    let mut est_used = vec![false; est.len()];
    let mut gt_used = vec![false; gt.len()];
    let mut pairs = Vec::new();
    for c in candidates {
        if !est_used[c.est_index] && !gt_used[c.gt_index] {
            est_used[c.est_index] = true;
            gt_used[c.gt_index] = true;
            pairs.push(c);
        }
    }
    if pairs.is_empty() {
        return Err(EvalError::NoOverlap);
    }
    pairs.sort_by_key(|p| p.est_index);
    Ok(pairs)
}

/// Similarity transform `p ↦ s·R·p + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sim3 {
    pub scale: f64,
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl Sim3 {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * p) + self.translation
    }

    pub fn inverse(&self) -> Self {
        let r = self.rotation.inverse();
        let s = 1.0 / self.scale;
        Self {
            scale: s,
            rotation: r,
            translation: -(s * (r * self.translation)),
        }
    }

    /// Maps a camera-to-world pose; the orientation only picks up the rotation.
    pub fn apply_pose(&self, pose: &RigidPose) -> RigidPose {
        RigidPose::new(self.rotation * pose.rotation, self.apply(&pose.translation))
    }
}

/// Least-squares similarity taking `est` positions onto `gt` positions (Umeyama),
/// with the reflection case corrected.
pub fn align_sim3(pairs: &[(Vector3<f64>, Vector3<f64>)]) -> Result<Sim3, EvalError> {
    let n = pairs.len();
    if n < 3 {
        return Err(EvalError::TooFewPairs(n));
    }
    let nf = n as f64;
    let mu_e = pairs.iter().map(|(e, _)| e).sum::<Vector3<f64>>() / nf;
    let mu_g = pairs.iter().map(|(_, g)| g).sum::<Vector3<f64>>() / nf;
    let mut cov = Matrix3::zeros();
    let mut var_e = 0.0;
    let mut spread_e = Matrix3::zeros();
    let mut spread_g = Matrix3::zeros();
    for (e, g) in pairs {
        let de = e - mu_e;
        let dg = g - mu_g;
        cov += dg * de.transpose();
        spread_e += de * de.transpose();
        spread_g += dg * dg.transpose();
        var_e += de.norm_squared();
    }
    cov /= nf;
    var_e /= nf;
    let collinear = |m: &Matrix3<f64>| {
        let mut s: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        !(s[0] > 0.0) || s[1] <= 1e-12 * s[0]
    };
    if collinear(&spread_e) || collinear(&spread_g) {
        return Err(EvalError::Degenerate);
    }
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.ok_or(EvalError::Degenerate)?, svd.v_t.ok_or(EvalError::Degenerate)?);
    let d = svd.singular_values;
    let mut s_diag = Vector3::new(1.0, 1.0, 1.0);
    // nalgebra does not sort singular values: flip the smallest one.
    if (u.determinant() * v_t.determinant()) < 0.0 {
        let k = (0..3).min_by(|&i, &j| d[i].total_cmp(&d[j])).expect("3 values");
        s_diag[k] = -1.0;
    }
    let r = u * Matrix3::from_diagonal(&s_diag) * v_t;
    let scale = d.dot(&s_diag) / var_e;
    let rotation = UnitQuaternion::from_matrix(&r);
    let translation = mu_g - scale * (rotation * mu_e);
    Ok(Sim3 {
        scale,
        rotation,
        translation,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AteReport {
    pub rmse: f64,
    pub mean: f64,
    pub median: f64,
    pub max: f64,
    /// `(gt timestamp, translational error)` per associated sample.
    pub per_sample_errors: Vec<(f64, f64)>,
    /// Transform applied to the estimate.
    pub alignment: Sim3,
    pub n_matched: usize,
}

impl AteReport {
    pub fn error_csv(&self) -> String {
        let mut out = String::from("timestamp,error\n");
        for (t, e) in &self.per_sample_errors {
            let _ = writeln!(out, "{t:.9},{e:?}");
        }
        out
    }

    pub fn write_error_csv(&self, path: &Path) -> Result<(), EvalError> {
        fs::write(path, self.error_csv()).map_err(|source| EvalError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Translational absolute trajectory error after Sim(3) alignment of the estimate.
pub fn ate_rmse(est: &Trajectory, gt: &Trajectory, max_dt: f64) -> Result<AteReport, EvalError> {
    let assoc = associate_by_timestamp(est, gt, max_dt)?;
    let pairs: Vec<(Vector3<f64>, Vector3<f64>)> = assoc
        .iter()
        .map(|a| {
            (
                est.samples[a.est_index].1.translation,
                gt.samples[a.gt_index].1.translation,
            )
        })
        .collect();
    let alignment = align_sim3(&pairs)?;
    let per_sample_errors: Vec<(f64, f64)> = assoc
        .iter()
        .zip(&pairs)
        .map(|(a, (e, g))| (gt.samples[a.gt_index].0, (alignment.apply(e) - g).norm()))
        .collect();
    let n = per_sample_errors.len() as f64;
    let errs: Vec<f64> = per_sample_errors.iter().map(|(_, e)| *e).collect();
    let rmse = (errs.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    let mean = errs.iter().sum::<f64>() / n;
    let max = errs.iter().copied().fold(0.0, f64::max);
    let mut sorted = errs.clone();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let median = if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    };
    Ok(AteReport {
        rmse,
        mean,
        median,
        max,
        per_sample_errors,
        alignment,
        n_matched: assoc.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> Trajectory {
        Trajectory::new(
            (0..n)
                .map(|i| (i as f64 * 0.1, RigidPose::from_translation(Vector3::new(i as f64, (i * i) as f64, 0.0))))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn rejects_non_monotone() {
        let p = RigidPose::identity();
        assert!(matches!(
            Trajectory::new(vec![(0.0, p), (0.0, p)]),
            Err(EvalError::NonMonotonic { index: 1 })
        ));
        assert!(matches!(Trajectory::new(vec![]), Err(EvalError::Empty)));
    }

    #[test]
    fn identical_is_zero() {
        let t = line(10);
        let r = ate_rmse(&t, &t, 0.01).unwrap();
        assert!(r.rmse < 1e-12);
        assert_eq!(r.n_matched, 10);
    }

    #[test]
    fn disjoint_times_do_not_overlap() {
        let a = line(3);
        let b = Trajectory::new(vec![(100.0, RigidPose::identity())]).unwrap();
        assert!(matches!(associate_by_timestamp(&a, &b, 0.01), Err(EvalError::NoOverlap)));
    }

    #[test]
    fn pose_at_interpolates() {
        let t = line(3);
        let p = t.pose_at(0.05);
        assert!((p.translation - Vector3::new(0.5, 0.5, 0.0)).norm() < 1e-12);
        assert_eq!(t.pose_at(-1.0), t.samples()[0].1);
    }

    #[test]
    fn csv_header() {
        let t = line(4);
        let r = ate_rmse(&t, &t, 0.0).unwrap();
        assert!(r.error_csv().starts_with("timestamp,error\n"));
        assert_eq!(r.error_csv().lines().count(), 5);
    }
}
