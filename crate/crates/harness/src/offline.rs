//! Offline experiment driver.
//!
//! A simulated clock ticks at the input frame rate. Each tick samples the ground-truth
//! pose, captures a frame, optionally adds pixel noise and offers the frame to the
//! tracking thread through a one-slot mailbox. The tracker's processing time is laid out
//! on the simulated timeline; a frame that arrives while the tracker is busy and the
//! mailbox is occupied is dropped and counted as skipped.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, Receiver, Sender};
use log::{info, warn};
use meshslam::evaluation::write_tum_line;
use meshslam::slam::{FrameOutcome, MappingMode, SharedMap};
use meshslam::{
    ate_rmse, capture_frame, generate_scene, AteReport, FeatureFrame, RigidPose, SlamSystem, Trajectory, TrackerMode,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{RunConfig, TrajectorySource};
use crate::error::{io_err, HarnessError};
use crate::trajectory::generate_trajectory;

/// Median and 95th percentile of a set of timings, in milliseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TimingStats {
    pub count: usize,
    pub median_ms: f64,
    pub p95_ms: f64,
}

impl TimingStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        Self {
            count: s.len(),
            median_ms: median_sorted(&s),
            p95_ms: percentile_sorted(&s, 0.95),
        }
    }
}

pub(crate) fn median_sorted(s: &[f64]) -> f64 {
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Nearest-rank percentile.
pub(crate) fn percentile_sorted(s: &[f64], q: f64) -> f64 {
    let rank = (q * s.len() as f64).ceil().max(1.0) as usize;
    s[rank.min(s.len()) - 1]
}

/// One row of `frames.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameRecord {
    pub frame_id: u64,
    pub t: f64,
    pub captured_features: usize,
    pub matched: usize,
    /// Wall-clock tracking time; `None` for skipped frames.
    pub track_ms: Option<f64>,
    pub skipped: bool,
    pub lost: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub mode: TrackerMode,
    /// `None` when fewer than three estimated poses could be associated and aligned.
    pub ate: Option<AteReport>,
    pub frames_total: usize,
    pub frames_processed: usize,
    pub frames_skipped: usize,
    pub frames_lost: usize,
    pub capture: TimingStats,
    pub track: TimingStats,
    pub keyframes: usize,
    pub points: usize,
    pub map_version: u64,
    pub estimated_poses: usize,
    pub artifacts: Vec<PathBuf>,
}

impl RunReport {
    /// Flat `key = value` text.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("mode", self.mode.as_str().into());
        kv("frames_total", self.frames_total.to_string());
        kv("frames_processed", self.frames_processed.to_string());
        kv("frames_skipped", self.frames_skipped.to_string());
        kv("frames_lost", self.frames_lost.to_string());
        kv("keyframes", self.keyframes.to_string());
        kv("points", self.points.to_string());
        kv("map_version", self.map_version.to_string());
        kv("estimated_poses", self.estimated_poses.to_string());
        match &self.ate {
            Some(a) => {
                kv("ate_rmse", format!("{:e}", a.rmse));
                kv("ate_mean", format!("{:e}", a.mean));
                kv("ate_median", format!("{:e}", a.median));
                kv("ate_max", format!("{:e}", a.max));
                kv("ate_matched", a.n_matched.to_string());
                kv("ate_scale", format!("{:e}", a.alignment.scale));
            }
            None => kv("ate_rmse", "undefined".into()),
        }
        kv("capture_ms_median", format!("{:.4}", self.capture.median_ms));
        kv("capture_ms_p95", format!("{:.4}", self.capture.p95_ms));
        kv("track_ms_median", format!("{:.4}", self.track.median_ms));
        kv("track_ms_p95", format!("{:.4}", self.track.p95_ms));
        for p in &self.artifacts {
            kv("artifact", p.display().to_string());
        }
        out
    }
}

/// Test hooks for the offline driver.
#[derive(Default)]
pub struct RunHooks {
    /// Extra processing time for the tracker on a given frame. Slept for real and laid
    /// out on the simulated timeline. Replaces `tracker_delay_ms` from the config.
    pub tracker_delay: Option<Box<dyn Fn(u64) -> Duration + Send>>,
    /// Called on every captured frame before it is offered to tracking.
    pub inspect_frame: Option<Box<dyn FnMut(&mut FeatureFrame) + Send>>,
}

struct Job {
    frame: FeatureFrame,
    delay: Duration,
}

struct TrackerOutput {
    outcomes: Vec<(FrameOutcome, f64)>,
    map: SharedMap,
    mode: TrackerMode,
}

fn tracker_loop(
    jobs: Receiver<Job>,
    acks: Option<Sender<f64>>,
    cfg: RunConfig,
    mapping: MappingMode,
) -> TrackerOutput {
    let mut system = SlamSystem::new(cfg.intrinsics, cfg.slam, mapping);
    let mut outcomes = Vec::new();
    for job in jobs {
        let start = Instant::now();
        if !job.delay.is_zero() {
            thread::sleep(job.delay);
        }
        let outcome = system.process(job.frame);
        let ms = start.elapsed().as_secs_f64() * 1e3;
        outcomes.push((outcome, ms));
        if let Some(acks) = &acks {
            if acks.send(ms).is_err() {
                break;
            }
        }
    }
    system.wait_for_mapping();
    let mode = system.state().mode;
    let map = system.map();
    system.shutdown();
    TrackerOutput { outcomes, map, mode }
}

/// Ground-truth pose source for a run, covering `[t0, t0 + duration]`.
fn ground_truth(cfg: &RunConfig, n_ticks: usize) -> Result<Trajectory, HarnessError> {
    let last_t = n_ticks.saturating_sub(1) as f64 / cfg.input_fps;
    match &cfg.trajectory {
        TrajectorySource::Generated(spec) => {
            let dt = 1.0 / cfg.trajectory_hz;
            generate_trajectory(spec, last_t + 2.0 * dt, cfg.trajectory_hz)
        }
        TrajectorySource::File(path) => {
            let traj = Trajectory::load(path)?;
            let first = traj.samples()[0].0;
            let last = traj.samples()[traj.len() - 1].0;
            if last - first + 1e-9 < last_t {
                return Err(HarnessError::Trajectory(format!(
                    "{} covers {:.3} s but the run needs {:.3} s",
                    path.display(),
                    last - first,
                    last_t
                )));
            }
            Ok(traj)
        }
    }
}

fn write(path: &Path, text: &str) -> Result<PathBuf, HarnessError> {
    fs::write(path, text).map_err(io_err(path))?;
    Ok(path.to_path_buf())
}

fn tum_text(samples: &[(f64, RigidPose)]) -> String {
    let mut out = String::from("# timestamp tx ty tz qx qy qz qw\n");
    for (t, p) in samples {
        write_tum_line(&mut out, *t, p);
    }
    out
}

pub fn run_offline(cfg: &RunConfig) -> Result<RunReport, HarnessError> {
    run_offline_with(cfg, RunHooks::default())
}

pub fn run_offline_with(cfg: &RunConfig, hooks: RunHooks) -> Result<RunReport, HarnessError> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir).map_err(io_err(&cfg.out_dir))?;
    let n_ticks = (cfg.duration_s * cfg.input_fps + 1e-9).floor() as usize;
    let mesh = generate_scene(&cfg.scene)?;
    let gt_traj = if n_ticks > 0 { Some(ground_truth(cfg, n_ticks)?) } else { None };
    let t0 = gt_traj.as_ref().map_or(0.0, |g| g.samples()[0].0);
    info!(
        "offline run: {} vertices, {} ticks at {} fps, sigma {} px",
        mesh.len(),
        n_ticks,
        cfg.input_fps,
        cfg.pixel_noise_sigma
    );

    let mapping = if cfg.async_mapping == Some(true) {
        MappingMode::Asynchronous
    } else {
        MappingMode::Synchronous
    };
    let (job_tx, job_rx) = bounded::<Job>(1);
    let (ack_tx, ack_rx) = if cfg.use_measured_time {
        let (tx, rx) = bounded::<f64>(1);
        (Some(tx), Some(rx))
    } else {
        (None, None)
    };
    let tracker = {
        let cfg = cfg.clone();
        thread::Builder::new()
            .name("tracking".into())
            .spawn(move || tracker_loop(job_rx, ack_tx, cfg, mapping))
            .expect("spawn tracking thread")
    };

    let fixed_delay = Duration::from_secs_f64(cfg.tracker_delay_ms / 1e3);
    let RunHooks {
        tracker_delay,
        mut inspect_frame,
    } = hooks;
    let delay_for = |id: u64| tracker_delay.as_ref().map_or(fixed_delay, |f| f(id));
    let noise = (cfg.pixel_noise_sigma > 0.0).then(|| Normal::new(0.0, cfg.pixel_noise_sigma).expect("σ ≥ 0"));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut gt_samples = Vec::with_capacity(n_ticks);
    let mut records: Vec<FrameRecord> = Vec::with_capacity(n_ticks);
    let mut capture_ms = Vec::with_capacity(n_ticks);
    // Simulated time at which the tracker finishes its current frame.
    let mut busy_until = f64::NEG_INFINITY;
    let mut mailbox: Option<FeatureFrame> = None;

    // Hands a frame to the tracker starting at simulated time `start`.
    let dispatch = |frame: FeatureFrame, start: f64, busy_until: &mut f64| {
        let delay = delay_for(frame.frame_id);
        job_tx
            .send(Job { frame, delay })
            .expect("tracking thread alive");
        let mut busy = delay.as_secs_f64();
        if let Some(acks) = &ack_rx {
            busy += acks.recv().expect("tracking thread alive") / 1e3;
        }
        *busy_until = start + busy;
    };

    for k in 0..n_ticks {
        let t = t0 + k as f64 / cfg.input_fps;
        let gt = gt_traj.as_ref().expect("ticks imply a trajectory").pose_at(t);
        gt_samples.push((t, gt));
        let start = Instant::now();
        let mut frame = capture_frame(&mesh, &gt, &cfg.intrinsics, &cfg.capture, k as u64, t);
        capture_ms.push(start.elapsed().as_secs_f64() * 1e3);
        if let Some(n) = &noise {
            frame.perturb_pixels(|u, v| {
                *u += n.sample(&mut rng);
                *v += n.sample(&mut rng);
            });
        }
        if let Some(f) = inspect_frame.as_mut() {
            f(&mut frame);
        }
        records.push(FrameRecord {
            frame_id: k as u64,
            t,
            captured_features: frame.len(),
            matched: 0,
            track_ms: None,
            skipped: false,
            lost: false,
        });

        if busy_until <= t {
            if let Some(waiting) = mailbox.take() {
                let start = busy_until;
                dispatch(waiting, start, &mut busy_until);
            }
        }
        if busy_until <= t {
            dispatch(frame, t, &mut busy_until);
        } else if mailbox.is_none() {
            mailbox = Some(frame);
        } else {
            records[k].skipped = true;
        }
    }
    if let Some(waiting) = mailbox.take() {
        let start = busy_until;
        dispatch(waiting, start, &mut busy_until);
    }
    drop(job_tx);
    let output = tracker.join().expect("tracking thread panicked");

    let mut est_samples = Vec::new();
    let mut track_ms = Vec::new();
    let mut frames_lost = 0;
    for (o, ms) in &output.outcomes {
        let r = &mut records[o.frame_id as usize];
        r.matched = o.n_matched;
        r.track_ms = Some(*ms);
        r.lost = o.lost;
        track_ms.push(*ms);
        if o.lost {
            frames_lost += 1;
        }
        if let Some((_, t_ref, pose_ref)) = o.initialized_from {
            est_samples.push((t_ref, pose_ref));
        }
        if let Some(p) = o.pose {
            est_samples.push((o.timestamp, p));
        }
    }
    est_samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    est_samples.dedup_by(|a, b| a.0 == b.0);

    let ate = if est_samples.len() >= 3 {
        let est = Trajectory::new(est_samples.clone())?;
        let gt = Trajectory::new(gt_samples.clone())?;
        match ate_rmse(&est, &gt, 0.5 / cfg.input_fps) {
            Ok(a) => Some(a),
            Err(e) => {
                warn!("ATE undefined: {e}");
                None
            }
        }
    } else {
        None
    };

    let map = output.map.read().expect("map lock poisoned");
    let out = &cfg.out_dir;
    let mut artifacts = vec![
        write(&out.join("est.txt"), &tum_text(&est_samples))?,
        write(&out.join("gt.txt"), &tum_text(&gt_samples))?,
        write(&out.join("map.txt"), &map.snapshot())?,
        write(&out.join("frames.csv"), &frames_csv(&records))?,
        write(&out.join("config.txt"), &cfg.to_text())?,
    ];
    if let Some(a) = &ate {
        artifacts.push(write(&out.join("ate_errors.csv"), &a.error_csv())?);
    }
    let report_path = out.join("report.txt");
    artifacts.push(report_path.clone());

    let report = RunReport {
        mode: output.mode,
        ate,
        frames_total: n_ticks,
        frames_processed: output.outcomes.len(),
        frames_skipped: records.iter().filter(|r| r.skipped).count(),
        frames_lost,
        capture: TimingStats::from_samples(&capture_ms),
        track: TimingStats::from_samples(&track_ms),
        keyframes: map.num_keyframes(),
        points: map.num_points(),
        map_version: map.version(),
        estimated_poses: est_samples.len(),
        artifacts,
    };
    write(&report_path, &report.to_text())?;
    Ok(report)
}

/// `frame_id,t,captured_features,matched,track_ms,skipped,lost`. `track_ms` is the only
/// wall-clock column; it is empty for skipped frames.
pub fn frames_csv(records: &[FrameRecord]) -> String {
    let mut out = String::from("frame_id,t,captured_features,matched,track_ms,skipped,lost\n");
    for r in records {
        let ms = r.track_ms.map_or(String::new(), |m| format!("{m:.3}"));
        let _ = writeln!(
            out,
            "{},{:.9},{},{},{},{},{}",
            r.frame_id, r.t, r.captured_features, r.matched, ms, r.skipped as u8, r.lost as u8
        );
    }
    out
}
