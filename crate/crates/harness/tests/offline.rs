use std::fs;
use std::path::Path;
use std::time::Duration;

use meshslam::{RigidPose, TrackerMode, Trajectory};
use meshslam_harness::config::RunConfig;
use meshslam_harness::error::HarnessError;
use meshslam_harness::offline::frames_csv;
use meshslam_harness::{generate_trajectory, run_offline, run_offline_with, FrameRecord, RunHooks, TrajectorySpec};
use nalgebra::Vector3;

fn config(out: &Path, duration: f64, fps: f64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.out_dir = out.to_path_buf();
    cfg.duration_s = duration;
    cfg.input_fps = fps;
    cfg
}

/// frames.csv with the wall-clock column blanked.
fn frames_without_timing(dir: &Path) -> String {
    fs::read_to_string(dir.join("frames.csv"))
        .unwrap()
        .lines()
        .map(|l| {
            let mut cols: Vec<&str> = l.split(',').collect();
            cols[4] = "";
            cols.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn zero_duration_gives_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_offline(&config(dir.path(), 0.0, 30.0)).unwrap();
    assert_eq!(report.frames_total, 0);
    assert_eq!(report.frames_processed, 0);
    assert_eq!(report.mode, TrackerMode::Uninitialized);
    assert!(report.ate.is_none());
    assert!(dir.path().join("report.txt").exists());
}

#[test]
fn short_run_is_accurate_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_offline(&config(dir.path(), 4.0, 30.0)).unwrap();
    assert_eq!(report.frames_total, 120);
    assert!(report.frames_skipped + report.frames_processed <= report.frames_total);
    assert_eq!(report.frames_lost, 0);
    assert!(report.ate.as_ref().unwrap().rmse < 1e-6);
    for name in ["est.txt", "gt.txt", "map.txt", "frames.csv", "config.txt", "report.txt", "ate_errors.csv"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let gt = Trajectory::load(&dir.path().join("gt.txt")).unwrap();
    assert_eq!(gt.len(), 120);
    let cfg = RunConfig::load(&dir.path().join("config.txt")).unwrap();
    assert_eq!(cfg, config(dir.path(), 4.0, 30.0));
}

#[test]
fn identical_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut cfg = config(a.path(), 4.0, 60.0);
    cfg.pixel_noise_sigma = 0.5;
    cfg.seed = 11;
    run_offline(&cfg).unwrap();
    cfg.out_dir = b.path().to_path_buf();
    run_offline(&cfg).unwrap();
    for name in ["est.txt", "map.txt", "gt.txt"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
    assert_eq!(frames_without_timing(a.path()), frames_without_timing(b.path()));
}

#[test]
fn slow_tracker_skips_frames_without_deadlock() {
    let dir = tempfile::tempdir().unwrap();
    let hooks = RunHooks {
        tracker_delay: Some(Box::new(|_| Duration::from_millis(100))),
        ..RunHooks::default()
    };
    let report = run_offline_with(&config(dir.path(), 3.0, 75.0), hooks).unwrap();
    assert!(report.frames_skipped > 0);
    assert!(report.frames_skipped + report.frames_processed <= report.frames_total);
    assert!(report.keyframes > 0);
    assert!(report.estimated_poses >= report.keyframes);
}

#[test]
fn delay_from_config_skips_frames() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), 1.0, 75.0);
    cfg.tracker_delay_ms = 30.0;
    let report = run_offline(&cfg).unwrap();
    // One frame in three fits into the tracker; every other frame is queued or dropped.
    assert!(report.frames_skipped > 0);
    assert!(report.frames_processed < report.frames_total);
}

#[test]
fn estimate_ignores_ground_truth_carried_by_frames() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_offline(&config(a.path(), 3.0, 30.0)).unwrap();
    let poison = RigidPose::from_translation(Vector3::new(1e6, -1e6, 1e6));
    let hooks = RunHooks {
        inspect_frame: Some(Box::new(move |f| f.replace_ground_truth(poison))),
        ..RunHooks::default()
    };
    run_offline_with(&config(b.path(), 3.0, 30.0), hooks).unwrap();
    for name in ["est.txt", "map.txt"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap());
    }
}

#[test]
fn trajectory_file_source() {
    let dir = tempfile::tempdir().unwrap();
    let traj_path = dir.path().join("traj.txt");
    generate_trajectory(&TrajectorySpec::default(), 3.0, 120.0)
        .unwrap()
        .save(&traj_path)
        .unwrap();
    let mut cfg = config(&dir.path().join("out"), 2.0, 30.0);
    cfg.set("trajectory.kind", "file").unwrap();
    cfg.set("trajectory.path", traj_path.to_str().unwrap()).unwrap();
    let report = run_offline(&cfg).unwrap();
    assert!(report.ate.unwrap().rmse < 1e-3);

    // A recording shorter than the run is refused.
    cfg.duration_s = 10.0;
    assert!(matches!(run_offline(&cfg), Err(HarnessError::Trajectory(_))));
}

#[test]
fn frames_csv_format() {
    let rows = [
        FrameRecord {
            frame_id: 0,
            t: 0.0,
            captured_features: 10,
            matched: 0,
            track_ms: Some(1.23456),
            skipped: false,
            lost: false,
        },
        FrameRecord {
            frame_id: 1,
            t: 1.0 / 30.0,
            captured_features: 9,
            matched: 0,
            track_ms: None,
            skipped: true,
            lost: false,
        },
    ];
    assert_eq!(
        frames_csv(&rows),
        "frame_id,t,captured_features,matched,track_ms,skipped,lost\n\
         0,0.000000000,10,0,1.235,0,0\n\
         1,0.033333333,9,0,,1,0\n"
    );
}
