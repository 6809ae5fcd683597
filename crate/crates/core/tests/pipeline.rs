//! End-to-end runs of capture, tracking and mapping over a synthetic room.

use meshslam::slam::MappingMode;
use meshslam::*;
use nalgebra::Vector3;

fn orbit_pose(t: f64) -> RigidPose {
    let w = 0.2;
    let eye = Vector3::new((w * t).cos(), 0.0, (w * t).sin());
    RigidPose::look_at(eye, Vector3::zeros(), Vector3::y()).unwrap()
}

fn run(fps: f64, seconds: f64) -> (Trajectory, Trajectory, usize, usize) {
    let room = generate_scene(&SceneSpec::new(SceneKind::BoxRoom {
        width: 4.0,
        height: 3.0,
        depth: 4.0,
        subdivisions: 12,
    }))
    .unwrap();
    let intr = CameraIntrinsics::default();
    let cap = CaptureConfig::default();
    let mut sys = SlamSystem::new(intr, SlamConfig::default(), MappingMode::Synchronous);
    let mut est = Vec::new();
    let mut gt = Vec::new();
    let mut lost = 0;
    let n = (fps * seconds) as u64;
    for i in 0..n {
        let t = i as f64 / fps;
        let pose = orbit_pose(t);
        let frame = capture_frame(&room, &pose, &intr, &cap, i, t);
        let out = sys.process(frame);
        if let Some((_, t0, p0)) = out.initialized_from {
            est.push((t0, p0));
            gt.push((t0, orbit_pose(t0)));
        }
        if std::env::var("PIPE_DEBUG").is_ok() {
            let m = sys.map();
            let m = m.read().unwrap();
            let err = out.pose.map(|p| (p.translation - pose.translation).norm());
            eprintln!("f{i} mode={:?} feat={} matched={} tracked={} kf={:?} pts={} kfs={} err={:?}", out.mode, out.n_features, out.n_matched, out.n_tracked, out.keyframe, m.num_points(), m.num_keyframes(), err);
        }
        if out.lost {
            lost += 1;
        }
        if let Some(p) = out.pose {
            est.push((t, p));
            gt.push((t, pose));
        }
    }
    sys.wait_for_mapping();
    let npts = sys.map().read().unwrap().num_points();
    (Trajectory::new(est).unwrap(), Trajectory::new(gt).unwrap(), lost, npts)
}

#[test]
fn noise_free_orbit_is_tracked_accurately() {
    let (est, gt, lost, npts) = run(30.0, 10.0);
    let ate = ate_rmse(&est, &gt, 1e-3).unwrap();
    eprintln!("samples={} lost={} points={} rmse={:e} max={:e}", est.len(), lost, npts, ate.rmse, ate.max);
    assert_eq!(lost, 0);
    assert!(ate.rmse < 1e-3);
}
