use meshslam::{SceneKind, Trajectory};
use meshslam_harness::config::{RunConfig, TrajectorySource};
use meshslam_harness::error::HarnessError;
use meshslam_harness::{generate_trajectory, TrajectorySpec};
use nalgebra::Vector3;
use proptest::prelude::*;

#[test]
fn parses_dotted_keys_and_comments() {
    let cfg = RunConfig::from_text(
        "# comment\n\
         scene.kind = box_room\n\
         scene.subdivisions = 16   # trailing\n\
         \n\
         run.fps = 60\n\
         slam.ba_window = 7\n\
         trajectory.radius = 1.5\n",
    )
    .unwrap();
    assert_eq!(cfg.input_fps, 60.0);
    assert_eq!(cfg.slam.ba_window, 7);
    assert!(matches!(cfg.scene.kind, SceneKind::BoxRoom { subdivisions: 16, .. }));
    assert_eq!(
        cfg.trajectory,
        TrajectorySource::Generated(TrajectorySpec::Orbit {
            radius: 1.5,
            height: 0.0,
            omega: 0.2
        })
    );
}

#[test]
fn later_assignment_wins() {
    let mut cfg = RunConfig::from_text("run.fps = 60").unwrap();
    cfg.set("run.fps", "75").unwrap();
    assert_eq!(cfg.input_fps, 75.0);
}

#[test]
fn rejects_bad_lines_and_keys() {
    assert!(matches!(
        RunConfig::from_text("run.fps 60"),
        Err(HarnessError::ConfigSyntax { line: 1, .. })
    ));
    assert!(matches!(RunConfig::from_text("run.nope = 1"), Err(HarnessError::UnknownKey(_))));
    assert!(matches!(RunConfig::from_text("run.fps = fast"), Err(HarnessError::ConfigValue { .. })));
    assert!(matches!(
        RunConfig::from_text("trajectory.amplitude = 1,2,3"),
        Err(HarnessError::UnknownKey(_))
    ));
}

#[test]
fn validate_enforces_invariants() {
    for (k, v) in [("run.fps", "0"), ("run.noise_sigma", "-1"), ("trajectory.radius", "0")] {
        let mut cfg = RunConfig::default();
        cfg.set(k, v).unwrap();
        assert!(cfg.validate().is_err(), "{k} = {v}");
    }
    RunConfig::default().validate().unwrap();
}

#[test]
fn to_text_round_trips() {
    let mut cfg = RunConfig::default();
    for (k, v) in [
        ("trajectory.kind", "lissajous"),
        ("trajectory.amplitude", "0.5, 0.1, 0.25"),
        ("trajectory.seed", "9"),
        ("run.noise_sigma", "0.5"),
        ("run.mapping", "async"),
        ("slam.max_reproj_px", "3.25"),
        ("capture.cull_outside_image", "false"),
        ("live.port", "9001"),
    ] {
        cfg.set(k, v).unwrap();
    }
    assert_eq!(RunConfig::from_text(&cfg.to_text()).unwrap(), cfg);
    let file_cfg = RunConfig::from_text("trajectory.kind = file\ntrajectory.path = /tmp/x.txt\nscene.kind = grid").unwrap();
    assert_eq!(RunConfig::from_text(&file_cfg.to_text()).unwrap(), file_cfg);
}

#[test]
fn orbit_at_zero_faces_minus_x() {
    let spec = TrajectorySpec::Orbit {
        radius: 3.0,
        height: 0.0,
        omega: 0.5,
    };
    let pose = spec.pose_at(0.0).unwrap();
    assert!((pose.translation - Vector3::new(3.0, 0.0, 0.0)).norm() < 1e-12);
    let forward = pose.rotation * -Vector3::z();
    assert!((forward - Vector3::new(-1.0, 0.0, 0.0)).norm() < 1e-12);
}

#[test]
fn seventy_five_hz_for_twenty_seconds() {
    let traj = generate_trajectory(&TrajectorySpec::default(), 20.0, 75.0).unwrap();
    assert_eq!(traj.len(), 1500);
    assert!(traj.samples().windows(2).all(|w| w[1].0 > w[0].0));
}

#[test]
fn zero_radius_is_an_error() {
    let spec = TrajectorySpec::Orbit {
        radius: 0.0,
        height: 0.0,
        omega: 0.5,
    };
    assert!(matches!(spec.pose_at(0.0), Err(HarnessError::Trajectory(_))));
    assert!(generate_trajectory(&spec, 1.0, 10.0).is_err());
    assert!(generate_trajectory(&TrajectorySpec::default(), 0.0, 10.0).is_err());
    assert!(generate_trajectory(&TrajectorySpec::default(), 1.0, -1.0).is_err());
}

#[test]
fn lissajous_is_seeded() {
    let spec = |seed| TrajectorySpec::Lissajous {
        center: Vector3::zeros(),
        amplitude: Vector3::new(0.8, 0.3, 0.8),
        frequency: Vector3::new(0.3, 0.5, 0.2),
        target: Vector3::new(0.0, 0.0, -2.0),
        seed,
    };
    let a = generate_trajectory(&spec(1), 2.0, 30.0).unwrap();
    let b = generate_trajectory(&spec(1), 2.0, 30.0).unwrap();
    let c = generate_trajectory(&spec(2), 2.0, 30.0).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn generated_trajectory_survives_tum_round_trip(
        radius in 0.5f64..5.0,
        height in -1.0f64..1.0,
        omega in -1.0f64..1.0,
        hz in 5.0f64..120.0,
    ) {
        let spec = TrajectorySpec::Orbit { radius, height, omega };
        let traj = generate_trajectory(&spec, 2.0, hz).unwrap();
        let back = Trajectory::parse_tum(&traj.to_tum_string()).unwrap();
        prop_assert_eq!(back.len(), traj.len());
        for ((ta, pa), (tb, pb)) in traj.samples().iter().zip(back.samples()) {
            prop_assert!((ta - tb).abs() < 1e-9);
            for (x, y) in pa.components().iter().zip(pb.components()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
