#![allow(dead_code)]

use meshslam::slam::KeyFrameId;
use meshslam::*;
use nalgebra::Vector3;

pub fn cloud(count: usize, seed: u64) -> MeshModel {
    generate_scene(&SceneSpec::new(SceneKind::SeededPointCloud { count, extent: 2.0 }).with_seed(seed)).unwrap()
}

pub fn room() -> MeshModel {
    generate_scene(&SceneSpec::new(SceneKind::BoxRoom {
        width: 4.0,
        height: 3.0,
        depth: 4.0,
        subdivisions: 12,
    }))
    .unwrap()
}

/// Camera on a circle of radius 1 around the origin, looking at it.
pub fn orbit_pose(t: f64) -> RigidPose {
    let w = 0.2;
    let eye = Vector3::new((w * t).cos(), 0.0, (w * t).sin());
    RigidPose::look_at(eye, Vector3::zeros(), Vector3::y()).unwrap()
}

/// Camera at `eye` looking at the origin.
pub fn looking_at_origin(eye: Vector3<f64>) -> RigidPose {
    RigidPose::look_at(eye, Vector3::zeros(), Vector3::y()).unwrap()
}

/// Map in the world gauge: one keyframe per pose, every vertex seen by ≥ 2 keyframes
/// placed at its true position.
pub fn ground_truth_map(mesh: &MeshModel, poses: &[RigidPose], k: &CameraIntrinsics) -> SlamMap {
    let mut map = SlamMap::new();
    let frames: Vec<FeatureFrame> = poses
        .iter()
        .enumerate()
        .map(|(i, p)| capture_frame(mesh, p, k, &CaptureConfig::default(), i as u64, i as f64))
        .collect();
    for (i, (p, f)) in poses.iter().zip(&frames).enumerate() {
        map.add_keyframe(KeyFrameId(i as u64), *p, f.clone()).unwrap();
    }
    for id in mesh.ids() {
        let obs: Vec<_> = frames
            .iter()
            .enumerate()
            .filter_map(|(i, f)| f.find(id).map(|j| (KeyFrameId(i as u64), f.features()[j].pixel())))
            .collect();
        if obs.len() >= 2 {
            map.add_point(id, mesh.world_position(id).unwrap(), &obs).unwrap();
        }
    }
    map
}

/// RMS reprojection error over every observation in the map.
pub fn map_rms(map: &SlamMap, k: &CameraIntrinsics) -> f64 {
    let mut sum = 0.0;
    let mut n = 0;
    for p in map.points() {
        for (kf, px) in map.observations_of(p.id) {
            let pose = map.keyframe(kf).unwrap().pose;
            let q = meshslam::optimize::project_point(&p.position, &pose, k).unwrap();
            sum += (q - px).norm_squared();
            n += 1;
        }
    }
    (sum / n.max(1) as f64).sqrt()
}
