//! Rigid-body algebra.

use meshslam::*;
use nalgebra::{UnitQuaternion, Vector3, Vector6};
use proptest::prelude::*;

fn arb_pose() -> impl Strategy<Value = RigidPose> {
    (prop::array::uniform3(-3.0f64..3.0), prop::array::uniform3(-10.0f64..10.0))
        .prop_map(|(r, t)| RigidPose::new(UnitQuaternion::from_scaled_axis(Vector3::from(r)), Vector3::from(t)))
}

#[test]
fn look_at_faces_minus_z_towards_target() {
    let eye = Vector3::new(3.0, 0.0, 0.0);
    let pose = RigidPose::look_at(eye, Vector3::zeros(), Vector3::y()).unwrap();
    let forward = pose.rotation * Vector3::new(0.0, 0.0, -1.0);
    assert!((forward - Vector3::new(-1.0, 0.0, 0.0)).norm() < 1e-12);
    assert!(RigidPose::look_at(eye, eye, Vector3::y()).is_none());
    assert!(RigidPose::look_at(Vector3::y(), Vector3::zeros(), Vector3::y()).is_none());
}

proptest! {
    #[test]
    fn long_composition_chains_stay_unit(steps in prop::collection::vec(arb_pose(), 50..200)) {
        let mut acc = RigidPose::identity();
        for s in &steps {
            // Tracking composes with inverses of the previous pose every frame.
            acc = acc.compose(s).compose(&s.inverse()).compose(s);
        }
        prop_assert!((acc.rotation.quaternion().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exp_log_round_trip(w in prop::array::uniform3(-3.0f64..3.0), t in prop::array::uniform3(-5.0f64..5.0)) {
        let xi = Se3Tangent::new(Vector3::from(w), Vector3::from(t));
        prop_assume!(xi.rotation().norm() < 3.1);
        let back = Se3Tangent::log(&xi.exp());
        prop_assert!((back.0 - xi.0).norm() < 1e-9);
    }

    #[test]
    fn inverse_undoes_compose(a in arb_pose(), b in arb_pose(), p in prop::array::uniform3(-5.0f64..5.0)) {
        let p = Vector3::from(p);
        let ab = a.compose(&b);
        prop_assert!((ab.transform_point(&p) - a.transform_point(&b.transform_point(&p))).norm() < 1e-9);
        prop_assert!((ab.inverse().compose(&ab).translation).norm() < 1e-9);
        prop_assert!((a.world_to_camera(&a.transform_point(&p)) - p).norm() < 1e-9);
        let m = a.view_matrix() * a.to_matrix();
        prop_assert!((m - nalgebra::Matrix4::identity()).norm() < 1e-9);
    }

    #[test]
    fn zero_retraction_is_identity(a in arb_pose()) {
        prop_assert_eq!(a.retract(&Se3Tangent(Vector6::zeros())).translation, a.translation);
    }
}
