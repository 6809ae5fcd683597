//! ID matching against an all-pairs oracle.

use std::collections::BTreeSet;

use meshslam::slam::KeyFrameId;
use meshslam::*;
use nalgebra::{Vector2, Vector3};
use proptest::prelude::*;

fn frame(ids: &[u32]) -> FeatureFrame {
    let feats = ids
        .iter()
        .map(|&i| VertexFeature {
            u: i as f64,
            v: 0.5 * i as f64,
            id: VertexId(i),
            depth: 1.0,
        })
        .collect();
    FeatureFrame::new(0, 0.0, feats, RigidPose::identity()).unwrap()
}

fn brute_force(a: &FeatureFrame, b: &FeatureFrame) -> Vec<MatchPair> {
    let mut out = Vec::new();
    for (i, fa) in a.features().iter().enumerate() {
        for (j, fb) in b.features().iter().enumerate() {
            if fa.id == fb.id {
                out.push(MatchPair {
                    index_a: i,
                    index_b: j,
                    id: fa.id,
                });
            }
        }
    }
    out
}

fn map_with(ids: impl Iterator<Item = u32> + Clone) -> SlamMap {
    let all: Vec<u32> = ids.clone().collect();
    let mut map = SlamMap::new();
    map.add_keyframe(KeyFrameId(0), RigidPose::identity(), frame(&all)).unwrap();
    map.add_keyframe(KeyFrameId(1), RigidPose::identity(), frame(&all)).unwrap();
    for i in ids {
        let px = Vector2::new(i as f64, 0.0);
        map.add_point(VertexId(i), Vector3::new(0.0, 0.0, -1.0), &[(KeyFrameId(0), px), (KeyFrameId(1), px)])
            .unwrap();
    }
    map
}

#[test]
fn documented_examples() {
    let a = frame(&[1, 4, 7, 9]);
    let b = frame(&[2, 4, 9]);
    let m = match_frames(&a, &b);
    assert_eq!(m, brute_force(&a, &b));
    assert_eq!(m.iter().map(|p| p.id.0).collect::<Vec<_>>(), vec![4, 9]);

    let same = match_frames(&a, &a);
    assert_eq!(same.len(), a.len());
    assert!(same.iter().all(|p| p.index_a == p.index_b));

    assert!(match_frames(&frame(&[0, 2]), &frame(&[1, 3])).is_empty());
}

#[test]
fn duplicate_ids_are_rejected() {
    let f = VertexFeature {
        u: 0.0,
        v: 0.0,
        id: VertexId(3),
        depth: 1.0,
    };
    assert!(FeatureFrame::new(0, 0.0, vec![f, f], RigidPose::identity()).is_err());
}

#[test]
fn map_matching() {
    let f = frame(&(5..15).collect::<Vec<_>>());
    assert!(match_to_map(&f, &SlamMap::new()).is_empty());

    let map = map_with(0..10);
    let pairs = match_to_map(&f, &map);
    assert_eq!(pairs.iter().map(|(_, id)| id.0).collect::<Vec<_>>(), vec![5, 6, 7, 8, 9]);
    for (i, id) in &pairs {
        assert_eq!(f.features()[*i].id, *id);
    }

    let full = map_with(5..15);
    assert_eq!(match_to_map(&f, &full).len(), f.len());
}

fn id_set() -> impl Strategy<Value = Vec<u32>> {
    prop::collection::btree_set(0u32..3000, 0..1000).prop_map(|s| s.into_iter().collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn merge_equals_all_pairs(a in id_set(), b in id_set()) {
        let (fa, fb) = (frame(&a), frame(&b));
        prop_assert_eq!(match_frames(&fa, &fb), brute_force(&fa, &fb));
    }

    #[test]
    fn symmetric(a in id_set(), b in id_set()) {
        let (fa, fb) = (frame(&a), frame(&b));
        let ab = match_frames(&fa, &fb);
        let ba = match_frames(&fb, &fa);
        prop_assert_eq!(ab.len(), ba.len());
        for (x, y) in ab.iter().zip(&ba) {
            prop_assert_eq!(x.id, y.id);
            prop_assert_eq!((x.index_a, x.index_b), (y.index_b, y.index_a));
        }
        let expect: BTreeSet<u32> = a.iter().copied().filter(|i| b.contains(i)).collect();
        prop_assert_eq!(ab.iter().map(|m| m.id.0).collect::<BTreeSet<_>>(), expect);
    }
}
