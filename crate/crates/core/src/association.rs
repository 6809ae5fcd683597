//! Feature association by descriptor equality. The descriptor is the vertex ID, so
//! matching is an ordered merge of two sorted ID lists: no distance metric, no ratio test,
//! no outliers.

use crate::geometry::VertexId;
use crate::projection::FeatureFrame;
use crate::slam::SlamMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MatchPair {
    pub index_a: usize,
    pub index_b: usize,
    pub id: VertexId,
}

/// ID-set intersection of two frames in ascending ID order.
pub fn match_frames(a: &FeatureFrame, b: &FeatureFrame) -> Vec<MatchPair> {
    let (fa, fb) = (a.features(), b.features());
    let mut out = Vec::with_capacity(fa.len().min(fb.len()));
    let (mut i, mut j) = (0, 0);
    while i < fa.len() && j < fb.len() {
        match fa[i].id.cmp(&fb[j].id) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(MatchPair {
                    index_a: i,
                    index_b: j,
                    id: fa[i].id,
                });
                i += 1;
                j += 1;
            }
        }
    }
    out
}

/// Pairs every feature with the map point of the same ID, in ascending ID order.
pub fn match_to_map(frame: &FeatureFrame, map: &SlamMap) -> Vec<(usize, VertexId)> {
    frame
        .features()
        .iter()
        .enumerate()
        .filter(|(_, f)| map.point(f.id).is_some())
        .map(|(i, f)| (i, f.id))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::RigidPose;
    use crate::projection::VertexFeature;

    fn frame(ids: &[u32]) -> FeatureFrame {
        let features = ids
            .iter()
            .map(|&id| VertexFeature {
                u: id as f64,
                v: 0.0,
                id: VertexId(id),
                depth: 1.0,
            })
            .collect();
        FeatureFrame::new(0, 0.0, features, RigidPose::identity()).unwrap()
    }

    #[test]
    fn self_match_is_identity() {
        let a = frame(&[0, 3, 5, 8]);
        let m = match_frames(&a, &a);
        assert_eq!(m.len(), 4);
        assert!(m.iter().all(|p| p.index_a == p.index_b));
    }

    #[test]
    fn disjoint_frames() {
        assert!(match_frames(&frame(&[1, 3]), &frame(&[2, 4])).is_empty());
        assert!(match_frames(&frame(&[]), &frame(&[2, 4])).is_empty());
    }

    #[test]
    fn partial_overlap() {
        let m = match_frames(&frame(&[1, 4, 7, 9]), &frame(&[2, 4, 9]));
        assert_eq!(
            m,
            vec![
                MatchPair {
                    index_a: 1,
                    index_b: 1,
                    id: VertexId(4)
                },
                MatchPair {
                    index_a: 3,
                    index_b: 2,
                    id: VertexId(9)
                },
            ]
        );
    }
}
