//! The shared map: keyframes, map points keyed by vertex ID, and the observation graph.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use nalgebra::{Vector2, Vector3};
use thiserror::Error;

use crate::geometry::VertexId;
use crate::pose::RigidPose;
use crate::projection::FeatureFrame;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct KeyFrameId(pub u64);

#[derive(Clone, Debug, PartialEq)]
pub struct KeyFrame {
    pub id: KeyFrameId,
    pub pose: RigidPose,
    pub frame: FeatureFrame,
    /// Map version at which this keyframe was last written.
    pub updated: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MapPoint {
    pub id: VertexId,
    pub position: Vector3<f64>,
    pub first_kf: KeyFrameId,
    pub updated: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("keyframe {0:?} already exists or is not newer than the last one")]
    KeyFrameOrder(KeyFrameId),
    #[error("unknown keyframe {0:?}")]
    UnknownKeyFrame(KeyFrameId),
    #[error("map point {0} already exists")]
    DuplicatePoint(VertexId),
    #[error("unknown map point {0}")]
    UnknownPoint(VertexId),
    #[error("map point {0} needs at least two observations")]
    TooFewObservations(VertexId),
    #[error("non-finite value for {0}")]
    NonFinite(String),
    #[error("snapshot line {line}: {msg}")]
    Snapshot { line: usize, msg: String },
}

/// Keyframes, points and pixel observations. Every mutating call bumps `version`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SlamMap {
    keyframes: BTreeMap<KeyFrameId, KeyFrame>,
    points: BTreeMap<VertexId, MapPoint>,
    /// point → (keyframe → pixel measurement)
    observations: BTreeMap<VertexId, BTreeMap<KeyFrameId, Vector2<f64>>>,
    /// keyframe → points it observes
    kf_points: BTreeMap<KeyFrameId, BTreeSet<VertexId>>,
    version: u64,
}

impl SlamMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn keyframes(&self) -> impl DoubleEndedIterator<Item = &KeyFrame> + '_ {
        self.keyframes.values()
    }

    pub fn keyframe(&self, id: KeyFrameId) -> Option<&KeyFrame> {
        self.keyframes.get(&id)
    }

    pub fn last_keyframe(&self) -> Option<&KeyFrame> {
        self.keyframes.values().next_back()
    }

    pub fn num_keyframes(&self) -> usize {
        self.keyframes.len()
    }

    pub fn points(&self) -> impl Iterator<Item = &MapPoint> + '_ {
        self.points.values()
    }

    pub fn point(&self, id: VertexId) -> Option<&MapPoint> {
        self.points.get(&id)
    }

    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    pub fn observations_of(&self, id: VertexId) -> impl Iterator<Item = (KeyFrameId, &Vector2<f64>)> + '_ {
        self.observations
            .get(&id)
            .into_iter()
            .flat_map(|m| m.iter().map(|(k, v)| (*k, v)))
    }

    pub fn points_seen_by(&self, kf: KeyFrameId) -> impl Iterator<Item = VertexId> + '_ {
        self.kf_points.get(&kf).into_iter().flatten().copied()
    }

    pub fn num_points_seen_by(&self, kf: KeyFrameId) -> usize {
        self.kf_points.get(&kf).map_or(0, |s| s.len())
    }

    pub fn num_observations(&self) -> usize {
        self.observations.values().map(|m| m.len()).sum()
    }

    /// Shifts every version stamp by `base`, so a map built from scratch can replace one
    /// at version `base` without versions going backwards.
    pub fn advance_version_past(&mut self, base: u64) {
        self.version += base;
        for k in self.keyframes.values_mut() {
            k.updated += base;
        }
        for p in self.points.values_mut() {
            p.updated += base;
        }
    }

    fn bump(&mut self) -> u64 {
        self.version += 1;
        self.version
    }

    /// Adds a keyframe and records observations of every existing point its frame sees.
    pub fn add_keyframe(&mut self, id: KeyFrameId, pose: RigidPose, frame: FeatureFrame) -> Result<(), MapError> {
        if self.keyframes.range(id..).next().is_some() {
            return Err(MapError::KeyFrameOrder(id));
        }
        if !pose.is_finite() {
            return Err(MapError::NonFinite(format!("keyframe {id:?} pose")));
        }
        let version = self.bump();
        let mut seen = BTreeSet::new();
        for f in frame.features() {
            if let Some(obs) = self.observations.get_mut(&f.id) {
                obs.insert(id, f.pixel());
                seen.insert(f.id);
            }
        }
        self.kf_points.insert(id, seen);
        self.keyframes.insert(
            id,
            KeyFrame {
                id,
                pose,
                frame,
                updated: version,
            },
        );
        Ok(())
    }

    /// Adds a point together with its (≥ 2) initial observations.
    pub fn add_point(
        &mut self,
        id: VertexId,
        position: Vector3<f64>,
        observations: &[(KeyFrameId, Vector2<f64>)],
    ) -> Result<(), MapError> {
        if self.points.contains_key(&id) {
            return Err(MapError::DuplicatePoint(id));
        }
        if observations.len() < 2 {
            return Err(MapError::TooFewObservations(id));
        }
        if !position.iter().all(|c| c.is_finite()) {
            return Err(MapError::NonFinite(format!("point {id}")));
        }
        if let Some((kf, _)) = observations.iter().find(|(kf, _)| !self.keyframes.contains_key(kf)) {
            return Err(MapError::UnknownKeyFrame(*kf));
        }
        let version = self.bump();
        let first_kf = observations.iter().map(|(kf, _)| *kf).min().expect("non-empty");
        let obs = self.observations.entry(id).or_default();
        for (kf, px) in observations {
            obs.insert(*kf, *px);
            self.kf_points.entry(*kf).or_default().insert(id);
        }
        self.points.insert(
            id,
            MapPoint {
                id,
                position,
                first_kf,
                updated: version,
            },
        );
        Ok(())
    }

    /// Writes optimized poses and positions in one versioned commit.
    pub fn commit_adjustment(
        &mut self,
        poses: &[(KeyFrameId, RigidPose)],
        points: &[(VertexId, Vector3<f64>)],
    ) -> Result<(), MapError> {
        for (kf, pose) in poses {
            if !self.keyframes.contains_key(kf) {
                return Err(MapError::UnknownKeyFrame(*kf));
            }
            if !pose.is_finite() {
                return Err(MapError::NonFinite(format!("keyframe {kf:?} pose")));
            }
        }
        for (id, p) in points {
            if !self.points.contains_key(id) {
                return Err(MapError::UnknownPoint(*id));
            }
            if !p.iter().all(|c| c.is_finite()) {
                return Err(MapError::NonFinite(format!("point {id}")));
            }
        }
        let version = self.bump();
        for (kf, pose) in poses {
            let k = self.keyframes.get_mut(kf).expect("checked");
            k.pose = *pose;
            k.updated = version;
        }
        for (id, p) in points {
            let mp = self.points.get_mut(id).expect("checked");
            mp.position = *p;
            mp.updated = version;
        }
        Ok(())
    }

    /// Points and keyframes written after `since`, for incremental consumers.
    pub fn changes_since(&self, since: u64) -> (Vec<&MapPoint>, Vec<&KeyFrame>) {
        (
            self.points.values().filter(|p| p.updated > since).collect(),
            self.keyframes.values().filter(|k| k.updated > since).collect(),
        )
    }

    /// Checks the structural invariants; used by tests.
    pub fn check_invariants(&self) -> Result<(), String> {
        for p in self.points.values() {
            let n = self.observations.get(&p.id).map_or(0, |o| o.len());
            if n < 2 {
                return Err(format!("point {} has {n} observations", p.id));
            }
        }
        for (id, obs) in &self.observations {
            if !self.points.contains_key(id) {
                return Err(format!("observations of missing point {id}"));
            }
            for kf in obs.keys() {
                if !self.keyframes.contains_key(kf) {
                    return Err(format!("observation from missing keyframe {kf:?}"));
                }
            }
        }
        for kf in self.keyframes.values() {
            if (kf.pose.rotation.norm() - 1.0).abs() > 1e-9 {
                return Err(format!("keyframe {:?} quaternion not unit", kf.id));
            }
        }
        Ok(())
    }

    /// Text snapshot: `KF kf_id tx ty tz qx qy qz qw` then `MP id x y z`.
    pub fn snapshot(&self) -> String {
        let mut s = String::new();
        for kf in self.keyframes.values() {
            let c = kf.pose.components();
            let _ = writeln!(
                s,
                "KF {} {:?} {:?} {:?} {:?} {:?} {:?} {:?}",
                kf.id.0, c[0], c[1], c[2], c[3], c[4], c[5], c[6]
            );
        }
        for p in self.points.values() {
            let _ = writeln!(
                s,
                "MP {} {:?} {:?} {:?}",
                p.id.0, p.position.x, p.position.y, p.position.z
            );
        }
        s
    }
}

/// Parsed form of [`SlamMap::snapshot`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MapSnapshot {
    pub keyframes: Vec<(KeyFrameId, RigidPose)>,
    pub points: Vec<(VertexId, Vector3<f64>)>,
}

impl MapSnapshot {
    pub fn parse(text: &str) -> Result<Self, MapError> {
        let mut out = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = raw.split_whitespace().collect();
            let err = |msg: &str| MapError::Snapshot {
                line,
                msg: msg.to_string(),
            };
            let nums = |from: usize| -> Result<Vec<f64>, MapError> {
                toks[from..]
                    .iter()
                    .map(|t| t.parse::<f64>().map_err(|_| err("bad number")))
                    .collect()
            };
            match toks[0] {
                "KF" if toks.len() == 9 => {
                    let id = toks[1].parse().map_err(|_| err("bad keyframe id"))?;
                    let c = nums(2)?;
                    out.keyframes.push((
                        KeyFrameId(id),
                        RigidPose::from_components([c[0], c[1], c[2], c[3], c[4], c[5], c[6]]),
                    ));
                }
                "MP" if toks.len() == 5 => {
                    let id = toks[1].parse().map_err(|_| err("bad point id"))?;
                    let c = nums(2)?;
                    out.points.push((VertexId(id), Vector3::new(c[0], c[1], c[2])));
                }
                _ => return Err(err("unrecognized record")),
            }
        }
        Ok(out)
    }
}
