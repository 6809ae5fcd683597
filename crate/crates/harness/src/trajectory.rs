//! Parametric ground-truth camera paths.

use std::f64::consts::TAU;

use meshslam::{RigidPose, Trajectory};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::HarnessError;

#[derive(Clone, Debug, PartialEq)]
pub enum TrajectorySpec {
    /// Position `(r·cos ωt, h, r·sin ωt)`, looking at the origin with `+y` up.
    Orbit { radius: f64, height: f64, omega: f64 },
    /// Position `center + a ⊙ sin(f·t + φ)` per axis with phases drawn from `seed`, looking
    /// at `target` with `+y` up.
    Lissajous {
        center: Vector3<f64>,
        amplitude: Vector3<f64>,
        frequency: Vector3<f64>,
        target: Vector3<f64>,
        seed: u64,
    },
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        TrajectorySpec::Orbit {
            radius: 1.0,
            height: 0.0,
            omega: 0.2,
        }
    }
}

fn vec3(key: &str, value: &str) -> Result<Vector3<f64>, HarnessError> {
    let parts: Result<Vec<f64>, _> = value.split(',').map(|s| s.trim().parse::<f64>()).collect();
    match parts {
        Ok(v) if v.len() == 3 => Ok(Vector3::new(v[0], v[1], v[2])),
        _ => Err(HarnessError::ConfigValue {
            key: key.to_string(),
            msg: format!("expected `x, y, z`, got `{value}`"),
        }),
    }
}

fn num(key: &str, value: &str) -> Result<f64, HarnessError> {
    value.parse().map_err(|_| HarnessError::ConfigValue {
        key: key.to_string(),
        msg: format!("expected a number, got `{value}`"),
    })
}

impl TrajectorySpec {
    pub fn default_lissajous() -> Self {
        TrajectorySpec::Lissajous {
            center: Vector3::zeros(),
            amplitude: Vector3::new(0.8, 0.3, 0.8),
            frequency: Vector3::new(0.3, 0.5, 0.2),
            target: Vector3::new(0.0, 0.0, -2.0),
            seed: 0,
        }
    }

    /// Sets a key relative to `trajectory.`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        let full = format!("trajectory.{key}");
        match (self, key) {
            (TrajectorySpec::Orbit { radius, .. }, "radius") => *radius = num(&full, value)?,
            (TrajectorySpec::Orbit { height, .. }, "height") => *height = num(&full, value)?,
            (TrajectorySpec::Orbit { omega, .. }, "omega") => *omega = num(&full, value)?,
            (TrajectorySpec::Lissajous { center, .. }, "center") => *center = vec3(&full, value)?,
            (TrajectorySpec::Lissajous { amplitude, .. }, "amplitude") => *amplitude = vec3(&full, value)?,
            (TrajectorySpec::Lissajous { frequency, .. }, "frequency") => *frequency = vec3(&full, value)?,
            (TrajectorySpec::Lissajous { target, .. }, "target") => *target = vec3(&full, value)?,
            (TrajectorySpec::Lissajous { seed, .. }, "seed") => {
                *seed = value.parse().map_err(|_| HarnessError::ConfigValue {
                    key: full.clone(),
                    msg: format!("expected an integer, got `{value}`"),
                })?
            }
            _ => return Err(HarnessError::UnknownKey(full)),
        }
        Ok(())
    }

    /// `(key, value)` pairs relative to `trajectory.`, starting with `kind`.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let v = |x: &Vector3<f64>| format!("{:?}, {:?}, {:?}", x.x, x.y, x.z);
        match self {
            TrajectorySpec::Orbit { radius, height, omega } => vec![
                ("kind", "orbit".into()),
                ("radius", format!("{radius:?}")),
                ("height", format!("{height:?}")),
                ("omega", format!("{omega:?}")),
            ],
            TrajectorySpec::Lissajous {
                center,
                amplitude,
                frequency,
                target,
                seed,
            } => vec![
                ("kind", "lissajous".into()),
                ("center", v(center)),
                ("amplitude", v(amplitude)),
                ("frequency", v(frequency)),
                ("target", v(target)),
                ("seed", seed.to_string()),
            ],
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        match self {
            TrajectorySpec::Orbit { radius, height, omega } => {
                if !(radius.is_finite() && height.is_finite() && omega.is_finite()) {
                    return Err(HarnessError::Trajectory("orbit parameters must be finite".into()));
                }
                if *radius == 0.0 {
                    return Err(HarnessError::Trajectory(
                        "orbit radius 0 puts the camera on the look-at axis".into(),
                    ));
                }
            }
            TrajectorySpec::Lissajous {
                center,
                amplitude,
                frequency,
                target,
                ..
            } => {
                let all = center.iter().chain(amplitude.iter()).chain(frequency.iter()).chain(target.iter());
                if !all.into_iter().all(|x| x.is_finite()) {
                    return Err(HarnessError::Trajectory("lissajous parameters must be finite".into()));
                }
            }
        }
        Ok(())
    }

    /// Camera pose at time `t`.
    pub fn pose_at(&self, t: f64) -> Result<RigidPose, HarnessError> {
        let (eye, target) = match self {
            TrajectorySpec::Orbit { radius, height, omega } => {
                if *radius == 0.0 {
                    return Err(HarnessError::Trajectory(
                        "orbit radius 0 puts the camera on the look-at axis".into(),
                    ));
                }
                let a = omega * t;
                (Vector3::new(radius * a.cos(), *height, radius * a.sin()), Vector3::zeros())
            }
            TrajectorySpec::Lissajous {
                center,
                amplitude,
                frequency,
                target,
                seed,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let phase = Vector3::new(rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU));
                let s = (frequency * t + phase).map(f64::sin);
                (center + amplitude.component_mul(&s), *target)
            }
        };
        RigidPose::look_at(eye, target, Vector3::y())
            .ok_or_else(|| HarnessError::Trajectory(format!("camera orientation undefined at t = {t}")))
    }
}

/// Samples `spec` at `k / sample_hz` for `k = 0 .. round(duration · sample_hz)`.
pub fn generate_trajectory(spec: &TrajectorySpec, duration: f64, sample_hz: f64) -> Result<Trajectory, HarnessError> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(HarnessError::Trajectory("duration must be positive".into()));
    }
    if !(sample_hz > 0.0 && sample_hz.is_finite()) {
        return Err(HarnessError::Trajectory("sample rate must be positive".into()));
    }
    spec.validate()?;
    let n = (duration * sample_hz).round() as usize;
    let samples = (0..n)
        .map(|k| {
            let t = k as f64 / sample_hz;
            spec.pose_at(t).map(|p| (t, p))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Trajectory::new(samples)?)
}
