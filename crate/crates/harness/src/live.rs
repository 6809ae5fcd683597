//! Live steering service.
//!
//! One client at a time speaks message-framed JSON over a WebSocket. Steering commands
//! move the ground-truth camera; a fixed-rate tick captures a frame from that pose and
//! runs it through the same SLAM pipeline as offline mode. State is pushed back at most
//! `push_hz` times per second, and only when the map or a pose has changed.

use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::io::{self, Write as _};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::thread;
use std::time::{Duration, Instant};

use log::{info, warn};
use meshslam::slam::{FrameOutcome, MappingMode};
use meshslam::{capture_frame, generate_scene, MeshModel, RigidPose, SlamSystem, TrackerMode};
use nalgebra::{UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::{json, Value};
use tungstenite::{Message, WebSocket};

use crate::config::{RunConfig, TrajectorySource};
use crate::error::{io_err, HarnessError};

/// A validated client command.
#[derive(Clone, Debug, PartialEq)]
pub enum Command {
    Steer {
        dt: f64,
        movement: Vector3<f64>,
        yaw: f64,
        pitch: f64,
    },
    Reset,
    Pause(bool),
}

/// Why a client message was refused. The `Display` text is sent back as the error `msg`.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum CommandError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unknown message type `{0}`")]
    UnknownType(String),
    #[error("bad steer")]
    BadSteer,
    #[error("bad pause")]
    BadPause,
}

fn finite(v: Option<&Value>) -> Option<f64> {
    v.and_then(Value::as_f64).filter(|x| x.is_finite())
}

impl Command {
    /// Parses one client message. JSON has no non-finite numbers, so a client that
    /// serializes NaN or infinity produces `null`, which is refused like any other
    /// missing or non-numeric steering field.
    pub fn parse(text: &str) -> Result<Self, CommandError> {
        let v: Value = serde_json::from_str(text).map_err(|e| CommandError::Malformed(e.to_string()))?;
        let Some(kind) = v.get("type").and_then(Value::as_str) else {
            return Err(CommandError::Malformed("missing string field `type`".into()));
        };
        match kind {
            "steer" => {
                let dt = finite(v.get("dt")).filter(|dt| *dt >= 0.0).ok_or(CommandError::BadSteer)?;
                let movement = match v.get("move") {
                    None => Vector3::zeros(),
                    Some(m) => {
                        let a = m.as_array().filter(|a| a.len() == 3).ok_or(CommandError::BadSteer)?;
                        let c: Option<Vec<f64>> = a.iter().map(|x| finite(Some(x))).collect();
                        let c = c.ok_or(CommandError::BadSteer)?;
                        Vector3::new(c[0], c[1], c[2])
                    }
                };
                let rate = |k: &str| match v.get(k) {
                    None => Ok(0.0),
                    some => finite(some).ok_or(CommandError::BadSteer),
                };
                Ok(Command::Steer {
                    dt,
                    movement,
                    yaw: rate("yaw")?,
                    pitch: rate("pitch")?,
                })
            }
            "reset" => Ok(Command::Reset),
            "pause" => v
                .get("on")
                .and_then(Value::as_bool)
                .map(Command::Pause)
                .ok_or(CommandError::BadPause),
            other => Err(CommandError::UnknownType(other.to_string())),
        }
    }
}

/// Moves `pose` by a steering command: yaw about world up, pitch about the camera's x
/// axis, translation along the camera axes (forward is −z).
pub fn integrate_steer(pose: &RigidPose, dt: f64, movement: &Vector3<f64>, yaw: f64, pitch: f64) -> RigidPose {
    let translation = pose.translation + pose.rotation * (movement * dt);
    let rotation = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), yaw * dt)
        * pose.rotation
        * UnitQuaternion::from_axis_angle(&Vector3::x_axis(), pitch * dt);
    RigidPose::new(rotation, translation)
}

pub fn error_message(msg: &str) -> Value {
    json!({"type": "error", "msg": msg})
}

/// One client's session. Time is counted in ticks so that a recorded command log replays
/// to the same result.
pub struct LiveSession {
    cfg: RunConfig,
    mesh: MeshModel,
    system: SlamSystem,
    start_pose: RigidPose,
    gt_pose: RigidPose,
    tick: u64,
    frame_id: u64,
    paused: bool,
    push_every: u64,
    last_push_tick: Option<u64>,
    pushed_version: u64,
    pushed_poses: Option<(Option<RigidPose>, RigidPose)>,
    last: Option<FrameOutcome>,
    noise: Option<(Normal<f64>, ChaCha8Rng)>,
    log: Vec<(u64, String)>,
}

fn mapping_mode(cfg: &RunConfig) -> MappingMode {
    if cfg.async_mapping.unwrap_or(true) {
        MappingMode::Asynchronous
    } else {
        MappingMode::Synchronous
    }
}

impl LiveSession {
    pub fn new(cfg: &RunConfig) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let mesh = generate_scene(&cfg.scene)?;
        let start_pose = match &cfg.trajectory {
            TrajectorySource::Generated(spec) => spec.pose_at(0.0)?,
            TrajectorySource::File(path) => meshslam::Trajectory::load(path)?.samples()[0].1,
        };
        let push_every = (cfg.tick_hz / cfg.push_hz).ceil().max(1.0) as u64;
        let noise = (cfg.pixel_noise_sigma > 0.0).then(|| {
            (
                Normal::new(0.0, cfg.pixel_noise_sigma).expect("σ ≥ 0"),
                ChaCha8Rng::seed_from_u64(cfg.seed),
            )
        });
        Ok(Self {
            system: SlamSystem::new(cfg.intrinsics, cfg.slam, mapping_mode(cfg)),
            cfg: cfg.clone(),
            mesh,
            start_pose,
            gt_pose: start_pose,
            tick: 0,
            frame_id: 0,
            paused: false,
            push_every,
            last_push_tick: None,
            pushed_version: 0,
            pushed_poses: None,
            last: None,
            noise,
            log: Vec::new(),
        })
    }

    pub fn gt_pose(&self) -> RigidPose {
        self.gt_pose
    }

    pub fn system(&self) -> &SlamSystem {
        &self.system
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    /// Commands received so far with the tick at which they arrived.
    pub fn command_log(&self) -> &[(u64, String)] {
        &self.log
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    fn state_message(&self) -> Value {
        let (mode, pose_est, n_tracked) = match &self.last {
            Some(o) => (self.system.state().mode, o.pose, o.n_tracked),
            None => (self.system.state().mode, None, 0),
        };
        let version = self.system.map().read().expect("map lock poisoned").version();
        json!({
            "type": "state",
            "frame_id": self.frame_id,
            "mode": mode.as_str(),
            "pose_est": pose_est.map(|p| p.components().to_vec()),
            "pose_gt": self.gt_pose.components().to_vec(),
            "n_tracked": n_tracked,
            "map_version": version,
        })
    }

    /// Points and keyframes changed after `since`, as a `map_delta`.
    fn delta_since(&self, since: u64) -> (Value, u64) {
        let map = self.system.map();
        let map = map.read().expect("map lock poisoned");
        let (points, keyframes) = map.changes_since(since);
        let points: Vec<Value> = points
            .iter()
            .map(|p| json!([p.id.0, p.position.x, p.position.y, p.position.z]))
            .collect();
        let keyframes: Vec<Value> = keyframes
            .iter()
            .map(|k| {
                let mut row = vec![json!(k.id.0)];
                row.extend(k.pose.components().iter().map(|c| json!(c)));
                Value::Array(row)
            })
            .collect();
        let version = map.version();
        (
            json!({
                "type": "map_delta",
                "base": since,
                "version": version,
                "added_points": points,
                "added_keyframes": keyframes,
            }),
            version,
        )
    }

    /// Full snapshot and current state, sent on connect and after a reset.
    pub fn snapshot_messages(&mut self) -> Vec<Value> {
        let (delta, version) = self.delta_since(0);
        self.pushed_version = version;
        self.pushed_poses = Some((self.last.as_ref().and_then(|o| o.pose), self.gt_pose));
        self.last_push_tick = Some(self.tick);
        vec![delta, self.state_message()]
    }

    /// Handles one raw client message, returning the replies.
    pub fn handle_text(&mut self, text: &str) -> Vec<Value> {
        match Command::parse(text) {
            Ok(cmd) => {
                self.log.push((self.tick, text.to_string()));
                self.apply(cmd)
            }
            Err(e) => vec![error_message(&e.to_string())],
        }
    }

    pub fn apply(&mut self, cmd: Command) -> Vec<Value> {
        match cmd {
            Command::Steer {
                dt,
                movement,
                yaw,
                pitch,
            } => {
                self.gt_pose = integrate_steer(&self.gt_pose, dt, &movement, yaw, pitch);
                Vec::new()
            }
            Command::Pause(on) => {
                self.paused = on;
                vec![self.state_message()]
            }
            Command::Reset => {
                self.system.shutdown();
                self.system = SlamSystem::new(self.cfg.intrinsics, self.cfg.slam, mapping_mode(&self.cfg));
                self.gt_pose = self.start_pose;
                self.frame_id = 0;
                self.last = None;
                self.paused = false;
                self.snapshot_messages()
            }
        }
    }

    /// Advances one tick: capture and track unless paused, then push if due.
    pub fn tick(&mut self) -> Vec<Value> {
        if !self.paused {
            let t = self.tick as f64 / self.cfg.tick_hz;
            let mut frame = capture_frame(&self.mesh, &self.gt_pose, &self.cfg.intrinsics, &self.cfg.capture, self.frame_id, t);
            if let Some((n, rng)) = self.noise.as_mut() {
                frame.perturb_pixels(|u, v| {
                    *u += n.sample(rng);
                    *v += n.sample(rng);
                });
            }
            self.last = Some(self.system.process(frame));
            self.frame_id += 1;
        }
        self.tick += 1;

        let due = self.last_push_tick.is_none_or(|t| self.tick - t >= self.push_every);
        if !due {
            return Vec::new();
        }
        let version = self.system.map().read().expect("map lock poisoned").version();
        let poses = (self.last.as_ref().and_then(|o| o.pose), self.gt_pose);
        let changed_map = version != self.pushed_version;
        if !changed_map && self.pushed_poses == Some(poses) {
            return Vec::new();
        }
        let mut out = Vec::new();
        if changed_map {
            let (delta, v) = self.delta_since(self.pushed_version);
            self.pushed_version = v;
            out.push(delta);
        }
        self.pushed_poses = Some(poses);
        self.last_push_tick = Some(self.tick);
        out.push(self.state_message());
        out
    }

    /// Waits for queued keyframes to be mapped.
    pub fn settle(&mut self) {
        self.system.wait_for_mapping();
    }

    pub fn mode(&self) -> TrackerMode {
        self.system.state().mode
    }
}

impl Drop for LiveSession {
    fn drop(&mut self) {
        self.system.shutdown();
    }
}

/// Replays a command log against a fresh session for `ticks` ticks. Each entry is applied
/// before the tick it was recorded at. Returns every message the session emitted.
pub fn replay_command_log(cfg: &RunConfig, log: &[(u64, String)], ticks: u64) -> Result<Vec<Value>, HarnessError> {
    let mut session = LiveSession::new(cfg)?;
    let mut out = session.snapshot_messages();
    let mut next = 0;
    for tick in 0..ticks {
        while next < log.len() && log[next].0 <= tick {
            out.extend(session.handle_text(&log[next].1));
            next += 1;
        }
        out.extend(session.tick());
    }
    session.settle();
    Ok(out)
}

/// Serializes a command log as JSON lines `{"tick": n, "msg": "..."}`.
pub fn command_log_text(log: &[(u64, String)]) -> String {
    let mut out = String::new();
    for (tick, msg) in log {
        let _ = writeln!(out, "{}", json!({"tick": tick, "msg": msg}));
    }
    out
}

pub fn parse_command_log(text: &str) -> Result<Vec<(u64, String)>, HarnessError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let v: Value = serde_json::from_str(l).map_err(|e| HarnessError::ConfigSyntax {
                line: i + 1,
                msg: e.to_string(),
            })?;
            match (v.get("tick").and_then(Value::as_u64), v.get("msg").and_then(Value::as_str)) {
                (Some(t), Some(m)) => Ok((t, m.to_string())),
                _ => Err(HarnessError::ConfigSyntax {
                    line: i + 1,
                    msg: "expected {\"tick\": int, \"msg\": string}".into(),
                }),
            }
        })
        .collect()
}

pub struct LiveServer {
    listener: TcpListener,
    cfg: RunConfig,
}

fn would_block(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io) if io.kind() == io::ErrorKind::WouldBlock)
}

fn send(ws: &mut WebSocket<TcpStream>, messages: Vec<Value>) -> Result<(), tungstenite::Error> {
    for m in messages {
        match ws.write(Message::text(m.to_string())) {
            Ok(()) => {}
            Err(e) if would_block(&e) => {}
            Err(e) => return Err(e),
        }
    }
    match ws.flush() {
        Err(e) if would_block(&e) => Ok(()),
        other => other,
    }
}

impl LiveServer {
    /// Binds `127.0.0.1:port`; port 0 picks a free port.
    pub fn bind(cfg: &RunConfig) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let listener = TcpListener::bind(("127.0.0.1", cfg.port)).map_err(io_err(format!("127.0.0.1:{}", cfg.port)))?;
        Ok(Self {
            listener,
            cfg: cfg.clone(),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound listener")
    }

    /// Serves clients one after another until `stop` is set.
    pub fn run(&self, stop: &AtomicBool) -> Result<(), HarnessError> {
        self.listener
            .set_nonblocking(true)
            .map_err(io_err("listener"))?;
        while !stop.load(Ordering::Acquire) {
            match self.listener.accept() {
                Ok((stream, peer)) => {
                    info!("client {peer} connected");
                    if let Err(e) = self.serve_client(stream, stop) {
                        warn!("client {peer}: {e}");
                    }
                    info!("client {peer} gone, session reset");
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(10)),
                Err(e) => return Err(io_err("accept")(e)),
            }
        }
        Ok(())
    }

    fn serve_client(&self, stream: TcpStream, stop: &AtomicBool) -> Result<(), HarnessError> {
        stream.set_nonblocking(false).map_err(io_err("client socket"))?;
        stream.set_nodelay(true).ok();
        let mut ws = tungstenite::accept(stream).map_err(|e| match e {
            tungstenite::HandshakeError::Failure(e) => HarnessError::from(e),
            tungstenite::HandshakeError::Interrupted(_) => {
                HarnessError::from(tungstenite::Error::Io(io::ErrorKind::WouldBlock.into()))
            }
        })?;
        ws.get_mut().set_nonblocking(true).map_err(io_err("client socket"))?;
        let mut session = LiveSession::new(&self.cfg)?;
        send(&mut ws, session.snapshot_messages())?;

        let period = Duration::from_secs_f64(1.0 / self.cfg.tick_hz);
        let mut next_tick = Instant::now() + period;
        let result = loop {
            if stop.load(Ordering::Acquire) {
                let _ = ws.close(None);
                let _ = ws.flush();
                break Ok(());
            }
            let mut closed = false;
            loop {
                match ws.read() {
                    Ok(Message::Text(text)) => {
                        let replies = session.handle_text(&text);
                        send(&mut ws, replies)?;
                    }
                    Ok(Message::Binary(_)) => send(&mut ws, vec![error_message("malformed message: binary frame")])?,
                    Ok(Message::Close(_)) => {
                        closed = true;
                        break;
                    }
                    Ok(_) => {}
                    Err(e) if would_block(&e) => break,
                    Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => {
                        closed = true;
                        break;
                    }
                    Err(tungstenite::Error::Protocol(_)) => {
                        closed = true;
                        break;
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            if closed {
                break Ok(());
            }
            let now = Instant::now();
            if now >= next_tick {
                let messages = session.tick();
                send(&mut ws, messages)?;
                next_tick += period;
                if next_tick < now {
                    // Fell behind: drop the missed ticks instead of bursting.
                    next_tick = now + period;
                }
            }
            let wait = next_tick.saturating_duration_since(Instant::now()).min(Duration::from_millis(2));
            thread::sleep(wait);
        };
        self.save_command_log(session.command_log());
        result
    }

    fn save_command_log(&self, log: &[(u64, String)]) {
        if log.is_empty() {
            return;
        }
        let path = self.cfg.out_dir.join("commands.jsonl");
        let written = std::fs::create_dir_all(&self.cfg.out_dir).and_then(|_| {
            let mut f = OpenOptions::new().create(true).append(true).open(&path)?;
            f.write_all(command_log_text(log).as_bytes())
        });
        if let Err(e) = written {
            warn!("could not write {}: {e}", path.display());
        }
    }
}

/// Binds and serves until the process is interrupted.
pub fn serve_live(cfg: &RunConfig) -> Result<(), HarnessError> {
    let server = LiveServer::bind(cfg)?;
    info!("listening on ws://{}", server.local_addr());
    println!("listening on ws://{}", server.local_addr());
    server.run(&AtomicBool::new(false))
}
