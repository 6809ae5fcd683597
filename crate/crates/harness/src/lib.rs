//! Experiment harness for `meshslam`: run configuration, parametric trajectories, the
//! offline driver with frame skipping, the capture scaling benchmark and the live
//! steering service.

pub mod bench;
pub mod config;
pub mod error;
pub mod live;
pub mod offline;
pub mod trajectory;

pub use bench::{benchmark_capture, linear_fit, CaptureBenchmark, CaptureTiming};
pub use config::{RunConfig, RunMode, TrajectorySource};
pub use error::HarnessError;
pub use live::{replay_command_log, serve_live, Command, CommandError, LiveServer, LiveSession};
pub use offline::{run_offline, run_offline_with, FrameRecord, RunHooks, RunReport, TimingStats};
pub use trajectory::{generate_trajectory, TrajectorySpec};
