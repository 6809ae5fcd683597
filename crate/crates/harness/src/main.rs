use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use meshslam::{ate_rmse, generate_scene, Trajectory};
use meshslam_harness::config::{RunConfig, TrajectorySource};
use meshslam_harness::error::HarnessError;
use meshslam_harness::{benchmark_capture, generate_trajectory, run_offline, serve_live};

#[derive(Parser)]
#[command(name = "meshslam", version, about = "Mesh-vertex monocular SLAM simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    fps: Option<f64>,
    #[arg(long = "noise-sigma")]
    noise_sigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    duration: Option<f64>,
    /// Any config key, e.g. `--set slam.ba_window=7`. Applied after the other flags.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Offline run over a generated or recorded trajectory.
    Run(Common),
    /// Live steering service over WebSocket.
    Serve(Common),
    /// Capture time against vertex count.
    BenchCapture {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = [600usize, 60_000, 240_000, 480_000, 2_000_000])]
        counts: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        repetitions: usize,
    },
    /// Writes the configured scene as OBJ.
    GenScene(Common),
    /// Samples the configured trajectory into a TUM file.
    GenTraj(Common),
    /// ATE between an estimated and a ground-truth trajectory file.
    Eval {
        est: PathBuf,
        gt: PathBuf,
        /// Association window in seconds.
        #[arg(long, default_value_t = 0.01)]
        max_dt: f64,
        /// Per-pose error CSV.
        #[arg(long)]
        errors: Option<PathBuf>,
    },
}

fn load_config(c: &Common) -> Result<RunConfig, HarnessError> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &c.out {
        cfg.set("run.out_dir", &v.display().to_string())?;
    }
    if let Some(v) = c.fps {
        cfg.set("run.fps", &v.to_string())?;
    }
    if let Some(v) = c.noise_sigma {
        cfg.set("run.noise_sigma", &v.to_string())?;
    }
    if let Some(v) = c.seed {
        cfg.set("run.seed", &v.to_string())?;
    }
    if let Some(v) = c.port {
        cfg.set("live.port", &v.to_string())?;
    }
    if let Some(v) = c.duration {
        cfg.set("run.duration", &v.to_string())?;
    }
    for kv in &c.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| HarnessError::ConfigValue {
            key: kv.clone(),
            msg: "expected KEY=VALUE".into(),
        })?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Cmd::Run(c) => {
            let report = run_offline(&load_config(&c)?)?;
            print!("{}", report.to_text());
        }
        Cmd::Serve(c) => serve_live(&load_config(&c)?)?,
        Cmd::BenchCapture {
            common,
            counts,
            repetitions,
        } => {
            let cfg = load_config(&common)?;
            let bench = benchmark_capture(&counts, repetitions)?;
            create_dir(&cfg.out_dir)?;
            write_file(&cfg.out_dir.join("capture_bench.csv"), &bench.to_csv())?;
            print!("{}", bench.to_csv());
            match bench.r_squared {
                Some(r2) => println!("r_squared = {r2:.6}"),
                None => println!("r_squared = undefined"),
            }
        }
        Cmd::GenScene(c) => {
            let cfg = load_config(&c)?;
            let mesh = generate_scene(&cfg.scene)?;
            create_dir(&cfg.out_dir)?;
            let path = cfg.out_dir.join("scene.obj");
            mesh.save_obj(&path)?;
            println!("{} vertices -> {}", mesh.len(), path.display());
        }
        Cmd::GenTraj(c) => {
            let cfg = load_config(&c)?;
            let TrajectorySource::Generated(spec) = &cfg.trajectory else {
                return Err(HarnessError::Trajectory("gen-traj needs a generated trajectory".into()));
            };
            let traj = generate_trajectory(spec, cfg.duration_s, cfg.trajectory_hz)?;
            create_dir(&cfg.out_dir)?;
            let path = cfg.out_dir.join("traj.txt");
            traj.save(&path)?;
            println!("{} samples -> {}", traj.len(), path.display());
        }
        Cmd::Eval {
            est,
            gt,
            max_dt,
            errors,
        } => {
            let report = ate_rmse(&Trajectory::load(&est)?, &Trajectory::load(&gt)?, max_dt)?;
            println!("ate_rmse = {:e}", report.rmse);
            println!("ate_mean = {:e}", report.mean);
            println!("ate_median = {:e}", report.median);
            println!("ate_max = {:e}", report.max);
            println!("ate_matched = {}", report.n_matched);
            println!("ate_scale = {:e}", report.alignment.scale);
            if let Some(p) = errors {
                report.write_error_csv(&p)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
