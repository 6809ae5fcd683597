//! Capture time against vertex count.

use std::time::Instant;

use meshslam::{capture_frame, capture_frame_into, generate_scene, CameraIntrinsics, CaptureConfig, RigidPose, SceneKind, SceneSpec};
use nalgebra::Vector3;

use crate::error::HarnessError;
use crate::offline::{median_sorted, percentile_sorted};

#[derive(Clone, Debug, PartialEq)]
pub struct CaptureTiming {
    pub count: usize,
    pub features: usize,
    pub median_ms: f64,
    pub p95_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaptureBenchmark {
    pub rows: Vec<CaptureTiming>,
    /// Least-squares line through `(count, median_ms)`.
    pub slope_ms_per_vertex: Option<f64>,
    pub intercept_ms: Option<f64>,
    /// Coefficient of determination of that line; undefined for fewer than two distinct
    /// counts or constant medians.
    pub r_squared: Option<f64>,
}

impl CaptureBenchmark {
    pub fn medians_monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].median_ms >= w[0].median_ms)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("count,features,median_ms,p95_ms\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{:.6},{:.6}\n", r.count, r.features, r.median_ms, r.p95_ms));
        }
        out
    }
}

/// Ordinary least squares `y ≈ a·x + b`, returning `(a, b, R²)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64, f64)> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    let a = sxy / sxx;
    let b = my - a * mx;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - (a * x + b)).powi(2)).sum();
    Some((a, b, 1.0 - ss_res / syy))
}

/// Captures a seeded point cloud of each size `repetitions` times. The camera sits outside
/// the cloud so that most vertices pass the depth gate and land in the image.
pub fn benchmark_capture(counts: &[usize], repetitions: usize) -> Result<CaptureBenchmark, HarnessError> {
    if repetitions == 0 {
        return Err(HarnessError::Benchmark("repetitions must be ≥ 1".into()));
    }
    if counts.windows(2).any(|w| w[1] < w[0]) {
        return Err(HarnessError::Benchmark("counts must be ascending".into()));
    }
    let intrinsics = CameraIntrinsics::default();
    let cfg = CaptureConfig::default();
    let pose = RigidPose::look_at(Vector3::new(0.0, 0.0, 12.0), Vector3::zeros(), Vector3::y())
        .expect("valid camera");
    let mut rows = Vec::with_capacity(counts.len());
    for &count in counts {
        let mesh = generate_scene(&SceneSpec::new(SceneKind::SeededPointCloud { count, extent: 10.0 }).with_seed(1))?;
        // One untimed pass warms caches and the thread pool and sizes the frame buffer,
        // which is then reused so that the timings exclude fresh-page allocation.
        let mut frame = capture_frame(&mesh, &pose, &intrinsics, &cfg, 0, 0.0);
        let features = frame.len();
        let mut times: Vec<f64> = (0..repetitions)
            .map(|i| {
                let start = Instant::now();
                capture_frame_into(&mut frame, &mesh, &pose, &intrinsics, &cfg, i as u64, 0.0);
                let ms = start.elapsed().as_secs_f64() * 1e3;
                std::hint::black_box(&frame);
                ms
            })
            .collect();
        times.sort_by(f64::total_cmp);
        rows.push(CaptureTiming {
            count,
            features,
            median_ms: median_sorted(&times),
            p95_ms: percentile_sorted(&times, 0.95),
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.count as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.median_ms).collect();
    let fit = linear_fit(&xs, &ys);
    Ok(CaptureBenchmark {
        rows,
        slope_ms_per_vertex: fit.map(|f| f.0),
        intercept_ms: fit.map(|f| f.1),
        r_squared: fit.map(|f| f.2),
    })
}
