//! Frame-throughput benchmark.
//!
//! Drives environments with uniformly random actions at a frame skip of one,
//! so every emulated frame is also rendered, for a fixed wall-clock duration.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, Environment};
use crate::error::{Error, Result};

pub const BENCH_SCHEMA_VERSION: u32 = 1;
/// A run may fall to this fraction of the baseline before it counts as a
/// regression.
pub const REGRESSION_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRun {
    pub frames: u64,
    pub seconds: f64,
    pub fps: f64,
}

impl InstanceRun {
    fn new(frames: u64, elapsed: Duration) -> Self {
        let seconds = elapsed.as_secs_f64();
        let fps = if seconds > 0.0 {
            frames as f64 / seconds
        } else {
            0.0
        };
        InstanceRun {
            frames,
            seconds,
            fps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub core: String,
    pub duration_seconds: f64,
    pub single: InstanceRun,
    pub instances: usize,
    pub parallel: Vec<InstanceRun>,
    /// Total frames of the parallel run over its wall-clock time.
    pub aggregate_fps: f64,
    pub available_parallelism: usize,
}

fn drive(config: EnvConfig, duration: Duration, seed: u64) -> Result<InstanceRun> {
    let mut env = Environment::new(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = env.num_actions();
    let mut frames = 0;
    let start = Instant::now();
    // Checking the clock every frame would cost more than some cores' steps.
    while start.elapsed() < duration {
        for _ in 0..256 {
            let info = env.act(&[rng.gen_range(0..n)])?;
            frames += info.frames_run as u64;
            if info.terminal {
                env.reset()?;
            }
        }
    }
    Ok(InstanceRun::new(frames, start.elapsed()))
}

/// Runs `core` for `seconds` on one instance, then on `instances` threads at
/// once.
pub fn run(core: &str, seconds: f64, instances: usize, seed: u64) -> Result<BenchReport> {
    if !(seconds >= 0.0 && seconds.is_finite()) {
        return Err(Error::Config(
            "bench duration must be a non-negative number".into(),
        ));
    }
    if instances == 0 {
        return Err(Error::Config("bench needs at least one instance".into()));
    }
    let mut config = EnvConfig::new(core, seed);
    config.frame_skip = 1;
    config.max_episode_frames = None;
    // Surfaces unknown cores before any thread starts.
    Environment::new(config.clone())?;
    let duration = Duration::from_secs_f64(seconds);

    let single = drive(config.clone(), duration, seed)?;

    let start = Instant::now();
    let parallel = std::thread::scope(|s| {
        let handles: Vec<_> = (0..instances)
            .map(|i| {
                let config = config.clone();
                s.spawn(move || drive(config, duration, seed.wrapping_add(1 + i as u64)))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("bench thread panicked"))
            .collect::<Result<Vec<_>>>()
    })?;
    let wall = start.elapsed().as_secs_f64();
    let total: u64 = parallel.iter().map(|r| r.frames).sum();
    let aggregate_fps = if wall > 0.0 && total > 0 {
        total as f64 / wall
    } else {
        0.0
    };

    Ok(BenchReport {
        schema_version: BENCH_SCHEMA_VERSION,
        core: core.to_string(),
        duration_seconds: seconds,
        single,
        instances,
        parallel,
        aggregate_fps,
        available_parallelism: std::thread::available_parallelism().map_or(1, |n| n.get()),
    })
}

/// Committed reference throughput, single instance, per core.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub schema_version: u32,
    pub note: String,
    pub duration_seconds: f64,
    pub single_fps: std::collections::BTreeMap<String, f64>,
}

impl Baseline {
    pub fn parse(text: &str) -> Result<Self> {
        let b: Baseline = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if b.schema_version != BENCH_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "baseline schema {} unsupported",
                b.schema_version
            )));
        }
        Ok(b)
    }

    /// `Some(passed)` when the baseline knows the report's core.
    pub fn check(&self, report: &BenchReport) -> Option<bool> {
        let base = self.single_fps.get(&report.core)?;
        Some(report.single.fps >= REGRESSION_FRACTION * base)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_duration_reports_zero() {
        let r = run("racer", 0.0, 2, 0).unwrap();
        assert_eq!(r.single.fps, 0.0);
        assert_eq!(r.parallel.len(), 2);
        assert!(r.aggregate_fps.is_finite());
    }

    #[test]
    fn unknown_core_is_a_lookup_error() {
        let err = run("nosuch", 0.0, 1, 0).unwrap_err();
        assert!(matches!(err, Error::UnknownCore(_)), "{err}");
    }

    #[test]
    fn short_run_counts_frames() {
        let r = run("scroller", 0.05, 1, 0).unwrap();
        assert!(r.single.frames > 0 && r.single.fps > 0.0);
        assert!(r.parallel[0].frames > 0);
    }
}
