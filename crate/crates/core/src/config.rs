//! Run configuration files.
//!
//! A run file is TOML. Every key is optional except `seed`; omitted keys
//! take the library defaults. Unknown keys are rejected.
//!
//! ```toml
//! seed = 7
//!
//! [env]
//! core = "racer"               # scroller | racer | duel
//! frame_skip = 4
//! max_episode_frames = 18000   # default: 5 minutes at the core's frame rate
//! reward_clip = 1              # default: off
//! reward_mode = "raw"          # raw | zero_sum
//! exclude_buttons = ["L", "R"]
//! [env.core_config]
//! laps = "4"
//!
//! [agent]
//! alpha = 0.1
//! gamma = 0.99
//! epsilon_start = 1.0
//! epsilon_end = 0.1
//! epsilon_decay_fraction = 0.1
//! epsilon_test = 0.05
//! target_sync_period = 1000
//! grid = 8
//! levels = 8
//!
//! [protocol]
//! epoch_actions = 50000
//! max_epochs = 100
//! eval_episodes = 30
//! episode_cap_frames = 18000
//! human_reference = 4000.0
//! eval_seed_base = 1000000
//! train_seed_base = 0
//! convergence_tolerance = 0.02
//! convergence_window = 3
//! q_sample_states = 256
//!
//! [shaping]
//! mode = "add_speed"           # none | add_speed | position_bonus
//! weight = 1.0
//! absolute = false
//!
//! [tournament]
//! rounds = 50
//! seed_base = 500000
//!
//! [experiment]
//! seeds = [0, 1, 2, 3, 4]
//! budget = 200000
//!
//! [bench]
//! seconds = 5.0
//! instances = 4
//! ```

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::abi::{Button, CoreConfig};
use crate::agents::{FeatureSpec, HyperParams};
use crate::env::{EnvConfig, RewardMode};
use crate::error::{Error, Result};
use crate::harness::{EvalProtocol, TOURNAMENT_ROUNDS};
use crate::wrappers::{ShapingMode, ShapingSpec};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    seed: Option<u64>,
    #[serde(default)]
    env: RawEnv,
    #[serde(default)]
    agent: RawAgent,
    #[serde(default)]
    protocol: RawProtocol,
    #[serde(default)]
    shaping: RawShaping,
    #[serde(default)]
    tournament: RawTournament,
    #[serde(default)]
    experiment: RawExperiment,
    #[serde(default)]
    bench: RawBench,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnv {
    core: Option<String>,
    frame_skip: Option<u32>,
    max_episode_frames: Option<u64>,
    reward_clip: Option<i64>,
    reward_mode: Option<RewardMode>,
    exclude_buttons: Option<Vec<String>>,
    core_config: Option<BTreeMap<String, toml::Value>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAgent {
    alpha: Option<f64>,
    gamma: Option<f64>,
    epsilon_start: Option<f64>,
    epsilon_end: Option<f64>,
    epsilon_decay_fraction: Option<f64>,
    epsilon_test: Option<f64>,
    target_sync_period: Option<u64>,
    grid: Option<u8>,
    levels: Option<u16>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProtocol {
    epoch_actions: Option<u64>,
    max_epochs: Option<u32>,
    eval_episodes: Option<u32>,
    episode_cap_frames: Option<u64>,
    human_reference: Option<f64>,
    eval_seed_base: Option<u64>,
    train_seed_base: Option<u64>,
    convergence_tolerance: Option<f64>,
    convergence_window: Option<u32>,
    q_sample_states: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawShaping {
    mode: Option<String>,
    weight: Option<f64>,
    absolute: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTournament {
    rounds: Option<u32>,
    seed_base: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    seeds: Option<Vec<u64>>,
    budget: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBench {
    seconds: Option<f64>,
    instances: Option<usize>,
}

/// A validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub env: EnvConfig,
    pub hyper: HyperParams,
    pub protocol: EvalProtocol,
    pub shaping: ShapingSpec,
    pub tournament_rounds: u32,
    pub tournament_seed_base: u64,
    /// Experiment overrides; `None` keeps each experiment's own default.
    pub experiment_seeds: Option<Vec<u64>>,
    pub experiment_budget: Option<u64>,
    pub bench_seconds: f64,
    pub bench_instances: usize,
}

pub const DEFAULT_BENCH_INSTANCES: usize = 4;

impl RunConfig {
    /// Parses a run file. `seed_override` takes precedence over the file's
    /// `seed`; one of the two must be present.
    pub fn parse(text: &str, seed_override: Option<u64>) -> Result<Self> {
        let raw: RawRun = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let seed = seed_override
            .or(raw.seed)
            .ok_or_else(|| Error::Config("a `seed` is required".into()))?;

        let core = raw.env.core.unwrap_or_else(|| "scroller".into());
        let mut env = EnvConfig::new(core, seed);
        if let Some(v) = raw.env.frame_skip {
            env.frame_skip = v;
        }
        env.max_episode_frames = raw.env.max_episode_frames;
        env.reward_clip = raw.env.reward_clip;
        if let Some(m) = raw.env.reward_mode {
            env.reward_mode = m;
        }
        for name in raw.env.exclude_buttons.unwrap_or_default() {
            let b = Button::from_name(&name)
                .ok_or_else(|| Error::Config(format!("unknown button `{name}`")))?;
            env.exclusions.push(b);
        }
        env.core_config = core_config(raw.env.core_config.unwrap_or_default())?;

        let d = HyperParams::default();
        let a = raw.agent;
        let hyper = HyperParams {
            alpha: a.alpha.unwrap_or(d.alpha),
            gamma: a.gamma.unwrap_or(d.gamma),
            epsilon_start: a.epsilon_start.unwrap_or(d.epsilon_start),
            epsilon_end: a.epsilon_end.unwrap_or(d.epsilon_end),
            epsilon_decay_fraction: a.epsilon_decay_fraction.unwrap_or(d.epsilon_decay_fraction),
            epsilon_test: a.epsilon_test.unwrap_or(d.epsilon_test),
            target_sync_period: a.target_sync_period.unwrap_or(d.target_sync_period),
            features: FeatureSpec {
                grid: a.grid.unwrap_or(d.features.grid),
                levels: a.levels.unwrap_or(d.features.levels),
            },
        };
        hyper.validate()?;

        let d = EvalProtocol::default();
        let p = raw.protocol;
        let protocol = EvalProtocol {
            epoch_actions: p.epoch_actions.unwrap_or(d.epoch_actions),
            max_epochs: p.max_epochs.unwrap_or(d.max_epochs),
            eval_episodes: p.eval_episodes.unwrap_or(d.eval_episodes),
            episode_cap_frames: p.episode_cap_frames.or(d.episode_cap_frames),
            human_reference: p.human_reference.or(d.human_reference),
            eval_seed_base: p.eval_seed_base.unwrap_or(d.eval_seed_base),
            train_seed_base: p.train_seed_base.unwrap_or(d.train_seed_base),
            convergence_tolerance: p.convergence_tolerance.unwrap_or(d.convergence_tolerance),
            convergence_window: p.convergence_window.unwrap_or(d.convergence_window),
            q_sample_states: p.q_sample_states.unwrap_or(d.q_sample_states),
        };
        protocol.validate()?;

        let mode: ShapingMode = raw.shaping.mode.as_deref().unwrap_or("none").parse()?;
        let mut shaping = ShapingSpec::with_default_weight(mode);
        if let Some(w) = raw.shaping.weight {
            shaping.weight = w;
        }
        shaping.absolute = raw.shaping.absolute.unwrap_or(false);
        if !shaping.weight.is_finite() {
            return Err(Error::Config("shaping.weight must be finite".into()));
        }

        let bench_seconds = raw.bench.seconds.unwrap_or(5.0);
        if !(bench_seconds >= 0.0 && bench_seconds.is_finite()) {
            return Err(Error::Config(
                "bench.seconds must be a non-negative number".into(),
            ));
        }
        let bench_instances = raw.bench.instances.unwrap_or(DEFAULT_BENCH_INSTANCES);
        if bench_instances == 0 {
            return Err(Error::Config("bench.instances must be at least 1".into()));
        }
        let tournament_rounds = raw.tournament.rounds.unwrap_or(TOURNAMENT_ROUNDS);
        if tournament_rounds == 0 {
            return Err(Error::Config("tournament.rounds must be at least 1".into()));
        }
        if raw.experiment.seeds.as_ref().is_some_and(|s| s.is_empty())
            || raw.experiment.budget == Some(0)
        {
            return Err(Error::Config(
                "experiment seeds and budget must be non-empty".into(),
            ));
        }

        Ok(RunConfig {
            seed,
            env,
            hyper,
            protocol,
            shaping,
            tournament_rounds,
            tournament_seed_base: raw.tournament.seed_base.unwrap_or(500_000),
            experiment_seeds: raw.experiment.seeds,
            experiment_budget: raw.experiment.budget,
            bench_seconds,
            bench_instances,
        })
    }
}

/// Core configuration values may be written as strings, integers or
/// booleans; the core receives their text.
fn core_config(raw: BTreeMap<String, toml::Value>) -> Result<CoreConfig> {
    raw.into_iter()
        .map(|(k, v)| {
            let text = match v {
                toml::Value::String(s) => s,
                toml::Value::Integer(i) => i.to_string(),
                toml::Value::Boolean(b) => b.to_string(),
                other => {
                    return Err(Error::Config(format!(
                        "core_config.{k} must be a string, integer or boolean, got {}",
                        other.type_str()
                    )))
                }
            };
            Ok((k, text))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_uses_defaults() {
        let cfg = RunConfig::parse("seed = 3", None).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.env.core_name, "scroller");
        assert_eq!(cfg.env.frame_skip, 4);
        assert_eq!(cfg.hyper, HyperParams::default());
        assert_eq!(cfg.protocol, EvalProtocol::default());
        assert_eq!(cfg.tournament_rounds, 50);
    }

    #[test]
    fn full_file() {
        let text = r#"
            seed = 1
            [env]
            core = "duel"
            reward_mode = "zero_sum"
            exclude_buttons = ["L", "R"]
            core_config = { difficulty = "very_hard", mirror_start = true }
            [agent]
            grid = 4
            [shaping]
            mode = "none"
            [protocol]
            human_reference = 50.0
        "#;
        let cfg = RunConfig::parse(text, Some(9)).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.env.seed, 9);
        assert_eq!(cfg.env.reward_mode, RewardMode::ZeroSum);
        assert_eq!(cfg.env.exclusions, [Button::L, Button::R]);
        assert_eq!(cfg.env.core_config["mirror_start"], "true");
        assert_eq!(cfg.hyper.features.grid, 4);
        assert_eq!(cfg.protocol.human_reference, Some(50.0));
    }

    #[test]
    fn errors_are_config_errors() {
        for text in [
            "",
            "seed = -1",
            "seed = 1\nbogus = 2",
            "seed = 1\n[env]\nframe_skip = 0\nwhat = 1",
            "seed = 1\n[agent]\ngamma = 1.0",
            "seed = 1\n[shaping]\nmode = \"sideways\"",
            "seed = 1\n[env]\nexclude_buttons = [\"Z\"]",
            "seed = 1\n[env.core_config]\nlevel = 1.5",
            "seed = 1\n[bench]\ninstances = 0",
            "seed = [",
        ] {
            let err = RunConfig::parse(text, None).unwrap_err();
            assert!(err.is_config(), "{text:?}: {err}");
        }
    }
}
