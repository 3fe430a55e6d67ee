//! Desk-scale reproductions of the reward-shaping and two-player experiments.
//!
//! Every experiment runs one trial per seed and reports the per-seed numbers
//! together with a verdict: the directional claim must hold on at least
//! `required` of the seeds.

use serde::{Deserialize, Serialize};

use crate::agents::{HyperParams, QAgent};
use crate::cores::Difficulty;
use crate::env::{EnvConfig, RewardMode};
use crate::error::{Error, Result};
use crate::harness::{
    evaluate, tournament, train_schedule, Actor, EpochRecord, EvalProtocol, Opponent, TrainSpec,
    TrainingLog, TOURNAMENT_ROUNDS,
};
use crate::wrappers::ShapingSpec;

pub const EXPERIMENT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
/// A claim holds when it holds on this many of the default five seeds.
pub const REQUIRED_PASSES: usize = 4;

/// Training episodes of seed `s` start at `s * SEED_STRIDE`, so seeds see
/// disjoint episode streams.
const SEED_STRIDE: u64 = 1_000_000;
/// Offsets of the rival agents' seeds and episode streams.
const RIVAL_OFFSET: u64 = 100_000;
const SECOND_RIVAL_OFFSET: u64 = 200_000;
const RETRAIN_OFFSET: u64 = 300_000;
const ALTERNATING_OFFSET: u64 = 400_000;
const TOURNAMENT_SEED_BASE: u64 = 500_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentName {
    RewardShapingRacer,
    RewardShapingScroller,
    MarlForgetting,
    MarlAlternating,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 4] = [
        ExperimentName::RewardShapingRacer,
        ExperimentName::RewardShapingScroller,
        ExperimentName::MarlForgetting,
        ExperimentName::MarlAlternating,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentName::RewardShapingRacer => "reward_shaping_racer",
            ExperimentName::RewardShapingScroller => "reward_shaping_scroller",
            ExperimentName::MarlForgetting => "marl_forgetting",
            ExperimentName::MarlAlternating => "marl_alternating",
        }
    }

    /// Training actions per agent when the caller does not say otherwise.
    pub fn default_budget(self) -> u64 {
        match self {
            ExperimentName::RewardShapingRacer => 200_000,
            ExperimentName::RewardShapingScroller => 300_000,
            ExperimentName::MarlForgetting | ExperimentName::MarlAlternating => 200_000,
        }
    }
}

impl std::str::FromStr for ExperimentName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = ExperimentName::ALL.iter().map(|n| n.as_str()).collect();
                Error::Config(format!(
                    "unknown experiment `{s}` (expected one of {})",
                    names.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOptions {
    pub seeds: Vec<u64>,
    /// Training actions per agent.
    pub budget: u64,
    pub hyper: HyperParams,
    pub eval_episodes: u32,
}

impl ExperimentOptions {
    pub fn defaults(name: ExperimentName) -> Self {
        ExperimentOptions {
            seeds: DEFAULT_SEEDS.to_vec(),
            budget: name.default_budget(),
            hyper: HyperParams::default(),
            eval_episodes: EvalProtocol::default().eval_episodes,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() || self.budget < 4 || self.eval_episodes == 0 {
            return Err(Error::Config(
                "experiments need seeds, a budget of at least 4 actions and evaluation episodes"
                    .into(),
            ));
        }
        self.hyper.validate()
    }

    /// Passes needed for the verdict: four of five, scaled to the seed count.
    pub fn required(&self) -> usize {
        (self.seeds.len() * REQUIRED_PASSES).div_ceil(DEFAULT_SEEDS.len())
    }

    /// A fixed-budget protocol of four epochs.
    fn protocol(&self, train_seed_base: u64) -> EvalProtocol {
        EvalProtocol {
            epoch_actions: self.budget / 4,
            max_epochs: 4,
            eval_episodes: self.eval_episodes,
            train_seed_base,
            ..EvalProtocol::default()
        }
    }
}

/// Outcome of a full experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub experiment: ExperimentName,
    pub claim: String,
    pub budget: u64,
    pub seeds: Vec<u64>,
    pub runs: Vec<SeedRun>,
    pub passes: usize,
    pub required: usize,
    pub verdict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum SeedRun {
    Racer(RacerRun),
    Scroller(ScrollerRun),
    Forgetting(ForgettingRun),
    Alternating(AlternatingRun),
}

impl SeedRun {
    pub fn passed(&self) -> bool {
        match self {
            SeedRun::Racer(r) => r.passed,
            SeedRun::Scroller(r) => r.passed,
            SeedRun::Forgetting(r) => r.passed,
            SeedRun::Alternating(r) => r.passed,
        }
    }
}

/// Laps completed during training, with and without shaping.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RacerRun {
    pub seed: u64,
    pub shaped_laps: i64,
    pub shaped_first_lap_action: Option<u64>,
    pub unshaped_laps: i64,
    pub unshaped_first_lap_action: Option<u64>,
    pub passed: bool,
}

/// Training actions until the first goal, with and without shaping.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScrollerRun {
    pub seed: u64,
    pub shaped_first_goal_action: Option<u64>,
    pub unshaped_first_goal_action: Option<u64>,
    /// `unshaped_first_goal_action`, or the budget if the goal was never
    /// reached; the true value is at least this large.
    pub unshaped_censored: u64,
    pub shaped_goals: usize,
    pub unshaped_goals: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TournamentSummary {
    pub wins_a: u32,
    pub wins_b: u32,
    pub draws: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForgettingRun {
    pub seed: u64,
    /// Mean zero-sum score against the scripted AI before retraining.
    pub before: f64,
    pub after: f64,
    /// `(before - after) / |before|`.
    pub relative_drop: f64,
    /// The agent against the rival before and after retraining.
    pub tournament_before: TournamentSummary,
    pub tournament_after: TournamentSummary,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlternatingRun {
    pub seed: u64,
    /// Mean zero-sum score against the very hard scripted AI.
    pub single_opponent: f64,
    pub alternating: f64,
    pub passed: bool,
}

/// Progress callback: receives one line per finished trial.
pub type Progress<'a> = &'a mut dyn FnMut(&str);

pub fn run(
    name: ExperimentName,
    opts: &ExperimentOptions,
    progress: Progress<'_>,
) -> Result<ExperimentReport> {
    opts.validate()?;
    let mut runs = Vec::with_capacity(opts.seeds.len());
    for &seed in &opts.seeds {
        let run = match name {
            ExperimentName::RewardShapingRacer => SeedRun::Racer(racer_trial(seed, opts)?),
            ExperimentName::RewardShapingScroller => SeedRun::Scroller(scroller_trial(seed, opts)?),
            ExperimentName::MarlForgetting => SeedRun::Forgetting(forgetting_trial(seed, opts)?),
            ExperimentName::MarlAlternating => SeedRun::Alternating(alternating_trial(seed, opts)?),
        };
        progress(&format!(
            "{} seed {seed}: {}",
            name.as_str(),
            if run.passed() {
                "holds"
            } else {
                "does not hold"
            }
        ));
        runs.push(run);
    }
    let passes = runs.iter().filter(|r| r.passed()).count();
    let required = opts.required();
    Ok(ExperimentReport {
        schema_version: EXPERIMENT_SCHEMA_VERSION,
        experiment: name,
        claim: claim(name).to_string(),
        budget: opts.budget,
        seeds: opts.seeds.clone(),
        runs,
        passes,
        required,
        verdict: passes >= required,
    })
}

fn claim(name: ExperimentName) -> &'static str {
    match name {
        ExperimentName::RewardShapingRacer => {
            "with add_speed shaping at least one lap is completed within the budget; without shaping none is"
        }
        ExperimentName::RewardShapingScroller => {
            "with position_bonus shaping the first goal takes at most half the actions it takes without"
        }
        ExperimentName::MarlForgetting => {
            "after retraining against a fixed rival the score against the scripted AI drops by at least 30%"
        }
        ExperimentName::MarlAlternating => {
            "an agent trained against alternating opponents beats a scripted-AI-trained agent against the very hard AI"
        }
    }
}

const fn never(_: &[EpochRecord]) -> bool {
    false
}

fn train_for(
    agent: &mut QAgent,
    env: &EnvConfig,
    shaping: ShapingSpec,
    protocol: &EvalProtocol,
    opponents: &[Opponent],
) -> Result<TrainingLog> {
    train_schedule(
        agent,
        &TrainSpec {
            env,
            shaping,
            protocol,
            opponents,
            eval_opponent: None,
            converged: &never,
            skip_eval: true,
        },
    )
}

fn new_agent(env: &EnvConfig, opts: &ExperimentOptions, seed: u64) -> Result<QAgent> {
    let n = crate::env::Environment::new(env.clone())?.num_actions();
    QAgent::new(n, opts.hyper, seed)
}

fn racer_trial(seed: u64, opts: &ExperimentOptions) -> Result<RacerRun> {
    let env = EnvConfig::new("racer", seed);
    let protocol = opts.protocol(seed * SEED_STRIDE);
    let arm = |shaping: ShapingSpec| -> Result<(i64, Option<u64>)> {
        let mut agent = new_agent(&env, opts, seed)?;
        let log = train_for(&mut agent, &env, shaping, &protocol, &[])?;
        let lap = |e: &crate::harness::EpisodeRecord| e.final_vars.get("lap").unwrap_or(0);
        let laps = log.episodes.iter().map(lap).sum();
        // Laps of an episode cut off by the budget never reach the log.
        let first = log
            .first_episode(|e| lap(e) > 0)
            .map(|e| e.start_action + e.actions);
        Ok((laps, first))
    };
    let (shaped_laps, shaped_first) = arm(ShapingSpec::add_speed(1.0))?;
    let (unshaped_laps, unshaped_first) = arm(ShapingSpec::none())?;
    Ok(RacerRun {
        seed,
        shaped_laps,
        shaped_first_lap_action: shaped_first,
        unshaped_laps,
        unshaped_first_lap_action: unshaped_first,
        passed: shaped_laps >= 1 && unshaped_laps == 0,
    })
}

fn scroller_trial(seed: u64, opts: &ExperimentOptions) -> Result<ScrollerRun> {
    let env = EnvConfig::new("scroller", seed).with_config("difficulty", "easy");
    let protocol = opts.protocol(seed * SEED_STRIDE);
    let arm = |shaping: ShapingSpec| -> Result<(Option<u64>, usize)> {
        let mut agent = new_agent(&env, opts, seed)?;
        let log = train_for(&mut agent, &env, shaping, &protocol, &[])?;
        let goal = |e: &crate::harness::EpisodeRecord| e.final_vars.get("goal") == Some(1);
        let first = log.first_episode(goal).map(|e| e.start_action + e.actions);
        Ok((first, log.episodes.iter().filter(|e| goal(e)).count()))
    };
    let (shaped_first, shaped_goals) = arm(ShapingSpec::position_bonus(
        crate::wrappers::DEFAULT_POSITION_BONUS,
    ))?;
    let (unshaped_first, unshaped_goals) = arm(ShapingSpec::none())?;
    let unshaped_censored = unshaped_first.unwrap_or(opts.budget);
    let passed = shaped_first.is_some_and(|s| 2 * s <= unshaped_censored);
    Ok(ScrollerRun {
        seed,
        shaped_first_goal_action: shaped_first,
        unshaped_first_goal_action: unshaped_first,
        unshaped_censored,
        shaped_goals,
        unshaped_goals,
        passed,
    })
}

fn duel_env(seed: u64) -> EnvConfig {
    let mut env = EnvConfig::new("duel", seed);
    env.reward_mode = RewardMode::ZeroSum;
    env
}

fn score_against(
    agent: &QAgent,
    env: &EnvConfig,
    opts: &ExperimentOptions,
    d: Difficulty,
) -> Result<f64> {
    let env = env.clone().with_config("difficulty", d.as_str());
    let protocol = opts.protocol(0);
    Ok(evaluate(Actor::Agent(agent), &env, &protocol, None)?.mean)
}

/// An agent trained against the default scripted AI.
fn ai_trained(seed: u64, offset: u64, opts: &ExperimentOptions) -> Result<QAgent> {
    let env = duel_env(seed);
    let mut agent = new_agent(&env, opts, seed + offset)?;
    let protocol = opts.protocol(seed * SEED_STRIDE + offset);
    train_for(
        &mut agent,
        &env,
        ShapingSpec::none(),
        &protocol,
        &[Opponent::Scripted(Difficulty::Medium)],
    )?;
    Ok(agent)
}

fn summary(a: &Opponent, b: &Opponent, env: &EnvConfig) -> Result<TournamentSummary> {
    let t = tournament(a, b, env, TOURNAMENT_ROUNDS, TOURNAMENT_SEED_BASE)?;
    Ok(TournamentSummary {
        wins_a: t.wins_a,
        wins_b: t.wins_b,
        draws: t.draws,
    })
}

fn forgetting_trial(seed: u64, opts: &ExperimentOptions) -> Result<ForgettingRun> {
    let env = duel_env(seed);
    let agent = ai_trained(seed, 0, opts)?;
    let rival = Opponent::frozen(&ai_trained(seed, RIVAL_OFFSET, opts)?);
    let before = score_against(&agent, &env, opts, Difficulty::Medium)?;
    let tournament_before = summary(&Opponent::frozen(&agent), &rival, &env)?;

    let mut retrained = agent;
    let protocol = opts.protocol(seed * SEED_STRIDE + RETRAIN_OFFSET);
    train_for(
        &mut retrained,
        &env,
        ShapingSpec::none(),
        &protocol,
        std::slice::from_ref(&rival),
    )?;
    let after = score_against(&retrained, &env, opts, Difficulty::Medium)?;
    let tournament_after = summary(&Opponent::frozen(&retrained), &rival, &env)?;

    let relative_drop = (before - after) / before.abs().max(f64::EPSILON);
    Ok(ForgettingRun {
        seed,
        before,
        after,
        relative_drop,
        tournament_before,
        tournament_after,
        passed: before > 0.0 && relative_drop >= 0.3,
    })
}

fn alternating_trial(seed: u64, opts: &ExperimentOptions) -> Result<AlternatingRun> {
    let env = duel_env(seed);
    let single = ai_trained(seed, 0, opts)?;
    let rivals = [
        Opponent::Scripted(Difficulty::Medium),
        Opponent::frozen(&ai_trained(seed, RIVAL_OFFSET, opts)?),
        Opponent::frozen(&ai_trained(seed, SECOND_RIVAL_OFFSET, opts)?),
    ];
    let mut alternating = new_agent(&env, opts, seed + ALTERNATING_OFFSET)?;
    let protocol = opts.protocol(seed * SEED_STRIDE + ALTERNATING_OFFSET);
    train_for(
        &mut alternating,
        &env,
        ShapingSpec::none(),
        &protocol,
        &rivals,
    )?;

    let single_opponent = score_against(&single, &env, opts, Difficulty::VeryHard)?;
    let alternating = score_against(&alternating, &env, opts, Difficulty::VeryHard)?;
    Ok(AlternatingRun {
        seed,
        single_opponent,
        alternating,
        passed: alternating > single_opponent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for n in ExperimentName::ALL {
            assert_eq!(n.as_str().parse::<ExperimentName>().unwrap(), n);
        }
        assert!("nope".parse::<ExperimentName>().unwrap_err().is_config());
    }

    #[test]
    fn four_of_five_scales() {
        let mut o = ExperimentOptions::defaults(ExperimentName::MarlForgetting);
        assert_eq!(o.required(), 4);
        o.seeds = vec![1];
        assert_eq!(o.required(), 1);
        o.seeds = (0..10).collect();
        assert_eq!(o.required(), 8);
    }

    #[test]
    fn tiny_racer_run_reports() {
        let opts = ExperimentOptions {
            seeds: vec![0],
            budget: 400,
            ..ExperimentOptions::defaults(ExperimentName::RewardShapingRacer)
        };
        let mut lines = Vec::new();
        let r = run(ExperimentName::RewardShapingRacer, &opts, &mut |l| {
            lines.push(l.to_string())
        })
        .unwrap();
        assert_eq!(r.runs.len(), 1);
        assert_eq!(lines.len(), 1);
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["schema_version"], 1);
        assert_eq!(json["experiment"], "reward_shaping_racer");
    }
}
