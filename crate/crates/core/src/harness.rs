//! Training and evaluation protocol, score normalization, tournaments and
//! the two-player training schedules.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::abi::{CoreConfig, Frame, StateVars};
use crate::agents::{random_action, select_action, FeatureKey, QAgent, Transition};
use crate::cores::Difficulty;
use crate::env::{EnvConfig, Environment, RewardMode};
use crate::error::{Error, Result};
use crate::wrappers::{preprocess, ShapedEnv, ShapingSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalProtocol {
    pub epoch_actions: u64,
    pub max_epochs: u32,
    pub eval_episodes: u32,
    /// Overrides the environment's five-minute cap when set.
    pub episode_cap_frames: Option<u64>,
    pub human_reference: Option<f64>,
    /// Evaluation episode `i` is seeded `eval_seed_base + i`.
    pub eval_seed_base: u64,
    /// Training episode `k` is seeded `train_seed_base + k`.
    pub train_seed_base: u64,
    pub convergence_tolerance: f64,
    pub convergence_window: u32,
    /// Size of the frozen state sample behind the mean-Q curve.
    pub q_sample_states: usize,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        EvalProtocol {
            epoch_actions: 50_000,
            max_epochs: 100,
            eval_episodes: 30,
            episode_cap_frames: None,
            human_reference: None,
            eval_seed_base: 1_000_000,
            train_seed_base: 0,
            convergence_tolerance: 0.02,
            convergence_window: 3,
            q_sample_states: 256,
        }
    }
}

impl EvalProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.epoch_actions == 0 || self.max_epochs == 0 || self.eval_episodes == 0 {
            return Err(Error::Config(
                "epoch_actions, max_epochs and eval_episodes must be positive".into(),
            ));
        }
        if self.episode_cap_frames == Some(0) {
            return Err(Error::Config("episode_cap_frames must be positive".into()));
        }
        if self.convergence_tolerance.is_nan()
            || self.convergence_tolerance < 0.0
            || self.convergence_window == 0
        {
            return Err(Error::Config("invalid convergence test parameters".into()));
        }
        Ok(())
    }

    pub fn total_actions(&self) -> u64 {
        self.epoch_actions * self.max_epochs as u64
    }

    fn env_config(&self, base: &EnvConfig) -> EnvConfig {
        let mut cfg = base.clone();
        if self.episode_cap_frames.is_some() {
            cfg.max_episode_frames = self.episode_cap_frames;
        }
        cfg
    }

    /// The default convergence test: the evaluation mean moved by less than
    /// `convergence_tolerance` (relative) across each of the last
    /// `convergence_window` epoch transitions.
    pub fn converged(&self, epochs: &[EpochRecord]) -> bool {
        let means: Vec<f64> = epochs.iter().map(|e| e.eval_mean).collect();
        relative_change_converged(
            &means,
            self.convergence_tolerance,
            self.convergence_window as usize,
        )
    }
}

pub fn relative_change_converged(means: &[f64], tolerance: f64, window: usize) -> bool {
    if means.len() < window + 1 {
        return false;
    }
    means[means.len() - window - 1..].windows(2).all(|w| {
        let scale = w[0].abs().max(f64::EPSILON);
        (w[1] - w[0]).abs() / scale < tolerance
    })
}

/// Who controls player 2 of a two-player core.
#[derive(Debug, Clone)]
pub enum Opponent {
    /// The core's built-in AI at the given difficulty.
    Scripted(Difficulty),
    Random,
    /// A frozen agent playing ε_test-greedy.
    Agent(Arc<QAgent>),
}

impl Opponent {
    pub fn label(&self) -> String {
        match self {
            Opponent::Scripted(d) => format!("scripted:{}", d.as_str()),
            Opponent::Random => "random".into(),
            Opponent::Agent(_) => "agent".into(),
        }
    }

    pub fn frozen(agent: &QAgent) -> Self {
        Opponent::Agent(Arc::new(agent.clone()))
    }
}

/// Player-1 policy for evaluation.
#[derive(Debug, Clone, Copy)]
pub enum Actor<'a> {
    /// ε_test-greedy on the agent's table.
    Agent(&'a QAgent),
    Random,
}

/// An exploration stream derived from an episode seed.
fn episode_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream + 1);
    rng
}

fn view_key(agent: &QAgent, frame: &Frame) -> FeatureKey {
    agent.features(&preprocess(frame))
}

/// Chooses for a non-learning player given its own view.
fn frozen_choice(agent: &QAgent, frame: &Frame, num_actions: usize, rng: &mut ChaCha8Rng) -> usize {
    let key = view_key(agent, frame);
    select_action(&agent.q, &key, num_actions, agent.hp.epsilon_test, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeStats {
    pub scores: Vec<f64>,
    pub frames: Vec<u64>,
    pub mean: f64,
}

impl EpisodeStats {
    fn from_runs(runs: Vec<(f64, u64)>) -> Self {
        let n = runs.len().max(1) as f64;
        let mean = runs.iter().map(|r| r.0).sum::<f64>() / n;
        let (scores, frames) = runs.into_iter().unzip();
        EpisodeStats {
            scores,
            frames,
            mean,
        }
    }
}

/// The two environments a schedule may need: one where player 2 (if any)
/// is the scripted AI, and one where the caller drives both players.
struct Arena {
    single: ShapedEnv,
    duel: Option<Environment>,
    p2_frame: Frame,
    base_config: CoreConfig,
}

impl Arena {
    fn new(cfg: &EnvConfig, shaping: ShapingSpec, need_duel: bool) -> Result<Self> {
        let mut single_cfg = cfg.clone();
        single_cfg.two_player = false;
        let single = ShapedEnv::new(Environment::new(single_cfg)?, shaping)?;
        let duel = if need_duel {
            let mut duel_cfg = cfg.clone();
            duel_cfg.two_player = true;
            Some(Environment::new(duel_cfg)?)
        } else {
            None
        };
        let info = single.inner().core().info();
        Ok(Arena {
            single,
            duel,
            p2_frame: Frame::new(info.screen_width, info.screen_height),
            base_config: cfg.core_config.clone(),
        })
    }

    fn num_actions(&self) -> usize {
        self.single.inner().num_actions()
    }

    fn uses_duel(opponent: Option<&Opponent>) -> bool {
        matches!(opponent, Some(Opponent::Random | Opponent::Agent(_)))
    }

    fn reset(&mut self, seed: u64, opponent: Option<&Opponent>) -> Result<()> {
        if Self::uses_duel(opponent) {
            let duel = self.duel.as_mut().expect("duel environment prepared");
            duel.reset_with(seed, &self.base_config)?;
        } else {
            let mut cfg = self.base_config.clone();
            if let Some(Opponent::Scripted(d)) = opponent {
                cfg.insert("difficulty".into(), d.as_str().into());
            }
            self.single.reset_with(seed, &cfg)?;
        }
        Ok(())
    }

    fn frame(&self, opponent: Option<&Opponent>) -> &Frame {
        if Self::uses_duel(opponent) {
            self.duel
                .as_ref()
                .expect("duel environment prepared")
                .frame()
        } else {
            self.single.inner().frame()
        }
    }

    fn vars(&self, opponent: Option<&Opponent>) -> StateVars {
        if Self::uses_duel(opponent) {
            self.duel
                .as_ref()
                .expect("duel environment prepared")
                .observe_vars()
        } else {
            self.single.inner().observe_vars()
        }
    }

    /// Steps with player 1's action; returns (shaped, raw, terminal, frames).
    fn act(
        &mut self,
        action: usize,
        opponent: Option<&Opponent>,
        opp_rng: &mut ChaCha8Rng,
    ) -> Result<(f64, i64, bool, u64)> {
        match opponent {
            Some(Opponent::Random) | Some(Opponent::Agent(_)) => {
                let n = self.num_actions();
                let duel = self.duel.as_mut().expect("duel environment prepared");
                let b = match opponent {
                    Some(Opponent::Agent(agent)) => {
                        duel.render_player(1, &mut self.p2_frame);
                        frozen_choice(agent, &self.p2_frame, n, opp_rng)
                    }
                    _ => random_action(n, opp_rng),
                };
                let info = duel.act(&[action, b])?;
                Ok((
                    info.rewards[0] as f64,
                    info.rewards[0],
                    info.terminal,
                    info.frames_elapsed_total,
                ))
            }
            _ => {
                let step = self.single.act(&[action])?;
                Ok((
                    step.shaped_reward,
                    step.info.rewards[0],
                    step.info.terminal,
                    step.info.frames_elapsed_total,
                ))
            }
        }
    }
}

fn check_protocol_env(cfg: &EnvConfig) -> Result<()> {
    if cfg.two_player {
        return Err(Error::usage(
            "training and evaluation drive player 1 only; use a single-player configuration",
        ));
    }
    Ok(())
}

/// Plays `protocol.eval_episodes` episodes without learning.
pub fn evaluate(
    actor: Actor<'_>,
    env: &EnvConfig,
    protocol: &EvalProtocol,
    opponent: Option<&Opponent>,
) -> Result<EpisodeStats> {
    protocol.validate()?;
    check_protocol_env(env)?;
    let cfg = protocol.env_config(env);
    let mut arena = Arena::new(&cfg, ShapingSpec::none(), Arena::uses_duel(opponent))?;
    let n = arena.num_actions();
    let mut runs = Vec::with_capacity(protocol.eval_episodes as usize);
    for i in 0..protocol.eval_episodes as u64 {
        let seed = protocol.eval_seed_base.wrapping_add(i);
        arena.reset(seed, opponent)?;
        let mut rng = episode_rng(seed, 0);
        let mut opp_rng = episode_rng(seed, 1);
        let mut score = 0i64;
        loop {
            let a = match actor {
                Actor::Agent(agent) => frozen_choice(agent, arena.frame(opponent), n, &mut rng),
                Actor::Random => random_action(n, &mut rng),
            };
            let (_, raw, terminal, frames) = arena.act(a, opponent, &mut opp_rng)?;
            score += raw;
            if terminal {
                runs.push((score as f64, frames));
                break;
            }
        }
    }
    Ok(EpisodeStats::from_runs(runs))
}

/// `100 × (raw − random) / (human − random)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedScore {
    pub raw_mean: f64,
    pub random_mean: f64,
    pub human_reference: f64,
    pub normalized: f64,
}

pub fn normalize_means(
    raw_mean: f64,
    random_mean: f64,
    human_reference: f64,
) -> Result<NormalizedScore> {
    let all_finite = [raw_mean, random_mean, human_reference]
        .iter()
        .all(|v| v.is_finite());
    if !all_finite || human_reference <= random_mean {
        return Err(Error::DegenerateNormalization {
            human: human_reference,
            random: random_mean,
        });
    }
    Ok(NormalizedScore {
        raw_mean,
        random_mean,
        human_reference,
        // Dividing first keeps both anchors exact.
        normalized: 100.0 * ((raw_mean - random_mean) / (human_reference - random_mean)),
    })
}

pub fn normalize(
    stats: &EpisodeStats,
    random_stats: &EpisodeStats,
    human_reference: f64,
) -> Result<NormalizedScore> {
    normalize_means(stats.mean, random_stats.mean, human_reference)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: u32,
    pub actions_total: u64,
    pub episodes_completed: u64,
    pub epsilon: f64,
    pub eval_mean: f64,
    pub mean_q: f64,
    pub table_states: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeRecord {
    pub index: u64,
    pub opponent: String,
    pub seed: u64,
    /// Training actions taken before this episode began.
    pub start_action: u64,
    pub actions: u64,
    pub frames: u64,
    pub raw_return: i64,
    pub shaped_return: f64,
    pub final_vars: StateVars,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    pub episodes: Vec<EpisodeRecord>,
    pub total_actions: u64,
    pub converged: bool,
}

impl TrainingLog {
    /// The first episode satisfying `pred`, if any.
    pub fn first_episode(&self, pred: impl Fn(&EpisodeRecord) -> bool) -> Option<&EpisodeRecord> {
        self.episodes.iter().find(|e| pred(e))
    }
}

/// Feature keys seen along a seeded random-policy rollout, one per action.
pub fn sample_states(
    agent: &QAgent,
    env: &EnvConfig,
    count: usize,
    seed: u64,
) -> Result<Vec<FeatureKey>> {
    let mut single = env.clone();
    single.two_player = false;
    let mut e = Environment::new(single)?;
    let n = e.num_actions();
    let mut rng = episode_rng(seed, 2);
    let mut out = Vec::with_capacity(count);
    let mut episode = 0;
    e.reset_seeded(seed)?;
    while out.len() < count {
        out.push(view_key(agent, e.frame()));
        if e.act(&[random_action(n, &mut rng)])?.terminal {
            episode += 1;
            e.reset_seeded(seed.wrapping_add(episode))?;
        }
    }
    Ok(out)
}

fn mean_max_q(agent: &QAgent, states: &[FeatureKey]) -> f64 {
    if states.is_empty() {
        return 0.0;
    }
    states.iter().map(|s| agent.q.max_value(s)).sum::<f64>() / states.len() as f64
}

/// Options shared by the training entry points.
pub struct TrainSpec<'a> {
    pub env: &'a EnvConfig,
    pub shaping: ShapingSpec,
    pub protocol: &'a EvalProtocol,
    /// Player 2 of each training episode, round-robin. Empty means the
    /// environment's own single-player setup.
    pub opponents: &'a [Opponent],
    /// Player 2 during the per-epoch evaluation pass.
    pub eval_opponent: Option<&'a Opponent>,
    /// Returns true to stop after the epoch just logged.
    pub converged: &'a dyn Fn(&[EpochRecord]) -> bool,
    /// Skip the evaluation pass (and the mean-Q sample) after each epoch.
    pub skip_eval: bool,
}

struct Live {
    opponent: usize,
    key: FeatureKey,
    record: EpisodeRecord,
    opp_rng: ChaCha8Rng,
}

/// Runs epochs of exactly `epoch_actions` learning steps until the
/// convergence test passes or `max_epochs` is reached.
pub fn train_schedule(agent: &mut QAgent, spec: &TrainSpec<'_>) -> Result<TrainingLog> {
    let protocol = spec.protocol;
    protocol.validate()?;
    check_protocol_env(spec.env)?;
    let cfg = protocol.env_config(spec.env);
    let need_duel = spec.opponents.iter().any(|o| Arena::uses_duel(Some(o)));
    let mut arena = Arena::new(&cfg, spec.shaping, need_duel)?;
    if arena.num_actions() != agent.q.num_actions() {
        return Err(Error::usage(format!(
            "agent has {} actions, environment has {}",
            agent.q.num_actions(),
            arena.num_actions()
        )));
    }
    let q_states = if spec.skip_eval {
        Vec::new()
    } else {
        sample_states(
            agent,
            &cfg,
            protocol.q_sample_states,
            protocol.eval_seed_base,
        )?
    };
    let total = protocol.total_actions();
    let mut log = TrainingLog {
        epochs: Vec::new(),
        episodes: Vec::new(),
        total_actions: 0,
        converged: false,
    };
    let mut live: Option<Live> = None;
    let mut step = 0u64;
    let mut next_episode = 0u64;

    for epoch in 1..=protocol.max_epochs {
        for _ in 0..protocol.epoch_actions {
            let ep = match live.as_mut() {
                Some(ep) => ep,
                None => {
                    let index = next_episode;
                    next_episode += 1;
                    let opponent = if spec.opponents.is_empty() {
                        usize::MAX
                    } else {
                        (index % spec.opponents.len() as u64) as usize
                    };
                    let opp = spec.opponents.get(opponent);
                    let seed = protocol.train_seed_base.wrapping_add(index);
                    arena.reset(seed, opp)?;
                    live.insert(Live {
                        opponent,
                        key: view_key(agent, arena.frame(opp)),
                        record: EpisodeRecord {
                            index,
                            opponent: opp.map_or_else(|| "none".into(), Opponent::label),
                            seed,
                            start_action: step,
                            actions: 0,
                            frames: 0,
                            raw_return: 0,
                            shaped_return: 0.0,
                            final_vars: StateVars::new(),
                        },
                        opp_rng: episode_rng(seed, 1),
                    })
                }
            };
            let opp = spec.opponents.get(ep.opponent);
            let epsilon = agent.hp.epsilon_at(step, total);
            let action = agent.act(&ep.key, epsilon);
            let (shaped, raw, terminal, frames) = arena.act(action, opp, &mut ep.opp_rng)?;
            let next = view_key(agent, arena.frame(opp));
            agent.learn(&Transition {
                state: std::mem::replace(&mut ep.key, next.clone()),
                action,
                reward: shaped,
                next_state: next,
                terminal,
            })?;
            step += 1;
            ep.record.actions += 1;
            ep.record.raw_return += raw;
            ep.record.shaped_return += shaped;
            ep.record.frames = frames;
            if terminal {
                let mut done = live.take().expect("live episode");
                done.record.final_vars = arena.vars(opp);
                log.episodes.push(done.record);
            }
        }
        let (eval_mean, mean_q) = if spec.skip_eval {
            (f64::NAN, f64::NAN)
        } else {
            let stats = evaluate(Actor::Agent(agent), spec.env, protocol, spec.eval_opponent)?;
            (stats.mean, mean_max_q(agent, &q_states))
        };
        log.epochs.push(EpochRecord {
            epoch,
            actions_total: step,
            episodes_completed: log.episodes.len() as u64,
            epsilon: agent.hp.epsilon_at(step, total),
            eval_mean,
            mean_q,
            table_states: agent.q.num_states(),
        });
        if (spec.converged)(&log.epochs) {
            log.converged = true;
            break;
        }
    }
    log.total_actions = step;
    Ok(log)
}

/// Single-player training with the protocol's convergence test.
pub fn train(
    agent: &mut QAgent,
    env: &EnvConfig,
    shaping: ShapingSpec,
    protocol: &EvalProtocol,
) -> Result<TrainingLog> {
    let converged = |e: &[EpochRecord]| protocol.converged(e);
    train_schedule(
        agent,
        &TrainSpec {
            env,
            shaping,
            protocol,
            opponents: &[],
            eval_opponent: None,
            converged: &converged,
            skip_eval: false,
        },
    )
}

/// Continues training with `opponent` as player 2 in every episode.
pub fn retrain_versus(
    agent: &mut QAgent,
    opponent: &Opponent,
    env: &EnvConfig,
    protocol: &EvalProtocol,
) -> Result<TrainingLog> {
    alternating_training(agent, std::slice::from_ref(opponent), env, protocol)
}

/// Trains with player 2 rotating through `opponents`, one per episode.
pub fn alternating_training(
    agent: &mut QAgent,
    opponents: &[Opponent],
    env: &EnvConfig,
    protocol: &EvalProtocol,
) -> Result<TrainingLog> {
    if opponents.is_empty() {
        return Err(Error::usage(
            "alternating training needs at least one opponent",
        ));
    }
    let converged = |e: &[EpochRecord]| protocol.converged(e);
    train_schedule(
        agent,
        &TrainSpec {
            env,
            shaping: ShapingSpec::none(),
            protocol,
            opponents,
            eval_opponent: None,
            converged: &converged,
            skip_eval: false,
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    WinA,
    WinB,
    Draw,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundTrace {
    pub round: u32,
    pub seed: u64,
    pub frames: u64,
    pub health_a: i64,
    pub health_b: i64,
    /// Zero-sum return of player A; player B's is its negation.
    pub return_a: i64,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TournamentResult {
    pub rounds: u32,
    pub wins_a: u32,
    pub wins_b: u32,
    pub draws: u32,
    pub traces: Vec<RoundTrace>,
}

pub const TOURNAMENT_ROUNDS: u32 = 50;

/// Plays `rounds` two-player rounds, `a` as player 1 and `b` as player 2,
/// round `r` seeded `seed_base + r`. A round is won by the player with more
/// health left at the end, which covers knockouts; equal health is a draw.
///
/// Each side explores from its own per-round stream. With `swap_start` the
/// streams follow the swapped positions, and with `mirror_start` both sides
/// share one stream, so a self-play round is exactly symmetric.
pub fn tournament(
    a: &Opponent,
    b: &Opponent,
    env: &EnvConfig,
    rounds: u32,
    seed_base: u64,
) -> Result<TournamentResult> {
    let mut cfg = env.clone();
    cfg.two_player = true;
    cfg.reward_mode = RewardMode::ZeroSum;
    let mut e = Environment::new(cfg.clone()).map_err(|err| {
        if err.is_config() {
            Error::usage(format!("tournament needs a two-player core: {err}"))
        } else {
            err
        }
    })?;
    let vars = e.observe_vars();
    if vars.get("health_p1").is_none() || vars.get("health_p2").is_none() {
        return Err(Error::usage(
            "tournament needs a core reporting health_p1 and health_p2",
        ));
    }
    let flag = |k: &str| cfg.core_config.get(k).is_some_and(|v| v == "true");
    let (mirror, swap) = (flag("mirror_start"), flag("swap_start"));
    let stream = |p: u64| if mirror { 0 } else { p ^ swap as u64 };

    let n = e.num_actions();
    let info = e.core().info();
    let mut view = Frame::new(info.screen_width, info.screen_height);
    let mut result = TournamentResult {
        rounds,
        wins_a: 0,
        wins_b: 0,
        draws: 0,
        traces: Vec::with_capacity(rounds as usize),
    };
    for round in 0..rounds {
        let seed = seed_base.wrapping_add(round as u64);
        e.reset_seeded(seed)?;
        let mut rngs = [episode_rng(seed, stream(0)), episode_rng(seed, stream(1))];
        let mut return_a = 0;
        let frames = loop {
            let mut picks = [0usize; 2];
            for (p, player) in [a, b].into_iter().enumerate() {
                picks[p] = match player {
                    Opponent::Random => random_action(n, &mut rngs[p]),
                    Opponent::Agent(agent) => {
                        e.render_player(p, &mut view);
                        frozen_choice(agent, &view, n, &mut rngs[p])
                    }
                    Opponent::Scripted(_) => {
                        return Err(Error::usage(
                            "the scripted AI cannot take part in a two-player tournament",
                        ))
                    }
                };
            }
            let info = e.act(&picks)?;
            return_a += info.rewards[0];
            if info.terminal {
                break info.frames_elapsed_total;
            }
        };
        let vars = e.observe_vars();
        let health_a = vars.get("health_p1").unwrap_or(0);
        let health_b = vars.get("health_p2").unwrap_or(0);
        let outcome = match health_a.cmp(&health_b) {
            std::cmp::Ordering::Greater => Outcome::WinA,
            std::cmp::Ordering::Less => Outcome::WinB,
            std::cmp::Ordering::Equal => Outcome::Draw,
        };
        match outcome {
            Outcome::WinA => result.wins_a += 1,
            Outcome::WinB => result.wins_b += 1,
            Outcome::Draw => result.draws += 1,
        }
        result.traces.push(RoundTrace {
            round,
            seed,
            frames,
            health_a,
            health_b,
            return_a,
            outcome,
        });
    }
    Ok(result)
}
