//! The environment layer: action sets, frame skipping, score-delta rewards
//! and the episode lifecycle over a [`Core`].

use serde::{Deserialize, Serialize};

use crate::abi::{Button, ButtonMask, Core, CoreConfig, CoreState, Frame, StateVars};
use crate::error::{Error, Result};

/// Episode cap in wall-clock terms, converted to frames with the core's rate.
pub const EPISODE_MINUTES: u64 = 5;
pub const DEFAULT_FRAME_SKIP: u32 = 4;

/// How per-player rewards are derived from score changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Each player's own score delta.
    #[default]
    Raw,
    /// `r1 = d1 - d2`, `r2 = -r1`.
    ZeroSum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub core_name: String,
    pub seed: u64,
    pub core_config: CoreConfig,
    pub frame_skip: u32,
    /// Both players are driven by the caller. When false, a two-player core's
    /// second player is the core's scripted opponent.
    pub two_player: bool,
    /// Defaults to five minutes of the core's nominal frame rate.
    pub max_episode_frames: Option<u64>,
    pub reward_clip: Option<i64>,
    pub reward_mode: RewardMode,
    /// Buttons left out of the action set.
    pub exclusions: Vec<Button>,
}

impl EnvConfig {
    pub fn new(core_name: impl Into<String>, seed: u64) -> Self {
        EnvConfig {
            core_name: core_name.into(),
            seed,
            core_config: CoreConfig::new(),
            frame_skip: DEFAULT_FRAME_SKIP,
            two_player: false,
            max_episode_frames: None,
            reward_clip: None,
            reward_mode: RewardMode::Raw,
            exclusions: Vec::new(),
        }
    }

    pub fn with_config(mut self, key: &str, value: &str) -> Self {
        self.core_config.insert(key.to_string(), value.to_string());
        self
    }

    fn validate(&self) -> Result<()> {
        if self.frame_skip == 0 {
            return Err(Error::Config("frame_skip must be at least 1".into()));
        }
        if self.max_episode_frames == Some(0) {
            return Err(Error::Config(
                "max_episode_frames must be at least 1".into(),
            ));
        }
        if matches!(self.reward_clip, Some(c) if c < 0) {
            return Err(Error::Config("reward_clip must be non-negative".into()));
        }
        Ok(())
    }
}

/// Ordered, duplicate-free list of masks an agent chooses from by index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSet {
    masks: Vec<ButtonMask>,
}

impl ActionSet {
    /// Number of button combinations over the non-excluded buttons.
    pub fn combination_count(num_buttons: u8, exclusions: &[Button]) -> u64 {
        1 << free_bits(num_buttons, exclusions).count_ones()
    }

    /// All behaviour-distinct masks over the non-excluded buttons, where
    /// `canonical` maps each mask to the representative of its class. The
    /// result is sorted by mask bits, so the no-op is always index 0.
    pub fn minimal(
        num_buttons: u8,
        exclusions: &[Button],
        canonical: impl Fn(ButtonMask) -> ButtonMask,
    ) -> Self {
        let free = free_bits(num_buttons, exclusions);
        let mut masks = vec![ButtonMask::NONE];
        // Enumerate the subsets of `free`.
        let mut sub = free;
        loop {
            let rep = canonical(ButtonMask::from_bits(sub)).intersect(ButtonMask::from_bits(free));
            masks.push(rep);
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & free;
        }
        masks.sort_by_key(|m| m.bits());
        masks.dedup();
        ActionSet { masks }
    }

    pub fn for_core(core: &Core, exclusions: &[Button]) -> Self {
        Self::minimal(core.info().num_buttons, exclusions, |m| {
            core.canonical_action(m)
        })
    }

    pub fn from_masks(masks: Vec<ButtonMask>) -> Result<Self> {
        let mut seen = masks.clone();
        seen.sort_by_key(|m| m.bits());
        seen.dedup();
        if seen.len() != masks.len() || masks.is_empty() {
            return Err(Error::Config(
                "action set must be non-empty and duplicate-free".into(),
            ));
        }
        Ok(ActionSet { masks })
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<ButtonMask> {
        self.masks.get(index).copied()
    }

    pub fn masks(&self) -> &[ButtonMask] {
        &self.masks
    }

    pub fn index_of(&self, mask: ButtonMask) -> Option<usize> {
        self.masks.iter().position(|m| *m == mask)
    }
}

fn free_bits(num_buttons: u8, exclusions: &[Button]) -> u16 {
    let all = if num_buttons >= 16 {
        u16::MAX
    } else {
        (1u16 << num_buttons) - 1
    };
    exclusions.iter().fold(all, |acc, b| acc & !b.mask().bits())
}

/// Outcome of one agent action.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    /// Player 1's view after the block.
    pub frame: Frame,
    pub rewards: Vec<i64>,
    pub state_vars: StateVars,
    pub terminal: bool,
    pub frames_elapsed_total: u64,
}

/// Everything in a [`StepResult`] except the frame, which stays in the
/// environment's buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub rewards: Vec<i64>,
    pub terminal: bool,
    pub frames_run: u32,
    pub frames_elapsed_total: u64,
}

/// A savestate of the environment: the core's state plus the episode
/// bookkeeping. The reset counter is not part of it.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSnapshot {
    core: CoreState,
    frames: u64,
    terminal: bool,
}

pub struct Environment {
    config: EnvConfig,
    core: Core,
    actions: ActionSet,
    max_frames: u64,
    controlled: usize,
    scripted_p2: bool,
    resets: u64,
    frames: u64,
    terminal: bool,
    frame: Frame,
}

impl Environment {
    /// Builds the environment and performs the first reset, with `config.seed`.
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let core = Core::new(&config.core_name)?;
        core.check_config_keys(&config.core_config)?;
        let info = core.info();
        for b in &config.exclusions {
            if b.index() >= info.num_buttons {
                return Err(Error::Config(format!(
                    "excluded button {} is not on the {} controller",
                    b.name(),
                    info.name
                )));
            }
        }
        if config.two_player && info.num_players < 2 {
            return Err(Error::Config(format!(
                "core `{}` is single-player",
                info.name
            )));
        }
        let actions = ActionSet::for_core(&core, &config.exclusions);
        let max_frames = config
            .max_episode_frames
            .unwrap_or(EPISODE_MINUTES * 60 * info.frame_rate as u64);
        let controlled = if config.two_player { 2 } else { 1 };
        let frame = Frame::new(info.screen_width, info.screen_height);
        let mut env = Environment {
            scripted_p2: info.num_players == 2 && !config.two_player,
            config,
            core,
            actions,
            max_frames,
            controlled,
            resets: 0,
            frames: 0,
            terminal: false,
            frame,
        };
        env.reset()?;
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn core(&self) -> &Core {
        &self.core
    }

    pub fn action_set(&self) -> &ActionSet {
        &self.actions
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    /// Number of players whose actions the caller supplies.
    pub fn controlled_players(&self) -> usize {
        self.controlled
    }

    pub fn max_episode_frames(&self) -> u64 {
        self.max_frames
    }

    /// Starts a new episode. The i-th reset since construction (counting the
    /// one done by [`Environment::new`] as 0) uses seed `config.seed + i`.
    pub fn reset(&mut self) -> Result<&Frame> {
        let seed = self.config.seed.wrapping_add(self.resets);
        self.resets += 1;
        self.reset_seeded(seed)
    }

    /// Starts a new episode with an explicit seed, leaving the reset counter
    /// alone.
    pub fn reset_seeded(&mut self, seed: u64) -> Result<&Frame> {
        let config = self.config.core_config.clone();
        self.reset_with(seed, &config)
    }

    /// Starts a new episode with an explicit seed and core configuration.
    pub fn reset_with(&mut self, seed: u64, core_config: &CoreConfig) -> Result<&Frame> {
        self.core.reset_silent(seed, core_config)?;
        self.frames = 0;
        self.terminal = false;
        self.core.render_into(0, &mut self.frame);
        Ok(&self.frame)
    }

    /// Player 1's view of the current state.
    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    /// Renders `player`'s view into `out`.
    pub fn render_player(&self, player: usize, out: &mut Frame) {
        self.core.render_into(player, out);
    }

    pub fn observe_vars(&self) -> StateVars {
        self.core.state_vars()
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal
    }

    pub fn frames_elapsed(&self) -> u64 {
        self.frames
    }

    fn masks_for(&self, action_indices: &[usize]) -> Result<[ButtonMask; 2]> {
        if action_indices.len() != self.controlled {
            return Err(Error::usage(format!(
                "expected {} action index(es), got {}",
                self.controlled,
                action_indices.len()
            )));
        }
        let mut masks = [ButtonMask::NONE; 2];
        for (player, &i) in action_indices.iter().enumerate() {
            let mask = self.actions.get(i).ok_or_else(|| {
                Error::usage(format!(
                    "action index {i} out of range for {} actions",
                    self.actions.len()
                ))
            })?;
            // Every player picks from the same set in their own perspective.
            masks[player] = self.core.perspective_action(player, mask);
        }
        Ok(masks)
    }

    /// Applies one action per controlled player for up to `frame_skip`
    /// frames, rendering only the last.
    pub fn act(&mut self, action_indices: &[usize]) -> Result<StepInfo> {
        if self.terminal {
            return Err(Error::usage(
                "environment stepped after terminal without reset",
            ));
        }
        let mut masks = self.masks_for(action_indices)?;
        let players = self.core.info().num_players;
        let before = [self.core.score(0), self.core.score(1)];
        let mut run = 0;
        let mut core_done = false;
        while run < self.config.frame_skip && self.frames < self.max_frames && !core_done {
            if self.scripted_p2 {
                masks[1] = self.core.scripted_action(1)?;
            }
            core_done = self.core.advance(&masks[..players])?;
            self.frames += 1;
            run += 1;
        }
        self.terminal = core_done || self.frames >= self.max_frames;
        self.core.render_into(0, &mut self.frame);

        let delta = [
            self.core.score(0) - before[0],
            if players > 1 {
                self.core.score(1) - before[1]
            } else {
                0
            },
        ];
        let mut rewards = match self.config.reward_mode {
            RewardMode::Raw => delta.to_vec(),
            RewardMode::ZeroSum => vec![delta[0] - delta[1], delta[1] - delta[0]],
        };
        rewards.truncate(self.controlled);
        if let Some(c) = self.config.reward_clip {
            for r in &mut rewards {
                *r = (*r).clamp(-c, c);
            }
        }
        Ok(StepInfo {
            rewards,
            terminal: self.terminal,
            frames_run: run,
            frames_elapsed_total: self.frames,
        })
    }

    pub fn snapshot(&self) -> Result<EnvSnapshot> {
        Ok(EnvSnapshot {
            core: self.core.serialize()?,
            frames: self.frames,
            terminal: self.terminal,
        })
    }

    /// Returns to a snapshot taken from an environment with the same core.
    pub fn restore(&mut self, snap: &EnvSnapshot) -> Result<()> {
        self.core.deserialize(&snap.core)?;
        self.frames = snap.frames;
        self.terminal = snap.terminal;
        self.core.render_into(0, &mut self.frame);
        Ok(())
    }

    /// [`Environment::act`] plus a copy of the frame and the state variables.
    pub fn step(&mut self, action_indices: &[usize]) -> Result<StepResult> {
        let info = self.act(action_indices)?;
        Ok(StepResult {
            frame: self.frame.clone(),
            rewards: info.rewards,
            state_vars: self.core.state_vars(),
            terminal: info.terminal,
            frames_elapsed_total: info.frames_elapsed_total,
        })
    }
}

impl std::fmt::Debug for Environment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Environment")
            .field("core", &self.config.core_name)
            .field("frames", &self.frames)
            .field("terminal", &self.terminal)
            .finish_non_exhaustive()
    }
}
