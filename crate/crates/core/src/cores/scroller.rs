//! Side-scrolling platform level.
//!
//! The player starts near the left edge and must reach the goal at the
//! right end. Coins (+100) are scattered mostly to the right of the start
//! and patrolling enemies end the episode on contact, so score is only
//! loosely tied to the actual task of crossing the level. Reaching the goal
//! pays a bonus proportional to the frames left on the clock. A scrolling
//! cloud layer moves independently of everything else.

use serde::{Deserialize, Serialize};

use super::{config_choice, config_int, FRAME_RATE, NUM_BUTTONS, SCREEN_HEIGHT, SCREEN_WIDTH};
use crate::abi::{
    decode_payload, encode_payload, rgb, Button, ButtonMask, CoreConfig, CoreInfo, CoreRng, Frame,
    GameCore, StateVars,
};
use crate::error::{Error, Result};

/// Goal position, in cells.
pub const LEVEL_LENGTH: i32 = 64;
/// Sub-cell positions per cell; the player walks one sub-cell per frame.
pub const SUB: i32 = 4;
pub const START_CELL: i32 = 2;
/// Frames after which reaching the goal no longer earns a time bonus.
pub const TIME_LIMIT: u64 = 1200;
pub const COIN_SCORE: i64 = 100;
pub const TIME_BONUS_PER_FRAME: i64 = 10;

const JUMP_PROFILE: [u8; 16] = [1, 1, 2, 2, 2, 2, 2, 2, 2, 2, 2, 2, 2, 1, 1, 1];
const ENEMY_ZONE: (i32, i32) = (12, 60);
const COINS_RIGHT: usize = 12;
const COINS_LEFT: [i32; 2] = [0, 1];
// Bounds accepted from savestates.
const MAX_FRAMES: u64 = 1 << 40;
const MAX_SCORE: i64 = 1 << 50;

static INFO: CoreInfo = CoreInfo {
    name: "scroller",
    version: 1,
    num_players: 1,
    num_buttons: NUM_BUTTONS,
    frame_rate: FRAME_RATE,
    screen_width: SCREEN_WIDTH,
    screen_height: SCREEN_HEIGHT,
    config_keys: &["difficulty", "level"],
    used_buttons: &[Button::Left, Button::Right, Button::A],
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
enum Outcome {
    Running,
    Goal,
    Dead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Coin {
    cell: i32,
    air: bool,
    taken: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Enemy {
    lo: i32,
    hi: i32,
    x: i32,
    dir: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct World {
    frame: u64,
    /// Player position in sub-cells.
    px: i32,
    jump: Option<u8>,
    coins: Vec<Coin>,
    enemies: Vec<Enemy>,
    score: i64,
    coins_taken: u32,
    pub(crate) background_phase: u32,
    outcome: Outcome,
}

impl World {
    fn generate(seed: u64, enemies: usize, level: u64) -> Self {
        let mut rng = CoreRng::seed_from(seed, level);

        let (zone_lo, zone_hi) = ENEMY_ZONE;
        let bin = (zone_hi - zone_lo) / enemies as i32;
        let enemies = (0..enemies as i32)
            .map(|k| {
                let lo_bin = zone_lo + k * bin;
                let radius = 1 + rng.below(2) as i32;
                let slack = (bin - 2 * radius - 2).max(1);
                let center = lo_bin + radius + 1 + rng.below(slack as u32) as i32;
                let lo = (center - radius) * SUB;
                let hi = (center + radius) * SUB;
                Enemy {
                    lo,
                    hi,
                    x: lo + rng.below((hi - lo) as u32 + 1) as i32,
                    dir: if rng.below(2) == 0 { -1 } else { 1 },
                }
            })
            .collect();

        let mut cells: Vec<i32> = Vec::with_capacity(COINS_RIGHT);
        while cells.len() < COINS_RIGHT {
            let c = START_CELL + 2 + rng.below((LEVEL_LENGTH - START_CELL - 2) as u32) as i32;
            if !cells.contains(&c) {
                cells.push(c);
            }
        }
        cells.sort_unstable();
        let coins = COINS_LEFT
            .iter()
            .map(|&cell| Coin {
                cell,
                air: false,
                taken: false,
            })
            .chain(cells.into_iter().map(|cell| Coin {
                cell,
                air: rng.below(3) == 0,
                taken: false,
            }))
            .collect();

        World {
            frame: 0,
            px: START_CELL * SUB,
            jump: None,
            coins,
            enemies,
            score: 0,
            coins_taken: 0,
            background_phase: rng.below(96),
            outcome: Outcome::Running,
        }
    }

    fn height(&self) -> u8 {
        self.jump.map_or(0, |t| JUMP_PROFILE[t as usize])
    }

    fn cell(&self) -> i32 {
        (self.px + SUB / 2) / SUB
    }

    fn step(&mut self, input: ButtonMask) {
        let left = input.pressed(Button::Left);
        let right = input.pressed(Button::Right);
        if right && !left {
            self.px += 1;
        } else if left && !right {
            self.px = (self.px - 1).max(0);
        }

        self.jump = match self.jump {
            Some(t) if (t as usize) + 1 < JUMP_PROFILE.len() => Some(t + 1),
            Some(_) => None,
            None if input.pressed(Button::A) => Some(0),
            None => None,
        };

        if self.frame.is_multiple_of(2) {
            for e in &mut self.enemies {
                let next = e.x + e.dir as i32;
                if next < e.lo || next > e.hi {
                    e.dir = -e.dir;
                }
                e.x += e.dir as i32;
            }
        }

        let height = self.height();
        let cell = self.cell();
        for coin in &mut self.coins {
            if !coin.taken && coin.cell == cell && (coin.air == (height >= 2)) {
                coin.taken = true;
                self.coins_taken += 1;
                self.score += COIN_SCORE;
            }
        }

        self.frame += 1;
        self.background_phase = self.background_phase.wrapping_add(1);

        if height == 0 && self.enemies.iter().any(|e| (e.x - self.px).abs() < SUB) {
            self.outcome = Outcome::Dead;
        } else if self.px >= LEVEL_LENGTH * SUB {
            self.px = LEVEL_LENGTH * SUB;
            self.outcome = Outcome::Goal;
            self.score += TIME_LIMIT.saturating_sub(self.frame) as i64 * TIME_BONUS_PER_FRAME;
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::CorruptState(format!("scroller: {m}")));
        if !(0..=LEVEL_LENGTH * SUB).contains(&self.px) {
            return bad("player out of bounds");
        }
        if self.jump.is_some_and(|t| t as usize >= JUMP_PROFILE.len()) {
            return bad("jump timer out of range");
        }
        if self.enemies.len() > 16 || self.coins.len() > 64 {
            return bad("too many objects");
        }
        let span = 0..=LEVEL_LENGTH * SUB;
        for e in &self.enemies {
            let ordered = e.lo <= e.x && e.x <= e.hi;
            if !ordered
                || !span.contains(&e.lo)
                || !span.contains(&e.hi)
                || !matches!(e.dir, -1 | 1)
            {
                return bad("enemy patrol inconsistent");
            }
        }
        if self
            .coins
            .iter()
            .any(|c| !(0..=LEVEL_LENGTH).contains(&c.cell))
        {
            return bad("coin out of bounds");
        }
        if self.coins.iter().filter(|c| c.taken).count() != self.coins_taken as usize {
            return bad("coin count inconsistent");
        }
        if self.frame > MAX_FRAMES || self.score.unsigned_abs() > MAX_SCORE as u64 {
            return bad("counter out of range");
        }
        Ok(())
    }

    fn state_vars(&self) -> StateVars {
        StateVars::new()
            .with("score", self.score)
            .with("x_position", (self.px / SUB) as i64)
            .with("y_position", self.height() as i64)
            .with("coins", self.coins_taken as i64)
            .with("goal", (self.outcome == Outcome::Goal) as i64)
            .with("dead", (self.outcome == Outcome::Dead) as i64)
            .with("time", self.frame as i64)
    }
}

const SKY: u32 = rgb(40, 60, 110);
const CLOUD: u32 = rgb(70, 94, 150);
const GROUND: u32 = rgb(120, 72, 32);
const WALL: u32 = rgb(25, 25, 25);
const PLAYER: u32 = rgb(230, 200, 60);
const ENEMY: u32 = rgb(200, 40, 40);
const COIN: u32 = rgb(255, 230, 0);
const POLE: u32 = rgb(240, 240, 240);

const GROUND_Y: i32 = 192;
/// Horizontal pixels per sub-cell.
const PX_PER_SUB: i32 = 4;
const PLAYER_SCREEN_X: i32 = 64;

fn render(world: &World, frame: &mut Frame) {
    let w = frame.width();
    let mut sky_row = vec![SKY; w];
    let phase = world.background_phase as usize;
    for (x, px) in sky_row.iter_mut().enumerate() {
        if (x + phase) % 96 < 40 {
            *px = CLOUD;
        }
    }
    for y in 0..GROUND_Y as usize {
        frame.row_mut(y).copy_from_slice(&sky_row);
    }
    frame.fill_rect(
        0,
        GROUND_Y,
        w as i32,
        frame.height() as i32 - GROUND_Y,
        GROUND,
    );

    let view_left = world.px - PLAYER_SCREEN_X / PX_PER_SUB;
    let sx = |sub: i32| (sub - view_left) * PX_PER_SUB;

    // Left boundary of the level.
    let edge = sx(0);
    if edge > 0 {
        frame.fill_rect(0, 0, edge, GROUND_Y, WALL);
    }

    let goal = sx(LEVEL_LENGTH * SUB);
    frame.fill_rect(goal, 64, 4, GROUND_Y - 64, POLE);
    frame.fill_rect(goal + 4, 64, 20, 14, COIN);

    let cell_px = SUB * PX_PER_SUB;
    for coin in world.coins.iter().filter(|c| !c.taken) {
        let x = sx(coin.cell * SUB) + (cell_px - 8) / 2;
        let y = if coin.air { 128 } else { 180 };
        frame.fill_rect(x, y, 8, 8, COIN);
    }
    for e in &world.enemies {
        frame.fill_rect(sx(e.x), GROUND_Y - 16, cell_px, 16, ENEMY);
    }
    let h = world.height() as i32;
    frame.fill_rect(PLAYER_SCREEN_X, GROUND_Y - 24 - h * 24, cell_px, 24, PLAYER);
}

/// The platformer core.
pub struct ScrollerCore {
    world: Option<World>,
}

impl ScrollerCore {
    pub fn new() -> Self {
        ScrollerCore { world: None }
    }

    #[cfg(test)]
    pub(crate) fn world_mut(&mut self) -> &mut World {
        self.world.as_mut().unwrap()
    }
}

impl Default for ScrollerCore {
    fn default() -> Self {
        Self::new()
    }
}

impl GameCore for ScrollerCore {
    fn info(&self) -> &'static CoreInfo {
        &INFO
    }

    fn reset(&mut self, seed: u64, config: &CoreConfig) -> Result<()> {
        let enemies =
            match config_choice(config, "difficulty", &["easy", "medium", "hard"], "medium")? {
                "easy" => 3,
                "medium" => 5,
                _ => 7,
            };
        let level = config_int(config, "level", 1..=4, 1)? as u64;
        self.world = Some(World::generate(seed, enemies, level));
        Ok(())
    }

    fn step(&mut self, actions: &[ButtonMask]) {
        self.world
            .as_mut()
            .expect("reset before step")
            .step(actions[0]);
    }

    fn is_terminal(&self) -> bool {
        self.world
            .as_ref()
            .is_some_and(|w| w.outcome != Outcome::Running)
    }

    fn frame_number(&self) -> u64 {
        self.world.as_ref().map_or(0, |w| w.frame)
    }

    fn score(&self, _player: usize) -> i64 {
        self.world.as_ref().map_or(0, |w| w.score)
    }

    fn state_vars(&self) -> StateVars {
        self.world
            .as_ref()
            .map(World::state_vars)
            .unwrap_or_default()
    }

    fn render(&self, _player: usize, frame: &mut Frame) {
        match &self.world {
            Some(w) => render(w, frame),
            None => frame.fill(0),
        }
    }

    fn canonical_action(&self, mask: ButtonMask) -> ButtonMask {
        let mut out = ButtonMask::NONE;
        let left = mask.pressed(Button::Left);
        let right = mask.pressed(Button::Right);
        if left && !right {
            out = out.with(Button::Left);
        } else if right && !left {
            out = out.with(Button::Right);
        }
        if mask.pressed(Button::A) {
            out = out.with(Button::A);
        }
        out
    }

    fn save(&self) -> Vec<u8> {
        encode_payload(self.world.as_ref().expect("reset before save"))
    }

    fn load(&mut self, payload: &[u8]) -> Result<()> {
        let world: World = decode_payload(payload)?;
        world.validate()?;
        self.world = Some(world);
        Ok(())
    }
}
