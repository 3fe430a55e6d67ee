//! Two-player side-view fighting game.
//!
//! Each fighter can walk, block (A), throw a fast high attack (Y) or a
//! slower low attack (B). A high attack is stopped by a block; a low attack
//! goes under it; a high attack lands before a low one started at the same
//! time. Every unblocked hit deals 10 damage and briefly stuns the target.
//! Player `i`'s score is the damage it has dealt. A round ends when either
//! health bar is empty or after [`ROUND_FRAMES`].
//!
//! The screen is rendered from either fighter's point of view: the viewer is
//! always drawn in the "self" colour and, for player 2, the arena is
//! mirrored so both players see themselves the same way. Inputs given in a
//! player's own perspective are translated with
//! [`GameCore::perspective_action`].
//!
//! The built-in opponent is a hand-written script, not a model of any
//! commercial game's AI.

use serde::{Deserialize, Serialize};

use super::{config_bool, config_choice, FRAME_RATE, NUM_BUTTONS, SCREEN_HEIGHT, SCREEN_WIDTH};
use crate::abi::{
    decode_payload, encode_payload, rgb, Button, ButtonMask, CoreConfig, CoreInfo, CoreRng, Frame,
    GameCore, StateVars,
};
use crate::error::{Error, Result};

/// Arena width in sub-cells; fighter positions lie in `0..=ARENA`.
pub const ARENA: i32 = 80;
/// Sub-cells per cell. Fighters walk one sub-cell per frame.
pub const SUB: i32 = 2;
pub const MAX_HEALTH: i32 = 100;
pub const HIT_DAMAGE: i32 = 10;
pub const ROUND_FRAMES: u64 = 3600;
const MIN_GAP: i32 = SUB;
const HITSTUN: u8 = 8;
const BLOCKED_EXTRA_RECOVERY: u8 = 4;

static INFO: CoreInfo = CoreInfo {
    name: "duel",
    version: 1,
    num_players: 2,
    num_buttons: NUM_BUTTONS,
    frame_rate: FRAME_RATE,
    screen_width: SCREEN_WIDTH,
    screen_height: SCREEN_HEIGHT,
    config_keys: &["difficulty", "mirror_start", "swap_start"],
    used_buttons: &[Button::Left, Button::Right, Button::A, Button::B, Button::Y],
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttackKind {
    High,
    Low,
}

impl AttackKind {
    /// Frames from the button press to the hit check, inclusive.
    pub const fn startup(self) -> u8 {
        match self {
            AttackKind::High => 3,
            AttackKind::Low => 5,
        }
    }

    pub const fn recovery(self) -> u8 {
        match self {
            AttackKind::High => 8,
            AttackKind::Low => 6,
        }
    }

    /// Maximum distance, in sub-cells, at which the attack connects.
    pub const fn reach(self) -> i32 {
        match self {
            AttackKind::High => 3 * SUB,
            AttackKind::Low => 2 * SUB,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stance {
    Idle,
    Block,
    Windup { kind: AttackKind, elapsed: u8 },
    Recover { frames: u8 },
    Stunned { frames: u8 },
}

impl Stance {
    fn is_free(self) -> bool {
        matches!(self, Stance::Idle | Stance::Block)
    }

    fn code(self) -> i64 {
        match self {
            Stance::Idle => 0,
            Stance::Block => 1,
            Stance::Windup {
                kind: AttackKind::High,
                ..
            } => 2,
            Stance::Windup {
                kind: AttackKind::Low,
                ..
            } => 3,
            Stance::Recover { .. } => 4,
            Stance::Stunned { .. } => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Fighter {
    x: i32,
    health: i32,
    stance: Stance,
    dealt: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Difficulty {
    Medium,
    VeryHard,
}

impl Difficulty {
    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Medium => "medium",
            Difficulty::VeryHard => "very_hard",
        }
    }

    fn skill(self) -> Skill {
        match self {
            Difficulty::Medium => Skill {
                react: 500,
                attack: 60,
                high_share: 1000,
                block: 100,
                approach: 800,
                on_high: Reply::Block,
                on_low: Reply::High,
                on_open: Reply::High,
                on_block: Reply::Low,
            },
            Difficulty::VeryHard => Skill {
                react: 700,
                attack: 100,
                high_share: 1000,
                block: 500,
                approach: 1000,
                on_high: Reply::Block,
                on_low: Reply::High,
                on_open: Reply::High,
                on_block: Reply::Low,
            },
        }
    }
}

impl std::str::FromStr for Difficulty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "medium" => Ok(Difficulty::Medium),
            "very_hard" => Ok(Difficulty::VeryHard),
            other => Err(Error::InvalidConfigValue {
                key: "difficulty".into(),
                value: other.into(),
                allowed: "medium, very_hard".into(),
            }),
        }
    }
}

/// Per-frame probabilities of the scripted opponent, in permille.
struct Skill {
    /// Chance to answer the opponent's visible stance with its counter.
    react: u32,
    attack: u32,
    /// Share of unprompted attacks that are high.
    high_share: u32,
    block: u32,
    approach: u32,
    /// Replies to the opponent's high windup, low windup, recovery or stun,
    /// and block.
    on_high: Reply,
    on_low: Reply,
    on_open: Reply,
    on_block: Reply,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Reply {
    Nothing,
    Low,
    High,
    Block,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Intent {
    Idle,
    Move(i32),
    Block,
    Attack(AttackKind),
}

fn intent(mask: ButtonMask) -> Intent {
    if mask.pressed(Button::Y) {
        Intent::Attack(AttackKind::High)
    } else if mask.pressed(Button::B) {
        Intent::Attack(AttackKind::Low)
    } else if mask.pressed(Button::A) {
        Intent::Block
    } else {
        match (mask.pressed(Button::Left), mask.pressed(Button::Right)) {
            (true, false) => Intent::Move(-1),
            (false, true) => Intent::Move(1),
            _ => Intent::Idle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct World {
    difficulty: Difficulty,
    frame: u64,
    fighters: [Fighter; 2],
    ai_rng: CoreRng,
}

impl World {
    fn new(seed: u64, difficulty: Difficulty, mirror: bool, swap: bool) -> Self {
        let mut rng = CoreRng::seed_from(seed, 0);
        let gap = 2 * (4 + rng.below(17) as i32);
        let (mut x0, mut x1) = if mirror {
            let near = ARENA / 2 - gap / 2;
            (near, ARENA - near)
        } else {
            let left = 4 + rng.below((ARENA - gap - 8 + 1) as u32) as i32;
            (left, left + gap)
        };
        if rng.below(2) == 1 {
            (x0, x1) = (ARENA - x0, ARENA - x1);
        }
        if swap {
            (x0, x1) = (ARENA - x1, ARENA - x0);
        }
        let fighter = |x| Fighter {
            x,
            health: MAX_HEALTH,
            stance: Stance::Idle,
            dealt: 0,
        };
        World {
            difficulty,
            frame: 0,
            fighters: [fighter(x0), fighter(x1)],
            ai_rng: CoreRng::seed_from(seed, 1),
        }
    }

    fn terminal(&self) -> bool {
        self.fighters.iter().any(|f| f.health == 0) || self.frame >= ROUND_FRAMES
    }

    fn distance(&self) -> i32 {
        (self.fighters[0].x - self.fighters[1].x).abs()
    }

    fn step(&mut self, actions: &[ButtonMask]) {
        for f in &mut self.fighters {
            f.stance = match f.stance {
                Stance::Recover { frames } | Stance::Stunned { frames } if frames <= 1 => {
                    Stance::Idle
                }
                Stance::Recover { frames } => Stance::Recover { frames: frames - 1 },
                Stance::Stunned { frames } => Stance::Stunned { frames: frames - 1 },
                other => other,
            };
        }

        let intents = [intent(actions[0]), intent(actions[1])];
        let mut moved = [self.fighters[0].x, self.fighters[1].x];
        for (i, f) in self.fighters.iter_mut().enumerate() {
            if !f.stance.is_free() {
                continue;
            }
            f.stance = match intents[i] {
                Intent::Attack(kind) => Stance::Windup { kind, elapsed: 0 },
                Intent::Block => Stance::Block,
                Intent::Move(dx) => {
                    moved[i] = (f.x + dx).clamp(0, ARENA);
                    Stance::Idle
                }
                Intent::Idle => Stance::Idle,
            };
        }
        let before = self.fighters[0].x - self.fighters[1].x;
        let after = moved[0] - moved[1];
        if after.abs() >= MIN_GAP && after.signum() == before.signum() {
            self.fighters[0].x = moved[0];
            self.fighters[1].x = moved[1];
        }

        let distance = self.distance();
        let stances = [self.fighters[0].stance, self.fighters[1].stance];
        let mut landed = [false; 2];
        for i in 0..2 {
            let Stance::Windup { kind, elapsed } = stances[i] else {
                continue;
            };
            let elapsed = elapsed + 1;
            if elapsed < kind.startup() {
                self.fighters[i].stance = Stance::Windup { kind, elapsed };
                continue;
            }
            let blocked = kind == AttackKind::High && stances[1 - i] == Stance::Block;
            let hit = distance <= kind.reach() && !blocked;
            landed[i] = hit;
            let extra = if blocked && distance <= kind.reach() {
                BLOCKED_EXTRA_RECOVERY
            } else {
                0
            };
            self.fighters[i].stance = Stance::Recover {
                frames: kind.recovery() + extra,
            };
        }
        for (i, &hit) in landed.iter().enumerate() {
            if hit {
                let target = &mut self.fighters[1 - i];
                let damage = HIT_DAMAGE.min(target.health);
                target.health -= damage;
                target.stance = Stance::Stunned { frames: HITSTUN };
                self.fighters[i].dealt += damage as i64;
            }
        }
        self.frame += 1;
    }

    /// The built-in AI's input for fighter `me`, in absolute controls.
    fn scripted_input(&mut self, me: usize) -> ButtonMask {
        let skill = self.difficulty.skill();
        let rng = &mut self.ai_rng;
        let f = self.fighters[me];
        let opp = self.fighters[1 - me];
        if !f.stance.is_free() {
            return ButtonMask::NONE;
        }
        let toward = if opp.x > f.x {
            Button::Right.mask()
        } else {
            Button::Left.mask()
        };
        let distance = (f.x - opp.x).abs();
        if distance > AttackKind::High.reach() {
            return if rng.chance(skill.approach) {
                toward
            } else {
                ButtonMask::NONE
            };
        }
        if rng.chance(skill.react) {
            let reply = match opp.stance {
                Stance::Windup {
                    kind: AttackKind::High,
                    ..
                } => skill.on_high,
                Stance::Windup {
                    kind: AttackKind::Low,
                    ..
                } => skill.on_low,
                Stance::Recover { .. } | Stance::Stunned { .. } => skill.on_open,
                Stance::Block => skill.on_block,
                Stance::Idle => Reply::Nothing,
            };
            match reply {
                Reply::Nothing => {}
                Reply::Low if distance > AttackKind::Low.reach() => return toward,
                Reply::Low => return Button::B.mask(),
                Reply::High => return Button::Y.mask(),
                Reply::Block => return Button::A.mask(),
            }
        }
        if rng.chance(skill.attack) {
            if distance > AttackKind::Low.reach() || rng.chance(skill.high_share) {
                Button::Y.mask()
            } else {
                Button::B.mask()
            }
        } else if rng.chance(skill.block) {
            Button::A.mask()
        } else {
            ButtonMask::NONE
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::CorruptState(format!("duel: {m}")));
        if self.frame > ROUND_FRAMES {
            return bad("frame beyond round length");
        }
        for f in &self.fighters {
            if !(0..=ARENA).contains(&f.x) || !(0..=MAX_HEALTH).contains(&f.health) {
                return bad("fighter out of range");
            }
        }
        for (i, f) in self.fighters.iter().enumerate() {
            let other = &self.fighters[1 - i];
            if f.dealt != (MAX_HEALTH - other.health) as i64 {
                return bad("damage ledger inconsistent");
            }
            let ok = match f.stance {
                Stance::Windup { kind, elapsed } => elapsed < kind.startup(),
                Stance::Recover { frames } => {
                    frames <= AttackKind::High.recovery() + BLOCKED_EXTRA_RECOVERY
                }
                Stance::Stunned { frames } => frames <= HITSTUN,
                Stance::Idle | Stance::Block => true,
            };
            if !ok {
                return bad("stance timer out of range");
            }
        }
        if self.distance() < MIN_GAP {
            return bad("fighters overlap");
        }
        Ok(())
    }

    fn state_vars(&self) -> StateVars {
        let [a, b] = &self.fighters;
        StateVars::new()
            .with("score", a.dealt)
            .with("score_p2", b.dealt)
            .with("health_p1", a.health as i64)
            .with("health_p2", b.health as i64)
            .with("x_p1", a.x as i64)
            .with("x_p2", b.x as i64)
            .with("distance", self.distance() as i64)
            .with("stance_p1", a.stance.code())
            .with("stance_p2", b.stance.code())
            .with("round_frame", self.frame as i64)
    }
}

const BACKDROP: u32 = rgb(20, 20, 40);
const FLOOR: u32 = rgb(90, 90, 90);
const WALL: u32 = rgb(60, 40, 20);
const SELF_BODY: u32 = rgb(120, 200, 255);
const SELF_TIRED: u32 = rgb(60, 100, 130);
const OPP_BODY: u32 = rgb(200, 40, 40);
const OPP_TIRED: u32 = rgb(100, 20, 20);
const STUNNED: u32 = rgb(255, 0, 255);
const SHIELD: u32 = rgb(255, 255, 255);
const LIMB: u32 = rgb(255, 255, 140);
const SELF_BAR: u32 = rgb(80, 230, 80);
const OPP_BAR: u32 = rgb(230, 140, 40);

const FLOOR_Y: i32 = 192;
/// Screen pixels per sub-cell.
const PX_PER_SUB: i32 = 3;

fn draw_fighter(frame: &mut Frame, cx: i32, facing: i32, f: &Fighter, is_self: bool) {
    let body = match (f.stance, is_self) {
        (Stance::Stunned { .. }, _) => STUNNED,
        (Stance::Recover { .. }, true) => SELF_TIRED,
        (Stance::Recover { .. }, false) => OPP_TIRED,
        (_, true) => SELF_BODY,
        (_, false) => OPP_BODY,
    };
    frame.fill_rect(cx - 6, FLOOR_Y - 56, 12, 56, body);
    let front = |w: i32| if facing > 0 { cx + 6 } else { cx - 6 - w };
    match f.stance {
        Stance::Block => frame.fill_rect(front(4), FLOOR_Y - 52, 4, 44, SHIELD),
        Stance::Windup { kind, elapsed } => {
            // The low sweep is drawn larger: it cannot be blocked.
            let (y, w, h) = match kind {
                AttackKind::High => (FLOOR_Y - 52, 4 + 3 * elapsed as i32, 10),
                AttackKind::Low => (FLOOR_Y - 24, 8 + 6 * elapsed as i32, 24),
            };
            frame.fill_rect(front(w), y, w, h, LIMB);
        }
        _ => {}
    }
}

fn health_blocks(health: i32) -> i32 {
    (health + 24) / 25
}

fn render(world: &World, me: usize, frame: &mut Frame) {
    let w = frame.width() as i32;
    frame.fill(BACKDROP);
    frame.fill_rect(0, FLOOR_Y, w, frame.height() as i32 - FLOOR_Y, FLOOR);

    let mirror = |x: i32| if me == 0 { x } else { ARENA - x };
    let me_f = &world.fighters[me];
    let opp_f = &world.fighters[1 - me];
    let (sx, ox) = (mirror(me_f.x), mirror(opp_f.x));
    let centre2 = sx + ox;
    let screen = |x: i32| w / 2 + (2 * x - centre2) * PX_PER_SUB / 2;

    let left_wall = screen(0) - 10;
    if left_wall > 0 {
        frame.fill_rect(0, 0, left_wall, FLOOR_Y, WALL);
    }
    let right_wall = screen(ARENA) + 10;
    if right_wall < w {
        frame.fill_rect(right_wall, 0, w - right_wall, FLOOR_Y, WALL);
    }

    let facing = (ox - sx).signum();
    draw_fighter(frame, screen(ox), -facing, opp_f, false);
    draw_fighter(frame, screen(sx), facing, me_f, true);

    for k in 0..health_blocks(me_f.health) {
        frame.fill_rect(8 + k * 26, 8, 22, 12, SELF_BAR);
    }
    for k in 0..health_blocks(opp_f.health) {
        frame.fill_rect(w - 30 - k * 26, 8, 22, 12, OPP_BAR);
    }
}

fn swap_left_right(mask: ButtonMask) -> ButtonMask {
    let left = mask.pressed(Button::Left);
    let right = mask.pressed(Button::Right);
    let mut out = mask.without(Button::Left).without(Button::Right);
    if left {
        out = out.with(Button::Right);
    }
    if right {
        out = out.with(Button::Left);
    }
    out
}

/// The fighting-game core.
pub struct DuelCore {
    world: Option<World>,
}

impl DuelCore {
    pub fn new() -> Self {
        DuelCore { world: None }
    }
}

impl Default for DuelCore {
    fn default() -> Self {
        Self::new()
    }
}

impl GameCore for DuelCore {
    fn info(&self) -> &'static CoreInfo {
        &INFO
    }

    fn reset(&mut self, seed: u64, config: &CoreConfig) -> Result<()> {
        let difficulty =
            config_choice(config, "difficulty", &["medium", "very_hard"], "medium")?.parse()?;
        let mirror = config_bool(config, "mirror_start")?;
        let swap = config_bool(config, "swap_start")?;
        self.world = Some(World::new(seed, difficulty, mirror, swap));
        Ok(())
    }

    fn step(&mut self, actions: &[ButtonMask]) {
        self.world
            .as_mut()
            .expect("reset before step")
            .step(actions);
    }

    fn is_terminal(&self) -> bool {
        self.world.as_ref().is_some_and(World::terminal)
    }

    fn frame_number(&self) -> u64 {
        self.world.as_ref().map_or(0, |w| w.frame)
    }

    fn score(&self, player: usize) -> i64 {
        self.world
            .as_ref()
            .map_or(0, |w| w.fighters[player.min(1)].dealt)
    }

    fn state_vars(&self) -> StateVars {
        self.world
            .as_ref()
            .map(World::state_vars)
            .unwrap_or_default()
    }

    fn render(&self, player: usize, frame: &mut Frame) {
        match &self.world {
            Some(w) => render(w, player.min(1), frame),
            None => frame.fill(0),
        }
    }

    fn canonical_action(&self, mask: ButtonMask) -> ButtonMask {
        match intent(mask) {
            Intent::Attack(AttackKind::High) => Button::Y.mask(),
            Intent::Attack(AttackKind::Low) => Button::B.mask(),
            Intent::Block => Button::A.mask(),
            Intent::Move(-1) => Button::Left.mask(),
            Intent::Move(_) => Button::Right.mask(),
            Intent::Idle => ButtonMask::NONE,
        }
    }

    fn perspective_action(&self, player: usize, mask: ButtonMask) -> ButtonMask {
        if player == 1 {
            swap_left_right(mask)
        } else {
            mask
        }
    }

    fn scripted_action(&mut self, player: usize) -> Option<ButtonMask> {
        let world = self.world.as_mut()?;
        Some(world.scripted_input(player.min(1)))
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abi::{core_config, Core};

    fn world_at(x0: i32, x1: i32) -> World {
        let mut w = World::new(0, Difficulty::Medium, false, false);
        w.fighters[0].x = x0;
        w.fighters[1].x = x1;
        w
    }

    fn press(b: Button) -> ButtonMask {
        b.mask()
    }

    #[test]
    fn reset_gives_full_health() {
        let mut core = Core::new("duel").unwrap();
        let frame = core
            .reset(7, &core_config([("difficulty", "medium")]))
            .unwrap();
        assert_eq!((frame.width(), frame.height()), (256, 224));
        let vars = core.state_vars();
        assert_eq!(vars.get("health_p1"), Some(100));
        assert_eq!(vars.get("health_p2"), Some(100));
    }

    #[test]
    fn high_attack_lands_after_startup() {
        let mut w = world_at(30, 34);
        w.step(&[press(Button::Y), ButtonMask::NONE]);
        w.step(&[ButtonMask::NONE; 2]);
        assert_eq!(w.fighters[1].health, MAX_HEALTH);
        w.step(&[ButtonMask::NONE; 2]);
        assert_eq!(w.fighters[1].health, MAX_HEALTH - HIT_DAMAGE);
        assert_eq!(w.fighters[0].dealt, HIT_DAMAGE as i64);
        assert!(matches!(w.fighters[1].stance, Stance::Stunned { .. }));
    }

    #[test]
    fn block_stops_high_but_not_low() {
        let mut w = world_at(30, 33);
        for _ in 0..AttackKind::High.startup() {
            w.step(&[press(Button::Y), press(Button::A)]);
        }
        assert_eq!(w.fighters[1].health, MAX_HEALTH);

        let mut w = world_at(30, 33);
        for _ in 0..AttackKind::Low.startup() {
            w.step(&[press(Button::B), press(Button::A)]);
        }
        assert_eq!(w.fighters[1].health, MAX_HEALTH - HIT_DAMAGE);
    }

    #[test]
    fn high_interrupts_simultaneous_low() {
        let mut w = world_at(30, 33);
        for _ in 0..AttackKind::Low.startup() {
            w.step(&[press(Button::Y), press(Button::B)]);
        }
        assert_eq!(w.fighters[1].health, MAX_HEALTH - HIT_DAMAGE);
        assert_eq!(w.fighters[0].health, MAX_HEALTH);
    }

    #[test]
    fn out_of_range_attack_whiffs() {
        let mut w = world_at(10, 30);
        for _ in 0..10 {
            w.step(&[press(Button::Y), press(Button::B)]);
        }
        assert_eq!(w.fighters[0].health, MAX_HEALTH);
        assert_eq!(w.fighters[1].health, MAX_HEALTH);
    }

    #[test]
    fn fighters_cannot_pass_each_other() {
        let mut w = world_at(30, 32);
        for _ in 0..10 {
            w.step(&[press(Button::Right), press(Button::Left)]);
        }
        assert_eq!((w.fighters[0].x, w.fighters[1].x), (30, 32));
    }

    #[test]
    fn moving_apart_never_deals_damage() {
        let mut core = Core::new("duel").unwrap();
        core.reset(11, &CoreConfig::new()).unwrap();
        let vars = core.state_vars();
        let (left, right) = if vars.get("x_p1") < vars.get("x_p2") {
            (Button::Left, Button::Right)
        } else {
            (Button::Right, Button::Left)
        };
        while !core.is_terminal() {
            core.advance(&[left.mask(), right.mask()]).unwrap();
        }
        let vars = core.state_vars();
        assert_eq!(vars.get("round_frame"), Some(ROUND_FRAMES as i64));
        assert_eq!(vars.get("health_p1"), Some(100));
        assert_eq!(vars.get("health_p2"), Some(100));
    }

    #[test]
    fn starts_depend_on_seed() {
        let starts: std::collections::BTreeSet<_> = (0..20)
            .map(|s| {
                let w = World::new(s, Difficulty::Medium, false, false);
                (w.fighters[0].x, w.fighters[1].x)
            })
            .collect();
        assert!(starts.len() > 10);
    }

    #[test]
    fn mirrored_and_swapped_starts() {
        for seed in 0..20 {
            let w = World::new(seed, Difficulty::Medium, true, false);
            assert_eq!(w.fighters[0].x, ARENA - w.fighters[1].x);
            let plain = World::new(seed, Difficulty::Medium, false, false);
            let swapped = World::new(seed, Difficulty::Medium, false, true);
            assert_eq!(swapped.fighters[0].x, ARENA - plain.fighters[1].x);
            assert_eq!(swapped.fighters[1].x, ARENA - plain.fighters[0].x);
        }
    }

    #[test]
    fn perspectives_are_mirror_images() {
        // In a mirrored start both players see the same picture.
        let mut core = DuelCore::new();
        core.reset(4, &core_config([("mirror_start", "true")]))
            .unwrap();
        let mut a = Frame::new(256, 224);
        let mut b = a.clone();
        core.render(0, &mut a);
        core.render(1, &mut b);
        assert_eq!(a, b);
    }

    #[test]
    fn scripted_opponent_approaches_when_out_of_range() {
        for difficulty in [Difficulty::Medium, Difficulty::VeryHard] {
            let mut w = world_at(10, 40);
            w.difficulty = difficulty;
            let mut moves = 0;
            for _ in 0..50 {
                let m = w.scripted_input(1);
                assert!(m == ButtonMask::NONE || m == Button::Left.mask(), "{m}");
                moves += (m == Button::Left.mask()) as u32;
            }
            assert!(moves > 20);
        }
    }

    #[test]
    fn scripted_opponent_is_deterministic() {
        let mut a = World::new(3, Difficulty::VeryHard, false, false);
        let mut b = a.clone();
        for _ in 0..500 {
            let ma = a.scripted_input(1);
            let mb = b.scripted_input(1);
            assert_eq!(ma, mb);
            a.step(&[ButtonMask::NONE, ma]);
            b.step(&[ButtonMask::NONE, mb]);
        }
        assert_eq!(a, b);
    }

    #[test]
    fn scripted_action_unavailable_elsewhere() {
        let mut core = Core::new("racer").unwrap();
        core.reset(0, &CoreConfig::new()).unwrap();
        assert!(matches!(core.scripted_action(1), Err(Error::Usage(_))));
    }
}
