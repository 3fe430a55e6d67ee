//! Back-view racing game with rewards only at lap completion.
//!
//! The car holds B to accelerate (+1 cell/frame per frame up to the cap),
//! Y to brake, and steers with LEFT/RIGHT. Releasing the throttle lets speed
//! decay by one per frame. The road bends as the car advances; leaving the
//! road surface halves speed every frame. Guard rails keep the car within a
//! fixed distance of the road. Score changes only when a lap is completed,
//! so under competent driving thousands of frames separate two rewards.
//! The current speed is drawn as a bar at the top of the screen.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::{config_int, FRAME_RATE, NUM_BUTTONS, SCREEN_HEIGHT, SCREEN_WIDTH};
use crate::abi::{
    decode_payload, encode_payload, rgb, Button, ButtonMask, CoreConfig, CoreInfo, Frame, GameCore,
    StateVars,
};
use crate::error::{Error, Result};

pub const TRACK_LENGTH: i64 = 24_000;
pub const SPEED_CAP: i64 = 12;
pub const LAP_SCORE: i64 = 1000;
pub const DEFAULT_LAPS: i64 = 4;
/// Lanes either side of the road centre that still count as road.
pub const ROAD_HALF_WIDTH: i64 = 5;
/// Guard-rail distance from the road centre, in lanes.
pub const RAIL_DISTANCE: i64 = 24;

const SEGMENT: i64 = 160;
/// Cells of travel per lane of lateral drift on a bend of slope 1.
const CELLS_PER_LANE: i64 = 20;
const LAYOUTS: [[i8; 10]; 3] = [
    [0, 1, 1, 0, -1, -1, 0, -1, 1, 0],
    [0, 1, 0, 1, 0, -1, -1, 0, -1, 1],
    [1, 1, -1, -1, 0, 0, -1, 1, -1, 1],
];

static INFO: CoreInfo = CoreInfo {
    name: "racer",
    version: 1,
    num_players: 1,
    num_buttons: NUM_BUTTONS,
    frame_rate: FRAME_RATE,
    screen_width: SCREEN_WIDTH,
    screen_height: SCREEN_HEIGHT,
    config_keys: &["laps", "level"],
    used_buttons: &[Button::B, Button::Y, Button::Left, Button::Right],
};

/// Road centre (in lanes) at every track cell, per layout.
fn centerline(level: usize) -> &'static [i16] {
    static TABLES: OnceLock<Vec<Vec<i16>>> = OnceLock::new();
    let tables = TABLES.get_or_init(|| {
        LAYOUTS
            .iter()
            .map(|layout| {
                let mut drift = 0i64;
                (0..TRACK_LENGTH)
                    .map(|p| {
                        let c = drift.div_euclid(CELLS_PER_LANE) as i16;
                        drift += layout[((p / SEGMENT) % layout.len() as i64) as usize] as i64;
                        c
                    })
                    .collect()
            })
            .collect()
    });
    &tables[level]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct World {
    level: u8,
    laps_required: u8,
    frame: u64,
    position: i64,
    /// Absolute lateral position of the car, in lanes.
    lane: i64,
    speed: i64,
    laps: u8,
    score: i64,
}

impl World {
    fn new(level: u8, laps_required: u8) -> Self {
        World {
            level,
            laps_required,
            frame: 0,
            position: 0,
            lane: centerline(level as usize)[0] as i64,
            speed: 0,
            laps: 0,
            score: 0,
        }
    }

    fn center_at(&self, position: i64) -> i64 {
        centerline(self.level as usize)[position.rem_euclid(TRACK_LENGTH) as usize] as i64
    }

    fn offset(&self) -> i64 {
        self.lane - self.center_at(self.position)
    }

    fn step(&mut self, input: ButtonMask) {
        let left = input.pressed(Button::Left);
        let right = input.pressed(Button::Right);
        if left && !right {
            self.lane -= 1;
        } else if right && !left {
            self.lane += 1;
        }

        self.speed = if input.pressed(Button::Y) {
            (self.speed - 2).max(0)
        } else if input.pressed(Button::B) {
            (self.speed + 1).min(SPEED_CAP)
        } else {
            (self.speed - 1).max(0)
        };

        self.position += self.speed;
        if self.position >= TRACK_LENGTH {
            self.position -= TRACK_LENGTH;
            self.laps += 1;
            self.score += LAP_SCORE;
        }

        let center = self.center_at(self.position);
        self.lane = self
            .lane
            .clamp(center - RAIL_DISTANCE, center + RAIL_DISTANCE);
        if (self.lane - center).abs() > ROAD_HALF_WIDTH {
            self.speed /= 2;
        }
        self.frame += 1;
    }

    fn terminal(&self) -> bool {
        self.laps >= self.laps_required
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::CorruptState(format!("racer: {m}")));
        if self.level as usize >= LAYOUTS.len() || self.laps_required == 0 {
            return bad("bad configuration");
        }
        if !(0..TRACK_LENGTH).contains(&self.position) || !(0..=SPEED_CAP).contains(&self.speed) {
            return bad("car state out of range");
        }
        if !(-(1 << 20)..=1 << 20).contains(&self.lane)
            || self.offset().abs() > RAIL_DISTANCE
            || self.laps > self.laps_required
        {
            return bad("car state inconsistent");
        }
        if self.frame > 1 << 40 || self.score != self.laps as i64 * LAP_SCORE {
            return bad("counters inconsistent");
        }
        Ok(())
    }

    fn state_vars(&self) -> StateVars {
        let offset = self.offset();
        StateVars::new()
            .with("score", self.score)
            .with("speed", self.speed)
            .with("lap", self.laps as i64)
            .with("position", self.position)
            .with("lateral_offset", offset)
            .with("off_track", (offset.abs() > ROAD_HALF_WIDTH) as i64)
    }
}

const GRASS: u32 = rgb(30, 90, 30);
const ROAD: u32 = rgb(110, 110, 110);
const RAIL: u32 = rgb(230, 230, 230);
const STRIPE: u32 = rgb(235, 235, 235);
const CAR: u32 = rgb(220, 30, 30);
const HUD: u32 = rgb(0, 0, 0);
const SPEED_BAR: u32 = rgb(250, 220, 0);

const HUD_HEIGHT: usize = 32;
const PX_PER_LANE: i64 = 4;
/// Track cells of look-ahead per screen row.
const CELLS_PER_ROW: i64 = 2;

fn render(world: &World, frame: &mut Frame) {
    let w = frame.width() as i64;
    let h = frame.height();
    frame.fill_rect(0, 0, w as i32, HUD_HEIGHT as i32, HUD);
    frame.fill_rect(8, 10, (world.speed * 20) as i32, 12, SPEED_BAR);

    let mid = w / 2;
    for y in HUD_HEIGHT..h {
        let ahead = (h - 1 - y) as i64 * CELLS_PER_ROW;
        let p = world.position + ahead;
        let rel = (world.center_at(p) - world.lane) * PX_PER_LANE + mid;
        let row = frame.row_mut(y);
        row.fill(GRASS);
        let span = |a: i64, b: i64| (a.clamp(0, w) as usize, b.clamp(0, w) as usize);
        let (a, b) = span(
            rel - ROAD_HALF_WIDTH * PX_PER_LANE - 2,
            rel + ROAD_HALF_WIDTH * PX_PER_LANE + 2,
        );
        row[a..b].fill(ROAD);
        if (p.rem_euclid(TRACK_LENGTH) / 40) % 2 == 0 {
            let (a, b) = span(rel - 1, rel + 1);
            row[a..b].fill(STRIPE);
        }
        for side in [-1, 1] {
            let edge = rel + side * (RAIL_DISTANCE * PX_PER_LANE + 4);
            let (a, b) = span(edge - 2, edge + 2);
            row[a..b].fill(RAIL);
        }
    }
    frame.fill_rect(mid as i32 - 6, 196, 12, 20, CAR);
}

/// The racing core.
pub struct RacerCore {
    world: Option<World>,
}

impl RacerCore {
    pub fn new() -> Self {
        RacerCore { world: None }
    }
}

impl Default for RacerCore {
    fn default() -> Self {
        Self::new()
    }
}

impl GameCore for RacerCore {
    fn info(&self) -> &'static CoreInfo {
        &INFO
    }

    fn reset(&mut self, _seed: u64, config: &CoreConfig) -> Result<()> {
        let laps = config_int(config, "laps", 1..=9, DEFAULT_LAPS)? as u8;
        let level = config_int(config, "level", 1..=LAYOUTS.len() as i64, 1)? as u8 - 1;
        self.world = Some(World::new(level, laps));
        Ok(())
    }

    fn step(&mut self, actions: &[ButtonMask]) {
        self.world
            .as_mut()
            .expect("reset before step")
            .step(actions[0]);
    }

    fn is_terminal(&self) -> bool {
        self.world.as_ref().is_some_and(World::terminal)
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
        let mut out = if mask.pressed(Button::Y) {
            Button::Y.mask()
        } else if mask.pressed(Button::B) {
            Button::B.mask()
        } else {
            ButtonMask::NONE
        };
        let left = mask.pressed(Button::Left);
        let right = mask.pressed(Button::Right);
        if left && !right {
            out = out.with(Button::Left);
        } else if right && !left {
            out = out.with(Button::Right);
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

/// Steers toward the road centre a few cells ahead while holding the
/// throttle. Used by tests and as a scripted expert for reference scores.
pub fn expert_input(vars: &StateVars) -> ButtonMask {
    let offset = vars.get("lateral_offset").unwrap_or(0);
    let base = Button::B.mask();
    match offset.signum() {
        1 => base.with(Button::Left),
        -1 => base.with(Button::Right),
        _ => base,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abi::{core_config, Core};

    #[test]
    fn layouts_close_the_loop() {
        for layout in LAYOUTS {
            let per_pattern: i64 = layout.iter().map(|&s| s as i64).sum();
            assert_eq!(per_pattern, 0);
        }
        assert_eq!(TRACK_LENGTH % (SEGMENT * 10), 0);
    }

    #[test]
    fn accelerating_raises_speed_until_cap() {
        let mut core = Core::new("racer").unwrap();
        core.reset(0, &CoreConfig::new()).unwrap();
        let mut last = 0;
        for k in 1..=20 {
            let vars = core.step(&[Button::B.mask()]).unwrap().vars;
            let speed = vars.get("speed").unwrap();
            if k <= SPEED_CAP {
                assert_eq!(speed, last + 1, "step {k}");
            } else {
                assert_eq!(speed, SPEED_CAP);
            }
            last = speed;
        }
    }

    #[test]
    fn coasting_decays_and_off_track_halves() {
        let mut w = World::new(0, 4);
        w.speed = 10;
        w.step(ButtonMask::NONE);
        assert_eq!(w.speed, 9);
        let mut w = World::new(0, 4);
        w.speed = 10;
        w.lane = w.center_at(0) + ROAD_HALF_WIDTH + 3;
        w.step(Button::B.mask());
        assert_eq!(w.speed, 5);
    }

    #[test]
    fn rails_bound_the_car() {
        let mut w = World::new(0, 4);
        for _ in 0..200 {
            w.step(Button::Left.mask());
        }
        assert_eq!(w.offset(), -RAIL_DISTANCE);
    }

    #[test]
    fn rewards_only_on_lap_completion_and_gap_is_long() {
        let mut core = Core::new("racer").unwrap();
        core.reset(0, &core_config([("laps", "3")])).unwrap();
        let mut prev_score = 0;
        let mut last_reward_frame = 0u64;
        let mut gaps = Vec::new();
        while !core.is_terminal() {
            let input = expert_input(&core.state_vars());
            core.advance(&[input]).unwrap();
            let score = core.score(0);
            if score != prev_score {
                assert_eq!(score - prev_score, LAP_SCORE);
                gaps.push(core.frame_number() - last_reward_frame);
                last_reward_frame = core.frame_number();
                prev_score = score;
            }
            assert!(core.frame_number() < 100_000, "expert never finishes");
        }
        assert_eq!(gaps.len(), 3);
        for gap in gaps {
            assert!(gap as i64 >= TRACK_LENGTH / SPEED_CAP);
        }
    }

    #[test]
    fn canonical_classes() {
        let core = RacerCore::new();
        let mut classes: Vec<ButtonMask> = (0..1u16 << 12)
            .map(|b| core.canonical_action(ButtonMask::from_bits(b)))
            .collect();
        classes.sort();
        classes.dedup();
        assert_eq!(classes.len(), 9);
    }
}
