//! Observation preprocessing and reward shaping.

use serde::{Deserialize, Serialize};

use crate::abi::{channels, CoreConfig, Frame, StateVars};
use crate::env::{Environment, StepInfo};
use crate::error::{Error, Result};

pub const GRAY_SIZE: usize = 84;

/// An 84×84 8-bit luminance image.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct GrayFrame84 {
    pixels: Vec<u8>,
}

impl GrayFrame84 {
    pub fn filled(value: u8) -> Self {
        GrayFrame84 {
            pixels: vec![value; GRAY_SIZE * GRAY_SIZE],
        }
    }

    pub fn from_fn(f: impl Fn(usize, usize) -> u8) -> Self {
        let mut g = Self::filled(0);
        for y in 0..GRAY_SIZE {
            for x in 0..GRAY_SIZE {
                g.pixels[y * GRAY_SIZE + x] = f(x, y);
            }
        }
        g
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * GRAY_SIZE + x]
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }
}

impl std::fmt::Debug for GrayFrame84 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "GrayFrame84({} px)", self.pixels.len())
    }
}

/// Luminance `0.299 R + 0.587 G + 0.114 B`, rounded half up.
pub fn luminance(px: u32) -> u8 {
    let [r, g, b, _] = channels(px);
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}

/// Denominator of the bilinear weights: source coordinates of output pixel
/// centres are `((2d + 1) * src - 84) / 168`.
const WEIGHT_DEN: u32 = 2 * GRAY_SIZE as u32;

#[derive(Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    /// Weight of `hi`, in units of `1 / WEIGHT_DEN`.
    frac: u32,
}

/// Bilinear source taps with pixel centres aligned, edges clamped.
fn taps(src: usize) -> [Tap; GRAY_SIZE] {
    let den = WEIGHT_DEN as i64;
    std::array::from_fn(|d| {
        let num = (2 * d as i64 + 1) * src as i64 - GRAY_SIZE as i64;
        if num <= 0 {
            return Tap {
                lo: 0,
                hi: 0,
                frac: 0,
            };
        }
        let lo = (num / den) as usize;
        if lo >= src - 1 {
            return Tap {
                lo: src - 1,
                hi: src - 1,
                frac: 0,
            };
        }
        Tap {
            lo,
            hi: lo + 1,
            frac: (num % den) as u32,
        }
    })
}

/// Grayscale conversion followed by a bilinear resize to 84×84. The
/// interpolation is carried out exactly in integers and rounded half up.
pub fn preprocess(frame: &Frame) -> GrayFrame84 {
    let xs = taps(frame.width());
    let ys = taps(frame.height());
    let width = frame.width();
    let pixels = frame.pixels();
    // Horizontally interpolated luminance of one source row, scaled by
    // WEIGHT_DEN.
    let row_lerp = |y: usize, out: &mut [u32; GRAY_SIZE]| {
        let row = &pixels[y * width..(y + 1) * width];
        // Screens are mostly flat colour, so remember the last conversion.
        let mut memo = (row[0], luminance(row[0]) as u32);
        let mut lum = |px: u32| {
            if px != memo.0 {
                memo = (px, luminance(px) as u32);
            }
            memo.1
        };
        for (o, t) in out.iter_mut().zip(&xs) {
            let lo = lum(row[t.lo]);
            let hi = lum(row[t.hi]);
            *o = lo * (WEIGHT_DEN - t.frac) + hi * t.frac;
        }
    };
    let den2 = WEIGHT_DEN * WEIGHT_DEN;
    let mut top = [0; GRAY_SIZE];
    let mut bottom = [0; GRAY_SIZE];
    let mut out = GrayFrame84::filled(0);
    for (dy, ty) in ys.iter().enumerate() {
        row_lerp(ty.lo, &mut top);
        row_lerp(ty.hi, &mut bottom);
        let dst = &mut out.pixels[dy * GRAY_SIZE..(dy + 1) * GRAY_SIZE];
        for ((d, t), b) in dst.iter_mut().zip(&top).zip(&bottom) {
            let v = t * (WEIGHT_DEN - ty.frac) + b * ty.frac;
            *d = ((v + den2 / 2) / den2) as u8;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapingMode {
    #[default]
    None,
    AddSpeed,
    PositionBonus,
}

impl std::str::FromStr for ShapingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ShapingMode::None),
            "add_speed" => Ok(ShapingMode::AddSpeed),
            "position_bonus" => Ok(ShapingMode::PositionBonus),
            other => Err(Error::InvalidConfigValue {
                key: "shaping.mode".into(),
                value: other.into(),
                allowed: "none, add_speed, position_bonus".into(),
            }),
        }
    }
}

/// Default per-cell bonus for [`ShapingMode::PositionBonus`].
pub const DEFAULT_POSITION_BONUS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapingSpec {
    pub mode: ShapingMode,
    pub weight: f64,
    /// Position bonus on the absolute position instead of its change.
    pub absolute: bool,
}

impl ShapingSpec {
    pub fn none() -> Self {
        ShapingSpec {
            mode: ShapingMode::None,
            weight: 0.0,
            absolute: false,
        }
    }

    pub fn add_speed(weight: f64) -> Self {
        ShapingSpec {
            mode: ShapingMode::AddSpeed,
            weight,
            absolute: false,
        }
    }

    pub fn position_bonus(weight: f64) -> Self {
        ShapingSpec {
            mode: ShapingMode::PositionBonus,
            weight,
            absolute: false,
        }
    }

    /// The mode with its default weight.
    pub fn with_default_weight(mode: ShapingMode) -> Self {
        match mode {
            ShapingMode::None => Self::none(),
            ShapingMode::AddSpeed => Self::add_speed(1.0),
            ShapingMode::PositionBonus => Self::position_bonus(DEFAULT_POSITION_BONUS),
        }
    }

    pub fn required_var(&self) -> Option<&'static str> {
        match self.mode {
            ShapingMode::None => None,
            ShapingMode::AddSpeed => Some("speed"),
            ShapingMode::PositionBonus => Some("x_position"),
        }
    }

    /// Checks the weight and that `vars` carries what the mode reads.
    pub fn validate(&self, vars: &StateVars) -> Result<()> {
        if !self.weight.is_finite() {
            return Err(Error::Config(format!(
                "shaping weight must be finite, got {}",
                self.weight
            )));
        }
        match self.required_var() {
            Some(key) if vars.get(key).is_none() => Err(Error::MissingStateVar(key.into())),
            _ => Ok(()),
        }
    }
}

impl Default for ShapingSpec {
    fn default() -> Self {
        Self::none()
    }
}

fn var(vars: &StateVars, key: &str) -> Result<f64> {
    vars.get(key)
        .map(|v| v as f64)
        .ok_or_else(|| Error::MissingStateVar(key.into()))
}

/// The raw reward plus the shaping term of `spec`.
pub fn shape_reward(
    raw_reward: f64,
    vars: &StateVars,
    prev_vars: &StateVars,
    spec: &ShapingSpec,
) -> Result<f64> {
    Ok(match spec.mode {
        ShapingMode::None => raw_reward,
        ShapingMode::AddSpeed => raw_reward + spec.weight * var(vars, "speed")?,
        ShapingMode::PositionBonus if spec.absolute => {
            raw_reward + spec.weight * var(vars, "x_position")?
        }
        ShapingMode::PositionBonus => {
            let dx = var(vars, "x_position")? - var(prev_vars, "x_position")?;
            raw_reward + spec.weight * dx
        }
    })
}

/// Player 1's step outcome with its shaped reward.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapedStep {
    pub info: StepInfo,
    pub shaped_reward: f64,
}

/// An environment whose player-1 reward is reshaped. Frames, state
/// variables and episode boundaries are those of the inner environment.
#[derive(Debug)]
pub struct ShapedEnv {
    env: Environment,
    spec: ShapingSpec,
    prev_vars: StateVars,
}

impl ShapedEnv {
    pub fn new(env: Environment, spec: ShapingSpec) -> Result<Self> {
        let prev_vars = env.observe_vars();
        spec.validate(&prev_vars)?;
        Ok(ShapedEnv {
            env,
            spec,
            prev_vars,
        })
    }

    pub fn inner(&self) -> &Environment {
        &self.env
    }

    pub fn into_inner(self) -> Environment {
        self.env
    }

    pub fn spec(&self) -> &ShapingSpec {
        &self.spec
    }

    pub fn reset_seeded(&mut self, seed: u64) -> Result<&Frame> {
        self.env.reset_seeded(seed)?;
        self.prev_vars = self.env.observe_vars();
        Ok(self.env.frame())
    }

    pub fn reset_with(&mut self, seed: u64, core_config: &CoreConfig) -> Result<&Frame> {
        self.env.reset_with(seed, core_config)?;
        self.prev_vars = self.env.observe_vars();
        Ok(self.env.frame())
    }

    pub fn act(&mut self, action_indices: &[usize]) -> Result<ShapedStep> {
        let info = self.env.act(action_indices)?;
        let shaped_reward = if self.spec.mode == ShapingMode::None {
            info.rewards[0] as f64
        } else {
            let vars = self.env.observe_vars();
            let r = shape_reward(info.rewards[0] as f64, &vars, &self.prev_vars, &self.spec)?;
            self.prev_vars = vars;
            r
        };
        Ok(ShapedStep {
            info,
            shaped_reward,
        })
    }
}
