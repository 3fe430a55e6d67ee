//! The plugin contract between the environment layer and game cores.
//!
//! A game core is a deterministic, single-threaded state machine that
//! advances one emulated frame per [`GameCore::step`]. Cores never validate
//! their own preconditions; [`Core`] wraps a boxed core and enforces the
//! contract (reset before step, no step after terminal, mask widths,
//! savestate compatibility).

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{BitOr, BitOrAssign};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Widest controller the framework supports.
pub const MAX_BUTTONS: u8 = 16;

/// SNES-style controller buttons, numbered in libretro joypad order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
#[repr(u8)]
pub enum Button {
    B = 0,
    Y = 1,
    Select = 2,
    Start = 3,
    Up = 4,
    Down = 5,
    Left = 6,
    Right = 7,
    A = 8,
    X = 9,
    L = 10,
    R = 11,
}

impl Button {
    pub const ALL: [Button; 12] = [
        Button::B,
        Button::Y,
        Button::Select,
        Button::Start,
        Button::Up,
        Button::Down,
        Button::Left,
        Button::Right,
        Button::A,
        Button::X,
        Button::L,
        Button::R,
    ];

    pub const fn index(self) -> u8 {
        self as u8
    }

    pub const fn mask(self) -> ButtonMask {
        ButtonMask(1 << self as u8)
    }

    pub fn name(self) -> &'static str {
        match self {
            Button::B => "B",
            Button::Y => "Y",
            Button::Select => "SELECT",
            Button::Start => "START",
            Button::Up => "UP",
            Button::Down => "DOWN",
            Button::Left => "LEFT",
            Button::Right => "RIGHT",
            Button::A => "A",
            Button::X => "X",
            Button::L => "L",
            Button::R => "R",
        }
    }

    pub fn from_name(name: &str) -> Option<Button> {
        Button::ALL
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(name))
    }
}

/// Controller state with one bit per pressed button.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ButtonMask(u16);

impl ButtonMask {
    pub const NONE: ButtonMask = ButtonMask(0);

    pub const fn from_bits(bits: u16) -> Self {
        ButtonMask(bits)
    }

    pub const fn bits(self) -> u16 {
        self.0
    }

    pub const fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub const fn pressed(self, button: Button) -> bool {
        self.0 & (1 << button as u8) != 0
    }

    pub const fn with(self, button: Button) -> Self {
        ButtonMask(self.0 | (1 << button as u8))
    }

    pub const fn without(self, button: Button) -> Self {
        ButtonMask(self.0 & !(1 << button as u8))
    }

    pub const fn intersect(self, other: ButtonMask) -> Self {
        ButtonMask(self.0 & other.0)
    }

    /// True when no bit at or above `num_buttons` is set.
    pub const fn is_valid_for(self, num_buttons: u8) -> bool {
        num_buttons >= MAX_BUTTONS || self.0 >> num_buttons == 0
    }

    pub fn from_buttons<I: IntoIterator<Item = Button>>(buttons: I) -> Self {
        buttons.into_iter().fold(ButtonMask::NONE, |m, b| m.with(b))
    }

    pub fn buttons(self) -> impl Iterator<Item = Button> {
        Button::ALL.into_iter().filter(move |b| self.pressed(*b))
    }
}

impl BitOr for ButtonMask {
    type Output = ButtonMask;

    fn bitor(self, rhs: ButtonMask) -> ButtonMask {
        ButtonMask(self.0 | rhs.0)
    }
}

impl BitOrAssign for ButtonMask {
    fn bitor_assign(&mut self, rhs: ButtonMask) {
        self.0 |= rhs.0;
    }
}

impl From<Button> for ButtonMask {
    fn from(b: Button) -> Self {
        b.mask()
    }
}

impl fmt::Display for ButtonMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("NOOP");
        }
        let mut first = true;
        for b in self.buttons() {
            if !first {
                f.write_str("|")?;
            }
            f.write_str(b.name())?;
            first = false;
        }
        let unknown = self.0 >> Button::ALL.len();
        if unknown != 0 {
            if !first {
                f.write_str("|")?;
            }
            write!(f, "0x{:x}", unknown << Button::ALL.len())?;
        }
        Ok(())
    }
}

/// Packs an RGBA colour as `0xRRGGBBAA`.
pub const fn rgba(r: u8, g: u8, b: u8, a: u8) -> u32 {
    (r as u32) << 24 | (g as u32) << 16 | (b as u32) << 8 | a as u32
}

pub const fn rgb(r: u8, g: u8, b: u8) -> u32 {
    rgba(r, g, b, 0xff)
}

#[inline]
pub const fn channels(px: u32) -> [u8; 4] {
    px.to_be_bytes()
}

/// A screen buffer of packed 32-bit RGBA pixels in row-major order.
#[derive(Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<u32>,
}

impl Frame {
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "frame dimensions must be positive");
        Frame {
            width,
            height,
            pixels: vec![0; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, color: u32) -> Self {
        let mut f = Frame::new(width, height);
        f.pixels.fill(color);
        f
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<u32>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::usage(format!(
                "{} pixels do not form a {width}x{height} frame",
                pixels.len()
            )));
        }
        Ok(Frame {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u32] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.pixels[y * self.width + x]
    }

    pub fn row_mut(&mut self, y: usize) -> &mut [u32] {
        let start = y * self.width;
        &mut self.pixels[start..start + self.width]
    }

    pub fn fill(&mut self, color: u32) {
        self.pixels.fill(color);
    }

    /// Fills the intersection of the rectangle with the screen.
    pub fn fill_rect(&mut self, x: i32, y: i32, w: i32, h: i32, color: u32) {
        let x0 = x.max(0) as usize;
        let y0 = y.max(0) as usize;
        let x1 = (x.saturating_add(w)).clamp(0, self.width as i32) as usize;
        let y1 = (y.saturating_add(h)).clamp(0, self.height as i32) as usize;
        if x0 >= x1 || y0 >= y1 {
            return;
        }
        for row in y0..y1 {
            let start = row * self.width;
            self.pixels[start + x0..start + x1].fill(color);
        }
    }

    pub fn fill_row_span(&mut self, y: usize, x0: i32, x1: i32, color: u32) {
        if y >= self.height {
            return;
        }
        let a = x0.clamp(0, self.width as i32) as usize;
        let b = x1.clamp(0, self.width as i32) as usize;
        if a < b {
            let start = y * self.width;
            self.pixels[start + a..start + b].fill(color);
        }
    }

    /// RGBA bytes, `height × width × 4`.
    pub fn to_rgba_bytes(&self) -> Vec<u8> {
        self.pixels.iter().flat_map(|p| p.to_be_bytes()).collect()
    }
}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Frame")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

/// Static description of a core.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreInfo {
    pub name: &'static str,
    /// Bumped whenever the savestate layout or dynamics change.
    pub version: u32,
    pub num_players: usize,
    pub num_buttons: u8,
    /// Nominal emulated frames per second.
    pub frame_rate: u32,
    pub screen_width: usize,
    pub screen_height: usize,
    pub config_keys: &'static [&'static str],
    /// Buttons the core reacts to at all.
    pub used_buttons: &'static [Button],
}

pub type CoreConfig = BTreeMap<String, String>;

/// Builds a [`CoreConfig`] from string pairs.
pub fn core_config<'a, I>(pairs: I) -> CoreConfig
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    pairs
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// Structured non-visual state exported by a core, the framework's
/// equivalent of reading console RAM.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct StateVars(BTreeMap<&'static str, i64>);

impl StateVars {
    pub fn new() -> Self {
        StateVars::default()
    }

    pub fn with(mut self, key: &'static str, value: i64) -> Self {
        self.0.insert(key, value);
        self
    }

    pub fn insert(&mut self, key: &'static str, value: i64) {
        self.0.insert(key, value);
    }

    pub fn get(&self, key: &str) -> Option<i64> {
        self.0.get(key).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, i64)> + '_ {
        self.0.iter().map(|(k, v)| (*k, *v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

const STATE_MAGIC: &[u8; 4] = b"RLES";
const STATE_FORMAT: u8 = 1;
/// Upper bound on accepted savestate payloads.
pub const MAX_STATE_PAYLOAD: usize = 1 << 20;

/// A serialized core snapshot tagged with the producing core and version.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoreState {
    core: String,
    version: u32,
    payload: Vec<u8>,
}

impl CoreState {
    pub fn core_name(&self) -> &str {
        &self.core
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(14 + self.core.len() + self.payload.len());
        out.extend_from_slice(STATE_MAGIC);
        out.push(STATE_FORMAT);
        out.push(self.core.len() as u8);
        out.extend_from_slice(self.core.as_bytes());
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Parses the container. The payload itself is only checked by the
    /// core that loads it.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: &str| Error::CorruptState(m.to_string());
        let mut rest = bytes;
        let mut take = |n: usize| -> Result<&[u8]> {
            if rest.len() < n {
                return Err(corrupt("truncated"));
            }
            let (head, tail) = rest.split_at(n);
            rest = tail;
            Ok(head)
        };
        if take(4)? != STATE_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let format = take(1)?[0];
        if format != STATE_FORMAT {
            return Err(corrupt(&format!("unsupported container format {format}")));
        }
        let name_len = take(1)?[0] as usize;
        let core = std::str::from_utf8(take(name_len)?)
            .map_err(|_| corrupt("core name is not utf-8"))?
            .to_string();
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        let len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        if len > MAX_STATE_PAYLOAD {
            return Err(corrupt("payload too large"));
        }
        let payload = take(len)?.to_vec();
        if !rest.is_empty() {
            return Err(corrupt("trailing bytes"));
        }
        Ok(CoreState {
            core,
            version,
            payload,
        })
    }
}

/// Deterministic, serializable random stream used inside cores.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoreRng(ChaCha8Rng);

impl CoreRng {
    pub fn seed_from(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        CoreRng(rng)
    }

    pub fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    /// Uniform integer in `0..n` (n > 0).
    pub fn below(&mut self, n: u32) -> u32 {
        debug_assert!(n > 0);
        ((self.0.next_u32() as u64 * n as u64) >> 32) as u32
    }

    /// Bernoulli draw with probability `p_permille / 1000`.
    pub fn chance(&mut self, p_permille: u32) -> bool {
        self.below(1000) < p_permille
    }
}

#[derive(Serialize, Deserialize)]
struct RngRepr {
    seed: [u8; 32],
    stream: u64,
    word_pos: u128,
}

impl Serialize for CoreRng {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RngRepr {
            seed: self.0.get_seed(),
            stream: self.0.get_stream(),
            word_pos: self.0.get_word_pos(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CoreRng {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = RngRepr::deserialize(d)?;
        let mut rng = ChaCha8Rng::from_seed(repr.seed);
        rng.set_stream(repr.stream);
        rng.set_word_pos(repr.word_pos);
        Ok(CoreRng(rng))
    }
}

fn payload_options() -> impl bincode::Options {
    use bincode::Options;
    bincode::DefaultOptions::new()
        .with_fixint_encoding()
        .with_little_endian()
        .with_limit(MAX_STATE_PAYLOAD as u64)
        .reject_trailing_bytes()
}

/// Encodes a core's world struct as a savestate payload.
pub fn encode_payload<T: Serialize>(world: &T) -> Vec<u8> {
    use bincode::Options;
    payload_options()
        .serialize(world)
        .expect("world state always serializes")
}

/// Decodes a payload produced by [`encode_payload`].
pub fn decode_payload<T: for<'de> Deserialize<'de>>(bytes: &[u8]) -> Result<T> {
    use bincode::Options;
    payload_options()
        .deserialize(bytes)
        .map_err(|e| Error::CorruptState(e.to_string()))
}

/// What every game core implements. Preconditions are enforced by [`Core`].
pub trait GameCore: Send {
    fn info(&self) -> &'static CoreInfo;

    /// Starts a new episode. Configuration keys have already been checked
    /// against [`CoreInfo::config_keys`]; values have not.
    fn reset(&mut self, seed: u64, config: &CoreConfig) -> Result<()>;

    /// Advances exactly one frame. `actions` has one valid mask per player.
    fn step(&mut self, actions: &[ButtonMask]);

    fn is_terminal(&self) -> bool;

    /// Frames stepped since the last reset.
    fn frame_number(&self) -> u64;

    fn score(&self, player: usize) -> i64;

    fn state_vars(&self) -> StateVars;

    /// Draws the screen as seen by `player`. Single-perspective cores
    /// ignore the player.
    fn render(&self, player: usize, frame: &mut Frame);

    /// Maps a mask to a representative of its behaviour class: two masks
    /// are behaviour-distinct iff their canonical forms differ.
    fn canonical_action(&self, mask: ButtonMask) -> ButtonMask;

    /// Translates a mask expressed in `player`'s rendered perspective into
    /// absolute controller input.
    fn perspective_action(&self, _player: usize, mask: ButtonMask) -> ButtonMask {
        mask
    }

    /// The built-in opponent's input for `player`, if the core has one.
    fn scripted_action(&mut self, _player: usize) -> Option<ButtonMask> {
        None
    }

    fn save(&self) -> Vec<u8>;

    /// Restores from a payload written by `save`, rejecting payloads whose
    /// contents violate the world's invariants.
    fn load(&mut self, payload: &[u8]) -> Result<()>;
}

/// Result of one contract-checked frame.
#[derive(Debug, Clone)]
pub struct CoreStep {
    pub frame: Frame,
    pub vars: StateVars,
    pub terminal: bool,
}

/// A game core together with the contract checks around it.
pub struct Core {
    inner: Box<dyn GameCore>,
    info: &'static CoreInfo,
    ready: bool,
}

impl Core {
    /// Instantiates a registered core by name.
    pub fn new(name: &str) -> Result<Self> {
        let inner = crate::cores::create(name)?;
        Ok(Core::from_boxed(inner))
    }

    pub fn from_boxed(inner: Box<dyn GameCore>) -> Self {
        let info = inner.info();
        Core {
            inner,
            info,
            ready: false,
        }
    }

    pub fn info(&self) -> &'static CoreInfo {
        self.info
    }

    /// Checks every configuration key without touching the core's state.
    pub fn check_config_keys(&self, config: &CoreConfig) -> Result<()> {
        for key in config.keys() {
            if !self.info.config_keys.contains(&key.as_str()) {
                return Err(Error::UnknownConfigKey {
                    core: self.info.name.to_string(),
                    key: key.clone(),
                });
            }
        }
        Ok(())
    }

    /// Resets without rendering.
    pub fn reset_silent(&mut self, seed: u64, config: &CoreConfig) -> Result<()> {
        self.check_config_keys(config)?;
        self.ready = false;
        self.inner.reset(seed, config)?;
        self.ready = true;
        Ok(())
    }

    pub fn reset(&mut self, seed: u64, config: &CoreConfig) -> Result<Frame> {
        self.reset_silent(seed, config)?;
        Ok(self.render())
    }

    fn check_step(&self, actions: &[ButtonMask]) -> Result<()> {
        if !self.ready {
            return Err(Error::usage("core stepped before reset"));
        }
        if self.inner.is_terminal() {
            return Err(Error::usage("core stepped after terminal without reset"));
        }
        if actions.len() != self.info.num_players {
            return Err(Error::usage(format!(
                "expected {} action(s), got {}",
                self.info.num_players,
                actions.len()
            )));
        }
        if let Some(bad) = actions
            .iter()
            .find(|m| !m.is_valid_for(self.info.num_buttons))
        {
            return Err(Error::usage(format!(
                "mask {:#06x} sets buttons beyond the core's {}",
                bad.bits(),
                self.info.num_buttons
            )));
        }
        Ok(())
    }

    /// Advances one frame without rendering; returns the terminal flag.
    pub fn advance(&mut self, actions: &[ButtonMask]) -> Result<bool> {
        self.check_step(actions)?;
        self.inner.step(actions);
        Ok(self.inner.is_terminal())
    }

    pub fn step(&mut self, actions: &[ButtonMask]) -> Result<CoreStep> {
        let terminal = self.advance(actions)?;
        Ok(CoreStep {
            frame: self.render(),
            vars: self.inner.state_vars(),
            terminal,
        })
    }

    pub fn render(&self) -> Frame {
        let mut frame = Frame::new(self.info.screen_width, self.info.screen_height);
        self.inner.render(0, &mut frame);
        frame
    }

    /// Renders `player`'s view into an existing buffer of the core's size.
    pub fn render_into(&self, player: usize, frame: &mut Frame) {
        assert_eq!(
            (frame.width(), frame.height()),
            (self.info.screen_width, self.info.screen_height)
        );
        self.inner.render(player, frame);
    }

    pub fn state_vars(&self) -> StateVars {
        self.inner.state_vars()
    }

    pub fn score(&self, player: usize) -> i64 {
        self.inner.score(player)
    }

    pub fn is_terminal(&self) -> bool {
        self.inner.is_terminal()
    }

    pub fn is_ready(&self) -> bool {
        self.ready
    }

    pub fn frame_number(&self) -> u64 {
        self.inner.frame_number()
    }

    pub fn canonical_action(&self, mask: ButtonMask) -> ButtonMask {
        self.inner.canonical_action(mask)
    }

    pub fn perspective_action(&self, player: usize, mask: ButtonMask) -> ButtonMask {
        self.inner.perspective_action(player, mask)
    }

    /// The built-in AI's next input for `player`. Cores without one report
    /// a usage error.
    pub fn scripted_action(&mut self, player: usize) -> Result<ButtonMask> {
        if !self.ready {
            return Err(Error::usage("scripted opponent queried before reset"));
        }
        self.inner.scripted_action(player).ok_or_else(|| {
            Error::usage(format!(
                "core `{}` has no scripted opponent",
                self.info.name
            ))
        })
    }

    pub fn serialize(&self) -> Result<CoreState> {
        if !self.ready {
            return Err(Error::usage("cannot serialize a core that was never reset"));
        }
        Ok(CoreState {
            core: self.info.name.to_string(),
            version: self.info.version,
            payload: self.inner.save(),
        })
    }

    pub fn deserialize(&mut self, state: &CoreState) -> Result<()> {
        if state.core != self.info.name || state.version != self.info.version {
            return Err(Error::IncompatibleState {
                expected: format!("{} v{}", self.info.name, self.info.version),
                found: format!("{} v{}", state.core, state.version),
            });
        }
        self.inner.load(&state.payload)?;
        self.ready = true;
        Ok(())
    }
}

impl fmt::Debug for Core {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Core")
            .field("name", &self.info.name)
            .field("ready", &self.ready)
            .finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_width_check() {
        assert!(ButtonMask::from_bits(0x0fff).is_valid_for(12));
        assert!(!ButtonMask::from_bits(0x1000).is_valid_for(12));
        assert!(ButtonMask::from_bits(0xffff).is_valid_for(16));
    }

    #[test]
    fn mask_display() {
        let m = Button::Right.mask() | Button::A.mask();
        assert_eq!(m.to_string(), "RIGHT|A");
        assert_eq!(ButtonMask::NONE.to_string(), "NOOP");
    }

    #[test]
    fn rgba_round_trip() {
        assert_eq!(channels(rgba(1, 2, 3, 4)), [1, 2, 3, 4]);
    }

    #[test]
    fn fill_rect_clips() {
        let mut f = Frame::new(4, 3);
        f.fill_rect(-2, 1, 4, 10, 7);
        assert_eq!(f.pixels(), &[0, 0, 0, 0, 7, 7, 0, 0, 7, 7, 0, 0]);
    }

    #[test]
    fn frame_rejects_bad_length() {
        assert!(Frame::from_pixels(2, 2, vec![0; 3]).is_err());
        assert!(Frame::from_pixels(0, 2, vec![]).is_err());
    }

    #[test]
    fn state_container_rejects_garbage() {
        assert!(CoreState::from_bytes(b"").is_err());
        assert!(CoreState::from_bytes(b"XXXX\x01\x00").is_err());
        let s = CoreState {
            core: "racer".into(),
            version: 3,
            payload: vec![1, 2, 3],
        };
        let mut bytes = s.to_bytes();
        assert_eq!(CoreState::from_bytes(&bytes).unwrap(), s);
        bytes.push(0);
        assert!(CoreState::from_bytes(&bytes).is_err());
    }

    #[test]
    fn rng_state_survives_serde() {
        let mut rng = CoreRng::seed_from(9, 2);
        rng.next_u32();
        let bytes = encode_payload(&rng);
        let mut back: CoreRng = decode_payload(&bytes).unwrap();
        assert_eq!(back.next_u32(), rng.next_u32());
    }
}
