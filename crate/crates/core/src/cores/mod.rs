//! Built-in game cores and the static registry that names them.

pub mod duel;
pub mod racer;
pub mod scroller;

use crate::abi::{CoreConfig, GameCore};
use crate::error::{Error, Result};

pub use duel::{Difficulty, DuelCore};
pub use racer::RacerCore;
pub use scroller::ScrollerCore;

/// Screen size shared by every built-in core (the SNES low-resolution mode).
pub const SCREEN_WIDTH: usize = 256;
pub const SCREEN_HEIGHT: usize = 224;
pub const FRAME_RATE: u32 = 60;
/// Every built-in core exposes the full SNES pad.
pub const NUM_BUTTONS: u8 = 12;

type Constructor = fn() -> Box<dyn GameCore>;

static REGISTRY: &[(&str, Constructor)] = &[
    ("scroller", || Box::new(ScrollerCore::new())),
    ("racer", || Box::new(RacerCore::new())),
    ("duel", || Box::new(DuelCore::new())),
];

/// Names of all registered cores, in registration order.
pub fn registered() -> impl Iterator<Item = &'static str> {
    REGISTRY.iter().map(|(name, _)| *name)
}

pub fn create(name: &str) -> Result<Box<dyn GameCore>> {
    REGISTRY
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, ctor)| ctor())
        .ok_or_else(|| Error::UnknownCore(name.to_string()))
}

/// Reads an optional enumerated config value.
pub(crate) fn config_choice<'a>(
    config: &CoreConfig,
    key: &str,
    allowed: &[&'a str],
    default: &'a str,
) -> Result<&'a str> {
    match config.get(key) {
        None => Ok(default),
        Some(v) => allowed
            .iter()
            .copied()
            .find(|a| *a == v.as_str())
            .ok_or_else(|| Error::InvalidConfigValue {
                key: key.to_string(),
                value: v.clone(),
                allowed: allowed.join(", "),
            }),
    }
}

/// Reads an optional integer config value within an inclusive range.
pub(crate) fn config_int(
    config: &CoreConfig,
    key: &str,
    range: std::ops::RangeInclusive<i64>,
    default: i64,
) -> Result<i64> {
    match config.get(key) {
        None => Ok(default),
        Some(v) => v
            .trim()
            .parse::<i64>()
            .ok()
            .filter(|n| range.contains(n))
            .ok_or_else(|| Error::InvalidConfigValue {
                key: key.to_string(),
                value: v.clone(),
                allowed: format!("integers {}..={}", range.start(), range.end()),
            }),
    }
}

pub(crate) fn config_bool(config: &CoreConfig, key: &str) -> Result<bool> {
    Ok(config_choice(config, key, &["true", "false"], "false")? == "true")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_lookup() {
        assert_eq!(
            registered().collect::<Vec<_>>(),
            ["scroller", "racer", "duel"]
        );
        for name in registered() {
            assert_eq!(create(name).unwrap().info().name, name);
        }
        assert!(matches!(create("nosuch"), Err(Error::UnknownCore(_))));
    }
}
