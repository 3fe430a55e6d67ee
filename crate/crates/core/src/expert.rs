//! Scripted experts for the built-in cores and the reference scores they
//! produce.
//!
//! Each expert plays through the ordinary [`Environment`] interface, at the
//! environment's frame skip, so its score is one an agent could reach. The
//! scroller expert searches ahead with savestates; the racer and duel experts
//! are rules over the state variables.

use crate::abi::{Button, ButtonMask};
use crate::cores::{duel, racer};
use crate::env::{EnvConfig, Environment};
use crate::error::{Error, Result};
use crate::harness::EvalProtocol;

/// Decisions searched ahead by the scroller expert.
pub const SCROLLER_HORIZON: u32 = 8;
/// Node budget per scroller decision; past it the search assumes survival.
const SCROLLER_NODE_BUDGET: u32 = 20_000;

/// Reference scores of the experts under each core's default configuration,
/// averaged over the default evaluation seeds. Regenerate with
/// `cargo run --release -p rle-core --example expert_reference`.
pub const DEFAULT_HUMAN_REFERENCE: [(&str, f64); 3] = [
    ("scroller", 10300.0),
    ("racer", 4000.0),
    ("duel", 90.33333333333333),
];

/// The shipped reference for `config` under `protocol`, if both use the
/// settings the reference was measured under.
pub fn default_human_reference(config: &EnvConfig, protocol: &EvalProtocol) -> Option<f64> {
    let stock = EnvConfig::new(config.core_name.clone(), config.seed);
    let same = config.core_config.is_empty()
        && protocol.episode_cap_frames.is_none()
        && config.frame_skip == stock.frame_skip
        && config.reward_mode == stock.reward_mode
        && config.reward_clip.is_none()
        && config.max_episode_frames.is_none()
        && config.exclusions.is_empty();
    if !same {
        return None;
    }
    DEFAULT_HUMAN_REFERENCE
        .iter()
        .find(|(name, _)| *name == config.core_name)
        .map(|&(_, v)| v)
}

fn index_of(env: &Environment, mask: ButtonMask) -> Result<usize> {
    let canonical = env.core().canonical_action(mask);
    env.action_set().index_of(canonical).ok_or_else(|| {
        Error::usage(format!(
            "expert action {mask:?} is excluded from the action set"
        ))
    })
}

fn var(env: &Environment, key: &str) -> Result<i64> {
    env.observe_vars()
        .get(key)
        .ok_or_else(|| Error::MissingStateVar(key.to_string()))
}

/// The expert's next action index for player 1.
pub fn expert_action(env: &mut Environment) -> Result<usize> {
    match env.config().core_name.as_str() {
        "scroller" => scroller_action(env),
        "racer" => {
            let mask = racer::expert_input(&env.observe_vars());
            index_of(env, mask)
        }
        "duel" => {
            let (me, them) = (var(env, "x_p1")?, var(env, "x_p2")?);
            let toward = if them > me {
                Button::Right
            } else {
                Button::Left
            };
            let mask = if (them - me).abs() > duel::AttackKind::Low.reach() as i64 {
                toward.mask()
            } else {
                Button::B.mask()
            };
            index_of(env, mask)
        }
        other => Err(Error::usage(format!("no expert for core `{other}`"))),
    }
}

fn scroller_candidates(env: &Environment) -> Vec<usize> {
    let r = Button::Right.mask();
    let l = Button::Left.mask();
    let a = Button::A.mask();
    [r, r | a, ButtonMask::NONE, l, a, l | a]
        .into_iter()
        .filter_map(|m| index_of(env, m).ok())
        .collect()
}

fn scroller_action(env: &mut Environment) -> Result<usize> {
    let candidates = scroller_candidates(env);
    let start = env.snapshot()?;
    for &c in &candidates {
        env.act(&[c])?;
        let mut budget = SCROLLER_NODE_BUDGET;
        let ok = survives(env, &candidates, SCROLLER_HORIZON, &mut budget)?;
        env.restore(&start)?;
        if ok {
            return Ok(c);
        }
    }
    Ok(candidates[0])
}

fn survives(
    env: &mut Environment,
    candidates: &[usize],
    depth: u32,
    budget: &mut u32,
) -> Result<bool> {
    if env.is_terminal() {
        return Ok(var(env, "dead")? == 0);
    }
    if depth == 0 || *budget == 0 {
        return Ok(true);
    }
    *budget -= 1;
    let here = env.snapshot()?;
    for &c in candidates {
        env.act(&[c])?;
        let ok = survives(env, candidates, depth - 1, budget)?;
        env.restore(&here)?;
        if ok {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Plays the expert from the current state to the end of the episode and
/// returns player 1's return.
pub fn expert_episode(env: &mut Environment) -> Result<i64> {
    if env.controlled_players() != 1 {
        return Err(Error::usage("experts play single-player environments"));
    }
    let mut total = 0;
    while !env.is_terminal() {
        let a = expert_action(env)?;
        total += env.act(&[a])?.rewards[0];
    }
    Ok(total)
}

/// Mean expert return over the protocol's evaluation seeds.
pub fn expert_reference(config: &EnvConfig, protocol: &EvalProtocol) -> Result<f64> {
    let mut config = config.clone();
    if let Some(cap) = protocol.episode_cap_frames {
        config.max_episode_frames = Some(cap);
    }
    let mut env = Environment::new(config)?;
    let mut sum = 0;
    for i in 0..protocol.eval_episodes as u64 {
        env.reset_seeded(protocol.eval_seed_base + i)?;
        sum += expert_episode(&mut env)?;
    }
    Ok(sum as f64 / protocol.eval_episodes as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scroller_expert_finishes_every_difficulty() {
        for d in ["easy", "medium", "hard"] {
            for seed in 0..5 {
                let mut env =
                    Environment::new(EnvConfig::new("scroller", seed).with_config("difficulty", d))
                        .unwrap();
                expert_episode(&mut env).unwrap();
                let vars = env.observe_vars();
                assert_eq!(vars.get("goal"), Some(1), "{d} seed {seed}: {vars:?}");
            }
        }
    }

    #[test]
    fn duel_expert_beats_medium() {
        let mut env = Environment::new(EnvConfig::new("duel", 0)).unwrap();
        assert!(expert_episode(&mut env).unwrap() > 0);
    }

    #[test]
    fn racer_expert_laps() {
        let mut env = Environment::new(EnvConfig::new("racer", 0)).unwrap();
        expert_episode(&mut env).unwrap();
        assert!(env.observe_vars().get("lap").unwrap() >= 3);
    }

    #[test]
    fn references_only_for_default_settings() {
        let p = EvalProtocol::default();
        assert!(default_human_reference(&EnvConfig::new("racer", 0), &p).is_some());
        let tuned = EnvConfig::new("racer", 0).with_config("laps", "2");
        assert_eq!(default_human_reference(&tuned, &p), None);
        assert_eq!(
            default_human_reference(&EnvConfig::new("nosuch", 0), &p),
            None
        );
        let capped = EvalProtocol {
            episode_cap_frames: Some(600),
            ..EvalProtocol::default()
        };
        assert_eq!(
            default_human_reference(&EnvConfig::new("racer", 0), &capped),
            None
        );
    }
}
