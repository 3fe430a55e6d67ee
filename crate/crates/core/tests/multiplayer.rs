use proptest::prelude::*;
use rle_core::agents::{HyperParams, QAgent};
use rle_core::env::{EnvConfig, Environment};
use rle_core::harness::{normalize_means, tournament, Opponent, Outcome};

fn duel(flags: &[(&str, &str)]) -> EnvConfig {
    flags
        .iter()
        .fold(EnvConfig::new("duel", 0), |c, (k, v)| c.with_config(k, v))
}

fn agent(seed: u64) -> Opponent {
    // An untrained table: idle when greedy, random at ε_test, and random
    // everywhere with a large ε_test.
    let hp = HyperParams {
        epsilon_test: 0.6,
        ..HyperParams::default()
    };
    Opponent::frozen(&QAgent::new(6, hp, seed).unwrap())
}

#[test]
fn swapped_starts_mirror_the_tournament() {
    for (a, b) in [(Opponent::Random, agent(1)), (agent(2), Opponent::Random)] {
        let plain = tournament(&b, &a, &duel(&[]), 12, 70).unwrap();
        let swapped = tournament(&a, &b, &duel(&[("swap_start", "true")]), 12, 70).unwrap();
        assert_eq!(plain.wins_a, swapped.wins_b);
        assert_eq!(plain.wins_b, swapped.wins_a);
        for (p, s) in plain.traces.iter().zip(&swapped.traces) {
            assert_eq!((p.health_a, p.health_b), (s.health_b, s.health_a));
            assert_eq!(p.return_a, -s.return_a);
            assert_eq!(p.frames, s.frames);
        }
    }
}

#[test]
fn mirrored_self_play_is_always_a_draw() {
    for player in [Opponent::Random, agent(3)] {
        let r = tournament(&player, &player, &duel(&[("mirror_start", "true")]), 20, 0).unwrap();
        assert_eq!(r.draws, 20);
        assert!(r
            .traces
            .iter()
            .all(|t| t.return_a == 0 && t.outcome == Outcome::Draw));
    }
}

#[test]
fn random_players_split_decisive_rounds_evenly() {
    let r = tournament(&Opponent::Random, &Opponent::Random, &duel(&[]), 400, 9000).unwrap();
    let decisive = (r.wins_a + r.wins_b) as f64;
    assert!(decisive > 100.0);
    // Four standard deviations of a fair binomial.
    let spread = 4.0 * (decisive * 0.25).sqrt();
    assert!(
        ((r.wins_a as f64) - decisive / 2.0).abs() <= spread,
        "{} vs {}",
        r.wins_a,
        r.wins_b
    );
}

fn scripted_wins_against_random(difficulty: &str) -> u32 {
    let mut env = Environment::new(duel(&[("difficulty", difficulty)])).unwrap();
    let mut x = 0x2545_f491_4f6c_dd1du64;
    let mut wins = 0;
    for round in 0..100 {
        env.reset_seeded(round).unwrap();
        while !env.is_terminal() {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            env.act(&[(x % env.num_actions() as u64) as usize]).unwrap();
        }
        let vars = env.observe_vars();
        if vars.get("health_p2") > vars.get("health_p1") {
            wins += 1;
        }
    }
    wins
}

#[test]
fn very_hard_beats_random_more_often_than_medium() {
    let medium = scripted_wins_against_random("medium");
    let very_hard = scripted_wins_against_random("very_hard");
    assert!(very_hard > medium, "medium {medium}, very_hard {very_hard}");
}

proptest! {
    #[test]
    fn normalization_ignores_affine_rescaling(
        raw in -1e4f64..1e4,
        random in -1e4f64..1e4,
        gap in 1e-2f64..1e4,
        scale in 1e-3f64..1e3,
        shift in -1e4f64..1e4,
    ) {
        let human = random + gap;
        let a = normalize_means(raw, random, human).unwrap().normalized;
        let b = normalize_means(raw * scale + shift, random * scale + shift, human * scale + shift)
            .unwrap()
            .normalized;
        prop_assert!((a - b).abs() <= 1e-6 * (1.0 + a.abs()));
    }

    #[test]
    fn normalization_anchors_hold(random in -1e6f64..1e6, gap in 1e-3f64..1e6) {
        let human = random + gap;
        prop_assert_eq!(normalize_means(human, random, human).unwrap().normalized, 100.0);
        prop_assert_eq!(normalize_means(random, random, human).unwrap().normalized, 0.0);
    }
}
