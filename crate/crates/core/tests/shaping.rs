use proptest::prelude::*;
use rle_core::env::{EnvConfig, Environment};
use rle_core::wrappers::{shape_reward, ShapedEnv, ShapingSpec};
use rle_core::{Button, StateVars};

fn pick(seed: u64, i: usize, n: usize) -> usize {
    ((seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) >> 7).wrapping_add(i as u64 * 2_654_435_761)
        % n as u64) as usize
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn shaping_leaves_the_environment_alone(seed in 0u64..10_000, weight in -5.0f64..5.0, racer in any::<bool>()) {
        let (core, spec) = if racer {
            ("racer", ShapingSpec::add_speed(weight))
        } else {
            ("scroller", ShapingSpec::position_bonus(weight))
        };
        let mut plain = Environment::new(EnvConfig::new(core, seed)).unwrap();
        let mut shaped = ShapedEnv::new(Environment::new(EnvConfig::new(core, seed)).unwrap(), spec).unwrap();
        for i in 0..400 {
            if plain.is_terminal() {
                break;
            }
            let a = pick(seed, i, plain.num_actions());
            let info = plain.act(&[a]).unwrap();
            let s = shaped.act(&[a]).unwrap();
            prop_assert_eq!(&s.info, &info);
            prop_assert_eq!(shaped.inner().frame(), plain.frame());
            prop_assert_eq!(shaped.inner().observe_vars(), plain.observe_vars());
        }
    }

    #[test]
    fn position_bonus_telescopes(seed in 0u64..10_000, weight in 0.1f64..20.0) {
        let mut env = ShapedEnv::new(
            Environment::new(EnvConfig::new("scroller", seed)).unwrap(),
            ShapingSpec::position_bonus(weight),
        )
        .unwrap();
        let x0 = env.inner().observe_vars().get("x_position").unwrap();
        let (mut shaped, mut raw) = (0.0, 0i64);
        for i in 0..300 {
            if env.inner().is_terminal() {
                break;
            }
            let s = env.act(&[pick(seed, i, env.inner().num_actions())]).unwrap();
            shaped += s.shaped_reward;
            raw += s.info.rewards[0];
        }
        let x1 = env.inner().observe_vars().get("x_position").unwrap();
        let expected = raw as f64 + weight * (x1 - x0) as f64;
        prop_assert!((shaped - expected).abs() <= 1e-9 * (1.0 + expected.abs()));
    }

    #[test]
    fn speed_bonus_grows_with_speed(v1 in 0i64..400, v2 in 0i64..400, weight in 0.0f64..10.0, raw in -100.0f64..100.0) {
        let spec = ShapingSpec::add_speed(weight);
        let vars = |v| StateVars::new().with("speed", v);
        let r1 = shape_reward(raw, &vars(v1), &vars(0), &spec).unwrap();
        let r2 = shape_reward(raw, &vars(v2), &vars(0), &spec).unwrap();
        prop_assert!(r1 >= raw);
        if v1 <= v2 {
            prop_assert!(r1 <= r2);
        }
    }
}

#[test]
fn accelerating_earns_shaped_reward_before_any_lap() {
    let mut env = ShapedEnv::new(
        Environment::new(EnvConfig::new("racer", 0)).unwrap(),
        ShapingSpec::add_speed(1.0),
    )
    .unwrap();
    let gas = env.inner().action_set().index_of(Button::B.mask()).unwrap();
    let mut shaped = 0.0;
    for _ in 0..50 {
        let s = env.act(&[gas]).unwrap();
        assert_eq!(s.info.rewards[0], 0);
        shaped += s.shaped_reward;
    }
    assert!(shaped > 0.0);
}
