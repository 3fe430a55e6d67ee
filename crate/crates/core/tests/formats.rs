use std::fs;
use std::path::PathBuf;

use proptest::prelude::*;
use rle_core::agents::{model_to_string, parse_model, FeatureKey, FeatureSpec, QFunction};
use rle_core::bench::Baseline;
use rle_core::config::RunConfig;
use rle_core::{ButtonMask, Core, CoreState};

fn corpus(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut files: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert!(!files.is_empty(), "empty corpus {target}");
    files
        .into_iter()
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect()
}

#[test]
fn config_seeds_parse() {
    for (name, bytes) in corpus("run_config") {
        let text = String::from_utf8(bytes).unwrap();
        RunConfig::parse(&text, None).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn model_seeds_parse() {
    for (name, bytes) in corpus("q_model") {
        let text = String::from_utf8(bytes).unwrap();
        parse_model(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn baseline_seeds_parse() {
    for (name, bytes) in corpus("bench_baseline") {
        let text = String::from_utf8(bytes).unwrap();
        Baseline::parse(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

/// Valid savestates load and run; the rest are rejected without panicking.
#[test]
fn state_seeds_load_or_fail_cleanly() {
    let mut loaded = 0;
    for (name, bytes) in corpus("core_state") {
        let Ok(state) = CoreState::from_bytes(&bytes) else {
            continue;
        };
        let mut core = Core::new(state.core_name()).unwrap();
        if core.deserialize(&state).is_err() {
            continue;
        }
        loaded += 1;
        let players = core.info().num_players;
        for i in 0..64u16 {
            if core.is_terminal() {
                break;
            }
            let mask = ButtonMask::from_bits(i.wrapping_mul(0x9e37) & 0x0fff);
            core.step(&vec![mask; players])
                .unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }
    assert!(loaded >= 9);
}

fn table(spec: FeatureSpec, entries: &[(Vec<u8>, usize, f64)], actions: usize) -> QFunction {
    let mut q = QFunction::new(actions);
    for (cells, a, v) in entries {
        let cells: Vec<u8> = (0..spec.key_len())
            .map(|i| cells.get(i).copied().unwrap_or(0) % spec.levels as u8)
            .collect();
        q.set(&FeatureKey::new(cells), a % actions, *v);
    }
    q
}

proptest! {
    #[test]
    fn models_round_trip(
        entries in prop::collection::vec(
            (prop::collection::vec(any::<u8>(), 16), 0usize..8, any::<f64>().prop_filter("finite", |v| v.is_finite())),
            0..20,
        ),
        actions in 1usize..8,
    ) {
        let spec = FeatureSpec { grid: 4, levels: 8 };
        let q = table(spec, &entries, actions);
        let text = model_to_string(&q, &spec);
        let (back, back_spec) = parse_model(&text).unwrap();
        prop_assert_eq!(back_spec, spec);
        prop_assert_eq!(back.num_actions(), actions);
        prop_assert_eq!(back.num_states(), q.num_states());
        for (key, values) in q.iter() {
            for (a, v) in values.iter().enumerate() {
                prop_assert_eq!(back.value(key, a).to_bits(), v.to_bits());
                prop_assert_eq!(back.target_value(key, a).to_bits(), v.to_bits());
            }
        }
        prop_assert_eq!(model_to_string(&back, &back_spec), text);
    }

    #[test]
    fn arbitrary_text_never_panics(text in "\\PC{0,200}") {
        let _ = parse_model(&text);
        let _ = RunConfig::parse(&text, None);
        let _ = Baseline::parse(&text);
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..300)) {
        if let Ok(state) = CoreState::from_bytes(&bytes) {
            if let Ok(mut core) = Core::new(state.core_name()) {
                let _ = core.deserialize(&state);
            }
        }
    }
}
