//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_UNMET` are reported like the others but do not
//! fail the run; README.md explains why each one is not met. Criterion
//! names given after `--` run only those checks.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rle_core::agents::{q_update, FeatureKey, HyperParams, QFunction, Transition};
use rle_core::bench::{self, Baseline};
use rle_core::env::{EnvConfig, Environment};
use rle_core::experiments::{self, ExperimentName, ExperimentOptions};
use rle_core::harness::{evaluate, normalize_means, Actor, EvalProtocol};
use rle_core::{ButtonMask, Frame};

const KNOWN_UNMET: &[&str] = &["generalization"];

const BENCH_SECONDS: f64 = 3.0;
const BENCH_INSTANCES: usize = 4;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

type Check = fn() -> Outcome;

fn main() {
    // Throughput goes first, before anything else has warmed or loaded the
    // machine.
    let checks: [(&str, Check); 9] = [
        ("throughput", throughput),
        ("determinism", determinism),
        ("eq1_oracle", eq1_oracle),
        ("normalization", normalization),
        ("episode_cap", episode_cap),
        ("racer_shaping", racer_shaping),
        ("scroller_shaping", scroller_shaping),
        ("forgetting", forgetting),
        ("generalization", generalization),
    ];
    // Names given on the command line select a subset.
    let only: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut unexpected = 0;
    for (name, check) in checks {
        if !only.is_empty() && !only.iter().any(|o| o == name) {
            continue;
        }
        let start = Instant::now();
        let o = check();
        let verdict = if o.passed { "PASS" } else { "FAIL" };
        let known = if !o.passed && KNOWN_UNMET.contains(&name) {
            " (known, see README)"
        } else {
            ""
        };
        println!(
            "{verdict} {name}: {} [{:.1}s]{known}",
            o.detail,
            start.elapsed().as_secs_f64()
        );
        if !o.passed && known.is_empty() {
            unexpected += 1;
        }
    }
    if unexpected > 0 {
        std::process::exit(1);
    }
}

type Trace = Vec<(Frame, Vec<i64>, bool)>;

/// Steps through `actions`, which start at step `offset` of the rollout.
/// Episodes are restarted with the step index as seed, since the reset
/// counter is not part of a snapshot.
fn roll(env: &mut Environment, actions: &[usize], offset: usize) -> Trace {
    actions
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            if env.is_terminal() {
                env.reset_seeded((offset + i) as u64).unwrap();
            }
            let picks: Vec<usize> = (0..env.controlled_players())
                .map(|p| (a + p) % env.num_actions())
                .collect();
            let step = env.step(&picks).unwrap();
            (step.frame, step.rewards, step.terminal)
        })
        .collect()
}

fn determinism() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    for core in ["scroller", "racer", "duel"] {
        let cfg = EnvConfig::new(core, 2024);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut env = Environment::new(cfg.clone()).unwrap();
        let actions: Vec<usize> = (0..1000)
            .map(|_| rng.gen_range(0..env.num_actions()))
            .collect();
        let first = roll(&mut env, &actions, 0);
        let replay = roll(&mut Environment::new(cfg.clone()).unwrap(), &actions, 0);
        if first != replay {
            failures.push(format!("{core} replay"));
        }
        let mut env = Environment::new(cfg).unwrap();
        let (head, tail) = actions.split_at(500);
        roll(&mut env, head, 0);
        let snap = env.snapshot().unwrap();
        let rest = roll(&mut env, tail, head.len());
        env.restore(&snap).unwrap();
        if roll(&mut env, tail, head.len()) != rest || first[500..] != rest[..] {
            failures.push(format!("{core} save/restore"));
        }
    }
    let took = start.elapsed();
    let fast = took < Duration::from_secs(10);
    outcome(
        failures.is_empty() && fast,
        if failures.is_empty() {
            format!(
                "3 cores x 1000 steps identical under replay and restore in {:.2}s",
                took.as_secs_f64()
            )
        } else {
            format!("diverged: {}", failures.join(", "))
        },
    )
}

fn eq1_oracle() -> Outcome {
    let hp = HyperParams {
        alpha: 0.25,
        gamma: 0.95,
        target_sync_period: 10,
        ..HyperParams::default()
    };
    let (states, actions) = (5usize, 3usize);
    let key = |s: usize| FeatureKey::new(vec![s as u8]);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut q = QFunction::new(actions);
    let mut theta = vec![[0.0f64; 3]; states];
    let mut target = theta.clone();
    let mut worst = 0.0f64;
    for n in 1..=100u64 {
        let (s, a, s2) = (
            rng.gen_range(0..states),
            rng.gen_range(0..actions),
            rng.gen_range(0..states),
        );
        let r: f64 = rng.gen_range(-10.0..10.0);
        let terminal = rng.gen_bool(0.15);
        let best = target[s2].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let y = if terminal { r } else { r + hp.gamma * best };
        theta[s][a] += hp.alpha * (y - theta[s][a]);
        if n % hp.target_sync_period == 0 {
            target = theta.clone();
        }
        let t = Transition {
            state: key(s),
            action: a,
            reward: r,
            next_state: key(s2),
            terminal,
        };
        q_update(&mut q, &t, &hp).unwrap();
        for (st, row) in theta.iter().enumerate() {
            for (ac, v) in row.iter().enumerate() {
                worst = worst.max((q.value(&key(st), ac) - v).abs());
            }
        }
    }
    outcome(
        worst <= 1e-12,
        format!("100 transitions, max deviation {worst:e}"),
    )
}

fn normalization() -> Outcome {
    let protocol = EvalProtocol {
        eval_episodes: 5,
        ..EvalProtocol::default()
    };
    let mut cases = vec![(0.0, 1.0), (-3.5, 17.25), (1e-9, 1e9), (-1e6, -1e-3)];
    for core in ["scroller", "racer", "duel"] {
        let cfg = EnvConfig::new(core, 0);
        let random = evaluate(Actor::Random, &cfg, &protocol, None).unwrap().mean;
        let human =
            rle_core::expert::default_human_reference(&cfg, &EvalProtocol::default()).unwrap();
        cases.push((random, human));
    }
    let exact = cases.iter().all(|&(random, human)| {
        normalize_means(human, random, human).unwrap().normalized == 100.0
            && normalize_means(random, random, human).unwrap().normalized == 0.0
    });
    outcome(
        exact,
        format!(
            "{} (random, human) pairs map to exactly 0 and 100",
            cases.len()
        ),
    )
}

fn episode_cap() -> Outcome {
    let mut problems = Vec::new();
    let mut episodes = 0;
    // Policies that never end an episode on their own: idle, walking away
    // from the goal, braking.
    let policies = [
        ("racer", ButtonMask::NONE),
        ("racer", rle_core::Button::Y.mask()),
        ("scroller", rle_core::Button::Left.mask()),
        ("scroller", ButtonMask::NONE),
    ];
    for (core, mask) in policies {
        for (cap, skip) in [
            (None, 4),
            (Some(1), 4),
            (Some(101), 7),
            (Some(1000), 1),
            (Some(999), 4),
        ] {
            let mut cfg = EnvConfig::new(core, 11);
            cfg.max_episode_frames = cap;
            cfg.frame_skip = skip;
            let mut env = Environment::new(cfg).unwrap();
            let a = env
                .action_set()
                .index_of(env.core().canonical_action(mask))
                .unwrap();
            let limit = env.max_episode_frames();
            let (mut acts, mut frames, mut reward) = (0u64, 0u64, 0i64);
            loop {
                let info = env.act(&[a]).unwrap();
                acts += 1;
                frames += info.frames_run as u64;
                reward += info.rewards[0];
                if info.frames_elapsed_total != frames {
                    problems.push(format!("{core}: frame total drifted"));
                }
                if info.terminal {
                    break;
                }
            }
            episodes += 1;
            let core_ended = env.core().is_terminal();
            if !core_ended && (frames != limit || acts != limit.div_ceil(skip as u64)) {
                problems.push(format!(
                    "{core} cap {limit} skip {skip}: {frames} frames in {acts} actions"
                ));
            }
            if core_ended && frames > limit {
                problems.push(format!("{core}: ran past the cap"));
            }
            if reward != env.core().score(0) {
                problems.push(format!(
                    "{core}: rewards {reward} != score {}",
                    env.core().score(0)
                ));
            }
            if env.act(&[a]).is_ok() {
                problems.push(format!("{core}: stepped past the end"));
            }
        }
    }
    outcome(
        problems.is_empty(),
        if problems.is_empty() {
            format!("{episodes} never-terminating episodes ended exactly at the cap with exact accounting")
        } else {
            problems.join("; ")
        },
    )
}

fn run_experiment(name: ExperimentName, limit: Option<Duration>) -> Outcome {
    let start = Instant::now();
    let report = match experiments::run(name, &ExperimentOptions::defaults(name), &mut |_| {}) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("error: {e}")),
    };
    let took = start.elapsed();
    let in_time = limit.is_none_or(|l| took <= l);
    let runs: Vec<String> = report
        .runs
        .iter()
        .map(|r| serde_json::to_string(r).unwrap())
        .collect();
    println!("  {}: {}", name.as_str(), runs.join(" "));
    outcome(
        report.verdict && in_time,
        format!(
            "{}/{} seeds hold (need {}){}",
            report.passes,
            report.seeds.len(),
            report.required,
            if in_time {
                String::new()
            } else {
                format!(", over time: {:.0}s", took.as_secs_f64())
            }
        ),
    )
}

fn racer_shaping() -> Outcome {
    run_experiment(
        ExperimentName::RewardShapingRacer,
        Some(Duration::from_secs(600)),
    )
}

fn scroller_shaping() -> Outcome {
    run_experiment(ExperimentName::RewardShapingScroller, None)
}

fn forgetting() -> Outcome {
    run_experiment(ExperimentName::MarlForgetting, None)
}

fn generalization() -> Outcome {
    run_experiment(ExperimentName::MarlAlternating, None)
}

fn throughput() -> Outcome {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("testdata/bench_baseline.json");
    let baseline = match std::fs::read_to_string(&path)
        .map_err(|e| e.to_string())
        .and_then(|t| Baseline::parse(&t).map_err(|e| e.to_string()))
    {
        Ok(b) => b,
        Err(e) => return outcome(false, format!("baseline {}: {e}", path.display())),
    };
    let out_dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let mut lines = Vec::new();
    let mut ok = true;
    for core in ["scroller", "racer", "duel"] {
        let report = bench::run(core, BENCH_SECONDS, BENCH_INSTANCES, 1).unwrap();
        let file = out_dir.join(format!("bench_{core}.json"));
        std::fs::write(&file, serde_json::to_string_pretty(&report).unwrap()).unwrap();
        let gate = baseline.check(&report);
        ok &= gate == Some(true);
        lines.push(format!(
            "{core} {:.0} fps (baseline {:.0}, aggregate x{} {:.0})",
            report.single.fps,
            baseline.single_fps.get(core).copied().unwrap_or(f64::NAN),
            BENCH_INSTANCES,
            report.aggregate_fps
        ));
    }
    outcome(
        ok,
        format!("{}; reports in {}", lines.join(", "), out_dir.display()),
    )
}
