//! `rle`: train, evaluate and benchmark agents on the built-in cores.
//!
//! Exit status is 0 on success, 1 for configuration errors (including bad
//! command lines) and 2 for failures while running.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde::Serialize;

use rle_core::agents::{model_to_string, parse_model, QAgent};
use rle_core::bench::{self, Baseline, BenchReport};
use rle_core::config::RunConfig;
use rle_core::env::Environment;
use rle_core::experiments::{self, ExperimentName, ExperimentOptions, SeedRun};
use rle_core::expert::default_human_reference;
use rle_core::harness::{
    evaluate, normalize, tournament, train, Actor, EpisodeStats, NormalizedScore, Opponent,
    TrainingLog,
};
use rle_core::{Error, Result};

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(
    name = "rle",
    version,
    about = "Reinforcement-learning runs on the built-in game cores"
)]
struct Cli {
    /// Run file (TOML). Without one, every setting takes its default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the run file's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "rle-out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a Q-learning agent and write its model and training log.
    Train,
    /// Evaluate a saved model against the random baseline.
    Eval {
        #[arg(long)]
        model: PathBuf,
    },
    /// Play two saved models against each other on a two-player core.
    Tournament {
        #[arg(long)]
        model_a: PathBuf,
        #[arg(long)]
        model_b: PathBuf,
    },
    /// Run one of the packaged experiments.
    Experiment {
        /// reward_shaping_racer, reward_shaping_scroller, marl_forgetting or
        /// marl_alternating.
        name: String,
    },
    /// Measure frames per second under random play.
    Bench {
        /// Defaults to the run file's core.
        #[arg(long)]
        core: Option<String>,
        /// Defaults to the run file's `bench.seconds`.
        #[arg(long)]
        seconds: Option<f64>,
        /// Fail if throughput falls below 80% of this baseline file.
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rle: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let text = match &cli.config {
        Some(path) => fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?,
        None => String::new(),
    };
    RunConfig::parse(&text, cli.seed)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let out = Output::create(&cli.out_dir)?;
    let started = Instant::now();
    let command = match &cli.command {
        Command::Train => cmd_train(&cfg, &out)?,
        Command::Eval { model } => cmd_eval(&cfg, model, &out)?,
        Command::Tournament { model_a, model_b } => cmd_tournament(&cfg, model_a, model_b, &out)?,
        Command::Experiment { name } => cmd_experiment(&cfg, name, &out)?,
        Command::Bench {
            core,
            seconds,
            baseline,
        } => cmd_bench(&cfg, core.as_deref(), *seconds, baseline.as_deref(), &out)?,
    };
    out.json(
        "metadata.json",
        &Metadata {
            schema_version: SCHEMA_VERSION,
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed: cfg.seed,
            finished_unix_seconds: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            elapsed_seconds: started.elapsed().as_secs_f64(),
        },
    )
}

#[derive(Serialize)]
struct Metadata {
    schema_version: u32,
    command: &'static str,
    version: &'static str,
    seed: u64,
    finished_unix_seconds: u64,
    elapsed_seconds: f64,
}

struct Output {
    dir: PathBuf,
}

impl Output {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)
            .map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Output {
            dir: dir.to_path_buf(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn text(&self, name: &str, text: &str) -> Result<()> {
        fs::write(self.path(name), text).map_err(Error::from)
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
        text.push('\n');
        self.text(name, &text)
    }

    fn jsonl<T: Serialize>(&self, name: &str, rows: impl IntoIterator<Item = T>) -> Result<()> {
        let mut f = std::io::BufWriter::new(fs::File::create(self.path(name))?);
        for row in rows {
            serde_json::to_writer(&mut f, &row).map_err(|e| Error::Io(e.to_string()))?;
            f.write_all(b"\n")?;
        }
        f.flush()?;
        Ok(())
    }

    fn csv<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<()> {
        let mut w =
            csv::Writer::from_path(self.path(name)).map_err(|e| Error::Io(e.to_string()))?;
        for row in rows {
            w.serialize(row).map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One row of the results table.
#[derive(Serialize)]
struct ResultRow {
    agent: String,
    game: String,
    mean_score: f64,
    random_mean: f64,
    human_reference: Option<f64>,
    normalized: Option<f64>,
}

#[derive(Serialize)]
struct EvalReport {
    schema_version: u32,
    game: String,
    agent: EpisodeStats,
    random: EpisodeStats,
    normalized: Option<NormalizedScore>,
}

fn evaluation_report(cfg: &RunConfig, agent: &QAgent) -> Result<EvalReport> {
    let stats = evaluate(Actor::Agent(agent), &cfg.env, &cfg.protocol, None)?;
    let random = evaluate(Actor::Random, &cfg.env, &cfg.protocol, None)?;
    let human = cfg
        .protocol
        .human_reference
        .or_else(|| default_human_reference(&cfg.env, &cfg.protocol));
    let normalized = human.map(|h| normalize(&stats, &random, h)).transpose()?;
    Ok(EvalReport {
        schema_version: SCHEMA_VERSION,
        game: cfg.env.core_name.clone(),
        agent: stats,
        random,
        normalized,
    })
}

fn write_results(out: &Output, report: &EvalReport) -> Result<()> {
    let human = report.normalized.map(|n| n.human_reference);
    let row = |agent: &str, mean: f64, normalized: Option<f64>| ResultRow {
        agent: agent.into(),
        game: report.game.clone(),
        mean_score: mean,
        random_mean: report.random.mean,
        human_reference: human,
        normalized,
    };
    out.csv(
        "results.csv",
        &[
            row(
                "q_learning",
                report.agent.mean,
                report.normalized.map(|n| n.normalized),
            ),
            row("random", report.random.mean, human.map(|_| 0.0)),
        ],
    )?;
    out.json("results.json", report)
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum LogLine<'a> {
    Epoch(&'a rle_core::harness::EpochRecord),
    Episode(&'a rle_core::harness::EpisodeRecord),
}

fn write_log(out: &Output, name: &str, log: &TrainingLog) -> Result<()> {
    let epochs = log.epochs.iter().map(LogLine::Epoch);
    let episodes = log.episodes.iter().map(LogLine::Episode);
    out.jsonl(name, episodes.chain(epochs))
}

fn cmd_train(cfg: &RunConfig, out: &Output) -> Result<&'static str> {
    let n = Environment::new(cfg.env.clone())?.num_actions();
    let mut agent = QAgent::new(n, cfg.hyper, cfg.seed)?;
    let log = train(&mut agent, &cfg.env, cfg.shaping, &cfg.protocol)?;
    out.text("model.txt", &model_to_string(&agent.q, &agent.hp.features))?;
    write_log(out, "training_log.jsonl", &log)?;
    out.csv("epochs.csv", &log.epochs)?;
    write_results(out, &evaluation_report(cfg, &agent)?)?;
    Ok("train")
}

fn load_agent(cfg: &RunConfig, path: &Path) -> Result<QAgent> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read model {}: {e}", path.display())))?;
    let (q, features) = parse_model(&text)?;
    let n = Environment::new(cfg.env.clone())?.num_actions();
    if q.num_actions() != n {
        return Err(Error::Config(format!(
            "model {} has {} actions, `{}` has {n}",
            path.display(),
            q.num_actions(),
            cfg.env.core_name
        )));
    }
    let hp = rle_core::agents::HyperParams {
        features,
        ..cfg.hyper
    };
    QAgent::from_parts(q, hp, cfg.seed)
}

fn cmd_eval(cfg: &RunConfig, model: &Path, out: &Output) -> Result<&'static str> {
    let agent = load_agent(cfg, model)?;
    write_results(out, &evaluation_report(cfg, &agent)?)?;
    Ok("eval")
}

#[derive(Serialize)]
struct TournamentReport<'a> {
    schema_version: u32,
    game: &'a str,
    model_a: String,
    model_b: String,
    seed_base: u64,
    result: &'a rle_core::harness::TournamentResult,
}

fn cmd_tournament(cfg: &RunConfig, a: &Path, b: &Path, out: &Output) -> Result<&'static str> {
    let agent_a = Opponent::frozen(&load_agent(cfg, a)?);
    let agent_b = Opponent::frozen(&load_agent(cfg, b)?);
    let result = tournament(
        &agent_a,
        &agent_b,
        &cfg.env,
        cfg.tournament_rounds,
        cfg.tournament_seed_base,
    )?;
    out.csv("rounds.csv", &result.traces)?;
    out.json(
        "tournament.json",
        &TournamentReport {
            schema_version: SCHEMA_VERSION,
            game: &cfg.env.core_name,
            model_a: a.display().to_string(),
            model_b: b.display().to_string(),
            seed_base: cfg.tournament_seed_base,
            result: &result,
        },
    )?;
    Ok("tournament")
}

fn cmd_experiment(cfg: &RunConfig, name: &str, out: &Output) -> Result<&'static str> {
    let name: ExperimentName = name.parse()?;
    let mut opts = ExperimentOptions::defaults(name);
    opts.hyper = cfg.hyper;
    opts.eval_episodes = cfg.protocol.eval_episodes;
    if let Some(seeds) = &cfg.experiment_seeds {
        opts.seeds = seeds.clone();
    }
    if let Some(budget) = cfg.experiment_budget {
        opts.budget = budget;
    }
    let report = experiments::run(name, &opts, &mut |line| eprintln!("{line}"))?;
    let file = format!("{}.json", name.as_str());
    out.json(&file, &report)?;
    let csv_name = format!("{}.csv", name.as_str());
    let runs = &report.runs;
    match name {
        ExperimentName::RewardShapingRacer => out.csv(
            &csv_name,
            &pick(runs, |r| match r {
                SeedRun::Racer(r) => Some(r.clone()),
                _ => None,
            }),
        )?,
        ExperimentName::RewardShapingScroller => out.csv(
            &csv_name,
            &pick(runs, |r| match r {
                SeedRun::Scroller(r) => Some(r.clone()),
                _ => None,
            }),
        )?,
        ExperimentName::MarlForgetting => out.csv(
            &csv_name,
            &pick(runs, |r| match r {
                SeedRun::Forgetting(r) => Some(flatten_forgetting(r)),
                _ => None,
            }),
        )?,
        ExperimentName::MarlAlternating => out.csv(
            &csv_name,
            &pick(runs, |r| match r {
                SeedRun::Alternating(r) => Some(r.clone()),
                _ => None,
            }),
        )?,
    }
    eprintln!(
        "{}: claim {} on {}/{} seeds (needs {})",
        name.as_str(),
        if report.verdict {
            "holds"
        } else {
            "does not hold"
        },
        report.passes,
        report.runs.len(),
        report.required
    );
    Ok("experiment")
}

#[derive(Serialize)]
struct ForgettingRow {
    seed: u64,
    before: f64,
    after: f64,
    relative_drop: f64,
    tournament_before: String,
    tournament_after: String,
    passed: bool,
}

fn flatten_forgetting(r: &experiments::ForgettingRun) -> ForgettingRow {
    let wld = |t: &experiments::TournamentSummary| format!("{}-{}-{}", t.wins_a, t.wins_b, t.draws);
    ForgettingRow {
        seed: r.seed,
        before: r.before,
        after: r.after,
        relative_drop: r.relative_drop,
        tournament_before: wld(&r.tournament_before),
        tournament_after: wld(&r.tournament_after),
        passed: r.passed,
    }
}

fn pick<T>(runs: &[SeedRun], f: impl Fn(&SeedRun) -> Option<T>) -> Vec<T> {
    runs.iter().filter_map(f).collect()
}

fn cmd_bench(
    cfg: &RunConfig,
    core: Option<&str>,
    seconds: Option<f64>,
    baseline: Option<&Path>,
    out: &Output,
) -> Result<&'static str> {
    let core = core.unwrap_or(&cfg.env.core_name);
    let seconds = seconds.unwrap_or(cfg.bench_seconds);
    let report: BenchReport = bench::run(core, seconds, cfg.bench_instances, cfg.seed)?;
    println!(
        "{core}: {:.0} fps single, {:.0} fps aggregate over {} instances",
        report.single.fps, report.aggregate_fps, report.instances
    );
    out.json("bench.json", &report)?;
    if let Some(path) = baseline {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read baseline {}: {e}", path.display())))?;
        let base = Baseline::parse(&text)?;
        match base.check(&report) {
            Some(true) => println!("{core}: within 80% of baseline"),
            Some(false) => {
                return Err(Error::Numeric(format!(
                    "{core}: {:.0} fps is below 80% of the baseline {:.0} fps",
                    report.single.fps, base.single_fps[core]
                )))
            }
            None => return Err(Error::Config(format!("baseline has no entry for `{core}`"))),
        }
    }
    Ok("bench")
}
