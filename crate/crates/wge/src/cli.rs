//! The `wge` command line.

use std::fs::OpenOptions;
use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use wge_core::demo::{oracle_demonstrate, Demonstration};
use wge_core::dsl::{eval_step, parse_step, DEFAULT_STEP_CAP};
use wge_core::env::tasks::TASK_NAMES;
use wge_core::env::{success_rate, Env, FirstLeafPolicy, OraclePolicy, Policy, RandomPolicy};
use wge_core::lattice::induce;
use wge_core::trainer::{build_workflow_policy, evaluate_neural, Algo, TrainConfig};

use crate::bridge::{Bridge, BridgeConfig};
use crate::checkpoint::Checkpoint;
use crate::format::{action_value, demo_to_json, goal_from_json, lattices_to_json, snapshot_from_json};
use crate::run::{load_config, train_to_dir};
use crate::store::{atomic_write, load_demos, load_dir, read_to_string, DemoStore};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "wge", version, about = "Workflow-guided exploration on simulated web tasks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List registered tasks.
    Tasks,
    /// Success rate of a built-in policy.
    Rate {
        #[arg(long)]
        task: String,
        #[arg(long, value_enum, default_value_t = BuiltinPolicy::Oracle)]
        policy: BuiltinPolicy,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write oracle demonstrations to a demo store.
    Demos {
        #[arg(long)]
        task: String,
        #[arg(long, default_value_t = 10)]
        count: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Insert one background click per demonstration.
        #[arg(long)]
        noise: bool,
        #[arg(long, default_value = "data/demos")]
        out: PathBuf,
    },
    /// Workflow-language tools.
    Dsl {
        #[command(subcommand)]
        command: DslCommand,
    },
    /// Induce workflow lattices from a directory of demonstrations.
    Induce {
        #[arg(long)]
        demos: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_STEP_CAP)]
        cap: usize,
    },
    /// Run the workflow policy and append its successes to a buffer file.
    Explore {
        #[arg(long)]
        task: String,
        #[arg(long)]
        demos: PathBuf,
        #[arg(long)]
        episodes: usize,
        #[arg(long)]
        buffer: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a policy and write metrics, checkpoint and report.
    Train {
        #[arg(long, value_parser = parse_algo)]
        algo: Algo,
        #[arg(long)]
        task: String,
        #[arg(long)]
        demos: PathBuf,
        /// TOML or JSON training config; unspecified fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint greedily.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value_t = Split::Validation)]
        split: Split,
    },
    /// Serve the recorder bridge.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8765")]
        addr: SocketAddr,
        #[arg(long, default_value = "data/demos")]
        demos: PathBuf,
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum DslCommand {
    /// Print the action set of a step on a snapshot.
    Eval {
        #[arg(long)]
        expr: String,
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        goal: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BuiltinPolicy {
    Oracle,
    Random,
    FirstLeaf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Validation,
    Test,
}

fn parse_algo(s: &str) -> Result<Algo, String> {
    Algo::parse(s).ok_or_else(|| format!("unknown algorithm {s:?}; expected wge, bc_rl or workflow"))
}

fn print(out: &mut dyn Write, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("json value");
    writeln!(out, "{text}").map_err(Error::io("<stdout>"))
}

/// Runs one command, writing its JSON output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Tasks => {
            let list: Vec<Value> =
                TASK_NAMES.iter().map(|n| json!({ "name": n, "horizon": Env::new(n).expect("registered").horizon() })).collect();
            print(out, &Value::Array(list))
        }
        Command::Rate { task, policy, n, seed } => {
            let env = Env::new(&task)?;
            if n == 0 {
                return Err(Error::Invalid("n must be positive".into()));
            }
            let mut p: Box<dyn Policy> = match policy {
                BuiltinPolicy::Oracle => Box::new(OraclePolicy),
                BuiltinPolicy::Random => Box::new(RandomPolicy::new(seed)),
                BuiltinPolicy::FirstLeaf => Box::new(FirstLeafPolicy),
            };
            let rate = success_rate(p.as_mut(), &env, n, seed);
            print(out, &json!({ "task": task, "n": n, "success_rate": rate, "seed": seed }))
        }
        Command::Demos { task, count, seed, noise, out: dir } => {
            let env = Env::new(&task)?;
            let store = DemoStore::new(dir);
            let mut paths = Vec::new();
            for s in seed..seed + count {
                let demo = oracle_demonstrate(&env, s, noise);
                demo.validate()?;
                paths.push(store.save(&demo)?.display().to_string());
            }
            print(out, &json!({ "task": task, "written": paths }))
        }
        Command::Dsl { command: DslCommand::Eval { expr, snapshot, goal } } => {
            let step = parse_step(&expr)?;
            let snapshot = snapshot_from_json(&read_to_string(&snapshot)?)?;
            let goal = goal_from_json(&read_to_string(&goal)?)?;
            let actions: Vec<Value> = eval_step(&step, &snapshot, &goal).iter().map(action_value).collect();
            print(out, &Value::Array(actions))
        }
        Command::Induce { demos, out: file, cap } => {
            let loaded = load_dir(&demos)?;
            let Some((_, first)) = loaded.first() else {
                return Err(Error::Invalid(format!("no demonstrations in {}", demos.display())));
            };
            let task = first.task.clone();
            if let Some((p, _)) = loaded.iter().find(|(_, d)| d.task != task) {
                return Err(Error::Invalid(format!("{} is not a {task} demonstration", p.display())));
            }
            let mut lattices = Vec::new();
            for (path, demo) in &loaded {
                let id = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
                lattices.push((demo.goal.clone(), induce(demo, &id, Some(cap))?));
            }
            atomic_write(&file, lattices_to_json(&task, &lattices).as_bytes())?;
            let edges: usize = lattices.iter().map(|(_, l)| l.edges.len()).sum();
            print(out, &json!({ "task": task, "lattices": lattices.len(), "edges": edges, "out": file.display().to_string() }))
        }
        Command::Explore { task, demos, episodes, buffer, seed } => explore(&task, &demos, episodes, &buffer, seed, out),
        Command::Train { algo, task, demos, config, out: dir, episodes, seed } => {
            let mut cfg = match config {
                Some(path) => load_config(&path)?,
                None => TrainConfig::default(),
            };
            cfg.task = task.clone();
            if let Some(e) = episodes {
                cfg.episodes = e;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let demos = load_demos(&demos, &task)?;
            let report = train_to_dir(algo, &cfg, &demos, &dir)?;
            print(
                out,
                &json!({
                    "algo": algo.as_str(),
                    "task": task,
                    "test_success": report.test_success(),
                    "val_success": report.val_success(),
                    "out": dir.display().to_string(),
                }),
            )
        }
        Command::Eval { checkpoint, split } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let net = ckpt.network()?;
            let env = Env::new(&ckpt.config.task)?;
            let seeds = match split {
                Split::Validation => ckpt.config.val_seeds.clone(),
                Split::Test => ckpt.config.test_seeds.clone(),
            };
            let rate = evaluate_neural(&net, &env, seeds.clone());
            let stored = ckpt.metric.map(|m| match split {
                Split::Validation => m.val_success,
                Split::Test => m.test_success,
            });
            print(
                out,
                &json!({
                    "task": ckpt.config.task,
                    "n": seeds.end - seeds.start,
                    "success_rate": rate,
                    "seed": seeds.start,
                    "stored_success_rate": stored,
                }),
            )
        }
        Command::Serve { addr, demos, metrics } => {
            let mut config = BridgeConfig::new(demos);
            config.metrics = metrics;
            let runtime = tokio::runtime::Runtime::new().map_err(Error::io("<runtime>"))?;
            runtime.block_on(async {
                let listener = tokio::net::TcpListener::bind(addr).await.map_err(Error::io(addr.to_string()))?;
                writeln!(out, "listening on {addr}").map_err(Error::io("<stdout>"))?;
                Bridge::new(config).serve(listener).await.map_err(Error::io(addr.to_string()))
            })
        }
    }
}

fn explore(task: &str, demos: &std::path::Path, episodes: usize, buffer: &std::path::Path, seed: u64, out: &mut dyn Write) -> Result<()> {
    let env = Env::new(task)?;
    let config = TrainConfig { task: task.into(), seed, ..TrainConfig::default() };
    let demos = load_demos(demos, task)?;
    let mut policy = build_workflow_policy(&config, &demos)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if let Some(dir) = buffer.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    let mut file = OpenOptions::new().create(true).append(true).open(buffer).map_err(Error::io(buffer))?;
    let (mut successes, mut unmatched) = (0usize, 0usize);
    for i in 0..episodes {
        let start = env.reset(config.train_seed_base + i as u64);
        let trace = match policy.explore(&env, start, &mut rng) {
            Ok(t) => t,
            Err(_) => {
                unmatched += 1;
                continue;
            }
        };
        policy.reinforce_update(&trace).map_err(|e| Error::Invalid(e.to_string()))?;
        if trace.reward() == 1 {
            successes += 1;
            let demo = Demonstration::from_rollout(&trace.rollout, "workflow");
            let line = demo_to_json(&demo) + "\n";
            file.write_all(line.as_bytes()).map_err(Error::io(buffer))?;
        }
    }
    print(
        out,
        &json!({ "task": task, "episodes": episodes, "successes": successes, "unmatched": unmatched, "buffer": buffer.display().to_string() }),
    )
}
