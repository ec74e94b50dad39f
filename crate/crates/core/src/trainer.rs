//! Training loops: workflow-guided exploration, behavioral cloning followed
//! by RL, and the workflow policy alone.
//!
//! Every run is single-threaded and driven by seeded RNG streams, so a
//! config and its seed determine the reported metrics exactly.

use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demo::{DemoError, Demonstration};
use crate::domnet::{bc_pretrain, episode_steps, BcConfig, DomNet, Features, NeuralConfig, NeuralError, NeuralPolicy, StepKind, Vocab};
use crate::dsl::DEFAULT_STEP_CAP;
use crate::env::{run_episode, Action, Env, EnvError, Rollout};
use crate::lattice::induce;
use crate::nn::Adam;
use crate::workflow::{workflow_success_rate, DemoLattice, WorkflowConfig, WorkflowPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Wge,
    BcRl,
    Workflow,
}

impl Algo {
    pub fn as_str(self) -> &'static str {
        match self {
            Algo::Wge => "wge",
            Algo::BcRl => "bc_rl",
            Algo::Workflow => "workflow",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "wge" => Some(Algo::Wge),
            "bc_rl" => Some(Algo::BcRl),
            "workflow" => Some(Algo::Workflow),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub task: String,
    pub seed: u64,
    /// Environment episodes the run may spend, counting every workflow and
    /// neural rollout.
    pub episodes: usize,
    pub buffer_threshold: usize,
    pub buffer_capacity: usize,
    /// Workflow iterations between neural update blocks.
    pub update_period: usize,
    pub replay_batch: usize,
    /// Episodes between evaluations.
    pub eval_every: usize,
    pub val_seeds: Range<u64>,
    pub test_seeds: Range<u64>,
    /// Training episodes use seeds from here upwards.
    pub train_seed_base: u64,
    pub step_cap: usize,
    pub workflow_learning_rate: f64,
    pub workflow_gamma: f64,
    pub workflow_baseline_rate: f64,
    pub neural: NeuralConfig,
    pub bc_epochs: usize,
    pub bc_batch: usize,
    pub bc_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            task: "click-button".into(),
            seed: 0,
            episodes: 2000,
            buffer_threshold: 16,
            buffer_capacity: 1024,
            update_period: 4,
            replay_batch: 8,
            eval_every: 200,
            val_seeds: 10_000..10_032,
            test_seeds: 20_000..20_128,
            train_seed_base: 1_000_000,
            step_cap: DEFAULT_STEP_CAP,
            workflow_learning_rate: 0.1,
            workflow_gamma: 1.0,
            workflow_baseline_rate: 0.1,
            neural: NeuralConfig::default(),
            bc_epochs: 40,
            bc_batch: 8,
            bc_patience: 8,
        }
    }
}

impl TrainConfig {
    pub fn workflow_config(&self) -> WorkflowConfig {
        WorkflowConfig {
            learning_rate: self.workflow_learning_rate,
            gamma: self.workflow_gamma,
            baseline_rate: self.workflow_baseline_rate,
        }
    }

    /// Checks that every count and rate is positive and that validation,
    /// test and training seeds do not overlap.
    pub fn validate(&self) -> Result<(), TrainError> {
        let positive = [
            ("episodes", self.episodes),
            ("buffer_capacity", self.buffer_capacity),
            ("update_period", self.update_period),
            ("replay_batch", self.replay_batch),
            ("eval_every", self.eval_every),
            ("step_cap", self.step_cap),
            ("bc_batch", self.bc_batch),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(TrainError::Config(alloc::format!("{name} must be positive")));
            }
        }
        if self.val_seeds.is_empty() || self.test_seeds.is_empty() {
            return Err(TrainError::Config("validation and test seed ranges must be non-empty".into()));
        }
        let overlap = |a: &Range<u64>, b: &Range<u64>| a.start < b.end && b.start < a.end;
        let train = self.train_seed_base..u64::MAX;
        if overlap(&self.val_seeds, &self.test_seeds) || overlap(&self.val_seeds, &train) || overlap(&self.test_seeds, &train) {
            return Err(TrainError::Config("validation, test and training seeds must be disjoint".into()));
        }
        if !(self.neural.learning_rate > 0.0 && self.workflow_learning_rate > 0.0) {
            return Err(TrainError::Config("learning rates must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("no demonstrations for task {0}")]
    NoDemos(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("demonstration {index}: {source}")]
    Demo { index: usize, source: DemoError },
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

/// One evaluation point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    /// Environment episodes spent so far.
    pub step: usize,
    pub val_success: f64,
    pub test_success: f64,
}

/// Instrumentation for the schedule and the replay buffer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub workflow_episodes: u64,
    pub workflow_successes: u64,
    pub neural_episodes: u64,
    pub neural_successes: u64,
    pub bc_epochs: u64,
    /// Neural update blocks actually run.
    pub periodic_blocks: u64,
    /// Update slots skipped because the buffer was at or below threshold.
    pub gated_blocks: u64,
    pub replay_updates: u64,
    pub on_policy_updates: u64,
    pub buffer_inserts: u64,
    /// Insert attempts with a reward other than +1, all refused.
    pub buffer_refusals: u64,
    /// Neural updates that ran while the buffer was at or below threshold.
    pub schedule_violations: u64,
    /// Non-success episodes found when scanning the buffer.
    pub purity_violations: u64,
    pub buffer_scans: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeSource {
    Workflow,
    Neural,
}

/// A successful episode, featurized for the network.
#[derive(Debug, Clone)]
pub struct BufferedEpisode {
    pub source: EpisodeSource,
    pub seed: u64,
    pub reward: i8,
    pub steps: Vec<(Features, Action)>,
}

/// FIFO store of reward-+1 episodes.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    episodes: VecDeque<BufferedEpisode>,
    /// Total order of accepted inserts.
    pub inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, episodes: VecDeque::new(), inserted: 0 }
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Stores a successful episode, evicting the oldest at capacity.
    /// Anything else is handed back.
    pub fn push(&mut self, episode: BufferedEpisode) -> Result<(), BufferedEpisode> {
        if episode.reward != 1 || episode.steps.is_empty() {
            return Err(episode);
        }
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(episode);
        self.inserted += 1;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &BufferedEpisode> + '_ {
        self.episodes.iter()
    }

    /// `n` episodes drawn uniformly with replacement.
    pub fn sample<'a>(&'a self, n: usize, rng: &mut ChaCha8Rng) -> Vec<&'a BufferedEpisode> {
        (0..n).map(|_| &self.episodes[rng.gen_range(0..self.episodes.len())]).collect()
    }
}

/// Receives progress while a run is underway.
pub trait TrainHooks {
    fn on_metric(&mut self, _record: &MetricRecord) {}
    fn on_episode(&mut self, _source: EpisodeSource, _reward: i8) {}
}

/// Hooks that ignore everything.
pub struct NoHooks;

impl TrainHooks for NoHooks {}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub algo: Algo,
    pub task: String,
    pub metrics: Vec<MetricRecord>,
    /// The evaluation with the highest validation success, earliest on ties.
    pub best: Option<MetricRecord>,
    pub counters: Counters,
    /// The network as of the best evaluation.
    pub best_net: Option<DomNet>,
    pub final_buffer_len: usize,
}

impl TrainReport {
    /// Test success at the validation-optimal step.
    pub fn test_success(&self) -> f64 {
        self.best.map_or(0.0, |b| b.test_success)
    }

    pub fn val_success(&self) -> f64 {
        self.best.map_or(0.0, |b| b.val_success)
    }
}

const RNG_WORKFLOW: u64 = 11;
const RNG_NEURAL: u64 = 12;
const RNG_REPLAY: u64 = 13;
const RNG_EVAL: u64 = 14;

fn stream(seed: u64, s: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s);
    rng
}

/// Greedy success rate of the network over `seeds`.
pub fn evaluate_neural(net: &DomNet, env: &Env, seeds: Range<u64>) -> f64 {
    let n = seeds.end - seeds.start;
    let mut policy = NeuralPolicy { net, rng: None };
    let wins = seeds.filter(|&s| run_episode(env, &mut policy, s).reward() == 1).count();
    wins as f64 / n as f64
}

fn featurize(net: &DomNet, rollout: &Rollout) -> Vec<(Features, Action)> {
    rollout.steps.iter().map(|(s, a)| (net.features(&s.snapshot, &s.goal), a.clone())).collect()
}

/// Lattices for every demonstration of the configured task.
pub fn build_workflow_policy(config: &TrainConfig, demos: &[Demonstration]) -> Result<WorkflowPolicy, TrainError> {
    let mut lattices = Vec::new();
    for (index, d) in demos.iter().enumerate().filter(|(_, d)| d.task == config.task) {
        let lattice =
            induce(d, &alloc::format!("demo-{index}"), Some(config.step_cap)).map_err(|source| TrainError::Demo { index, source })?;
        lattices.push(DemoLattice { goal: d.goal.clone(), lattice });
    }
    if lattices.is_empty() {
        return Err(TrainError::NoDemos(config.task.clone()));
    }
    Ok(WorkflowPolicy::new(lattices, config.workflow_config()))
}

struct Run<'h> {
    config: TrainConfig,
    env: Env,
    hooks: &'h mut dyn TrainHooks,
    counters: Counters,
    metrics: Vec<MetricRecord>,
    best: Option<MetricRecord>,
    best_net: Option<DomNet>,
    spent: usize,
    next_eval: usize,
}

impl<'h> Run<'h> {
    fn new(config: &TrainConfig, hooks: &'h mut dyn TrainHooks) -> Result<Self, TrainError> {
        config.validate()?;
        Ok(Self {
            env: Env::new(&config.task)?,
            config: config.clone(),
            hooks,
            counters: Counters::default(),
            metrics: Vec::new(),
            best: None,
            best_net: None,
            spent: 0,
            next_eval: 0,
        })
    }

    fn train_seed(&self) -> u64 {
        self.config.train_seed_base + self.spent as u64
    }

    fn record(&mut self, val: f64, test: f64, net: Option<&DomNet>) {
        let r = MetricRecord { step: self.spent, val_success: val, test_success: test };
        self.metrics.push(r);
        self.hooks.on_metric(&r);
        if self.best.is_none_or(|b| val > b.val_success) {
            self.best = Some(r);
            self.best_net = net.cloned();
        }
    }

    fn eval_neural_if_due(&mut self, net: &DomNet) {
        while self.spent >= self.next_eval {
            self.next_eval += self.config.eval_every;
            let val = evaluate_neural(net, &self.env, self.config.val_seeds.clone());
            let test = evaluate_neural(net, &self.env, self.config.test_seeds.clone());
            self.record(val, test, Some(net));
        }
    }

    fn finish(self, algo: Algo, buffer_len: usize) -> TrainReport {
        TrainReport {
            algo,
            task: self.config.task.clone(),
            metrics: self.metrics,
            best: self.best,
            counters: self.counters,
            best_net: self.best_net,
            final_buffer_len: buffer_len,
        }
    }

    /// One sampled rollout of the network followed by an A2C update.
    fn on_policy_step(&mut self, net: &mut DomNet, opt: &mut Adam, rng: &mut ChaCha8Rng) -> Result<Rollout, TrainError> {
        let start = self.env.reset(self.train_seed());
        let rollout = {
            let mut policy = NeuralPolicy { net, rng: Some(rng.clone()) };
            let r = crate::env::run_from(&self.env, &mut policy, start);
            *rng = policy.rng.take().expect("sampling policy");
            r
        };
        self.spent += 1;
        self.counters.neural_episodes += 1;
        let reward = rollout.reward();
        self.hooks.on_episode(EpisodeSource::Neural, reward);
        if reward == 1 {
            self.counters.neural_successes += 1;
        }
        let steps = episode_steps(self.config.neural.gamma, &featurize(net, &rollout), f64::from(reward), StepKind::OnPolicy);
        if !steps.is_empty() {
            net.update(opt, &steps)?;
            self.counters.on_policy_updates += 1;
        }
        Ok(rollout)
    }
}

fn push_success(buffer: &mut ReplayBuffer, counters: &mut Counters, episode: BufferedEpisode) {
    match buffer.push(episode) {
        Ok(()) => counters.buffer_inserts += 1,
        Err(_) => counters.buffer_refusals += 1,
    }
}

fn scan_buffer(buffer: &ReplayBuffer, counters: &mut Counters) {
    counters.buffer_scans += 1;
    counters.purity_violations += buffer.iter().filter(|e| e.reward != 1).count() as u64;
}

/// Workflow-guided exploration: π_w explores and fills the buffer every
/// iteration; once the buffer exceeds the threshold, every
/// `update_period` iterations π_n takes a replay update, rolls out one
/// episode of its own and takes an A2C update on it.
pub fn run_wge(config: &TrainConfig, demos: &[Demonstration], hooks: &mut dyn TrainHooks) -> Result<TrainReport, TrainError> {
    let mut run = Run::new(config, hooks)?;
    let mut workflow = build_workflow_policy(config, demos)?;
    let mut net = DomNet::new(config.neural.clone(), Vocab::standard());
    let mut opt = Adam::new(&net.params, config.neural.learning_rate, config.neural.grad_clip);
    let mut buffer = ReplayBuffer::new(config.buffer_capacity);
    let mut wf_rng = stream(config.seed, RNG_WORKFLOW);
    let mut nn_rng = stream(config.seed, RNG_NEURAL);
    let mut replay_rng = stream(config.seed, RNG_REPLAY);

    run.eval_neural_if_due(&net);
    let mut iteration = 0usize;
    while run.spent < config.episodes {
        let seed = run.train_seed();
        let trace = workflow.explore(&run.env, run.env.reset(seed), &mut wf_rng);
        run.spent += 1;
        run.counters.workflow_episodes += 1;
        iteration += 1;
        if let Ok(trace) = trace {
            let reward = trace.reward();
            run.hooks.on_episode(EpisodeSource::Workflow, reward);
            workflow.reinforce_update(&trace).map_err(|e| TrainError::Config(alloc::format!("{e}")))?;
            if reward == 1 {
                run.counters.workflow_successes += 1;
                let steps = featurize(&net, &trace.rollout);
                push_success(&mut buffer, &mut run.counters, BufferedEpisode { source: EpisodeSource::Workflow, seed, reward, steps });
            }
        } else {
            run.hooks.on_episode(EpisodeSource::Workflow, -1);
        }

        if iteration % config.update_period == 0 {
            if buffer.len() <= config.buffer_threshold {
                run.counters.gated_blocks += 1;
            } else if run.spent < config.episodes {
                run.counters.periodic_blocks += 1;
                scan_buffer(&buffer, &mut run.counters);
                let batch: Vec<_> = buffer
                    .sample(config.replay_batch, &mut replay_rng)
                    .into_iter()
                    .flat_map(|e| episode_steps(config.neural.gamma, &e.steps, f64::from(e.reward), StepKind::Replay))
                    .collect();
                if buffer.len() <= config.buffer_threshold {
                    run.counters.schedule_violations += 1;
                }
                net.update(&mut opt, &batch)?;
                run.counters.replay_updates += 1;

                let rollout = run.on_policy_step(&mut net, &mut opt, &mut nn_rng)?;
                if rollout.reward() == 1 {
                    let seed = rollout.steps.first().map_or(0, |(s, _)| s.seed);
                    let steps = featurize(&net, &rollout);
                    push_success(&mut buffer, &mut run.counters, BufferedEpisode { source: EpisodeSource::Neural, seed, reward: 1, steps });
                }
            }
        }
        run.eval_neural_if_due(&net);
    }
    if run.metrics.last().is_none_or(|m| m.step != run.spent) {
        run.next_eval = run.spent;
        run.eval_neural_if_due(&net);
    }
    scan_buffer(&buffer, &mut run.counters);
    Ok(run.finish(Algo::Wge, buffer.len()))
}

/// Behavioral cloning on the demonstrations, then on-policy A2C for the
/// whole episode budget.
pub fn run_bc_rl(config: &TrainConfig, demos: &[Demonstration], hooks: &mut dyn TrainHooks) -> Result<TrainReport, TrainError> {
    let mut run = Run::new(config, hooks)?;
    let demos: Vec<&Demonstration> = demos.iter().filter(|d| d.task == config.task).collect();
    if demos.is_empty() {
        return Err(TrainError::NoDemos(config.task.clone()));
    }
    let mut net = DomNet::new(config.neural.clone(), Vocab::standard());
    let mut opt = Adam::new(&net.params, config.neural.learning_rate, config.neural.grad_clip);
    let episodes: Vec<Vec<(Features, Action)>> =
        demos.iter().map(|d| d.steps.iter().map(|s| (net.features(&s.snapshot, &d.goal), s.action.clone())).collect()).collect();
    let bc = BcConfig { epochs: config.bc_epochs, batch: config.bc_batch, patience: config.bc_patience, seed: config.seed };
    let env = run.env;
    let val = config.val_seeds.clone();
    let report = bc_pretrain(&mut net, &mut opt, &episodes, &bc, |n| evaluate_neural(n, &env, val.clone()));
    run.counters.bc_epochs = report.epochs_run as u64;

    run.eval_neural_if_due(&net);
    let mut rng = stream(config.seed, RNG_NEURAL);
    while run.spent < config.episodes {
        run.on_policy_step(&mut net, &mut opt, &mut rng)?;
        run.eval_neural_if_due(&net);
    }
    Ok(run.finish(Algo::BcRl, 0))
}

/// Trains π_w alone and evaluates it by sampling workflows on the held-out
/// seeds.
pub fn run_workflow_only(config: &TrainConfig, demos: &[Demonstration], hooks: &mut dyn TrainHooks) -> Result<TrainReport, TrainError> {
    let mut run = Run::new(config, hooks)?;
    let mut workflow = build_workflow_policy(config, demos)?;
    let mut rng = stream(config.seed, RNG_WORKFLOW);
    let mut eval_rng = stream(config.seed, RNG_EVAL);
    loop {
        while run.spent >= run.next_eval || run.spent >= config.episodes {
            run.next_eval += config.eval_every;
            let val = workflow_success_rate(&workflow, &run.env, config.val_seeds.clone(), &mut eval_rng);
            let test = workflow_success_rate(&workflow, &run.env, config.test_seeds.clone(), &mut eval_rng);
            run.record(val, test, None);
            if run.spent >= config.episodes {
                return Ok(run.finish(Algo::Workflow, 0));
            }
        }
        let seed = run.train_seed();
        let trace = workflow.explore(&run.env, run.env.reset(seed), &mut rng);
        run.spent += 1;
        run.counters.workflow_episodes += 1;
        if let Ok(trace) = trace {
            run.hooks.on_episode(EpisodeSource::Workflow, trace.reward());
            if trace.reward() == 1 {
                run.counters.workflow_successes += 1;
            }
            workflow.reinforce_update(&trace).map_err(|e| TrainError::Config(alloc::format!("{e}")))?;
        }
    }
}

pub fn train(algo: Algo, config: &TrainConfig, demos: &[Demonstration], hooks: &mut dyn TrainHooks) -> Result<TrainReport, TrainError> {
    match algo {
        Algo::Wge => run_wge(config, demos, hooks),
        Algo::BcRl => run_bc_rl(config, demos, hooks),
        Algo::Workflow => run_workflow_only(config, demos, hooks),
    }
}
