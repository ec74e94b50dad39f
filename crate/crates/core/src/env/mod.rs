//! Headless simulated web tasks.
//!
//! Every task is a deterministic function of its seed: the goal, the initial
//! page, any hidden data (inbox contents, search results) and all transitions
//! are reproducible from `(task, seed, actions)`. Rewards are sparse: zero on
//! every non-terminal step and ±1 at the end.

mod page;
pub mod tasks;
pub mod words;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dom::{DomSnapshot, ElementId};

pub use page::{apply_generic, SCREEN};

/// Screen-space canvas shared by all tasks.
pub const SCREEN_WIDTH: f64 = 160.0;
pub const SCREEN_HEIGHT: f64 = 210.0;

/// Class carried by the inert background leaf every page includes.
pub const BACKGROUND_CLASS: &str = "background";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvError {
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("episode already finished")]
    EpisodeDone,
}

/// What the agent is asked to do: structured key/value fields and/or a
/// natural-language utterance.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Goal {
    pub fields: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utterance: Option<Vec<String>>,
}

impl Goal {
    pub fn structured<K: Into<String>, V: Into<String>>(pairs: impl IntoIterator<Item = (K, V)>) -> Self {
        Self { fields: pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect(), utterance: None }
    }

    pub fn with_utterance(mut self, tokens: Vec<String>) -> Self {
        self.utterance = Some(tokens);
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> + '_ {
        self.fields.keys().map(String::as_str)
    }

    pub fn is_valid(&self) -> bool {
        (!self.fields.is_empty() || self.utterance.is_some()) && self.fields.values().all(|v| !v.is_empty())
    }

    /// Whether `text` may be typed: a field value or a contiguous utterance span.
    pub fn admits_text(&self, text: &str) -> bool {
        if self.fields.values().any(|v| v == text) {
            return true;
        }
        match &self.utterance {
            Some(tokens) => (0..tokens.len()).any(|s| (s..tokens.len()).any(|e| span_text(tokens, s, e) == text)),
            None => false,
        }
    }
}

/// Tokens `start..=end` joined by single spaces.
pub fn span_text(tokens: &[String], start: usize, end: usize) -> String {
    tokens[start..=end].join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    Click(ElementId),
    Type(ElementId, String),
}

impl Action {
    pub fn element(&self) -> ElementId {
        match self {
            Action::Click(e) | Action::Type(e, _) => *e,
        }
    }

    pub fn text(&self) -> Option<&str> {
        match self {
            Action::Click(_) => None,
            Action::Type(_, t) => Some(t),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Click(e) => write!(f, "Click({e})"),
            Action::Type(e, t) => write!(f, "Type({e},{t:?})"),
        }
    }
}

/// Outcome of a single task transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Continue,
    Success,
    Failure,
}

/// Per-episode context a task may consult to regenerate hidden data.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeInfo<'a> {
    pub goal: &'a Goal,
    pub seed: u64,
}

/// A simulated web task.
pub trait Task: Send + Sync {
    fn name(&self) -> &'static str;
    fn horizon(&self) -> usize;
    fn sample_goal(&self, rng: &mut ChaCha8Rng) -> Goal;
    fn initial_page(&self, info: EpisodeInfo<'_>) -> DomSnapshot;
    /// Applies a validated action. Generic effects (checkbox toggling, typed
    /// values, focus) are the task's responsibility via [`apply_generic`].
    fn transition(&self, info: EpisodeInfo<'_>, page: &DomSnapshot, action: &Action) -> (DomSnapshot, Verdict);
    /// The expert action in this state.
    fn oracle_action(&self, info: EpisodeInfo<'_>, page: &DomSnapshot) -> Action;
}

/// Random stream dedicated to one purpose of one episode.
pub fn episode_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) const GOAL_STREAM: u64 = 0;
pub(crate) const PAGE_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub task: &'static str,
    pub seed: u64,
    pub goal: Goal,
    pub snapshot: DomSnapshot,
    pub step_index: usize,
    pub done: bool,
    /// 0 until terminal, then ±1.
    pub reward: i8,
}

impl EnvState {
    pub fn info(&self) -> EpisodeInfo<'_> {
        EpisodeInfo { goal: &self.goal, seed: self.seed }
    }
}

/// A handle on one registered task.
#[derive(Clone, Copy)]
pub struct Env {
    task: &'static dyn Task,
}

impl fmt::Debug for Env {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Env").field(&self.task.name()).finish()
    }
}

impl Env {
    pub fn new(name: &str) -> Result<Self, EnvError> {
        tasks::lookup(name).map(|task| Self { task }).ok_or_else(|| EnvError::UnknownTask(name.into()))
    }

    pub fn name(&self) -> &'static str {
        self.task.name()
    }

    pub fn horizon(&self) -> usize {
        self.task.horizon()
    }

    pub fn task(&self) -> &'static dyn Task {
        self.task
    }

    pub fn sample_goal(&self, seed: u64) -> Goal {
        self.task.sample_goal(&mut episode_rng(seed, GOAL_STREAM))
    }

    pub fn reset(&self, seed: u64) -> EnvState {
        self.reset_with_goal(seed, self.sample_goal(seed))
    }

    /// Starts an episode with an explicit goal; the page is still seeded.
    pub fn reset_with_goal(&self, seed: u64, goal: Goal) -> EnvState {
        let snapshot = self.task.initial_page(EpisodeInfo { goal: &goal, seed });
        EnvState { task: self.task.name(), seed, goal, snapshot, step_index: 0, done: false, reward: 0 }
    }

    /// Whether `action` is admissible in `state`: a leaf target, and for
    /// `Type` a text input and goal-derived text.
    pub fn is_valid_action(state: &EnvState, action: &Action) -> bool {
        let Some(e) = state.snapshot.get(action.element()) else {
            return false;
        };
        if !e.is_leaf() {
            return false;
        }
        match action {
            Action::Click(_) => true,
            Action::Type(_, text) => e.is_text_input() && state.goal.admits_text(text),
        }
    }

    /// Advances one step. Invalid actions end the episode with reward −1, as
    /// does exhausting the horizon without success.
    pub fn step(&self, state: &EnvState, action: &Action) -> Result<EnvState, EnvError> {
        if state.done {
            return Err(EnvError::EpisodeDone);
        }
        let mut next = state.clone();
        next.step_index += 1;
        if !Self::is_valid_action(state, action) {
            next.done = true;
            next.reward = -1;
            return Ok(next);
        }
        let (snapshot, verdict) = self.task.transition(state.info(), &state.snapshot, action);
        next.snapshot = snapshot;
        match verdict {
            Verdict::Success => {
                next.done = true;
                next.reward = 1;
            }
            Verdict::Failure => {
                next.done = true;
                next.reward = -1;
            }
            Verdict::Continue if next.step_index >= self.horizon() => {
                next.done = true;
                next.reward = -1;
            }
            Verdict::Continue => {}
        }
        Ok(next)
    }

    pub fn oracle_action(&self, state: &EnvState) -> Action {
        self.task.oracle_action(state.info(), &state.snapshot)
    }
}

/// Anything that chooses actions in an environment.
pub trait Policy {
    /// `None` gives up; the episode then counts as a failure.
    fn act(&mut self, env: &Env, state: &EnvState) -> Option<Action>;
}

/// The per-task expert.
#[derive(Debug, Default, Clone, Copy)]
pub struct OraclePolicy;

impl Policy for OraclePolicy {
    fn act(&mut self, env: &Env, state: &EnvState) -> Option<Action> {
        Some(env.oracle_action(state))
    }
}

/// Clicks the first leaf in document order, always.
#[derive(Debug, Default, Clone, Copy)]
pub struct FirstLeafPolicy;

impl Policy for FirstLeafPolicy {
    fn act(&mut self, _env: &Env, state: &EnvState) -> Option<Action> {
        state.snapshot.leaves().first().map(|&e| Action::Click(e))
    }
}

/// Uniform over leaves, action kinds and goal-admissible strings.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, _env: &Env, state: &EnvState) -> Option<Action> {
        let leaves = state.snapshot.leaves();
        let e = leaves[self.rng.gen_range(0..leaves.len())];
        let values: Vec<&String> = state.goal.fields.values().collect();
        if self.rng.gen_bool(0.5) && !values.is_empty() {
            let v = values[self.rng.gen_range(0..values.len())];
            Some(Action::Type(e, v.clone()))
        } else {
            Some(Action::Click(e))
        }
    }
}

/// One finished episode: visited states with the actions taken in them.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub steps: Vec<(EnvState, Action)>,
    pub last: EnvState,
}

impl Rollout {
    pub fn reward(&self) -> i8 {
        if self.last.done {
            self.last.reward
        } else {
            -1
        }
    }
}

pub fn run_episode(env: &Env, policy: &mut dyn Policy, seed: u64) -> Rollout {
    run_from(env, policy, env.reset(seed))
}

pub fn run_from(env: &Env, policy: &mut dyn Policy, start: EnvState) -> Rollout {
    let mut state = start;
    let mut steps = Vec::new();
    while !state.done {
        let Some(action) = policy.act(env, &state) else {
            break;
        };
        let next = env.step(&state, &action).expect("state not done");
        steps.push((state, action));
        state = next;
    }
    Rollout { steps, last: state }
}

/// Fraction of `n` episodes, seeded `seed, seed+1, …`, that end with +1.
pub fn success_rate(policy: &mut dyn Policy, env: &Env, n: usize, seed: u64) -> f64 {
    assert!(n >= 1);
    let wins = (0..n as u64).filter(|i| run_episode(env, policy, seed.wrapping_add(*i)).reward() == 1).count();
    wins as f64 / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_task_is_an_error() {
        assert_eq!(Env::new("nope").unwrap_err(), EnvError::UnknownTask("nope".into()));
    }

    #[test]
    fn admits_goal_values_and_utterance_spans() {
        let g = Goal::structured([("to", "Krista")])
            .with_utterance(["Forward", "it", "to", "Krista", "now"].iter().map(|s| String::from(*s)).collect());
        assert!(g.admits_text("Krista"));
        assert!(g.admits_text("to Krista"));
        assert!(!g.admits_text("Forward to"));
    }

    #[test]
    fn stepping_a_finished_episode_fails() {
        let env = Env::new("click-button").unwrap();
        let s = env.reset(3);
        let done = env.step(&s, &env.oracle_action(&s)).unwrap();
        assert!(done.done);
        assert_eq!(env.step(&done, &Action::Click(0)), Err(EnvError::EpisodeDone));
    }
}
