//! Demonstrations: expert episodes with the full page state at every step.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::dom::DomSnapshot;
use crate::env::BACKGROUND_CLASS;
use crate::env::{episode_rng, Action, Env, EnvError, EnvState, Goal, Rollout};

/// Who produced a demonstration.
pub const SOURCE_ORACLE: &str = "oracle";
pub const SOURCE_HUMAN: &str = "human";

const NOISE_STREAM: u64 = 7;

#[derive(Debug, Clone, PartialEq)]
pub struct DemoStep {
    /// Page state the action was taken in.
    pub snapshot: DomSnapshot,
    pub action: Action,
    pub t_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub task: String,
    pub seed: u64,
    pub goal: Goal,
    pub source: String,
    pub steps: Vec<DemoStep>,
    pub reward: i8,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DemoError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("demonstration has no steps")]
    Empty,
    #[error("step {step}: stored page differs from the replayed page")]
    SnapshotMismatch { step: usize },
    #[error("step {step}: episode ended before the demonstration did")]
    EndedEarly { step: usize },
    #[error("replay finished with reward {reward}, expected +1")]
    NotSuccessful { reward: i8 },
    #[error("stored reward {0} is not +1")]
    BadRewardField(i8),
}

impl Demonstration {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn actions(&self) -> impl Iterator<Item = &Action> + '_ {
        self.steps.iter().map(|s| &s.action)
    }

    /// Builds a demonstration from a finished episode.
    pub fn from_rollout(rollout: &Rollout, source: &str) -> Self {
        let first = rollout.steps.first().map(|(s, _)| s).unwrap_or(&rollout.last);
        Self {
            task: first.task.into(),
            seed: first.seed,
            goal: first.goal.clone(),
            source: source.into(),
            steps: rollout
                .steps
                .iter()
                .enumerate()
                .map(|(i, (s, a))| DemoStep { snapshot: s.snapshot.clone(), action: a.clone(), t_ms: 800 * (i as u64 + 1) })
                .collect(),
            reward: rollout.reward(),
        }
    }

    /// Checks the full invariant: non-empty, reward field +1 and an exact
    /// replay ending in +1.
    pub fn validate(&self) -> Result<(), DemoError> {
        if self.reward != 1 {
            return Err(DemoError::BadRewardField(self.reward));
        }
        match replay(self)? {
            1 => Ok(()),
            reward => Err(DemoError::NotSuccessful { reward }),
        }
    }
}

/// Re-executes the stored actions from the seeded start, comparing every
/// stored page with the live one, and returns the terminal reward.
pub fn replay(demo: &Demonstration) -> Result<i8, DemoError> {
    if demo.steps.is_empty() {
        return Err(DemoError::Empty);
    }
    let env = Env::new(&demo.task)?;
    let mut state = env.reset_with_goal(demo.seed, demo.goal.clone());
    for (i, step) in demo.steps.iter().enumerate() {
        if state.done {
            return Err(DemoError::EndedEarly { step: i });
        }
        if state.snapshot != step.snapshot {
            return Err(DemoError::SnapshotMismatch { step: i });
        }
        state = env.step(&state, &step.action)?;
    }
    Ok(if state.done { state.reward } else { -1 })
}

/// Replays `actions` from the demonstration's start, ignoring stored pages.
pub fn replay_actions(env: &Env, seed: u64, goal: &Goal, actions: &[Action]) -> EnvState {
    let mut state = env.reset_with_goal(seed, goal.clone());
    for a in actions {
        if state.done {
            break;
        }
        state = env.step(&state, a).expect("not done");
    }
    state
}

/// For each step, whether the demonstration still succeeds without it.
pub fn skippable_steps(demo: &Demonstration) -> Result<Vec<bool>, DemoError> {
    let env = Env::new(&demo.task)?;
    let actions: Vec<Action> = demo.actions().cloned().collect();
    Ok((0..actions.len())
        .map(|i| {
            let mut rest = actions.clone();
            rest.remove(i);
            !rest.is_empty() && {
                let end = replay_actions(&env, demo.seed, &demo.goal, &rest);
                end.done && end.reward == 1
            }
        })
        .collect())
}

/// `1` when both structured goals have the same key set, `-inf` otherwise.
pub fn goal_similarity(g: &Goal, g_d: &Goal) -> f64 {
    if g.fields.keys().eq(g_d.fields.keys()) {
        1.0
    } else {
        f64::NEG_INFINITY
    }
}

/// Runs the task's expert from `reset(seed)`. With `noise`, one click on the
/// page background is inserted at a seeded position when the horizon leaves
/// room for it.
pub fn oracle_demonstrate(env: &Env, seed: u64, noise: bool) -> Demonstration {
    let clean = crate::env::run_episode(env, &mut crate::env::OraclePolicy, seed);
    let mut actions: Vec<Action> = clean.steps.iter().map(|(_, a)| a.clone()).collect();
    if noise && actions.len() < env.horizon() {
        let mut rng = episode_rng(seed, NOISE_STREAM);
        let at = rng.gen_range(0..actions.len());
        let start = &clean.steps[at].0.snapshot;
        let background =
            start.elements().find(|e| e.has_class(BACKGROUND_CLASS) && e.is_leaf()).map(|e| e.id).expect("every page has a background");
        actions.insert(at, Action::Click(background));
    }
    let mut state = env.reset(seed);
    let mut steps = Vec::new();
    for (i, a) in actions.into_iter().enumerate() {
        let next = env.step(&state, &a).expect("not done");
        steps.push(DemoStep { snapshot: state.snapshot.clone(), action: a, t_ms: 800 * (i as u64 + 1) });
        state = next;
    }
    Demonstration { task: env.name().into(), seed, goal: state.goal.clone(), source: SOURCE_ORACLE.into(), steps, reward: state.reward }
}
