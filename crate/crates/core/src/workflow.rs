//! The workflow exploration policy.
//!
//! An episode picks a demonstration whose goal has the same keys as the
//! current goal, then walks that demonstration's lattice: at every node it
//! samples an (edge, step) pair from a softmax over learned logits, and
//! executes an action drawn uniformly from the step's action set on the
//! live page. The step distribution at a node never looks at the page; only
//! pairs whose action set is empty are masked out before sampling.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::demo::goal_similarity;
use crate::dsl::Evaluator;
use crate::env::{Action, Env, EnvState, Goal, Rollout};
use crate::lattice::{EdgeStep, WorkflowLattice};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorkflowError {
    #[error("no demonstration shares the goal's keys")]
    NoMatchingDemo,
    #[error("non-finite policy gradient for demonstration {demo} at node {node}")]
    NonFinite { demo: usize, node: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkflowConfig {
    pub learning_rate: f64,
    pub gamma: f64,
    pub baseline_rate: f64,
}

impl Default for WorkflowConfig {
    fn default() -> Self {
        Self { learning_rate: 0.1, gamma: 1.0, baseline_rate: 0.1 }
    }
}

/// One sampling decision, with what is needed to differentiate its
/// log-probability afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub node: usize,
    /// Node reached after the decision.
    pub next: usize,
    /// Candidate `(edge, step)` pairs at `node`, in table order.
    pub pairs: Vec<(usize, usize)>,
    /// Whether each pair was available (non-empty action set, or a skip).
    pub available: Vec<bool>,
    /// Probability that each pair would have produced the observed
    /// transition: `1/|z(s)|` when the executed action is in `z(s)` and the
    /// edge leads to `next`, `1` for a matching skip, else `0`.
    pub emit: Vec<f64>,
    /// The pair actually sampled.
    pub chosen: usize,
}

#[derive(Debug, Clone)]
pub struct ExplorationTrace {
    pub demo: usize,
    pub decisions: Vec<Decision>,
    pub rollout: Rollout,
}

impl ExplorationTrace {
    pub fn reward(&self) -> i8 {
        self.rollout.reward()
    }
}

/// A lattice paired with the goal of the demonstration it came from.
#[derive(Debug, Clone)]
pub struct DemoLattice {
    pub goal: Goal,
    pub lattice: WorkflowLattice,
}

#[derive(Debug, Clone)]
pub struct WorkflowPolicy {
    pub demos: Vec<DemoLattice>,
    /// `psi[d][edge][step]`.
    pub psi: Vec<Vec<Vec<f64>>>,
    /// `baselines[d][node]`.
    pub baselines: Vec<Vec<f64>>,
    pub config: WorkflowConfig,
}

fn softmax_masked(logits: &[f64], mask: &[bool]) -> Vec<f64> {
    let max = logits.iter().zip(mask).filter(|(_, m)| **m).map(|(l, _)| *l).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().zip(mask).map(|(l, m)| if *m { libm::exp(l - max) } else { 0.0 }).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

fn sample_index(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

impl WorkflowPolicy {
    pub fn new(demos: Vec<DemoLattice>, config: WorkflowConfig) -> Self {
        let psi = demos.iter().map(|d| d.lattice.edges.iter().map(|e| alloc::vec![0.0; e.steps.len()]).collect()).collect();
        let baselines = demos.iter().map(|d| alloc::vec![0.0; d.lattice.node_count()]).collect();
        Self { demos, psi, baselines, config }
    }

    /// Selection probabilities over demonstrations for `goal`.
    pub fn demo_distribution(&self, goal: &Goal) -> Result<Vec<f64>, WorkflowError> {
        let sims: Vec<f64> = self.demos.iter().map(|d| goal_similarity(goal, &d.goal)).collect();
        let mask: Vec<bool> = sims.iter().map(|s| s.is_finite()).collect();
        if !mask.iter().any(|m| *m) {
            return Err(WorkflowError::NoMatchingDemo);
        }
        Ok(softmax_masked(&sims, &mask))
    }

    pub fn select_demo(&self, goal: &Goal, rng: &mut ChaCha8Rng) -> Result<usize, WorkflowError> {
        Ok(sample_index(rng, &self.demo_distribution(goal)?))
    }

    /// All `(edge, step)` pairs leaving `node`.
    pub fn pairs(&self, demo: usize, node: usize) -> Vec<(usize, usize)> {
        let l = &self.demos[demo].lattice;
        l.out_edges(node).flat_map(|e| (0..l.edges[e].steps.len()).map(move |s| (e, s))).collect()
    }

    /// The step distribution at a lattice node. It takes no page argument:
    /// the policy cannot see the environment when choosing steps.
    pub fn step_distribution(&self, demo: usize, node: usize) -> Vec<((usize, usize), f64)> {
        let pairs = self.pairs(demo, node);
        let logits: Vec<f64> = pairs.iter().map(|&(e, s)| self.psi[demo][e][s]).collect();
        let probs = softmax_masked(&logits, &alloc::vec![true; pairs.len()]);
        pairs.into_iter().zip(probs).collect()
    }

    fn action_set(&self, demo: usize, pair: (usize, usize), ev: &Evaluator<'_>, goal: &Goal) -> Option<BTreeSet<Action>> {
        match &self.demos[demo].lattice.edges[pair.0].steps[pair.1] {
            EdgeStep::Skip => None,
            EdgeStep::Step(z) => Some(ev.step(z, goal)),
        }
    }

    /// Runs one exploration episode from `start`. Fails only when no
    /// demonstration matches the goal.
    pub fn explore(&self, env: &Env, start: EnvState, rng: &mut ChaCha8Rng) -> Result<ExplorationTrace, WorkflowError> {
        let demo = self.select_demo(&start.goal, rng)?;
        let lattice = &self.demos[demo].lattice;
        let mut state = start;
        let mut node = 0;
        let mut decisions = Vec::new();
        let mut steps = Vec::new();
        while !state.done && node < lattice.len {
            let pairs = self.pairs(demo, node);
            let ev = Evaluator::new(&state.snapshot);
            let sets: Vec<Option<BTreeSet<Action>>> = pairs.iter().map(|&p| self.action_set(demo, p, &ev, &state.goal)).collect();
            let available: Vec<bool> = sets.iter().map(|s| s.as_ref().is_none_or(|s| !s.is_empty())).collect();
            if !available.iter().any(|a| *a) {
                break;
            }
            let logits: Vec<f64> = pairs.iter().map(|&(e, s)| self.psi[demo][e][s]).collect();
            let probs = softmax_masked(&logits, &available);
            let chosen = sample_index(rng, &probs);
            let next = lattice.edges[pairs[chosen].0].to;
            let action = sets[chosen].as_ref().map(|set| {
                let i = rng.gen_range(0..set.len());
                set.iter().nth(i).unwrap().clone()
            });
            let emit = pairs
                .iter()
                .zip(&sets)
                .map(|(&(e, _), set)| {
                    if lattice.edges[e].to != next {
                        return 0.0;
                    }
                    match (set, &action) {
                        (None, None) => 1.0,
                        (Some(set), Some(a)) if set.contains(a) => 1.0 / set.len() as f64,
                        _ => 0.0,
                    }
                })
                .collect();
            decisions.push(Decision { node, next, pairs, available, emit, chosen });
            if let Some(a) = action {
                let after = env.step(&state, &a).expect("not done");
                steps.push((state, a));
                state = after;
            }
            node = next;
        }
        Ok(ExplorationTrace { demo, decisions, rollout: Rollout { steps, last: state } })
    }

    /// `log Σ_z p(a|z,s) π_w(z|d,node)` for one recorded decision under the
    /// current logits.
    pub fn decision_log_prob(&self, demo: usize, d: &Decision) -> f64 {
        let logits: Vec<f64> = d.pairs.iter().map(|&(e, s)| self.psi[demo][e][s]).collect();
        let q = softmax_masked(&logits, &d.available);
        libm::log(q.iter().zip(&d.emit).map(|(q, w)| q * w).sum::<f64>())
    }

    /// Gradient of [`Self::decision_log_prob`] with respect to the logits
    /// of `d.pairs`.
    pub fn decision_grad(&self, demo: usize, d: &Decision) -> Vec<f64> {
        let logits: Vec<f64> = d.pairs.iter().map(|&(e, s)| self.psi[demo][e][s]).collect();
        let q = softmax_masked(&logits, &d.available);
        let p: f64 = q.iter().zip(&d.emit).map(|(q, w)| q * w).sum();
        q.iter().zip(&d.emit).map(|(q, w)| q * w / p - q).collect()
    }

    /// One REINFORCE step on a finished trace; baselines move towards the
    /// observed returns afterwards.
    pub fn reinforce_update(&mut self, trace: &ExplorationTrace) -> Result<(), WorkflowError> {
        let r = f64::from(trace.reward());
        let n = trace.decisions.len();
        let demo = trace.demo;
        let mut updates = Vec::with_capacity(n);
        for (t, d) in trace.decisions.iter().enumerate() {
            let g = libm::pow(self.config.gamma, (n - 1 - t) as f64) * r;
            let adv = g - self.baselines[demo][d.node];
            let grad = self.decision_grad(demo, d);
            if !adv.is_finite() || grad.iter().any(|x| !x.is_finite()) {
                return Err(WorkflowError::NonFinite { demo, node: d.node });
            }
            updates.push((d, g, adv, grad));
        }
        for (d, g, adv, grad) in updates {
            if adv != 0.0 {
                for (&(e, s), gr) in d.pairs.iter().zip(grad) {
                    self.psi[demo][e][s] += self.config.learning_rate * adv * gr;
                }
            }
            let v = &mut self.baselines[demo][d.node];
            *v += self.config.baseline_rate * (g - *v);
        }
        Ok(())
    }
}

/// Samples actions for a concrete step: uniform over `z(s)`.
pub fn sample_action(set: &BTreeSet<Action>, rng: &mut ChaCha8Rng) -> Option<Action> {
    if set.is_empty() {
        return None;
    }
    let i = rng.gen_range(0..set.len());
    set.iter().nth(i).cloned()
}

/// Drives the workflow policy as an agent on fresh episodes.
pub fn workflow_success_rate(policy: &WorkflowPolicy, env: &Env, seeds: impl IntoIterator<Item = u64>, rng: &mut ChaCha8Rng) -> f64 {
    let mut n = 0usize;
    let mut wins = 0usize;
    for seed in seeds {
        n += 1;
        if let Ok(t) = policy.explore(env, env.reset(seed), rng) {
            if t.reward() == 1 {
                wins += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        wins as f64 / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{ElemExpr, StepExpr};
    use crate::lattice::{EdgeKind, LatticeEdge};

    fn one_node(steps: Vec<StepExpr>) -> WorkflowPolicy {
        let lattice = WorkflowLattice {
            demo_id: "d".into(),
            len: 1,
            edges: alloc::vec![LatticeEdge {
                from: 0,
                to: 1,
                kind: EdgeKind::Base,
                steps: steps.into_iter().map(EdgeStep::Step).collect(),
            }],
        };
        WorkflowPolicy::new(alloc::vec![DemoLattice { goal: Goal::structured([("target", "x")]), lattice }], WorkflowConfig::default())
    }

    #[test]
    fn distribution_is_uniform_at_init_and_sums_to_one() {
        let p = one_node((0..4).map(|i| StepExpr::Click(ElemExpr::tag(&alloc::format!("t{i}")))).collect());
        let dist = p.step_distribution(0, 0);
        for (_, q) in &dist {
            assert!((q - 0.25).abs() < 1e-12);
        }
        assert!((dist.iter().map(|(_, q)| q).sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn update_raises_emitting_step_and_lowers_the_other() {
        let mut p = one_node(alloc::vec![StepExpr::Click(ElemExpr::tag("a")), StepExpr::Click(ElemExpr::tag("b"))]);
        let d = Decision {
            node: 0,
            next: 1,
            pairs: alloc::vec![(0, 0), (0, 1)],
            available: alloc::vec![true, true],
            emit: alloc::vec![1.0, 0.0],
            chosen: 0,
        };
        let grad = p.decision_grad(0, &d);
        assert!((grad[0] - 0.5).abs() < 1e-12 && (grad[1] + 0.5).abs() < 1e-12);
        let same = Decision { emit: alloc::vec![0.5, 0.5], ..d.clone() };
        assert!(p.decision_grad(0, &same).iter().all(|g| g.abs() < 1e-12));
        // reward equal to baseline leaves logits alone
        p.baselines[0][0] = 1.0;
        let trace = ExplorationTrace {
            demo: 0,
            decisions: alloc::vec![d],
            rollout: Rollout {
                steps: Vec::new(),
                last: EnvState {
                    task: "click-button",
                    seed: 0,
                    goal: Goal::default(),
                    snapshot: crate::dom::PageBuilder::new(crate::env::SCREEN).build().unwrap(),
                    step_index: 1,
                    done: true,
                    reward: 1,
                },
            },
        };
        p.reinforce_update(&trace).unwrap();
        assert_eq!(p.psi[0][0], [0.0, 0.0]);
    }

    #[test]
    fn unmatched_goal_is_an_error() {
        let p = one_node(alloc::vec![StepExpr::Click(ElemExpr::tag("a"))]);
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        assert_eq!(p.select_demo(&Goal::structured([("other", "x")]), &mut rng), Err(WorkflowError::NoMatchingDemo));
    }
}
