//! Losses and updates: A2C on own rollouts, clamped-advantage updates on
//! replayed successes, and behavioral cloning.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{DomNet, Features};
use crate::env::Action;
use crate::nn::{Adam, Grads, Graph, ParamStore, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    /// From the current policy: full actor-critic loss.
    OnPolicy,
    /// From the replay buffer: policy term with a non-negative advantage.
    Replay,
    /// From a demonstration: negative log-likelihood only.
    Imitation,
}

/// One state/action pair with its discounted return.
#[derive(Debug, Clone)]
pub struct TrainStep {
    pub features: Features,
    pub action: Action,
    pub ret: f64,
    pub kind: StepKind,
    /// Overrides the critic-based advantage; gradients then treat it as a
    /// constant, which is what finite-difference checks need.
    pub advantage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NeuralError {
    #[error("non-finite loss {loss} at batch step {step}")]
    NonFinite { loss: f64, step: usize },
    #[error("no trainable steps in batch")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub loss: f64,
    pub grad_norm: f64,
    pub steps: usize,
}

/// Turns an episode into training steps with `G_t = γ^(T-1-t) · R`.
pub fn episode_steps(gamma: f64, episode: &[(Features, Action)], reward: f64, kind: StepKind) -> Vec<TrainStep> {
    let n = episode.len();
    episode
        .iter()
        .enumerate()
        .map(|(t, (f, a))| TrainStep {
            features: f.clone(),
            action: a.clone(),
            ret: libm::pow(gamma, (n - 1 - t) as f64) * reward,
            kind,
            advantage: None,
        })
        .collect()
}

impl DomNet {
    /// Loss of one step, or `None` when the action is outside what the
    /// network can produce.
    pub fn step_loss(&self, g: &mut Graph, step: &TrainStep) -> Option<Var> {
        let f = &step.features;
        if f.leaf_count() == 0 {
            return None;
        }
        let enc = self.encode(g, f);
        let (lp, entropy) = self.log_prob(g, &enc, f, &step.action)?;
        if step.kind == StepKind::Imitation {
            return Some(g.scale(lp, -1.0));
        }
        let v = g.scalar_of(enc.value);
        let advantage = match (step.advantage, step.kind) {
            (Some(a), _) => a,
            (None, StepKind::Replay) => (step.ret - v).max(0.0),
            (None, _) => step.ret - v,
        };
        let policy = g.scale(lp, -advantage);
        let bonus = g.scale(entropy, -self.config.entropy_coef);
        let mut loss = g.add(policy, bonus);
        if step.kind == StepKind::OnPolicy {
            let diff = g.affine(enc.value, -1.0, step.ret);
            let sq = g.mul(diff, diff);
            let sq = g.scale(sq, self.config.value_coef);
            loss = g.add(loss, sq);
        }
        Some(loss)
    }

    /// Mean loss over the usable steps and its gradient.
    pub fn batch_gradients(&self, steps: &[TrainStep]) -> Result<(Grads, f64, usize), NeuralError> {
        let mut grads = Grads::zeros_like(&self.params);
        let mut total = 0.0;
        let mut used = 0;
        for (i, step) in steps.iter().enumerate() {
            let mut g = Graph::new(&self.params);
            let Some(loss) = self.step_loss(&mut g, step) else { continue };
            let l = g.scalar_of(loss);
            if !l.is_finite() {
                return Err(NeuralError::NonFinite { loss: l, step: i });
            }
            total += l;
            used += 1;
            grads.accumulate(&g.backward(loss));
        }
        if used == 0 {
            return Err(NeuralError::Empty);
        }
        grads.scale(1.0 / used as f64);
        Ok((grads, total / used as f64, used))
    }

    /// Mean loss without gradients.
    pub fn batch_loss(&self, steps: &[TrainStep]) -> f64 {
        let mut total = 0.0;
        let mut used = 0;
        for step in steps {
            let mut g = Graph::new(&self.params);
            if let Some(loss) = self.step_loss(&mut g, step) {
                total += g.scalar_of(loss);
                used += 1;
            }
        }
        if used == 0 {
            0.0
        } else {
            total / used as f64
        }
    }

    /// One optimizer step on the mean loss of `steps`.
    pub fn update(&mut self, opt: &mut Adam, steps: &[TrainStep]) -> Result<UpdateStats, NeuralError> {
        let (grads, loss, used) = self.batch_gradients(steps)?;
        let grad_norm = opt.step(&mut self.params, &grads);
        Ok(UpdateStats { loss, grad_norm, steps: used })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BcConfig {
    pub epochs: usize,
    pub batch: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for BcConfig {
    fn default() -> Self {
        Self { epochs: 40, batch: 8, patience: 8, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BcReport {
    pub epochs_run: usize,
    /// Epoch whose parameters were kept; 0 means the initial ones.
    pub best_epoch: usize,
    pub best_validation: f64,
    pub losses: Vec<f64>,
    pub validation: Vec<f64>,
}

/// Maximizes the likelihood of demonstrated actions, keeping the
/// parameters with the best `validate` score.
pub fn bc_pretrain(
    net: &mut DomNet,
    opt: &mut Adam,
    demos: &[Vec<(Features, Action)>],
    config: &BcConfig,
    mut validate: impl FnMut(&DomNet) -> f64,
) -> BcReport {
    let mut steps: Vec<TrainStep> = demos.iter().flat_map(|d| episode_steps(1.0, d, 1.0, StepKind::Imitation)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut report = BcReport { epochs_run: 0, best_epoch: 0, best_validation: 0.0, losses: Vec::new(), validation: Vec::new() };
    if config.epochs == 0 || steps.is_empty() {
        return report;
    }
    report.best_validation = validate(net);
    let mut best: ParamStore = net.params.clone();
    let mut since = 0;
    for epoch in 1..=config.epochs {
        steps.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0;
        for chunk in steps.chunks(config.batch.max(1)) {
            if let Ok(stats) = net.update(opt, chunk) {
                sum += stats.loss;
                batches += 1;
            }
        }
        report.losses.push(if batches == 0 { 0.0 } else { sum / batches as f64 });
        let score = validate(net);
        report.validation.push(score);
        report.epochs_run = epoch;
        if score > report.best_validation {
            report.best_validation = score;
            report.best_epoch = epoch;
            best = net.params.clone();
            since = 0;
        } else {
            since += 1;
            if since >= config.patience {
                break;
            }
        }
    }
    net.params = best;
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domnet::{NeuralConfig, Vocab};
    use crate::env::{run_episode, Env, OraclePolicy};

    fn net() -> DomNet {
        DomNet::new(NeuralConfig { dim: 8, hidden: 12, ..NeuralConfig::default() }, Vocab::standard())
    }

    fn oracle_episode(net: &DomNet, task: &str, seed: u64) -> Vec<(Features, Action)> {
        let env = Env::new(task).unwrap();
        let r = run_episode(&env, &mut OraclePolicy, seed);
        r.steps.iter().map(|(s, a)| (net.features(&s.snapshot, &s.goal), a.clone())).collect()
    }

    #[test]
    fn zero_advantage_moves_only_the_critic() {
        let n = net();
        let ep = oracle_episode(&n, "login-user", 2);
        let mut steps = episode_steps(0.99, &ep, 1.0, StepKind::OnPolicy);
        for s in &mut steps {
            s.advantage = Some(0.0);
        }
        let mut n0 = n.clone();
        n0.config.entropy_coef = 0.0;
        let (grads, _, _) = n0.batch_gradients(&steps).unwrap();
        for id in n0.params.ids() {
            let name = n0.params.name(id);
            let touched = grads.get(id).is_some_and(|t| t.data().iter().any(|x| *x != 0.0));
            if name.starts_with("kind")
                || name.starts_with("string")
                || name.starts_with("element_head")
                || name.starts_with("ratio")
                || name.starts_with("select")
            {
                assert!(!touched, "{name} moved");
            }
        }
        assert!(grads.get(n0.params.id("value.w2")).is_some_and(|t| t.norm_sq() > 0.0));
    }

    #[test]
    fn repeated_updates_raise_the_episode_likelihood() {
        let mut n = net();
        let ep = oracle_episode(&n, "login-user", 5);
        let steps = episode_steps(1.0, &ep, 1.0, StepKind::Imitation);
        let mut opt = Adam::new(&n.params, 1e-2, 5.0);
        let mut last = n.batch_loss(&steps);
        for _ in 0..20 {
            n.update(&mut opt, &steps).unwrap();
            let now = n.batch_loss(&steps);
            assert!(now < last, "{now} >= {last}");
            last = now;
        }
    }

    #[test]
    fn zero_bc_epochs_leave_parameters_alone() {
        let mut n = net();
        let before = n.params.clone();
        let ep = oracle_episode(&n, "click-button", 0);
        let mut opt = Adam::new(&n.params, 1e-2, 5.0);
        let report = bc_pretrain(&mut n, &mut opt, &[ep], &BcConfig { epochs: 0, ..BcConfig::default() }, |_| 0.0);
        assert_eq!(report.epochs_run, 0);
        for id in n.params.ids() {
            assert_eq!(n.params.get(id), before.get(id));
        }
    }
}
