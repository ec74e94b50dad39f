//! The neural DOM policy π_n and its critic.
//!
//! Elements are embedded from their own attributes, their spatial and tree
//! neighborhoods and their overlap with the goal. A max-pooled query attends
//! over the elements to form a page context, two goal-attention heads with a
//! learned NULL key read the goal, and two element heads mixed by a learned
//! ratio choose the target. The action kind and the typed string are chosen
//! from the goal contexts together with the chosen element.

mod features;
mod train;

use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dom::{DomSnapshot, ElementId};
use crate::env::{span_text, Action, Env, EnvState, Goal, Policy};
use crate::nn::{Graph, ParamId, ParamStore, Tensor, Var};

pub use features::{goal_words, Entries, Features, GoalFeatures, Vocab, SCALARS};
pub use train::{bc_pretrain, episode_steps, BcConfig, BcReport, NeuralError, StepKind, TrainStep, UpdateStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralConfig {
    /// Word, tag, class and goal-unit width.
    pub dim: usize,
    pub hidden: usize,
    pub tree_depths: Vec<u32>,
    pub near_radius: f64,
    pub learning_rate: f64,
    pub grad_clip: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub gamma: f64,
    pub seed: u64,
}

impl Default for NeuralConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            hidden: 64,
            tree_depths: alloc::vec![3, 4, 5, 6],
            near_radius: crate::dom::NEAR_RADIUS,
            learning_rate: 1e-3,
            grad_clip: 5.0,
            value_coef: 0.5,
            entropy_coef: 0.01,
            gamma: 0.99,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
struct Ids {
    word: ParamId,
    tag: ParamId,
    class: ParamId,
    tree_w: ParamId,
    tree_b: ParamId,
    proj_w: ParamId,
    proj_b: ParamId,
    att: ParamId,
    goal_query: [ParamId; 2],
    null: ParamId,
    element_head: [ParamId; 2],
    ratio_w: ParamId,
    ratio_b: ParamId,
    z_h: ParamId,
    z_g: ParamId,
    z_b: ParamId,
    kind_w: ParamId,
    kind_b: ParamId,
    field_w: ParamId,
    start_w: ParamId,
    end_w: ParamId,
    lstm_x: ParamId,
    lstm_h: ParamId,
    lstm_b: ParamId,
    value_w1: ParamId,
    value_b1: ParamId,
    value_w2: ParamId,
    value_b2: ParamId,
}

/// DOMNet: parameters plus the vocabulary they are indexed by.
#[derive(Debug, Clone)]
pub struct DomNet {
    pub config: NeuralConfig,
    pub vocab: Vocab,
    pub params: ParamStore,
    ids: Ids,
}

/// Graph handles for one encoded state.
pub struct Encoded {
    pub v_dom: Var,
    /// Per-leaf hidden vectors, `leaves × hidden`.
    pub hidden: Var,
    /// Goal units, `units × dim`, absent for an empty goal.
    pub units: Option<Var>,
    /// Attention over leaves for the page context, `leaves × 1`.
    pub dom_attention: Var,
    /// The two goal-attention weight vectors over units plus NULL.
    pub goal_attention: [Var; 2],
    /// Both goal contexts side by side, `1 × 2·dim`.
    pub contexts: Var,
    /// Mixed element distribution, `leaves × 1`.
    pub element_probs: Var,
    pub ratio: Var,
    pub value: Var,
}

/// Distribution over the typed string for one chosen element.
#[derive(Debug, Clone, PartialEq)]
pub enum StringDist {
    Fields(Vec<f64>),
    Span { start: Vec<f64>, end: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StringHead {
    Fields(Var),
    Span { start: Var, end: Var },
}

/// Per-element heads for one leaf.
pub struct Heads {
    /// `[click, type]` probabilities.
    pub kind: Var,
    pub string: Option<StringHead>,
}

/// Numeric outputs of a full forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub leaves: Vec<ElementId>,
    pub element_dist: Vec<f64>,
    /// `[click, type]` for each leaf.
    pub type_dists: Vec<[f64; 2]>,
    /// String distribution for each leaf; `None` where typing is masked.
    pub string_dists: Vec<Option<StringDist>>,
    pub value: f64,
}

impl DomNet {
    pub fn new(config: NeuralConfig, vocab: Vocab) -> Self {
        let (d, h) = (config.dim, config.hidden);
        let base = 3 * d + SCALARS;
        let dom = 2 * base + config.tree_depths.len() * d + d;
        let trees = config.tree_depths.len() * d;
        let mut p = ParamStore::new(config.seed);
        let ids = Ids {
            word: p.add_uniform("embed.word", vocab.words.len() + 1, d - 1, 0.5),
            tag: p.add_uniform("embed.tag", vocab.tags.len() + 1, d, 0.5),
            class: p.add_uniform("embed.class", vocab.classes.len() + 1, d, 0.5),
            tree_w: p.add_weight("tree.w", base, trees),
            tree_b: p.add_zeros("tree.b", 1, trees),
            proj_w: p.add_weight("proj.w", dom, h),
            proj_b: p.add_zeros("proj.b", 1, h),
            att: p.add_weight("dom_attention.w", h, h),
            goal_query: [p.add_weight("goal_attention0.w", h, d), p.add_weight("goal_attention1.w", h, d)],
            null: p.add_uniform("goal_attention.null", 1, d, 0.5),
            element_head: [p.add_weight("element_head0.w", d, h), p.add_weight("element_head1.w", d, h)],
            ratio_w: p.add_weight("ratio.w", 2 * d, 1),
            ratio_b: p.add_zeros("ratio.b", 1, 1),
            z_h: p.add_weight("select.wh", h, h),
            z_g: p.add_weight("select.wg", 2 * d, h),
            z_b: p.add_zeros("select.b", 1, h),
            kind_w: p.add_weight("kind.w", h, 2),
            kind_b: p.add_zeros("kind.b", 1, 2),
            field_w: p.add_weight("string.field.w", h, d),
            start_w: p.add_weight("string.start.w", h, d),
            end_w: p.add_weight("string.end.w", h, d),
            lstm_x: p.add_weight("lstm.wx", d, 4 * d),
            lstm_h: p.add_weight("lstm.wh", d, 4 * d),
            lstm_b: p.add_zeros("lstm.b", 1, 4 * d),
            value_w1: p.add_weight("value.w1", h + 2 * d, h),
            value_b1: p.add_zeros("value.b1", 1, h),
            value_w2: p.add_weight("value.w2", h, 1),
            value_b2: p.add_zeros("value.b2", 1, 1),
        };
        Self { config, vocab, params: p, ids }
    }

    /// Rebuilds a network around stored parameters, checking every name and
    /// shape against a freshly initialized one.
    pub fn with_params(
        config: NeuralConfig,
        vocab: Vocab,
        tensors: &[(alloc::string::String, Tensor)],
    ) -> Result<Self, alloc::string::String> {
        let mut net = Self::new(config, vocab);
        if tensors.len() != net.params.len() {
            return Err(alloc::format!("expected {} tensors, found {}", net.params.len(), tensors.len()));
        }
        for (name, t) in tensors {
            let id = net.params.find(name).ok_or_else(|| alloc::format!("unknown tensor {name}"))?;
            if net.params.get(id).shape() != t.shape() {
                return Err(alloc::format!("tensor {name}: shape {:?}, expected {:?}", t.shape(), net.params.get(id).shape()));
            }
            *net.params.get_mut(id) = t.clone();
        }
        Ok(net)
    }

    pub fn features(&self, snapshot: &DomSnapshot, goal: &Goal) -> Features {
        Features::new(snapshot, goal, &self.vocab, &self.config.tree_depths, self.config.near_radius)
    }

    /// Width of the per-element attribute embedding.
    pub fn base_dim(&self) -> usize {
        3 * self.config.dim + SCALARS
    }

    /// Width of `[v_base; v_spatial; v_tree; v_match]`.
    pub fn dom_dim(&self) -> usize {
        2 * self.base_dim() + self.config.tree_depths.len() * self.config.dim + self.config.dim
    }

    /// Word embeddings `[mass; trainable]` for sparse word entries.
    fn words(&self, g: &mut Graph, word: Var, rows: usize, entries: &Entries, mass: &[f64]) -> Var {
        let looked = g.sparse(word, rows, entries.clone());
        let c = g.constant(Tensor::from_vec(rows, 1, mass.to_vec()));
        g.hcat(&[c, looked])
    }

    /// Goal units: summed key/value word embeddings, or LSTM states over an
    /// utterance.
    pub fn embed_goal(&self, g: &mut Graph, word: Var, goal: &GoalFeatures) -> Option<Var> {
        let d = self.config.dim;
        match goal {
            GoalFeatures::Fields { units, .. } => {
                if units.is_empty() {
                    return None;
                }
                let entries: Entries = units.iter().enumerate().flat_map(|(u, ids)| ids.iter().map(move |&w| (u, w, 1.0))).collect();
                let mass: Vec<f64> = units.iter().map(|ids| ids.len() as f64).collect();
                Some(self.words(g, word, units.len(), &entries, &mass))
            }
            GoalFeatures::Utterance { ids, .. } => {
                if ids.is_empty() {
                    return None;
                }
                let entries: Entries = ids.iter().enumerate().map(|(t, &w)| (t, w, 1.0)).collect();
                let x = self.words(g, word, ids.len(), &entries, &alloc::vec![1.0; ids.len()]);
                let wx = g.param(self.ids.lstm_x);
                let wh = g.param(self.ids.lstm_h);
                let b = g.param(self.ids.lstm_b);
                let xw = g.matmul(x, wx);
                let xw = g.add_row(xw, b);
                let mut h = g.constant(Tensor::zeros(1, d));
                let mut c = g.constant(Tensor::zeros(1, d));
                let mut states = Vec::with_capacity(ids.len());
                for t in 0..ids.len() {
                    let xt = g.gather(xw, &[t]);
                    let hw = g.matmul(h, wh);
                    let gates = g.add(xt, hw);
                    let i = g.col_slice(gates, 0, d);
                    let i = g.sigmoid(i);
                    let f = g.col_slice(gates, d, d);
                    let f = g.sigmoid(f);
                    let o = g.col_slice(gates, 2 * d, d);
                    let o = g.sigmoid(o);
                    let u = g.col_slice(gates, 3 * d, d);
                    let u = g.tanh(u);
                    let keep = g.mul(f, c);
                    let write = g.mul(i, u);
                    c = g.add(keep, write);
                    let tc = g.tanh(c);
                    h = g.mul(o, tc);
                    states.push(h);
                }
                Some(g.vcat(&states))
            }
        }
    }

    /// `v_DOM` for every element, in document order.
    pub fn embed_dom(&self, g: &mut Graph, word: Var, f: &Features) -> Var {
        let n = f.len();
        let d = self.config.dim;
        let tag = g.param(self.ids.tag);
        let class = g.param(self.ids.class);
        let tag_rows = g.gather(tag, &f.tags);
        let class_sum = g.sparse(class, n, f.classes.clone());
        let text = self.words(g, word, n, &f.text_words, &f.text_mass);
        let scalars = g.constant(Tensor::from_vec(n, SCALARS, f.scalars.iter().flatten().copied().collect()));
        let base = g.hcat(&[tag_rows, class_sum, text, scalars]);

        let spatial = g.sparse(base, n, f.spatial.clone());

        let tw = g.param(self.ids.tree_w);
        let tb = g.param(self.ids.tree_b);
        let mapped = g.matmul(base, tw);
        let mapped = g.add_row(mapped, tb);
        let mut parts = alloc::vec![base, spatial];
        for (slot, groups) in f.tree.iter().enumerate() {
            let m = g.col_slice(mapped, slot * d, d);
            parts.push(g.segment_max(m, groups));
        }
        parts.push(self.words(g, word, n, &f.matches, &f.match_mass));
        g.hcat(&parts)
    }

    /// Runs every stage up to the element distribution and the critic.
    pub fn encode(&self, g: &mut Graph, f: &Features) -> Encoded {
        assert!(f.leaf_count() > 0, "a state needs at least one leaf");
        let word = g.param(self.ids.word);
        let v_dom = self.embed_dom(g, word, f);
        let leaf_dom = g.gather(v_dom, &f.leaf_rows);
        let pw = g.param(self.ids.proj_w);
        let pb = g.param(self.ids.proj_b);
        let hidden = g.matmul(leaf_dom, pw);
        let hidden = g.add_row(hidden, pb);
        let hidden = g.tanh(hidden);

        let query = g.max_rows(hidden);
        let att = g.param(self.ids.att);
        let query = g.matmul(query, att);
        let query_t = g.transpose(query);
        let scores = g.matmul(hidden, query_t);
        let dom_attention = g.softmax(scores, None);
        let alpha_t = g.transpose(dom_attention);
        let dom_context = g.matmul(alpha_t, hidden);

        let units = self.embed_goal(g, word, &f.goal);
        let null = g.param(self.ids.null);
        let keys = match units {
            Some(u) => g.vcat(&[u, null]),
            None => null,
        };
        let mut contexts = [dom_context; 2];
        let mut goal_attention = [dom_context; 2];
        for i in 0..2 {
            let wq = g.param(self.ids.goal_query[i]);
            let q = g.matmul(dom_context, wq);
            let q_t = g.transpose(q);
            let s = g.matmul(keys, q_t);
            let beta = g.softmax(s, None);
            let beta_t = g.transpose(beta);
            goal_attention[i] = beta;
            contexts[i] = g.matmul(beta_t, keys);
        }
        let both = g.hcat(&contexts);

        let mut heads = [dom_context; 2];
        for i in 0..2 {
            let w = g.param(self.ids.element_head[i]);
            let k = g.matmul(contexts[i], w);
            let k_t = g.transpose(k);
            let s = g.matmul(hidden, k_t);
            heads[i] = g.softmax(s, None);
        }
        let rw = g.param(self.ids.ratio_w);
        let rb = g.param(self.ids.ratio_b);
        let r = g.matmul(both, rw);
        let r = g.add(r, rb);
        let ratio = g.sigmoid(r);
        let rest = g.affine(ratio, -1.0, 1.0);
        let a = g.scale_by(heads[0], ratio);
        let b = g.scale_by(heads[1], rest);
        let element_probs = g.add(a, b);

        let vin = g.hcat(&[dom_context, both]);
        let w1 = g.param(self.ids.value_w1);
        let b1 = g.param(self.ids.value_b1);
        let w2 = g.param(self.ids.value_w2);
        let b2 = g.param(self.ids.value_b2);
        let hv = g.matmul(vin, w1);
        let hv = g.add_row(hv, b1);
        let hv = g.tanh(hv);
        let value = g.matmul(hv, w2);
        let value = g.add(value, b2);

        Encoded { v_dom, hidden, units, dom_attention, goal_attention, contexts: both, element_probs, ratio, value }
    }

    /// Action-kind and string heads conditioned on one leaf.
    pub fn heads(&self, g: &mut Graph, enc: &Encoded, f: &Features, leaf: usize) -> Heads {
        let h = g.gather(enc.hidden, &[leaf]);
        let wh = g.param(self.ids.z_h);
        let wg = g.param(self.ids.z_g);
        let b = g.param(self.ids.z_b);
        let zh = g.matmul(h, wh);
        let zg = g.matmul(enc.contexts, wg);
        let z = g.add(zh, zg);
        let z = g.add(z, b);
        let z = g.tanh(z);

        let can_type = f.can_type[leaf] && enc.units.is_some();
        let kw = g.param(self.ids.kind_w);
        let kb = g.param(self.ids.kind_b);
        let logits = g.matmul(z, kw);
        let logits = g.add(logits, kb);
        let kind = g.softmax(logits, Some(&[true, can_type]));

        let string = match (can_type, enc.units, &f.goal) {
            (true, Some(units), GoalFeatures::Fields { .. }) => Some(StringHead::Fields(self.unit_softmax(g, z, units, self.ids.field_w))),
            (true, Some(units), GoalFeatures::Utterance { .. }) => Some(StringHead::Span {
                start: self.unit_softmax(g, z, units, self.ids.start_w),
                end: self.unit_softmax(g, z, units, self.ids.end_w),
            }),
            _ => None,
        };
        Heads { kind, string }
    }

    fn unit_softmax(&self, g: &mut Graph, z: Var, units: Var, w: ParamId) -> Var {
        let w = g.param(w);
        let q = g.matmul(z, w);
        let q_t = g.transpose(q);
        let s = g.matmul(units, q_t);
        g.softmax(s, None)
    }

    /// Numeric outputs for every leaf.
    pub fn forward(&self, f: &Features) -> PolicyOutput {
        let mut g = Graph::new(&self.params);
        let enc = self.encode(&mut g, f);
        let mut type_dists = Vec::new();
        let mut string_dists = Vec::new();
        for leaf in 0..f.leaf_count() {
            let heads = self.heads(&mut g, &enc, f, leaf);
            let k = g.value(heads.kind).data();
            type_dists.push([k[0], k[1]]);
            string_dists.push(heads.string.map(|s| match s {
                StringHead::Fields(p) => StringDist::Fields(g.value(p).data().to_vec()),
                StringHead::Span { start, end } => {
                    StringDist::Span { start: g.value(start).data().to_vec(), end: g.value(end).data().to_vec() }
                }
            }));
        }
        PolicyOutput {
            leaves: (0..f.leaf_count()).map(|l| f.leaf_id(l)).collect(),
            element_dist: g.value(enc.element_probs).data().to_vec(),
            type_dists,
            string_dists,
            value: g.scalar_of(enc.value),
        }
    }

    /// Critic estimate for one state.
    pub fn value(&self, f: &Features) -> f64 {
        let mut g = Graph::new(&self.params);
        let enc = self.encode(&mut g, f);
        g.scalar_of(enc.value)
    }

    /// Samples an action, or takes the most likely one when `rng` is `None`.
    pub fn act(&self, f: &Features, rng: Option<&mut ChaCha8Rng>) -> Action {
        let mut g = Graph::new(&self.params);
        let enc = self.encode(&mut g, f);
        let mut rng = rng;
        let mut choose = |p: &[f64]| match rng.as_deref_mut() {
            Some(r) => sample_index(p, r),
            None => argmax(p),
        };
        let leaf = choose(g.value(enc.element_probs).data());
        let heads = self.heads(&mut g, &enc, f, leaf);
        let id = f.leaf_id(leaf);
        if choose(g.value(heads.kind).data()) == 0 {
            return Action::Click(id);
        }
        let text = match (heads.string.expect("typing is only allowed with a string head"), &f.goal) {
            (StringHead::Fields(p), GoalFeatures::Fields { values, .. }) => values[choose(g.value(p).data())].clone(),
            (StringHead::Span { start, end }, GoalFeatures::Utterance { tokens, .. }) => {
                let s = choose(g.value(start).data());
                let e = choose(g.value(end).data());
                span_text(tokens, s.min(e), s.max(e))
            }
            _ => unreachable!("head kind follows the goal kind"),
        };
        Action::Type(id, text)
    }

    /// Log-probability of `action` and the entropy of the distributions
    /// along its path. `None` when the network cannot produce the action.
    pub fn log_prob(&self, g: &mut Graph, enc: &Encoded, f: &Features, action: &Action) -> Option<(Var, Var)> {
        let leaf = f.leaf_index(action.element())?;
        let heads = self.heads(g, enc, f, leaf);
        let pe = g.pick(enc.element_probs, leaf);
        let mut terms = alloc::vec![g.log(pe)];
        let mut entropies = alloc::vec![g.entropy(enc.element_probs), g.entropy(heads.kind)];
        match action {
            Action::Click(_) => {
                let pk = g.pick(heads.kind, 0);
                terms.push(g.log(pk));
            }
            Action::Type(_, text) => {
                if g.value(heads.kind).data()[1] <= 0.0 {
                    return None;
                }
                let pk = g.pick(heads.kind, 1);
                terms.push(g.log(pk));
                let ps = match (heads.string?, &f.goal) {
                    (StringHead::Fields(p), GoalFeatures::Fields { values, .. }) => {
                        entropies.push(g.entropy(p));
                        let picks: Vec<Var> = values.iter().enumerate().filter(|(_, v)| *v == text).map(|(j, _)| g.pick(p, j)).collect();
                        if picks.is_empty() {
                            return None;
                        }
                        g.sum_all(&picks)
                    }
                    (StringHead::Span { start, end }, GoalFeatures::Utterance { tokens, .. }) => {
                        entropies.push(g.entropy(start));
                        entropies.push(g.entropy(end));
                        let mut parts = Vec::new();
                        for i in 0..tokens.len() {
                            for j in i..tokens.len() {
                                if span_text(tokens, i, j) != *text {
                                    continue;
                                }
                                let (si, ej) = (g.pick(start, i), g.pick(end, j));
                                parts.push(g.mul(si, ej));
                                if i != j {
                                    let (sj, ei) = (g.pick(start, j), g.pick(end, i));
                                    parts.push(g.mul(sj, ei));
                                }
                            }
                        }
                        if parts.is_empty() {
                            return None;
                        }
                        g.sum_all(&parts)
                    }
                    _ => return None,
                };
                terms.push(g.log(ps));
            }
        }
        Some((g.sum_all(&terms), g.sum_all(&entropies)))
    }

    /// Probability of `action` in the state described by `f`.
    pub fn action_prob(&self, f: &Features, action: &Action) -> f64 {
        let mut g = Graph::new(&self.params);
        let enc = self.encode(&mut g, f);
        self.log_prob(&mut g, &enc, f, action).map_or(0.0, |(lp, _)| libm::exp(g.scalar_of(lp)))
    }
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in p.iter().enumerate() {
        if x > p[best] {
            best = i;
        }
    }
    best
}

/// Draws an index with probability proportional to `p`.
pub fn sample_index(p: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = p.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, &x) in p.iter().enumerate() {
        if u < x {
            return i;
        }
        u -= x;
    }
    p.iter().rposition(|&x| x > 0.0).unwrap_or(0)
}

/// π_n as an environment policy: sampling with an RNG, greedy without.
pub struct NeuralPolicy<'a> {
    pub net: &'a DomNet,
    pub rng: Option<ChaCha8Rng>,
}

impl Policy for NeuralPolicy<'_> {
    fn act(&mut self, _env: &Env, state: &EnvState) -> Option<Action> {
        let f = self.net.features(&state.snapshot, &state.goal);
        if f.leaf_count() == 0 {
            return None;
        }
        Some(self.net.act(&f, self.rng.as_mut()))
    }
}
