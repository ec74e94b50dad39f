//! Parameter-free preprocessing of a (page, goal) pair into index lists the
//! network consumes.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dom::{DomSnapshot, ElementId};
use crate::env::{run_episode, tasks::TASK_NAMES, words, Env, Goal, OraclePolicy, SCREEN_HEIGHT, SCREEN_WIDTH};
use crate::text::tokenize;

/// Number of scalar attributes per element.
pub const SCALARS: usize = 8;

/// Known words, tags and classes. Index 0 of every table is the unknown
/// bucket; known entries are sorted and start at 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pub words: Vec<String>,
    pub tags: Vec<String>,
    pub classes: Vec<String>,
}

fn sorted(set: BTreeSet<String>) -> Vec<String> {
    set.into_iter().collect()
}

fn lookup(table: &[String], s: &str) -> usize {
    table.binary_search_by(|w| w.as_str().cmp(s)).map_or(0, |i| i + 1)
}

impl Vocab {
    pub fn new(
        words: impl IntoIterator<Item = String>,
        tags: impl IntoIterator<Item = String>,
        classes: impl IntoIterator<Item = String>,
    ) -> Self {
        Self {
            words: sorted(words.into_iter().collect()),
            tags: sorted(tags.into_iter().collect()),
            classes: sorted(classes.into_iter().collect()),
        }
    }

    /// Generator word lists plus the tags and classes seen on expert
    /// episodes of every task.
    pub fn standard() -> Self {
        let mut tags = BTreeSet::new();
        let mut classes = BTreeSet::new();
        for name in TASK_NAMES {
            let env = Env::new(name).expect("registered");
            for seed in 0..24 {
                let rollout = run_episode(&env, &mut OraclePolicy, seed);
                let pages = rollout.steps.iter().map(|(s, _)| &s.snapshot).chain([&rollout.last.snapshot]);
                for page in pages {
                    for e in page.elements() {
                        tags.insert(e.tag.clone());
                        classes.extend(e.classes.iter().cloned());
                    }
                }
            }
        }
        Self::new(words::vocabulary(), tags, classes)
    }

    pub fn word(&self, w: &str) -> usize {
        lookup(&self.words, w)
    }

    pub fn tag(&self, t: &str) -> usize {
        lookup(&self.tags, t)
    }

    pub fn class(&self, c: &str) -> usize {
        lookup(&self.classes, c)
    }
}

/// The goal as the network sees it.
#[derive(Debug, Clone, PartialEq)]
pub enum GoalFeatures {
    /// One unit per key/value pair: the word ids of key and value, and the
    /// value itself as the string a `Type` would enter.
    Fields { units: Vec<Vec<usize>>, values: Vec<String> },
    /// Utterance word ids and the original tokens.
    Utterance { ids: Vec<usize>, tokens: Vec<String> },
}

impl GoalFeatures {
    pub fn unit_count(&self) -> usize {
        match self {
            GoalFeatures::Fields { units, .. } => units.len(),
            GoalFeatures::Utterance { ids, .. } => ids.len(),
        }
    }
}

/// Sparse `(row, index, weight)` entries.
pub type Entries = Vec<(usize, usize, f64)>;

/// Everything the network reads from one state.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    /// Element ids in document order; row `i` describes `elements[i]`.
    pub elements: Vec<ElementId>,
    /// Rows of the leaves, the elements an action can target.
    pub leaf_rows: Vec<usize>,
    pub can_type: Vec<bool>,
    pub tags: Vec<usize>,
    pub classes: Entries,
    /// Averaged text words; the constant coordinate is carried separately
    /// in `text_mass`.
    pub text_words: Entries,
    pub text_mass: Vec<f64>,
    pub scalars: Vec<[f64; SCALARS]>,
    /// `(element, neighbor, 1)` for the spatial neighborhood sum.
    pub spatial: Entries,
    /// Tree neighbors per configured depth.
    pub tree: Vec<Vec<Vec<usize>>>,
    /// Element words that also occur in the goal.
    pub matches: Entries,
    pub match_mass: Vec<f64>,
    pub goal: GoalFeatures,
}

impl Features {
    pub fn new(snapshot: &DomSnapshot, goal: &Goal, vocab: &Vocab, tree_depths: &[u32], near_radius: f64) -> Self {
        let elements: Vec<ElementId> = snapshot.preorder().to_vec();
        let row: BTreeMap<ElementId, usize> = elements.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let goal_words = goal_words(goal);

        let mut f = Features {
            elements: elements.clone(),
            leaf_rows: Vec::new(),
            can_type: Vec::new(),
            tags: Vec::new(),
            classes: Vec::new(),
            text_words: Vec::new(),
            text_mass: Vec::new(),
            scalars: Vec::new(),
            spatial: Vec::new(),
            tree: alloc::vec![Vec::new(); tree_depths.len()],
            matches: Vec::new(),
            match_mass: Vec::new(),
            goal: goal_features(goal, vocab),
        };
        for (i, &id) in elements.iter().enumerate() {
            let e = snapshot.get(id).expect("preorder ids exist");
            if e.is_leaf() {
                f.leaf_rows.push(i);
                f.can_type.push(e.is_text_input());
            }
            f.tags.push(vocab.tag(&e.tag));
            f.classes.extend(e.classes.iter().map(|c| (i, vocab.class(c), 1.0)));

            let tokens = tokenize(&e.text);
            let w = 1.0 / tokens.len().max(1) as f64;
            f.text_words.extend(tokens.iter().map(|t| (i, vocab.word(t), w)));
            f.text_mass.push(if tokens.is_empty() { 0.0 } else { 1.0 });

            let overlap: BTreeSet<&String> = tokens.iter().filter(|t| goal_words.contains(*t)).collect();
            f.matches.extend(overlap.iter().map(|t| (i, vocab.word(t), 1.0)));
            f.match_mass.push(overlap.len() as f64);

            f.scalars.push([
                f64::from(u8::from(e.checked)),
                f64::from(u8::from(e.focused)),
                f64::from(u8::from(!e.value.is_empty())),
                f64::from(u8::from(e.is_leaf())),
                e.left / SCREEN_WIDTH,
                e.top / SCREEN_HEIGHT,
                e.width / SCREEN_WIDTH,
                e.height / SCREEN_HEIGHT,
            ]);

            for n in snapshot.spatial_neighbors(id, near_radius).expect("known id") {
                f.spatial.push((i, row[&n], 1.0));
            }
            for (slot, &k) in tree_depths.iter().enumerate() {
                let group = snapshot.tree_neighbors(id, k).expect("known id").iter().map(|n| row[n]).collect();
                f.tree[slot].push(group);
            }
        }
        f
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_rows.len()
    }

    /// Position of `id` among the leaves.
    pub fn leaf_index(&self, id: ElementId) -> Option<usize> {
        self.leaf_rows.iter().position(|&r| self.elements[r] == id)
    }

    pub fn leaf_id(&self, leaf: usize) -> ElementId {
        self.elements[self.leaf_rows[leaf]]
    }
}

/// Lowercased word tokens of every key, value and utterance token.
pub fn goal_words(goal: &Goal) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for (k, v) in &goal.fields {
        out.extend(tokenize(k));
        out.extend(tokenize(v));
    }
    if let Some(u) = &goal.utterance {
        for t in u {
            out.extend(tokenize(t));
        }
    }
    out
}

fn goal_features(goal: &Goal, vocab: &Vocab) -> GoalFeatures {
    match &goal.utterance {
        Some(tokens) => {
            GoalFeatures::Utterance { ids: tokens.iter().map(|t| vocab.word(&t.to_lowercase())).collect(), tokens: tokens.clone() }
        }
        None => {
            let mut units = Vec::new();
            let mut values = Vec::new();
            for (k, v) in &goal.fields {
                let ids = tokenize(k).iter().chain(tokenize(v).iter()).map(|w| vocab.word(w)).collect();
                units.push(ids);
                values.push(v.to_string());
            }
            GoalFeatures::Fields { units, values }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_vocab_covers_generated_pages() {
        let v = Vocab::standard();
        assert!(v.tag("input_checkbox") > 0);
        assert!(v.class("email-forward") > 0);
        assert!(v.word("krista") > 0);
        assert_eq!(v.word("no-such-word"), 0);
    }

    #[test]
    fn leaves_and_typing_flags() {
        let env = Env::new("login-user").unwrap();
        let s = env.reset(1);
        let f = Features::new(&s.snapshot, &s.goal, &Vocab::standard(), &[3, 4, 5, 6], 30.0);
        assert_eq!(f.leaf_count(), s.snapshot.leaves().len());
        assert_eq!(f.can_type.iter().filter(|t| **t).count(), 2);
        for (leaf, &r) in f.leaf_rows.iter().enumerate() {
            assert_eq!(f.leaf_index(f.elements[r]), Some(leaf));
        }
    }
}
