use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use super::{ElemExpr, StepExpr, StrExpr};
use crate::dom::{DomSnapshot, ElementId, NEAR_RADIUS};
use crate::env::{Action, Goal};
use crate::text::normalize;

/// Fixed-width set over the dense element indices of one snapshot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub(crate) struct Bits(Vec<u64>);

impl Bits {
    pub(crate) fn empty(n: usize) -> Self {
        Bits(alloc::vec![0; n.div_ceil(64)])
    }

    pub(crate) fn insert(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }

    pub(crate) fn contains(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    pub(crate) fn union_with(&mut self, other: &Bits) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a |= b;
        }
    }

    pub(crate) fn intersect_with(&mut self, other: &Bits) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a &= b;
        }
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.0.iter().all(|w| *w == 0)
    }

    pub(crate) fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().flat_map(|(w, &bits)| (0..64).filter(move |b| bits >> b & 1 == 1).map(move |b| w * 64 + b))
    }
}

/// Precomputed geometry and text for evaluating many selectors against one
/// snapshot.
#[derive(Debug, Clone)]
pub struct Evaluator<'a> {
    pub(crate) snapshot: &'a DomSnapshot,
    pub(crate) ids: Vec<ElementId>,
    index: BTreeMap<ElementId, usize>,
    pub(crate) texts: Vec<String>,
    near: Vec<Bits>,
    row: Vec<Bits>,
    col: Vec<Bits>,
    pub(crate) leaves: Bits,
    pub(crate) text_inputs: Bits,
}

impl<'a> Evaluator<'a> {
    pub fn new(snapshot: &'a DomSnapshot) -> Self {
        let ids: Vec<ElementId> = snapshot.preorder().to_vec();
        let n = ids.len();
        let index = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let els: Vec<_> = ids.iter().map(|&id| snapshot.get(id).expect("preorder id")).collect();
        let texts = els.iter().map(|e| normalize(&e.text)).collect();
        let mut near = alloc::vec![Bits::empty(n); n];
        let mut row = alloc::vec![Bits::empty(n); n];
        let mut col = alloc::vec![Bits::empty(n); n];
        let mut leaves = Bits::empty(n);
        let mut text_inputs = Bits::empty(n);
        for i in 0..n {
            let ri = els[i].rect();
            if els[i].is_leaf() {
                leaves.insert(i);
                if els[i].is_text_input() {
                    text_inputs.insert(i);
                }
            }
            for j in 0..n {
                let rj = els[j].rect();
                if ri.distance(&rj) <= NEAR_RADIUS {
                    near[i].insert(j);
                }
                if ri.same_row(&rj) {
                    row[i].insert(j);
                }
                if ri.same_col(&rj) {
                    col[i].insert(j);
                }
            }
        }
        Self { snapshot, ids, index, texts, near, row, col, leaves, text_inputs }
    }

    pub(crate) fn len(&self) -> usize {
        self.ids.len()
    }

    pub(crate) fn index_of(&self, id: ElementId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub(crate) fn resolve<'g>(s: &'g StrExpr, goal: &'g Goal) -> Option<&'g str> {
        match s {
            StrExpr::Lit(v) => Some(v),
            StrExpr::Field(k) => goal.get(k),
        }
    }

    pub(crate) fn text_set(&self, s: &str) -> Bits {
        let s = normalize(s);
        let mut out = Bits::empty(self.len());
        for (i, t) in self.texts.iter().enumerate() {
            if *t == s {
                out.insert(i);
            }
        }
        out
    }

    pub(crate) fn like_set(&self, s: &str) -> Bits {
        let s = normalize(s);
        let mut out = Bits::empty(self.len());
        for (i, t) in self.texts.iter().enumerate() {
            if !t.is_empty() && s.contains(t.as_str()) {
                out.insert(i);
            }
        }
        out
    }

    pub(crate) fn tag_set(&self, tag: &str) -> Bits {
        let mut out = Bits::empty(self.len());
        for (i, id) in self.ids.iter().enumerate() {
            if self.snapshot.get(*id).unwrap().tag == tag {
                out.insert(i);
            }
        }
        out
    }

    fn spread(&self, x: &Bits, rel: &[Bits]) -> Bits {
        let mut out = Bits::empty(self.len());
        for i in x.iter() {
            out.union_with(&rel[i]);
        }
        out
    }

    pub(crate) fn near_of(&self, x: &Bits) -> Bits {
        self.spread(x, &self.near)
    }

    pub(crate) fn row_of(&self, x: &Bits) -> Bits {
        self.spread(x, &self.row)
    }

    pub(crate) fn col_of(&self, x: &Bits) -> Bits {
        self.spread(x, &self.col)
    }

    pub(crate) fn class_filter(&self, x: &Bits, classes: &[String]) -> Bits {
        let mut out = Bits::empty(self.len());
        for i in x.iter() {
            let e = self.snapshot.get(self.ids[i]).unwrap();
            if classes.iter().any(|c| e.has_class(c)) {
                out.insert(i);
            }
        }
        out
    }

    pub(crate) fn bits(&self, expr: &ElemExpr, goal: &Goal) -> Bits {
        match expr {
            ElemExpr::Tag(t) => self.tag_set(t),
            ElemExpr::Text(s) => match Self::resolve(s, goal) {
                Some(v) => self.text_set(v),
                None => Bits::empty(self.len()),
            },
            ElemExpr::Like(s) => match Self::resolve(s, goal) {
                Some(v) => self.like_set(v),
                None => Bits::empty(self.len()),
            },
            ElemExpr::Near(x) => self.near_of(&self.bits(x, goal)),
            ElemExpr::SameRow(x) => self.row_of(&self.bits(x, goal)),
            ElemExpr::SameCol(x) => self.col_of(&self.bits(x, goal)),
            ElemExpr::And(x, cs) => self.class_filter(&self.bits(x, goal), cs),
        }
    }

    pub fn elems(&self, expr: &ElemExpr, goal: &Goal) -> BTreeSet<ElementId> {
        self.bits(expr, goal).iter().map(|i| self.ids[i]).collect()
    }

    /// Concrete actions of `step`; every member is admissible in the state.
    pub fn step(&self, step: &StepExpr, goal: &Goal) -> BTreeSet<Action> {
        let mut sel = self.bits(step.elems(), goal);
        let mut out = BTreeSet::new();
        match step {
            StepExpr::Click(_) => {
                sel.intersect_with(&self.leaves);
                out.extend(sel.iter().map(|i| Action::Click(self.ids[i])));
            }
            StepExpr::Type(_, s) => {
                sel.intersect_with(&self.text_inputs);
                if let Some(text) = Self::resolve(s, goal).filter(|t| goal.admits_text(t)) {
                    out.extend(sel.iter().map(|i| Action::Type(self.ids[i], text.into())));
                }
            }
            StepExpr::TypeAnyField(_) => {
                sel.intersect_with(&self.text_inputs);
                for v in goal.fields.values() {
                    out.extend(sel.iter().map(|i| Action::Type(self.ids[i], v.clone())));
                }
            }
        }
        out
    }
}

/// Elements selected by `expr`. A `Field` naming a missing goal key selects
/// nothing.
pub fn eval_elems(expr: &ElemExpr, snapshot: &DomSnapshot, goal: &Goal) -> BTreeSet<ElementId> {
    Evaluator::new(snapshot).elems(expr, goal)
}

/// The action set `z(s)`.
pub fn eval_step(step: &StepExpr, snapshot: &DomSnapshot, goal: &Goal) -> BTreeSet<Action> {
    Evaluator::new(snapshot).step(step, goal)
}
