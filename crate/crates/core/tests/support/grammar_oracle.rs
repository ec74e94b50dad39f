//! Reference implementations for checking the selector language: a direct
//! per-element evaluator and a generate-everything step enumerator.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use wge_core::dom::{DomElement, DomSnapshot, ElementId, PageBuilder, Rect, NEAR_RADIUS};
use wge_core::dsl::{extract_literals, ElemExpr, Evaluator, StepExpr, StrExpr};
use wge_core::env::{Action, Goal};

const TAGS: &[&str] = &["div", "span", "button", "input_text", "a", "img", "label", "textarea"];
const CLASSES: &[&str] = &["alpha", "beta", "gamma", "delta"];
const TEXTS: &[&str] = &["", "", "Ok", "Bob", "bob", "Send it", "send", "It", "Bob Smith", " ok "];

pub fn random_goal(rng: &mut ChaCha8Rng) -> Goal {
    let pool = [("name", "Bob"), ("msg", "send it"), ("to", "Alice"), ("code", "ok")];
    let n = rng.gen_range(0..=3);
    Goal::structured(pool.choose_multiple(rng, n).copied())
}

/// A valid snapshot with between 1 and `max_elems` elements.
pub fn random_snapshot(rng: &mut ChaCha8Rng, max_elems: usize) -> DomSnapshot {
    let n = rng.gen_range(1..=max_elems);
    let mut b = PageBuilder::new(Rect::new(0.0, 0.0, 160.0, 210.0));
    let mut rects = vec![Rect::new(0.0, 0.0, 160.0, 210.0)];
    for _ in 1..n {
        let parent = rng.gen_range(0..rects.len());
        let p = rects[parent];
        let w = (p.width * rng.gen_range(0.1..=1.0)).floor();
        let h = (p.height * rng.gen_range(0.1..=1.0)).floor();
        let x = p.left + (rng.gen_range(0.0..=1.0) * (p.width - w)).floor();
        let y = p.top + (rng.gen_range(0.0..=1.0) * (p.height - h)).floor();
        let r = Rect::new(x, y, w, h);
        let tag = TAGS[rng.gen_range(0..TAGS.len())];
        let text = TEXTS[rng.gen_range(0..TEXTS.len())];
        let k = rng.gen_range(0..=2);
        let classes: Vec<&str> = CLASSES.choose_multiple(rng, k).copied().collect();
        b.add_with(parent as ElementId, tag, r, text, &classes);
        rects.push(r);
    }
    b.build().expect("generated snapshot is valid")
}

/// A click on a random leaf or, when possible, a type of a goal value.
pub fn random_action(rng: &mut ChaCha8Rng, s: &DomSnapshot, goal: &Goal) -> Action {
    let leaves = s.leaves();
    let e = leaves[rng.gen_range(0..leaves.len())];
    let values: Vec<&String> = goal.fields.values().collect();
    if s.get(e).unwrap().is_text_input() && !values.is_empty() && rng.gen_bool(0.7) {
        Action::Type(e, values[rng.gen_range(0..values.len())].clone())
    } else {
        Action::Click(e)
    }
}

fn norm(s: &str) -> String {
    s.trim().to_lowercase()
}

fn resolve<'a>(s: &'a StrExpr, goal: &'a Goal) -> Option<&'a str> {
    match s {
        StrExpr::Lit(v) => Some(v.as_str()),
        StrExpr::Field(k) => goal.fields.get(k).map(String::as_str),
    }
}

fn box_gap(a: &DomElement, b: &DomElement) -> f64 {
    let dx = (b.left - (a.left + a.width)).max(a.left - (b.left + b.width)).max(0.0);
    let dy = (b.top - (a.top + a.height)).max(a.top - (b.top + b.height)).max(0.0);
    (dx * dx + dy * dy).sqrt()
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> bool {
    a0 <= b1 && b0 <= a1
}

/// Straight-line reading of the selector semantics, one element at a time.
pub fn naive_eval(expr: &ElemExpr, s: &DomSnapshot, goal: &Goal) -> BTreeSet<ElementId> {
    let all: Vec<&DomElement> = s.elements().collect();
    let pick = |f: &dyn Fn(&DomElement) -> bool| all.iter().filter(|e| f(e)).map(|e| e.id).collect();
    match expr {
        ElemExpr::Tag(t) => pick(&|e| e.tag == *t),
        ElemExpr::Text(x) => match resolve(x, goal) {
            Some(v) => pick(&|e| norm(&e.text) == norm(v)),
            None => BTreeSet::new(),
        },
        ElemExpr::Like(x) => match resolve(x, goal) {
            Some(v) => pick(&|e| !norm(&e.text).is_empty() && norm(v).contains(&norm(&e.text))),
            None => BTreeSet::new(),
        },
        ElemExpr::Near(x) => {
            let inner = naive_eval(x, s, goal);
            pick(&|e| inner.iter().any(|&i| box_gap(e, s.get(i).unwrap()) <= NEAR_RADIUS))
        }
        ElemExpr::SameRow(x) => {
            let inner = naive_eval(x, s, goal);
            pick(&|e| {
                inner.iter().any(|&i| {
                    let o = s.get(i).unwrap();
                    overlap(e.top, e.top + e.height, o.top, o.top + o.height)
                })
            })
        }
        ElemExpr::SameCol(x) => {
            let inner = naive_eval(x, s, goal);
            pick(&|e| {
                inner.iter().any(|&i| {
                    let o = s.get(i).unwrap();
                    overlap(e.left, e.left + e.width, o.left, o.left + o.width)
                })
            })
        }
        ElemExpr::And(x, cs) => {
            let inner = naive_eval(x, s, goal);
            inner.into_iter().filter(|&i| cs.iter().any(|c| s.get(i).unwrap().classes.contains(c))).collect()
        }
    }
}

/// Every selector of the depth-limited grammar over the given literals.
pub fn all_selectors(tags: &BTreeSet<String>, strings: &BTreeSet<StrExpr>, classes: &BTreeSet<Vec<String>>) -> Vec<ElemExpr> {
    let mut level1 = Vec::new();
    for t in tags {
        level1.push(ElemExpr::Tag(t.clone()));
    }
    for s in strings {
        level1.push(ElemExpr::Text(s.clone()));
        level1.push(ElemExpr::Like(s.clone()));
    }
    let mut level2 = Vec::new();
    for x in &level1 {
        level2.push(ElemExpr::Near(Box::new(x.clone())));
        level2.push(ElemExpr::SameRow(Box::new(x.clone())));
        level2.push(ElemExpr::SameCol(Box::new(x.clone())));
        for c in classes {
            level2.push(ElemExpr::And(Box::new(x.clone()), c.clone()));
        }
    }
    let mut level3 = Vec::new();
    for y in &level2 {
        for c in classes {
            level3.push(ElemExpr::And(Box::new(y.clone()), c.clone()));
        }
    }
    level1.into_iter().chain(level2).chain(level3).collect()
}

/// Generate every step over the extracted literals, keep those whose action
/// set contains `action`, rank by (node count, printed form), truncate.
pub fn brute_force_steps(s: &DomSnapshot, action: &Action, goal: &Goal, cap: Option<usize>) -> Vec<StepExpr> {
    let lit = extract_literals(s, action, goal);
    let ev = Evaluator::new(s);
    let mut keep = BTreeSet::new();
    for e in all_selectors(&lit.tags, &lit.strings, &lit.classes) {
        assert!(e.validate().is_ok(), "{e}");
        let mut candidates = vec![StepExpr::Click(e.clone()), StepExpr::TypeAnyField(e.clone())];
        for st in &lit.strings {
            candidates.push(StepExpr::Type(e.clone(), st.clone()));
        }
        for z in candidates {
            if ev.step(&z, goal).contains(action) {
                keep.insert(z);
            }
        }
    }
    let mut ranked: Vec<(usize, String, StepExpr)> = keep.into_iter().map(|z| (z.size(), z.to_string(), z)).collect();
    ranked.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
    ranked.into_iter().take(cap.unwrap_or(usize::MAX)).map(|(_, _, z)| z).collect()
}
