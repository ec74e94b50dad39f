use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::eval::{Bits, Evaluator};
use super::{canonical_classes, ElemExpr, StepExpr, StrExpr};
use crate::dom::{DomSnapshot, NEAR_RADIUS};
use crate::env::{Action, Goal};
use crate::text::normalize;

/// Default bound on the number of steps kept per demonstrated action.
pub const DEFAULT_STEP_CAP: usize = 256;

/// Literal values a step may mention, drawn from one demonstration state.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Literals {
    pub tags: BTreeSet<String>,
    /// Singleton lists for every class, plus each element's full class list.
    pub classes: BTreeSet<Vec<String>>,
    /// Texts of the target and of elements within the near radius of it,
    /// plus `Field(k)` for every goal key.
    pub strings: BTreeSet<StrExpr>,
}

pub fn extract_literals(snapshot: &DomSnapshot, action: &Action, goal: &Goal) -> Literals {
    let mut lit = Literals::default();
    for e in snapshot.elements() {
        lit.tags.insert(e.tag.clone());
        for c in &e.classes {
            lit.classes.insert(alloc::vec![c.clone()]);
        }
        if e.classes.len() > 1 {
            lit.classes.insert(canonical_classes(e.classes.iter().map(String::as_str)));
        }
    }
    let target = action.element();
    let mut seen = BTreeSet::new();
    let mut nearby = alloc::vec![target];
    nearby.extend(snapshot.spatial_neighbors(target, NEAR_RADIUS).unwrap_or_default());
    let mut ordered: Vec<_> = nearby.into_iter().filter_map(|id| snapshot.get(id)).collect();
    ordered.sort_by_key(|e| (e.id != target, e.id));
    for e in ordered {
        let t = e.text.trim();
        if !t.is_empty() && seen.insert(normalize(t)) {
            lit.strings.insert(StrExpr::Lit(t.into()));
        }
    }
    for k in goal.keys() {
        lit.strings.insert(StrExpr::Field(k.into()));
    }
    lit
}

/// All grammar-legal steps whose action set on `snapshot` contains `action`,
/// ordered by syntax size then printed form and truncated to `cap`.
pub fn enumerate_consistent_steps(snapshot: &DomSnapshot, action: &Action, goal: &Goal, cap: Option<usize>) -> Vec<StepExpr> {
    let ev = Evaluator::new(snapshot);
    let lit = extract_literals(snapshot, action, goal);
    let Some(t) = ev.index_of(action.element()) else {
        return Vec::new();
    };
    if !ev.leaves.contains(t) {
        return Vec::new();
    }
    let elems = selectors_containing(&ev, &lit, t, goal);
    let mut out: Vec<StepExpr> = Vec::new();
    match action {
        Action::Click(_) => out.extend(elems.into_iter().map(StepExpr::Click)),
        Action::Type(_, text) => {
            if !ev.text_inputs.contains(t) || !goal.admits_text(text) {
                return Vec::new();
            }
            let strings: Vec<&StrExpr> = lit.strings.iter().filter(|s| Evaluator::resolve(s, goal) == Some(text.as_str())).collect();
            let any_field = goal.fields.values().any(|v| v == text);
            for e in elems {
                for s in &strings {
                    out.push(StepExpr::Type(e.clone(), (*s).clone()));
                }
                if any_field {
                    out.push(StepExpr::TypeAnyField(e));
                }
            }
        }
    }
    rank_and_cap(out, cap)
}

pub(crate) fn rank_and_cap(steps: Vec<StepExpr>, cap: Option<usize>) -> Vec<StepExpr> {
    let mut keyed: Vec<(usize, String, StepExpr)> = steps.into_iter().map(|z| (z.size(), z.to_string(), z)).collect();
    keyed.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
    keyed.dedup_by(|a, b| a.2 == b.2);
    keyed.truncate(cap.unwrap_or(usize::MAX));
    keyed.into_iter().map(|(_, _, z)| z).collect()
}

/// Every selector of nesting depth ≤ 3 over `lit` whose value contains the
/// element at dense index `t`. Only the class filters are pruned up front:
/// a filter keeps `t` exactly when its inner set does and the class list
/// meets the target's classes.
fn selectors_containing(ev: &Evaluator<'_>, lit: &Literals, t: usize, goal: &Goal) -> Vec<ElemExpr> {
    let target = ev.snapshot.get(ev.ids[t]).unwrap();
    let useful_classes: Vec<&Vec<String>> = lit.classes.iter().filter(|cs| cs.iter().any(|c| target.has_class(c))).collect();

    let mut level1: Vec<(ElemExpr, Bits)> = Vec::new();
    for tag in &lit.tags {
        level1.push((ElemExpr::Tag(tag.clone()), ev.tag_set(tag)));
    }
    for s in &lit.strings {
        let Some(v) = Evaluator::resolve(s, goal) else {
            continue;
        };
        level1.push((ElemExpr::Text(s.clone()), ev.text_set(v)));
        level1.push((ElemExpr::Like(s.clone()), ev.like_set(v)));
    }

    let mut hits: Vec<ElemExpr> = Vec::new();
    let mut level2_hits: Vec<ElemExpr> = Vec::new();
    for (x, bits) in &level1 {
        if bits.contains(t) {
            hits.push(x.clone());
            for cs in &useful_classes {
                level2_hits.push(x.clone().and_class(cs));
            }
        }
        if bits.is_empty() {
            continue;
        }
        if ev.near_of(bits).contains(t) {
            level2_hits.push(x.clone().near());
        }
        if ev.row_of(bits).contains(t) {
            level2_hits.push(x.clone().same_row());
        }
        if ev.col_of(bits).contains(t) {
            level2_hits.push(x.clone().same_col());
        }
    }
    for y in &level2_hits {
        for cs in &useful_classes {
            hits.push(y.clone().and_class(cs));
        }
    }
    hits.extend(level2_hits);
    hits
}
