//! JSON documents for snapshots, actions, demonstrations and lattices.
//!
//! Snapshots and demonstrations use a canonical encoding: object keys in
//! sorted order, no insignificant whitespace, integers as integers and
//! every other number with exactly two decimals. Geometry is quantized to
//! hundredths when a snapshot is built, so the encoding round-trips exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use wge_core::demo::{DemoStep, Demonstration};
use wge_core::dom::{DomElement, DomSnapshot, ElementId};
use wge_core::dsl::parse_step;
use wge_core::env::{Action, Goal};
use wge_core::lattice::{EdgeKind, EdgeStep, LatticeEdge, WorkflowLattice};

use crate::Error;

/// Writes `value` in canonical form.
pub fn canonical(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(&mut out, value);
    out
}

fn write_canonical(out: &mut String, value: &Value) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_u64() || n.is_i64() {
                let _ = write!(out, "{n}");
            } else {
                let x = n.as_f64().unwrap_or(0.0);
                let s = format!("{x:.2}");
                out.push_str(if s == "-0.00" { "0.00" } else { &s });
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(out, item);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let sorted: BTreeMap<&String, &Value> = map.iter().collect();
            out.push('{');
            for (i, (k, v)) in sorted.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_canonical(out, v);
            }
            out.push('}');
        }
    }
}

fn parse_error(what: &str, e: serde_json::Error) -> Error {
    Error::Parse { what: what.into(), line: e.line(), column: e.column(), message: e.to_string() }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ElementDoc {
    tag: String,
    classes: Vec<String>,
    text: String,
    value: String,
    checked: bool,
    left: f64,
    top: f64,
    width: f64,
    height: f64,
    children: Vec<ElementId>,
    focused: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotDoc {
    root: ElementId,
    elements: BTreeMap<String, ElementDoc>,
}

impl SnapshotDoc {
    fn into_snapshot(self) -> Result<DomSnapshot, Error> {
        let mut elements = Vec::with_capacity(self.elements.len());
        for (key, e) in self.elements {
            let id: ElementId = key.parse().map_err(|_| Error::Invalid(format!("element key {key:?} is not an id")))?;
            elements.push(DomElement {
                id,
                tag: e.tag,
                classes: e.classes,
                text: e.text,
                value: e.value,
                checked: e.checked,
                left: e.left,
                top: e.top,
                width: e.width,
                height: e.height,
                children: e.children,
                focused: e.focused,
            });
        }
        Ok(DomSnapshot::new(self.root, elements)?)
    }
}

pub fn snapshot_value(s: &DomSnapshot) -> Value {
    let elements: Map<String, Value> = s
        .elements()
        .map(|e| {
            let doc = json!({
                "tag": e.tag,
                "classes": e.classes,
                "text": e.text,
                "value": e.value,
                "checked": e.checked,
                "left": e.left,
                "top": e.top,
                "width": e.width,
                "height": e.height,
                "children": e.children,
                "focused": e.focused,
            });
            (e.id.to_string(), doc)
        })
        .collect();
    json!({ "root": s.root(), "elements": elements })
}

pub fn snapshot_to_json(s: &DomSnapshot) -> String {
    canonical(&snapshot_value(s))
}

pub fn snapshot_from_json(text: &str) -> Result<DomSnapshot, Error> {
    let doc: SnapshotDoc = serde_json::from_str(text).map_err(|e| parse_error("snapshot", e))?;
    doc.into_snapshot()
}

/// Wire form of an action: `{"kind": "click" | "type", "element", "text"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionDoc {
    pub kind: String,
    pub element: ElementId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl From<&Action> for ActionDoc {
    fn from(a: &Action) -> Self {
        match a {
            Action::Click(e) => Self { kind: "click".into(), element: *e, text: None },
            Action::Type(e, t) => Self { kind: "type".into(), element: *e, text: Some(t.clone()) },
        }
    }
}

impl TryFrom<ActionDoc> for Action {
    type Error = Error;

    fn try_from(doc: ActionDoc) -> Result<Self, Error> {
        match (doc.kind.as_str(), doc.text) {
            ("click", None) => Ok(Action::Click(doc.element)),
            ("type", Some(t)) => Ok(Action::Type(doc.element, t)),
            ("click", Some(_)) => Err(Error::Invalid("click actions carry no text".into())),
            ("type", None) => Err(Error::Invalid("type actions need a text".into())),
            (k, _) => Err(Error::Invalid(format!("unknown action kind {k:?}"))),
        }
    }
}

pub fn action_value(a: &Action) -> Value {
    serde_json::to_value(ActionDoc::from(a)).expect("plain struct")
}

pub fn goal_value(g: &Goal) -> Value {
    serde_json::to_value(g).expect("plain struct")
}

pub fn goal_from_json(text: &str) -> Result<Goal, Error> {
    let goal: Goal = serde_json::from_str(text).map_err(|e| parse_error("goal", e))?;
    if !goal.is_valid() {
        return Err(Error::Invalid("goal has no content or an empty field value".into()));
    }
    Ok(goal)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepDoc {
    snapshot: SnapshotDoc,
    action: ActionDoc,
    t_ms: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DemoDoc {
    task: String,
    seed: u64,
    goal: Goal,
    source: String,
    steps: Vec<StepDoc>,
    reward: i8,
}

pub fn demo_value(d: &Demonstration) -> Value {
    let steps: Vec<Value> = d
        .steps
        .iter()
        .map(|s| json!({ "snapshot": snapshot_value(&s.snapshot), "action": action_value(&s.action), "t_ms": s.t_ms }))
        .collect();
    json!({
        "task": d.task,
        "seed": d.seed,
        "goal": goal_value(&d.goal),
        "source": d.source,
        "steps": steps,
        "reward": d.reward,
    })
}

pub fn demo_to_json(d: &Demonstration) -> String {
    canonical(&demo_value(d))
}

/// Parses a demonstration without replaying it.
pub fn demo_from_json_unchecked(text: &str) -> Result<Demonstration, Error> {
    let doc: DemoDoc = serde_json::from_str(text).map_err(|e| parse_error("demonstration", e))?;
    let mut steps = Vec::with_capacity(doc.steps.len());
    for s in doc.steps {
        steps.push(DemoStep { snapshot: s.snapshot.into_snapshot()?, action: s.action.try_into()?, t_ms: s.t_ms });
    }
    Ok(Demonstration { task: doc.task, seed: doc.seed, goal: doc.goal, source: doc.source, steps, reward: doc.reward })
}

/// Parses a demonstration and checks it by exact replay.
pub fn demo_from_json(text: &str) -> Result<Demonstration, Error> {
    let d = demo_from_json_unchecked(text)?;
    d.validate()?;
    Ok(d)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDoc {
    from: usize,
    to: usize,
    kind: String,
    steps: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LatticeDoc {
    demo_id: String,
    len: usize,
    edges: Vec<EdgeDoc>,
}

/// A set of lattices with the goals of their demonstrations, as written by
/// `wge induce`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LatticeFile {
    task: String,
    lattices: Vec<LatticeEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LatticeEntry {
    goal: Goal,
    lattice: LatticeDoc,
}

fn lattice_doc(l: &WorkflowLattice) -> LatticeDoc {
    LatticeDoc {
        demo_id: l.demo_id.clone(),
        len: l.len,
        edges: l
            .edges
            .iter()
            .map(|e| EdgeDoc {
                from: e.from,
                to: e.to,
                kind: e.kind.as_str().into(),
                steps: e.steps.iter().map(ToString::to_string).collect(),
            })
            .collect(),
    }
}

fn lattice_from_doc(doc: LatticeDoc) -> Result<WorkflowLattice, Error> {
    let mut edges = Vec::with_capacity(doc.edges.len());
    for e in doc.edges {
        let kind = EdgeKind::parse(&e.kind).ok_or_else(|| Error::Invalid(format!("unknown edge kind {:?}", e.kind)))?;
        let steps = e
            .steps
            .iter()
            .map(|s| if s == "Skip" { Ok(EdgeStep::Skip) } else { parse_step(s).map(EdgeStep::Step) })
            .collect::<Result<Vec<_>, _>>()?;
        edges.push(LatticeEdge { from: e.from, to: e.to, kind, steps });
    }
    let lattice = WorkflowLattice { demo_id: doc.demo_id, len: doc.len, edges };
    if !lattice.is_well_formed() {
        return Err(Error::Invalid(format!("lattice {} is not well formed", lattice.demo_id)));
    }
    Ok(lattice)
}

pub fn lattices_to_json(task: &str, lattices: &[(Goal, WorkflowLattice)]) -> String {
    let file = LatticeFile {
        task: task.into(),
        lattices: lattices.iter().map(|(g, l)| LatticeEntry { goal: g.clone(), lattice: lattice_doc(l) }).collect(),
    };
    serde_json::to_string_pretty(&file).expect("plain struct")
}

pub fn lattices_from_json(text: &str) -> Result<(String, Vec<(Goal, WorkflowLattice)>), Error> {
    let file: LatticeFile = serde_json::from_str(text).map_err(|e| parse_error("lattice file", e))?;
    let lattices = file.lattices.into_iter().map(|e| Ok((e.goal, lattice_from_doc(e.lattice)?))).collect::<Result<Vec<_>, Error>>()?;
    Ok((file.task, lattices))
}
