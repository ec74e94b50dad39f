//! Workflow lattices induced from single demonstrations.
//!
//! Node `i` sits before demonstrated action `i`; node `T` is the end. Every
//! edge covers a contiguous run of demonstrated actions and carries all the
//! steps consistent with them. Besides the base edges `i → i+1` there are
//! skip edges over actions the demonstration succeeds without, and collapse
//! edges `i → i+2` merging two consecutive `Type` actions on one element.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::demo::{skippable_steps, DemoError, Demonstration};
use crate::dsl::{enumerate_consistent_steps, StepExpr};
use crate::env::Action;

/// One choice on an edge: a constraint step, or passing over the edge
/// without acting.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeStep {
    Skip,
    Step(StepExpr),
}

impl fmt::Display for EdgeStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgeStep::Skip => f.write_str("Skip"),
            EdgeStep::Step(z) => z.fmt(f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeKind {
    Base,
    Skip,
    Collapse,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Base => "base",
            EdgeKind::Skip => "skip",
            EdgeKind::Collapse => "collapse",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "base" => Some(EdgeKind::Base),
            "skip" => Some(EdgeKind::Skip),
            "collapse" => Some(EdgeKind::Collapse),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeEdge {
    pub from: usize,
    pub to: usize,
    pub kind: EdgeKind,
    pub steps: Vec<EdgeStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkflowLattice {
    pub demo_id: String,
    /// Number of demonstrated actions; nodes are `0..=len`.
    pub len: usize,
    pub edges: Vec<LatticeEdge>,
}

/// A complete path: `(edge index, step index)` pairs from node 0 to the end.
pub type Workflow = Vec<(usize, usize)>;

impl WorkflowLattice {
    pub fn node_count(&self) -> usize {
        self.len + 1
    }

    /// Indices of edges leaving `node`, in storage order.
    pub fn out_edges(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().enumerate().filter(move |(_, e)| e.from == node).map(|(i, _)| i)
    }

    /// Number of distinct (edge, step) paths from the start to the end,
    /// saturating at `u64::MAX`.
    pub fn count_workflows(&self) -> u64 {
        let mut ways = alloc::vec![0u64; self.node_count()];
        ways[self.len] = 1;
        for node in (0..self.len).rev() {
            let mut total = 0u64;
            for e in self.out_edges(node) {
                let edge = &self.edges[e];
                total = total.saturating_add((edge.steps.len() as u64).saturating_mul(ways[edge.to]));
            }
            ways[node] = total;
        }
        ways[0]
    }

    /// Every path, for small lattices.
    pub fn workflows(&self) -> Vec<Workflow> {
        fn walk(l: &WorkflowLattice, node: usize, prefix: &mut Workflow, out: &mut Vec<Workflow>) {
            if node == l.len {
                out.push(prefix.clone());
                return;
            }
            for e in l.out_edges(node) {
                for s in 0..l.edges[e].steps.len() {
                    prefix.push((e, s));
                    walk(l, l.edges[e].to, prefix, out);
                    prefix.pop();
                }
            }
        }
        let mut out = Vec::new();
        walk(self, 0, &mut Vec::new(), &mut out);
        out
    }

    /// Checks the structural invariants.
    pub fn is_well_formed(&self) -> bool {
        let base_ok = (0..self.len).all(|i| self.edges.iter().any(|e| e.kind == EdgeKind::Base && e.from == i && e.to == i + 1));
        let edges_ok = self.edges.iter().all(|e| {
            !e.steps.is_empty()
                && e.from < e.to
                && e.to <= self.len
                && match e.kind {
                    EdgeKind::Base => e.to == e.from + 1 && e.steps.iter().all(|s| matches!(s, EdgeStep::Step(_))),
                    EdgeKind::Skip => e.to == e.from + 1 && e.steps == [EdgeStep::Skip],
                    EdgeKind::Collapse => e.to == e.from + 2,
                }
        });
        base_ok && edges_ok
    }
}

/// The single action equivalent to two consecutive `Type`s on one element.
pub fn collapse(a: &Action, b: &Action) -> Option<Action> {
    match (a, b) {
        (Action::Type(e1, _), Action::Type(e2, t)) if e1 == e2 => Some(Action::Type(*e2, t.clone())),
        _ => None,
    }
}

/// Builds the lattice of one demonstration, keeping at most `cap` steps per
/// edge.
pub fn induce(demo: &Demonstration, demo_id: &str, cap: Option<usize>) -> Result<WorkflowLattice, DemoError> {
    let skippable = skippable_steps(demo)?;
    let mut edges = Vec::new();
    let n = demo.steps.len();
    for (i, step) in demo.steps.iter().enumerate() {
        let steps = enumerate_consistent_steps(&step.snapshot, &step.action, &demo.goal, cap);
        edges.push(LatticeEdge { from: i, to: i + 1, kind: EdgeKind::Base, steps: steps.into_iter().map(EdgeStep::Step).collect() });
        if skippable[i] {
            edges.push(LatticeEdge { from: i, to: i + 1, kind: EdgeKind::Skip, steps: alloc::vec![EdgeStep::Skip] });
        }
        if i + 1 < n {
            if let Some(merged) = collapse(&step.action, &demo.steps[i + 1].action) {
                let steps = enumerate_consistent_steps(&step.snapshot, &merged, &demo.goal, cap);
                if !steps.is_empty() {
                    edges.push(LatticeEdge {
                        from: i,
                        to: i + 2,
                        kind: EdgeKind::Collapse,
                        steps: steps.into_iter().map(EdgeStep::Step).collect(),
                    });
                }
            }
        }
    }
    Ok(WorkflowLattice { demo_id: demo_id.into(), len: n, edges })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo::oracle_demonstrate;
    use crate::dsl::DEFAULT_STEP_CAP;
    use crate::env::Env;

    fn toy(sizes: &[(usize, usize, usize)], len: usize) -> WorkflowLattice {
        let edges = sizes
            .iter()
            .map(|&(from, to, k)| LatticeEdge {
                from,
                to,
                kind: if to == from + 1 { EdgeKind::Base } else { EdgeKind::Collapse },
                steps: (0..k).map(|j| EdgeStep::Step(StepExpr::Click(crate::dsl::ElemExpr::tag(&alloc::format!("t{j}"))))).collect(),
            })
            .collect();
        WorkflowLattice { demo_id: "toy".into(), len, edges }
    }

    #[test]
    fn counts_follow_product_rule() {
        assert_eq!(toy(&[(0, 1, 4)], 1).count_workflows(), 4);
        assert_eq!(toy(&[(0, 1, 3), (1, 2, 5)], 2).count_workflows(), 15);
        let l = toy(&[(0, 1, 3), (1, 2, 5), (0, 2, 2)], 2);
        assert_eq!(l.count_workflows(), 17);
        assert_eq!(l.workflows().len(), 17);
    }

    #[test]
    fn count_saturates() {
        let l = toy(&[(0, 1, 1 << 20), (1, 2, 1 << 20), (2, 3, 1 << 20), (3, 4, 1 << 20)], 4);
        assert_eq!(l.count_workflows(), u64::MAX);
    }

    #[test]
    fn login_lattice_is_a_product() {
        let env = Env::new("login-user").unwrap();
        let d = oracle_demonstrate(&env, 7, false);
        let l = induce(&d, "d0", Some(DEFAULT_STEP_CAP)).unwrap();
        assert!(l.is_well_formed());
        assert_eq!(l.edges.len(), 3);
        let product: u64 = l.edges.iter().map(|e| e.steps.len() as u64).product();
        assert_eq!(l.count_workflows(), product);
    }

    #[test]
    fn noise_gets_a_skip_edge() {
        let env = Env::new("login-user").unwrap();
        let d = oracle_demonstrate(&env, 7, true);
        let l = induce(&d, "d0", Some(DEFAULT_STEP_CAP)).unwrap();
        let noise =
            d.actions().position(|a| d.steps.iter().any(|s| s.snapshot.get(a.element()).is_some_and(|e| e.has_class("background"))));
        let i = noise.unwrap();
        assert!(l.edges.iter().any(|e| e.kind == EdgeKind::Skip && e.from == i && e.to == i + 1));
        assert!(l.is_well_formed());
    }
}
