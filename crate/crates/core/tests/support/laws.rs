//! Frequency checks for the three sampling stages of the workflow policy.
//! Each check returns a one-line summary, or the first category whose
//! empirical frequency falls outside three standard errors.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wge_core::dsl::{parse_step, DEFAULT_STEP_CAP};
use wge_core::env::{Action, Env, Goal, BACKGROUND_CLASS};
use wge_core::lattice::{induce, EdgeKind, EdgeStep, LatticeEdge, WorkflowLattice};
use wge_core::workflow::{sample_action, DemoLattice, WorkflowConfig, WorkflowPolicy};

pub const SAMPLES: usize = 10_000;

/// A one-edge lattice over the given step expressions.
pub fn one_edge(steps: &[&str]) -> WorkflowLattice {
    WorkflowLattice {
        demo_id: "fixture".into(),
        len: 1,
        edges: vec![LatticeEdge {
            from: 0,
            to: 1,
            kind: EdgeKind::Base,
            steps: steps.iter().map(|s| EdgeStep::Step(parse_step(s).unwrap())).collect(),
        }],
    }
}

pub fn click_button_policy(steps: &[&str]) -> WorkflowPolicy {
    let goal = Goal::structured([("target", "x")]);
    WorkflowPolicy::new(vec![DemoLattice { goal, lattice: one_edge(steps) }], WorkflowConfig::default())
}

pub fn background_step() -> String {
    format!(r#"Click(And(Tag("div"),Class("{BACKGROUND_CLASS}")))"#)
}

fn within(count: usize, n: usize, p: f64, what: &str) -> Result<(), String> {
    let freq = count as f64 / n as f64;
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    if (freq - p).abs() <= 3.0 * sigma {
        Ok(())
    } else {
        Err(format!("{what}: frequency {freq:.4}, expected {p:.4} ± {:.4}", 3.0 * sigma))
    }
}

/// Demonstration choice: three demos, two sharing the goal's keys.
pub fn demo_selection() -> Result<String, String> {
    let env = Env::new("login-user").unwrap();
    let other = Env::new("click-button").unwrap();
    let demos = vec![
        induce(&wge_core::demo::oracle_demonstrate(&env, 1, false), "a", Some(DEFAULT_STEP_CAP)),
        induce(&wge_core::demo::oracle_demonstrate(&other, 2, false), "b", Some(DEFAULT_STEP_CAP)),
        induce(&wge_core::demo::oracle_demonstrate(&env, 3, false), "c", Some(DEFAULT_STEP_CAP)),
    ];
    let goals = [env.reset(1).goal, other.reset(2).goal, env.reset(3).goal];
    let policy = WorkflowPolicy::new(
        demos.into_iter().zip(goals).map(|(l, goal)| DemoLattice { goal, lattice: l.unwrap() }).collect(),
        WorkflowConfig::default(),
    );
    let goal = env.reset(99).goal;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut counts = [0usize; 3];
    for _ in 0..SAMPLES {
        counts[policy.select_demo(&goal, &mut rng).map_err(|e| e.to_string())?] += 1;
    }
    if counts[1] != 0 {
        return Err(format!("non-matching demonstration drawn {} times", counts[1]));
    }
    within(counts[0], SAMPLES, 0.5, "demo 0")?;
    within(counts[2], SAMPLES, 0.5, "demo 2")?;
    Ok(format!("demo counts {counts:?} over {SAMPLES}"))
}

/// Step choice with logits (1, 0) on a page where both steps are available.
pub fn step_softmax() -> Result<String, String> {
    let env = Env::new("click-button").unwrap();
    let mut policy = click_button_policy(&[r#"Click(Tag("button"))"#, r#"Click(Text(Field("target")))"#]);
    policy.psi[0][0] = vec![1.0, 0.0];
    let p = std::f64::consts::E / (std::f64::consts::E + 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut first = 0;
    for i in 0..SAMPLES {
        let trace = policy.explore(&env, env.reset(i as u64), &mut rng).map_err(|e| e.to_string())?;
        if trace.decisions[0].chosen == 0 {
            first += 1;
        }
    }
    within(first, SAMPLES, p, "step with logit 1")?;
    Ok(format!("logit-1 step chosen {first}/{SAMPLES}, expected {p:.4}"))
}

/// Action draws: uniform over `z(s)`, both inside exploration and for the
/// standalone sampler.
pub fn uniform_actions() -> Result<String, String> {
    let env = Env::new("click-button").unwrap();
    let policy = click_button_policy(&[r#"Click(Tag("button"))"#]);
    let start = (0..).map(|s| env.reset(s)).find(|s| s.snapshot.elements().filter(|e| e.tag == "button").count() == 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut counts: BTreeMap<Action, usize> = BTreeMap::new();
    for _ in 0..SAMPLES {
        let trace = policy.explore(&env, start.clone(), &mut rng).map_err(|e| e.to_string())?;
        *counts.entry(trace.rollout.steps[0].1.clone()).or_default() += 1;
    }
    if counts.len() != 5 {
        return Err(format!("{} distinct buttons clicked, expected 5", counts.len()));
    }
    for (a, c) in &counts {
        within(*c, SAMPLES, 0.2, &format!("{a}"))?;
    }

    let set: std::collections::BTreeSet<Action> = (10..15).map(Action::Click).collect();
    let mut direct: BTreeMap<Action, usize> = BTreeMap::new();
    for _ in 0..SAMPLES {
        *direct.entry(sample_action(&set, &mut rng).unwrap()).or_default() += 1;
    }
    let expected = SAMPLES as f64 / 5.0;
    let chi2: f64 = direct.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 99.9% quantile of chi-square with 4 degrees of freedom
    if direct.len() != 5 || chi2 > 18.467 {
        return Err(format!("sampler chi-square {chi2:.2} over {} categories", direct.len()));
    }
    for (a, c) in &direct {
        within(*c, SAMPLES, 0.2, &format!("{a}"))?;
    }
    Ok(format!("explore counts {:?}, sampler chi-square {chi2:.2}", counts.values().collect::<Vec<_>>()))
}
