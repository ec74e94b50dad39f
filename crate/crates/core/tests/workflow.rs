mod support;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::gradcheck::psi_max_rel_err;
use support::laws::{self, background_step, click_button_policy};
use wge_core::demo::oracle_demonstrate;
use wge_core::dsl::DEFAULT_STEP_CAP;
use wge_core::env::{Env, Goal};
use wge_core::lattice::induce;
use wge_core::workflow::{DemoLattice, WorkflowConfig, WorkflowError, WorkflowPolicy};

#[test]
fn demo_selection_follows_the_key_match_softmax() {
    laws::demo_selection().unwrap();
}

#[test]
fn step_choice_follows_the_logit_softmax() {
    laws::step_softmax().unwrap();
}

#[test]
fn actions_are_uniform_over_the_step_set() {
    laws::uniform_actions().unwrap();
}

#[test]
fn a_single_matching_demo_is_always_chosen_and_none_is_an_error() {
    let env = Env::new("login-user").unwrap();
    let d = oracle_demonstrate(&env, 0, false);
    let policy = WorkflowPolicy::new(
        vec![DemoLattice { goal: d.goal.clone(), lattice: induce(&d, "d", Some(DEFAULT_STEP_CAP)).unwrap() }],
        WorkflowConfig::default(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for seed in 0..50 {
        assert_eq!(policy.select_demo(&env.reset(seed).goal, &mut rng), Ok(0));
    }
    let other = Goal::structured([("target", "x")]);
    assert_eq!(policy.select_demo(&other, &mut rng), Err(WorkflowError::NoMatchingDemo));
    assert!(policy.explore(&Env::new("click-button").unwrap(), Env::new("click-button").unwrap().reset(0), &mut rng).is_err());
}

#[test]
fn empty_steps_are_renormalized_away() {
    let env = Env::new("click-button").unwrap();
    let policy = click_button_policy(&[r#"Click(Text("no such label anywhere"))"#, r#"Click(Tag("button"))"#]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..500 {
        let t = policy.explore(&env, env.reset(seed), &mut rng).unwrap();
        assert_eq!(t.decisions[0].chosen, 1);
        assert_eq!(t.decisions[0].available, [false, true]);
    }
}

#[test]
fn a_node_without_available_steps_ends_with_failure() {
    let env = Env::new("click-button").unwrap();
    let policy = click_button_policy(&[r#"Click(Text("no such label anywhere"))"#]);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let t = policy.explore(&env, env.reset(3), &mut rng).unwrap();
    assert!(t.decisions.is_empty());
    assert!(t.rollout.steps.is_empty());
    assert_eq!(t.reward(), -1);
}

#[test]
fn step_distributions_are_normalized_without_any_page() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for task in ["email-inbox", "search-engine", "click-checkboxes-large"] {
        let env = Env::new(task).unwrap();
        let d = oracle_demonstrate(&env, 4, true);
        let mut policy = WorkflowPolicy::new(
            vec![DemoLattice { goal: d.goal.clone(), lattice: induce(&d, "d", Some(DEFAULT_STEP_CAP)).unwrap() }],
            WorkflowConfig::default(),
        );
        for table in policy.psi.iter_mut().flatten() {
            for x in table.iter_mut() {
                *x = rand::Rng::gen_range(&mut rng, -5.0..5.0);
            }
        }
        for node in 0..d.len() {
            let dist = policy.step_distribution(0, node);
            assert!(!dist.is_empty());
            assert!((dist.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs() < 1e-9, "{task} node {node}");
        }
    }
}

fn successful_trace(policy: &WorkflowPolicy, chosen: usize) -> wge_core::workflow::ExplorationTrace {
    let env = Env::new("click-button").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    (0..)
        .map(|s| policy.explore(&env, env.reset(s), &mut rng).unwrap())
        .find(|t| t.reward() == 1 && t.decisions[0].chosen == chosen)
        .unwrap()
}

#[test]
fn update_moves_logits_by_the_marginal_likelihood_gradient() {
    // The background step cannot emit a button click: the sampled step
    // gains lr·(1 - 1/2) and the other loses as much.
    let mut p = click_button_policy(&[r#"Click(Text(Field("target")))"#, &background_step()]);
    let t = successful_trace(&p, 0);
    p.reinforce_update(&t).unwrap();
    assert!((p.psi[0][0][0] - 0.05).abs() < 1e-12);
    assert!((p.psi[0][0][1] + 0.05).abs() < 1e-12);
    assert!((p.baselines[0][0] - 0.1).abs() < 1e-12);

    // Both steps can emit the target click; with k buttons the generic step
    // emits it with probability 1/k, so it loses even when it was sampled.
    let mut p = click_button_policy(&[r#"Click(Tag("button"))"#, r#"Click(Text(Field("target")))"#]);
    let t = successful_trace(&p, 0);
    let k = t.rollout.steps[0].0.snapshot.elements().filter(|e| e.tag == "button").count() as f64;
    p.reinforce_update(&t).unwrap();
    let marginal = 0.5 * (1.0 / k) + 0.5;
    let expect_generic = 0.1 * (0.5 * (1.0 / k) / marginal - 0.5);
    let expect_specific = 0.1 * (0.5 / marginal - 0.5);
    assert!((p.psi[0][0][0] - expect_generic).abs() < 1e-12, "{} vs {expect_generic}", p.psi[0][0][0]);
    assert!((p.psi[0][0][1] - expect_specific).abs() < 1e-12);
    assert!(p.psi[0][0][0] < 0.0 && p.psi[0][0][1] > 0.0);
}

#[test]
fn reward_equal_to_the_baseline_changes_nothing() {
    let mut p = click_button_policy(&[r#"Click(Text(Field("target")))"#, &background_step()]);
    let t = successful_trace(&p, 0);
    p.baselines[0][0] = 1.0;
    let before = p.psi.clone();
    p.reinforce_update(&t).unwrap();
    assert_eq!(p.psi, before);
    assert_eq!(p.baselines[0][0], 1.0);
}

#[test]
fn psi_gradient_matches_central_differences() {
    let err = psi_max_rel_err();
    assert!(err <= 1e-6, "max relative error {err:e}");
}

#[test]
fn reinforce_learns_a_two_armed_bandit() {
    let env = Env::new("click-button").unwrap();
    let mut p = click_button_policy(&[r#"Click(Text(Field("target")))"#, &background_step()]);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..500 {
        let t = p.explore(&env, env.reset(i), &mut rng).unwrap();
        let good = t.decisions[0].chosen == 0;
        assert_eq!(t.reward(), if good { 1 } else { -1 });
        p.reinforce_update(&t).unwrap();
    }
    let good = p.step_distribution(0, 0)[0].1;
    assert!(good > 0.95, "good arm probability {good}");
}
