//! Central-difference oracles for the two differentiable pieces: the
//! workflow-policy log-likelihood and the full DOMNet training loss.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wge_core::demo::oracle_demonstrate;
use wge_core::dom::{DomSnapshot, PageBuilder, Rect};
use wge_core::domnet::{DomNet, NeuralConfig, StepKind, TrainStep, Vocab};
use wge_core::dsl::DEFAULT_STEP_CAP;
use wge_core::env::{Action, Env, Goal};
use wge_core::lattice::induce;
use wge_core::nn::Graph;
use wge_core::workflow::{DemoLattice, WorkflowConfig, WorkflowPolicy};

/// `|a - n| / max(|a|, |n|)`, or zero when both sides are below `floor`
/// and agree to `floor`.
pub fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale < floor {
        if (a - n).abs() < floor {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (a - n).abs() / scale
    }
}

/// Worst relative error of the ψ-gradient over the decisions of real
/// exploration traces, with random logits.
pub fn psi_max_rel_err() -> f64 {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for task in ["login-user", "email-inbox", "click-checkboxes"] {
        let env = Env::new(task).unwrap();
        let demos: Vec<DemoLattice> = (0..3)
            .map(|s| {
                let d = oracle_demonstrate(&env, s, s == 2);
                DemoLattice { goal: d.goal.clone(), lattice: induce(&d, "d", Some(DEFAULT_STEP_CAP)).unwrap() }
            })
            .collect();
        let mut policy = WorkflowPolicy::new(demos, WorkflowConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for table in policy.psi.iter_mut().flatten() {
            for x in table.iter_mut() {
                *x = rng.gen_range(-2.0..2.0);
            }
        }
        for seed in 0..3 {
            let Ok(trace) = policy.explore(&env, env.reset(seed), &mut rng) else { continue };
            for d in &trace.decisions {
                let analytic = policy.decision_grad(trace.demo, d);
                for (k, &(e, s)) in d.pairs.iter().enumerate() {
                    let h = 1e-3;
                    let mut p = policy.clone();
                    let x = p.psi[trace.demo][e][s];
                    let mut at = |dx: f64| {
                        p.psi[trace.demo][e][s] = x + dx;
                        p.decision_log_prob(trace.demo, d)
                    };
                    // fourth-order central stencil
                    let numeric = (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h);
                    worst = worst.max(rel_err(analytic[k], numeric, 1e-8));
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 100, "only {checked} logits checked");
    worst
}

/// Five elements: a body, a form, a label, a text box and a button.
pub fn five_element_page() -> DomSnapshot {
    let mut b = PageBuilder::new(Rect::new(0.0, 0.0, 160.0, 210.0));
    let form = b.add_with(PageBuilder::ROOT, "div", Rect::new(5.0, 5.0, 150.0, 100.0), "", &["form"]);
    b.add_with(form, "span", Rect::new(10.0, 10.0, 30.0, 14.0), "To", &["label"]);
    b.add_with(form, "input_text", Rect::new(45.0, 10.0, 100.0, 14.0), "", &["recipient"]);
    b.add_with(form, "button", Rect::new(10.0, 60.0, 60.0, 20.0), "Send alice", &["btn"]);
    b.build().unwrap()
}

/// Loss cases that together reach every parameter tensor.
pub fn loss_cases(net: &DomNet) -> Vec<TrainStep> {
    let page = five_element_page();
    let input = page.elements().find(|e| e.tag == "input_text").unwrap().id;
    let button = page.elements().find(|e| e.tag == "button").unwrap().id;
    let fields = Goal::structured([("to", "alice"), ("subject", "lunch plans")]);
    let utterance = Goal::default().with_utterance(["send", "to", "alice", "smith", "now"].map(String::from).to_vec());
    let step = |goal: &Goal, action: Action, kind: StepKind, advantage: f64| TrainStep {
        features: net.features(&page, goal),
        action,
        ret: 0.8,
        kind,
        advantage: Some(advantage),
    };
    vec![
        step(&fields, Action::Type(input, "lunch plans".into()), StepKind::OnPolicy, 0.7),
        step(&fields, Action::Click(button), StepKind::Replay, 0.4),
        step(&utterance, Action::Type(input, "alice smith".into()), StepKind::OnPolicy, -0.3),
    ]
}

fn loss(net: &DomNet, step: &TrainStep) -> f64 {
    let mut g = Graph::new(&net.params);
    let l = net.step_loss(&mut g, step).expect("action is producible");
    g.scalar_of(l)
}

#[derive(Debug, Default)]
pub struct DomNetCheck {
    pub worst: f64,
    pub worst_at: String,
    pub entries: usize,
    /// Tensors with at least one non-zero analytic gradient entry.
    pub touched: Vec<String>,
    pub tensors: usize,
}

/// Compares analytic and central-difference gradients of the per-step
/// loss. Tensors up to `full_limit` entries are checked entry by entry;
/// larger ones on every non-zero-gradient entry up to `sample` of them plus
/// `sample / 8` zero-gradient entries.
pub fn domnet_check(config: NeuralConfig, full_limit: usize, sample: usize) -> DomNetCheck {
    let net = DomNet::new(config, Vocab::standard());
    let mut out = DomNetCheck { tensors: net.params.len(), ..DomNetCheck::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let h = 1e-5;
    for (case, step) in loss_cases(&net).iter().enumerate() {
        let (grads, _, used) = net.batch_gradients(std::slice::from_ref(step)).unwrap();
        assert_eq!(used, 1);
        for id in net.params.ids() {
            let name = net.params.name(id).to_owned();
            let len = net.params.get(id).len();
            let analytic: Vec<f64> = match grads.get(id) {
                Some(t) => t.data().to_vec(),
                None => vec![0.0; len],
            };
            if analytic.iter().any(|x| *x != 0.0) && !out.touched.contains(&name) {
                out.touched.push(name.clone());
            }
            let indices: Vec<usize> = if len <= full_limit {
                (0..len).collect()
            } else {
                let (mut nonzero, mut zero): (Vec<usize>, Vec<usize>) = (0..len).partition(|&k| analytic[k] != 0.0);
                nonzero.shuffle(&mut rng);
                zero.shuffle(&mut rng);
                nonzero.truncate(sample);
                zero.truncate(sample / 8);
                nonzero.into_iter().chain(zero).collect()
            };
            let mut probe = net.clone();
            for k in indices {
                let x = probe.params.get(id).data()[k];
                probe.params.get_mut(id).data_mut()[k] = x + h;
                let up = loss(&probe, step);
                probe.params.get_mut(id).data_mut()[k] = x - h;
                let down = loss(&probe, step);
                probe.params.get_mut(id).data_mut()[k] = x;
                let numeric = (up - down) / (2.0 * h);
                let e = rel_err(analytic[k], numeric, 1e-7);
                out.entries += 1;
                if e > out.worst {
                    out.worst = e;
                    out.worst_at = format!("case {case}, {name}[{k}]: analytic {:.3e}, numeric {numeric:.3e}", analytic[k]);
                }
            }
        }
    }
    out.touched.sort();
    out
}
