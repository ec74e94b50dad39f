use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{pick, pick_distinct};
use crate::dom::{DomSnapshot, PageBuilder, Rect};
use crate::env::page::{add_background, apply_generic, SCREEN};
use crate::env::words::WORDS;
use crate::env::{episode_rng, Action, EpisodeInfo, Goal, Task, Verdict, PAGE_STREAM};

pub const MIN_BUTTONS: usize = 2;
pub const MAX_BUTTONS: usize = 5;

/// Click the button whose label is the goal's `target`.
#[derive(Debug, Clone, Copy)]
pub struct ClickButton;

const SLOTS: [(f64, f64); 6] = [(8.0, 40.0), (84.0, 40.0), (8.0, 85.0), (84.0, 85.0), (8.0, 130.0), (84.0, 130.0)];

impl Task for ClickButton {
    fn name(&self) -> &'static str {
        "click-button"
    }

    fn horizon(&self) -> usize {
        2
    }

    fn sample_goal(&self, rng: &mut ChaCha8Rng) -> Goal {
        Goal::structured([("target", pick(rng, WORDS))])
    }

    fn initial_page(&self, info: EpisodeInfo<'_>) -> DomSnapshot {
        let mut rng = episode_rng(info.seed, PAGE_STREAM);
        let target = info.goal.get("target").unwrap_or("ok");
        let k = rng.gen_range(MIN_BUTTONS..=MAX_BUTTONS);
        let mut labels: Vec<&str> = pick_distinct(&mut rng, WORDS, k + 1).into_iter().filter(|w| *w != target).take(k - 1).collect();
        labels.insert(rng.gen_range(0..k), target);
        let mut slots = SLOTS;
        slots.shuffle(&mut rng);

        let mut b = PageBuilder::new(SCREEN);
        let area = b.add_with(PageBuilder::ROOT, "div", SCREEN, "", &["area"]);
        for (label, (x, y)) in labels.iter().zip(slots) {
            b.add_with(area, "button", Rect::new(x, y, 68.0, 24.0), label, &["btn"]);
        }
        add_background(&mut b, area);
        b.build().expect("valid page")
    }

    fn transition(&self, info: EpisodeInfo<'_>, page: &DomSnapshot, action: &Action) -> (DomSnapshot, Verdict) {
        let next = apply_generic(page, action);
        let e = &page.get(action.element()).expect("validated");
        let verdict = match action {
            Action::Click(_) if e.tag == "button" => {
                if Some(e.text.as_str()) == info.goal.get("target") {
                    Verdict::Success
                } else {
                    Verdict::Failure
                }
            }
            _ => Verdict::Continue,
        };
        (next, verdict)
    }

    fn oracle_action(&self, info: EpisodeInfo<'_>, page: &DomSnapshot) -> Action {
        let target = info.goal.get("target").unwrap_or_default();
        let id = page.elements().find(|e| e.tag == "button" && e.text == target).map(|e| e.id).expect("target button exists");
        Action::Click(id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Env;

    #[test]
    fn wrong_button_fails() {
        let env = Env::new("click-button").unwrap();
        let s = env.reset(5);
        let target = s.goal.get("target").unwrap();
        let wrong = s.snapshot.elements().find(|e| e.tag == "button" && e.text != target).unwrap().id;
        let next = env.step(&s, &Action::Click(wrong)).unwrap();
        assert!(next.done);
        assert_eq!(next.reward, -1);
    }

    #[test]
    fn background_click_then_timeout() {
        let env = Env::new("click-button").unwrap();
        let s = env.reset(5);
        let bg = s.snapshot.leaves().into_iter().last().unwrap();
        let s1 = env.step(&s, &Action::Click(bg)).unwrap();
        assert!(!s1.done && s1.reward == 0);
        let s2 = env.step(&s1, &Action::Click(bg)).unwrap();
        assert!(s2.done);
        assert_eq!(s2.reward, -1);
    }

    #[test]
    fn first_leaf_is_a_button() {
        let env = Env::new("click-button").unwrap();
        for seed in 0..20 {
            let s = env.reset(seed);
            let first = s.snapshot.leaves()[0];
            assert_eq!(s.snapshot.get(first).unwrap().tag, "button");
        }
    }
}
