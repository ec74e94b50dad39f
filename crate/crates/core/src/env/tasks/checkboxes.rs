use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::pick_distinct;
use crate::dom::{DomSnapshot, PageBuilder, Rect};
use crate::env::page::{add_background, apply_generic, SCREEN};
use crate::env::words::WORDS;
use crate::env::{episode_rng, Action, EpisodeInfo, Goal, Task, Verdict, PAGE_STREAM};

/// Check exactly the boxes named by the goal, then submit.
///
/// Each checkbox carries its label as its own text. The goal has one field
/// per target, `target1` to `targetN`, so goals with different target
/// counts have different key sets.
#[derive(Debug, Clone, Copy)]
pub struct ClickCheckboxes {
    name: &'static str,
    min_targets: usize,
    max_targets: usize,
    max_extra: usize,
    max_boxes: usize,
    row_pitch: f64,
    row_height: f64,
    horizon: usize,
}

impl ClickCheckboxes {
    pub const REGULAR: Self = Self {
        name: "click-checkboxes",
        min_targets: 1,
        max_targets: 6,
        max_extra: 3,
        max_boxes: 8,
        row_pitch: 22.0,
        row_height: 16.0,
        horizon: 7,
    };

    pub const LARGE: Self = Self {
        name: "click-checkboxes-large",
        min_targets: 5,
        max_targets: 12,
        max_extra: 3,
        max_boxes: 14,
        row_pitch: 13.5,
        row_height: 11.0,
        horizon: 13,
    };

    fn targets(goal: &Goal) -> BTreeSet<String> {
        goal.fields.iter().filter(|(k, _)| k.starts_with("target")).map(|(_, v)| v.to_lowercase()).collect()
    }
}

impl Task for ClickCheckboxes {
    fn name(&self) -> &'static str {
        self.name
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn sample_goal(&self, rng: &mut ChaCha8Rng) -> Goal {
        let t = rng.gen_range(self.min_targets..=self.max_targets);
        let words = pick_distinct(rng, WORDS, t);
        Goal::structured(words.iter().enumerate().map(|(i, w)| (alloc::format!("target{}", i + 1), *w)))
    }

    fn initial_page(&self, info: EpisodeInfo<'_>) -> DomSnapshot {
        let mut rng = episode_rng(info.seed, PAGE_STREAM);
        let targets: Vec<String> = Self::targets(info.goal).into_iter().collect();
        let extra = rng.gen_range(0..=self.max_extra).min(self.max_boxes - targets.len().min(self.max_boxes));
        let mut labels: Vec<String> = targets.clone();
        for w in pick_distinct(&mut rng, WORDS, WORDS.len()) {
            if labels.len() >= targets.len() + extra {
                break;
            }
            if !labels.iter().any(|l| l == w) {
                labels.push(w.into());
            }
        }
        // Fisher-Yates so targets land anywhere in the list
        for i in (1..labels.len()).rev() {
            labels.swap(i, rng.gen_range(0..=i));
        }

        let mut b = PageBuilder::new(SCREEN);
        let area = b.add_with(PageBuilder::ROOT, "div", SCREEN, "", &["area"]);
        let list = b.add_with(area, "div", Rect::new(0.0, 0.0, 100.0, 196.0), "", &["checkbox-list"]);
        for (i, label) in labels.iter().enumerate() {
            let y = 4.0 + i as f64 * self.row_pitch;
            b.add_with(list, "input_checkbox", Rect::new(4.0, y, 92.0, self.row_height), label, &["checkbox"]);
        }
        b.add_with(area, "button", Rect::new(108.0, 8.0, 48.0, 20.0), "Submit", &["submit"]);
        add_background(&mut b, area);
        b.build().expect("valid page")
    }

    fn transition(&self, info: EpisodeInfo<'_>, page: &DomSnapshot, action: &Action) -> (DomSnapshot, Verdict) {
        let next = apply_generic(page, action);
        let e = page.get(action.element()).expect("validated");
        let verdict = if matches!(action, Action::Click(_)) && e.tag == "button" {
            let checked: BTreeSet<String> =
                page.elements().filter(|e| e.tag == "input_checkbox" && e.checked).map(|e| e.text.to_lowercase()).collect();
            if checked == Self::targets(info.goal) {
                Verdict::Success
            } else {
                Verdict::Failure
            }
        } else {
            Verdict::Continue
        };
        (next, verdict)
    }

    fn oracle_action(&self, info: EpisodeInfo<'_>, page: &DomSnapshot) -> Action {
        let targets = Self::targets(info.goal);
        let wrong = page.preorder().iter().copied().find(|&id| {
            let e = page.get(id).unwrap();
            e.tag == "input_checkbox" && e.checked != targets.contains(&e.text.to_lowercase())
        });
        match wrong {
            Some(id) => Action::Click(id),
            None => Action::Click(page.elements().find(|e| e.tag == "button").map(|e| e.id).expect("submit exists")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Env;

    #[test]
    fn page_has_checkboxes_and_goal_lists_targets() {
        for name in ["click-checkboxes", "click-checkboxes-large"] {
            let env = Env::new(name).unwrap();
            for seed in 0..30 {
                let s = env.reset(seed);
                let boxes: Vec<_> = s.snapshot.elements().filter(|e| e.tag == "input_checkbox").collect();
                assert!(!boxes.is_empty());
                for t in ClickCheckboxes::targets(&s.goal) {
                    assert_eq!(boxes.iter().filter(|b| b.text == t).count(), 1, "{name} seed {seed}: {t}");
                }
                let oracle_len = s.goal.fields.len() + 1;
                assert!(oracle_len <= env.horizon());
            }
        }
    }

    #[test]
    fn large_variant_target_counts() {
        let env = Env::new("click-checkboxes-large").unwrap();
        assert_eq!(env.horizon(), 13);
        let counts: BTreeSet<usize> = (0..200).map(|s| env.reset(s).goal.fields.len()).collect();
        assert_eq!(counts.first(), Some(&5));
        assert_eq!(counts.last(), Some(&12));
    }

    #[test]
    fn premature_submit_fails() {
        let env = Env::new("click-checkboxes").unwrap();
        let s = env.reset(2);
        let submit = s.snapshot.elements().find(|e| e.tag == "button").unwrap().id;
        let next = env.step(&s, &Action::Click(submit)).unwrap();
        assert_eq!(next.reward, -1);
    }
}
