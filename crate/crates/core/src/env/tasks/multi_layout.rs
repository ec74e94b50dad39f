use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::pick;
use crate::dom::{DomSnapshot, ElementId, PageBuilder, Rect};
use crate::env::page::{add_background, apply_generic, SCREEN};
use crate::env::words::{DOMAINS, NAMES};
use crate::env::{episode_rng, Action, EpisodeInfo, Goal, Task, Verdict, PAGE_STREAM};

/// The same three-field form rendered under a seeded choice of layout,
/// field order, label wording and button caption.
#[derive(Debug, Clone, Copy)]
pub struct MultiLayout;

pub const FIELDS: [&str; 3] = ["username", "email", "zip"];

const LABELS: [&[&str]; 3] =
    [&["Username", "User name", "Login"], &["Email", "E-mail address", "Mail"], &["Zip", "Zip code", "Postal code"]];

const BUTTONS: &[&str] = &["Submit", "Send", "Done"];

/// Number of distinct arrangements of label and input.
pub const LAYOUTS: usize = 4;

struct Form {
    page: DomSnapshot,
    /// Input element for each entry of [`FIELDS`].
    inputs: [ElementId; 3],
    button: ElementId,
}

fn build(seed: u64) -> Form {
    let mut rng = episode_rng(seed, PAGE_STREAM);
    let layout = rng.gen_range(0..LAYOUTS);
    let mut order = [0usize, 1, 2];
    order.shuffle(&mut rng);
    let labels: Vec<&str> = LABELS.iter().map(|l| pick(&mut rng, l)).collect();
    let caption = pick(&mut rng, BUTTONS);

    let mut b = PageBuilder::new(SCREEN);
    let area = b.add_with(PageBuilder::ROOT, "div", SCREEN, "", &["area"]);
    let form = b.add_with(area, "form", Rect::new(0.0, 0.0, 160.0, 196.0), "", &["form"]);
    let mut inputs = [0; 3];
    for (row, &field) in order.iter().enumerate() {
        let row = row as f64;
        let (label_rect, input_rect) = match layout {
            // label left of the input
            0 => (Rect::new(6.0, 14.0 + row * 50.0, 50.0, 14.0), Rect::new(60.0, 13.0 + row * 50.0, 94.0, 16.0)),
            // label above the input
            1 => (Rect::new(10.0, 6.0 + row * 62.0, 90.0, 12.0), Rect::new(10.0, 20.0 + row * 62.0, 120.0, 16.0)),
            // label right of the input
            2 => (Rect::new(104.0, 24.0 + row * 50.0, 50.0, 14.0), Rect::new(6.0, 23.0 + row * 50.0, 94.0, 16.0)),
            // label below the input
            _ => (Rect::new(30.0, 26.0 + row * 62.0, 90.0, 12.0), Rect::new(30.0, 8.0 + row * 62.0, 120.0, 16.0)),
        };
        let label_first = layout != 2 && layout != 3;
        if label_first {
            b.add_with(form, "label", label_rect, labels[field], &["form-label"]);
            inputs[field] = b.add_with(form, "input_text", input_rect, "", &["form-input"]);
        } else {
            inputs[field] = b.add_with(form, "input_text", input_rect, "", &["form-input"]);
            b.add_with(form, "label", label_rect, labels[field], &["form-label"]);
        }
    }
    let button_rect = match layout {
        0 => Rect::new(96.0, 166.0, 58.0, 20.0),
        1 => Rect::new(10.0, 172.0, 58.0, 20.0),
        2 => Rect::new(6.0, 166.0, 58.0, 20.0),
        _ => Rect::new(92.0, 176.0, 58.0, 18.0),
    };
    let button = b.add_with(form, "button", button_rect, caption, &["form-submit"]);
    add_background(&mut b, area);
    Form { page: b.build().expect("valid page"), inputs, button }
}

impl Task for MultiLayout {
    fn name(&self) -> &'static str {
        "multi-layout"
    }

    fn horizon(&self) -> usize {
        4
    }

    fn sample_goal(&self, rng: &mut ChaCha8Rng) -> Goal {
        let user = pick(rng, NAMES);
        let email = format!("{}@{}", pick(rng, NAMES), pick(rng, DOMAINS));
        let zip: String = (0..5).map(|_| char::from(b'0' + rng.gen_range(0..10u8))).collect();
        Goal::structured([("username", String::from(user)), ("email", email), ("zip", zip)])
    }

    fn initial_page(&self, info: EpisodeInfo<'_>) -> DomSnapshot {
        build(info.seed).page
    }

    fn transition(&self, info: EpisodeInfo<'_>, page: &DomSnapshot, action: &Action) -> (DomSnapshot, Verdict) {
        let next = apply_generic(page, action);
        let form = build(info.seed);
        let verdict = if matches!(action, Action::Click(_)) && action.element() == form.button {
            let filled =
                FIELDS.iter().zip(form.inputs).all(|(key, id)| Some(page.get(id).expect("input").value.as_str()) == info.goal.get(key));
            if filled {
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
        let form = build(info.seed);
        let mut pending: Vec<(f64, ElementId, &str)> = FIELDS
            .iter()
            .zip(form.inputs)
            .filter_map(|(key, id)| {
                let want = info.goal.get(key).unwrap_or_default();
                let e = page.get(id).expect("input");
                (e.value != want).then_some((e.top, id, want))
            })
            .collect();
        pending.sort_by(|a, b| a.0.total_cmp(&b.0));
        match pending.first() {
            Some(&(_, id, want)) => Action::Type(id, want.into()),
            None => Action::Click(form.button),
        }
    }
}
