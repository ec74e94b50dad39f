use alloc::string::String;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::pick;
use crate::dom::{DomSnapshot, PageBuilder, Rect};
use crate::env::page::{add_background, apply_generic, SCREEN};
use crate::env::words::NAMES;
use crate::env::{Action, EpisodeInfo, Goal, Task, Verdict};

/// Fill in a username and password, then press "Login".
#[derive(Debug, Clone, Copy)]
pub struct LoginUser;

const PASSWORD_CHARS: &[u8] = b"abcdefghijkmnpqrstuvwxyzABCDEFGHJKLMNPQRSTUVWXYZ0123456789";

pub(crate) fn random_password(rng: &mut ChaCha8Rng) -> String {
    (0..5).map(|_| PASSWORD_CHARS[rng.gen_range(0..PASSWORD_CHARS.len())] as char).collect()
}

impl Task for LoginUser {
    fn name(&self) -> &'static str {
        "login-user"
    }

    fn horizon(&self) -> usize {
        6
    }

    fn sample_goal(&self, rng: &mut ChaCha8Rng) -> Goal {
        let username = pick(rng, NAMES);
        let password = random_password(rng);
        Goal::structured([("username", String::from(username)), ("password", password)])
    }

    fn initial_page(&self, _info: EpisodeInfo<'_>) -> DomSnapshot {
        let mut b = PageBuilder::new(SCREEN);
        let area = b.add_with(PageBuilder::ROOT, "div", SCREEN, "", &["area"]);
        let form = b.add_with(area, "form", Rect::new(10.0, 20.0, 140.0, 130.0), "", &["login-form"]);
        b.add_with(form, "label", Rect::new(15.0, 25.0, 80.0, 12.0), "Username", &[]);
        b.add_with(form, "input_text", Rect::new(15.0, 40.0, 120.0, 16.0), "", &["username"]);
        b.add_with(form, "label", Rect::new(15.0, 65.0, 80.0, 12.0), "Password", &[]);
        b.add_with(form, "input_password", Rect::new(15.0, 80.0, 120.0, 16.0), "", &["password"]);
        b.add_with(form, "button", Rect::new(15.0, 115.0, 50.0, 20.0), "Login", &["login"]);
        add_background(&mut b, area);
        b.build().expect("valid page")
    }

    fn transition(&self, info: EpisodeInfo<'_>, page: &DomSnapshot, action: &Action) -> (DomSnapshot, Verdict) {
        let next = apply_generic(page, action);
        let e = page.get(action.element()).expect("validated");
        let verdict = if matches!(action, Action::Click(_)) && e.tag == "button" {
            let value = |tag: &str| page.elements().find(|e| e.tag == tag).map(|e| e.value.as_str());
            if value("input_text") == info.goal.get("username") && value("input_password") == info.goal.get("password") {
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
        for (tag, key) in [("input_text", "username"), ("input_password", "password")] {
            let want = info.goal.get(key).unwrap_or_default();
            let field = page.elements().find(|e| e.tag == tag).expect("field exists");
            if field.value != want {
                return Action::Type(field.id, want.into());
            }
        }
        Action::Click(page.elements().find(|e| e.tag == "button").expect("button exists").id)
    }
}
