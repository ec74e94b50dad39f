//! The task catalog.

mod checkboxes;
mod click_button;
mod email;
mod login;
mod multi_layout;
mod search;

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::Task;

pub use checkboxes::ClickCheckboxes;
pub use click_button::ClickButton;
pub use email::EmailInbox;
pub use login::LoginUser;
pub use multi_layout::MultiLayout;
pub use search::SearchEngine;

pub const TASK_NAMES: &[&str] = &[
    "click-button",
    "click-checkboxes",
    "click-checkboxes-large",
    "login-user",
    "email-inbox",
    "search-engine",
    "multi-layout",
    "email-inbox-nl",
];

static CLICK_BUTTON: ClickButton = ClickButton;
static CLICK_CHECKBOXES: ClickCheckboxes = ClickCheckboxes::REGULAR;
static CLICK_CHECKBOXES_LARGE: ClickCheckboxes = ClickCheckboxes::LARGE;
static LOGIN_USER: LoginUser = LoginUser;
static EMAIL_INBOX: EmailInbox = EmailInbox { natural_language: false };
static EMAIL_INBOX_NL: EmailInbox = EmailInbox { natural_language: true };
static SEARCH_ENGINE: SearchEngine = SearchEngine;
static MULTI_LAYOUT: MultiLayout = MultiLayout;

pub fn lookup(name: &str) -> Option<&'static dyn Task> {
    Some(match name {
        "click-button" => &CLICK_BUTTON,
        "click-checkboxes" => &CLICK_CHECKBOXES,
        "click-checkboxes-large" => &CLICK_CHECKBOXES_LARGE,
        "login-user" => &LOGIN_USER,
        "email-inbox" => &EMAIL_INBOX,
        "email-inbox-nl" => &EMAIL_INBOX_NL,
        "search-engine" => &SEARCH_ENGINE,
        "multi-layout" => &MULTI_LAYOUT,
        _ => return None,
    })
}

fn pick<'a>(rng: &mut ChaCha8Rng, list: &[&'a str]) -> &'a str {
    list[rng.gen_range(0..list.len())]
}

fn pick_distinct<'a>(rng: &mut ChaCha8Rng, list: &[&'a str], n: usize) -> Vec<&'a str> {
    let mut v: Vec<&str> = list.choose_multiple(rng, n).copied().collect();
    v.shuffle(rng);
    v
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{run_episode, Env, OraclePolicy};

    #[test]
    fn every_task_is_registered_and_deterministic() {
        for name in TASK_NAMES {
            let env = Env::new(name).unwrap();
            assert_eq!(env.name(), *name);
            let (a, b) = (env.reset(7), env.reset(7));
            assert_eq!(a, b);
            assert!(a.goal.is_valid(), "{name}");
            assert!(!a.done && a.reward == 0);
        }
    }

    #[test]
    fn oracle_replays_are_deterministic() {
        for name in TASK_NAMES {
            let env = Env::new(name).unwrap();
            let r1 = run_episode(&env, &mut OraclePolicy, 11);
            let r2 = run_episode(&env, &mut OraclePolicy, 11);
            assert_eq!(r1.last, r2.last);
            assert_eq!(r1.reward(), 1, "{name}");
            // reward sparsity
            for (s, _) in &r1.steps {
                assert_eq!(s.reward, 0);
            }
        }
    }
}
