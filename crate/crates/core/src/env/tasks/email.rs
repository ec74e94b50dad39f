use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{capitalize, pick, pick_distinct};
use crate::dom::{DomSnapshot, ElementId, PageBuilder, Rect};
use crate::env::page::{add_background, apply_generic, find_by_class, has_class, SCREEN};
use crate::env::words::{BODY_WORDS, MESSAGE_WORDS, NAMES, SUBJECT_WORDS};
use crate::env::{episode_rng, Action, EpisodeInfo, Goal, Task, Verdict, PAGE_STREAM};
use crate::text::{normalize, utterance_tokens};

/// Forward, reply to, or delete the email from a given sender.
///
/// With `natural_language` set the goal additionally carries a templated
/// utterance; the structured fields are kept for workflow matching.
#[derive(Debug, Clone, Copy)]
pub struct EmailInbox {
    pub natural_language: bool,
}

pub const INTENTS: [&str; 3] = ["forward", "reply", "delete"];

pub const FORWARD_TEMPLATES: &[&str] = &[
    "Forward the email from {by} to {to}",
    "Find the email by {by} and forward it to {to}",
    "Send {to} the email {by} sent",
    "Pass along the email from {by} to {to}",
    "Get the email {by} sent me over to {to}",
];

pub const REPLY_TEMPLATES: &[&str] = &[
    "Reply to {by} with {message}",
    "Find the email by {by} and reply with {message}",
    "Respond to {by} saying {message}",
    "Answer the email from {by} with {message}",
    "Tell {by} {message} in a reply",
];

pub const DELETE_TEMPLATES: &[&str] = &[
    "Delete the email from {by}",
    "Find the email by {by} and delete it",
    "Remove the email {by} sent",
    "Trash the email from {by}",
    "Get rid of the email by {by}",
];

pub fn templates(intent: &str) -> &'static [&'static str] {
    match intent {
        "forward" => FORWARD_TEMPLATES,
        "reply" => REPLY_TEMPLATES,
        _ => DELETE_TEMPLATES,
    }
}

fn fill(template: &str, goal: &Goal) -> String {
    let mut out = String::from(template);
    for key in ["by", "to", "message"] {
        if let Some(v) = goal.get(key) {
            out = out.replace(&format!("{{{key}}}"), v);
        }
    }
    out
}

struct Email {
    sender: String,
    subject: String,
    body: String,
}

fn inbox(info: EpisodeInfo<'_>) -> Vec<Email> {
    let mut rng = episode_rng(info.seed, PAGE_STREAM);
    let target = info.goal.get("by").unwrap_or("Bob");
    let n = rng.gen_range(3..=5);
    let mut senders: Vec<String> =
        pick_distinct(&mut rng, NAMES, n + 1).into_iter().map(capitalize).filter(|s| !s.eq_ignore_ascii_case(target)).take(n - 1).collect();
    senders.insert(rng.gen_range(0..n), target.into());
    senders
        .into_iter()
        .map(|sender| {
            let subject = capitalize(pick(&mut rng, SUBJECT_WORDS));
            let body = pick_distinct(&mut rng, BODY_WORDS, 5).join(" ");
            Email { sender, subject, body: capitalize(&body) }
        })
        .collect()
}

enum View {
    Inbox,
    Open(String),
    Forward(String),
    Reply(String),
}

fn view(page: &DomSnapshot) -> View {
    let sender = || find_by_class(page, "email-sender-header").map(|id| page.get(id).unwrap().text.clone()).unwrap_or_default();
    if find_by_class(page, "forward-view").is_some() {
        View::Forward(sender())
    } else if find_by_class(page, "reply-view").is_some() {
        View::Reply(sender())
    } else if find_by_class(page, "email-view").is_some() {
        View::Open(sender())
    } else {
        View::Inbox
    }
}

fn frame(b: &mut PageBuilder, class: &str) -> (ElementId, ElementId) {
    let area = b.add_with(PageBuilder::ROOT, "div", SCREEN, "", &["area"]);
    let view = b.add_with(area, "div", Rect::new(0.0, 0.0, 160.0, 196.0), "", &[class]);
    (area, view)
}

fn inbox_page(emails: &[Email]) -> DomSnapshot {
    let mut b = PageBuilder::new(SCREEN);
    let (area, list) = frame(&mut b, "inbox");
    for (i, email) in emails.iter().enumerate() {
        let y = 6.0 + i as f64 * 36.0;
        let row = b.add_with(list, "div", Rect::new(4.0, y, 152.0, 30.0), "", &["email-thread"]);
        b.add_with(row, "span", Rect::new(8.0, y + 2.0, 70.0, 12.0), &email.sender, &["email-sender"]);
        b.add_with(row, "span", Rect::new(8.0, y + 16.0, 140.0, 12.0), &email.subject, &["email-subject"]);
    }
    add_background(&mut b, area);
    b.build().expect("valid page")
}

fn email_page(email: &Email) -> DomSnapshot {
    let mut b = PageBuilder::new(SCREEN);
    let (area, v) = frame(&mut b, "email-view");
    b.add_with(v, "span", Rect::new(8.0, 8.0, 100.0, 12.0), &email.sender, &["email-sender-header"]);
    b.add_with(v, "span", Rect::new(8.0, 24.0, 140.0, 12.0), &email.subject, &["email-subject"]);
    b.add_with(v, "div", Rect::new(8.0, 44.0, 144.0, 56.0), &email.body, &["email-body"]);
    b.add_with(v, "span", Rect::new(110.0, 112.0, 44.0, 14.0), "Reply", &["email-reply"]);
    b.add_with(v, "span", Rect::new(110.0, 132.0, 44.0, 14.0), "Forward", &["email-forward"]);
    b.add_with(v, "span", Rect::new(110.0, 152.0, 44.0, 14.0), "Delete", &["email-delete"]);
    add_background(&mut b, area);
    b.build().expect("valid page")
}

fn compose_page(email: &Email, forward: bool) -> DomSnapshot {
    let mut b = PageBuilder::new(SCREEN);
    let (area, v) = frame(&mut b, if forward { "forward-view" } else { "reply-view" });
    b.add_with(v, "span", Rect::new(110.0, 4.0, 46.0, 10.0), &email.sender, &["email-sender-header"]);
    b.add_with(v, "label", Rect::new(6.0, 20.0, 20.0, 12.0), "To", &[]);
    if forward {
        b.add_with(v, "input_text", Rect::new(30.0, 18.0, 120.0, 16.0), "", &["forward-sender"]);
    } else {
        b.add_with(v, "span", Rect::new(30.0, 20.0, 120.0, 12.0), &email.sender, &["reply-sender"]);
    }
    b.add_with(v, "label", Rect::new(6.0, 42.0, 40.0, 12.0), "Subject", &[]);
    let prefix = if forward { "Fwd" } else { "Re" };
    let subject = format!("{prefix}: {}", email.subject);
    b.add_with(v, "span", Rect::new(50.0, 42.0, 100.0, 12.0), &subject, &["compose-subject"]);
    if forward {
        b.add_with(v, "div", Rect::new(6.0, 62.0, 148.0, 60.0), &email.body, &["forward-body"]);
    } else {
        b.add_with(v, "textarea", Rect::new(6.0, 62.0, 148.0, 60.0), "", &["reply-text"]);
    }
    b.add_with(v, "span", Rect::new(6.0, 170.0, 40.0, 16.0), "Send", &["email-send"]);
    add_background(&mut b, area);
    b.build().expect("valid page")
}

fn value_of(page: &DomSnapshot, class: &str) -> String {
    find_by_class(page, class).map(|id| page.get(id).unwrap().value.clone()).unwrap_or_default()
}

impl EmailInbox {
    fn find<'a>(emails: &'a [Email], sender: &str) -> Option<&'a Email> {
        emails.iter().find(|e| e.sender == sender)
    }
}

impl Task for EmailInbox {
    fn name(&self) -> &'static str {
        if self.natural_language {
            "email-inbox-nl"
        } else {
            "email-inbox"
        }
    }

    fn horizon(&self) -> usize {
        4
    }

    fn sample_goal(&self, rng: &mut ChaCha8Rng) -> Goal {
        let intent = pick(rng, &INTENTS);
        let names = pick_distinct(rng, NAMES, 2);
        let by = capitalize(names[0]);
        let goal = match intent {
            "forward" => Goal::structured([("task", intent.into()), ("by", by), ("to", capitalize(names[1]))]),
            "reply" => {
                let words = pick_distinct(rng, MESSAGE_WORDS, 2).join(" ");
                Goal::structured([("task", intent.into()), ("by", by), ("message", words)])
            }
            _ => Goal::structured([("task", String::from(intent)), ("by", by)]),
        };
        if self.natural_language {
            let template = pick(rng, templates(intent));
            let tokens = utterance_tokens(&fill(template, &goal));
            goal.with_utterance(tokens)
        } else {
            goal
        }
    }

    fn initial_page(&self, info: EpisodeInfo<'_>) -> DomSnapshot {
        inbox_page(&inbox(info))
    }

    fn transition(&self, info: EpisodeInfo<'_>, page: &DomSnapshot, action: &Action) -> (DomSnapshot, Verdict) {
        let id = action.element();
        let clicked = |class: &str| matches!(action, Action::Click(_)) && has_class(page, id, class);
        let emails = inbox(info);
        let task = info.goal.get("task").unwrap_or_default();
        let target = info.goal.get("by").unwrap_or_default();
        match view(page) {
            View::Inbox => {
                if matches!(action, Action::Click(_)) {
                    let row = page.parent(id).filter(|&p| has_class(page, p, "email-thread"));
                    if let Some(row) = row {
                        let sender = page.get(page.get(row).unwrap().children[0]).unwrap().text.clone();
                        if let Some(email) = Self::find(&emails, &sender) {
                            return (email_page(email), Verdict::Continue);
                        }
                    }
                }
                (apply_generic(page, action), Verdict::Continue)
            }
            View::Open(sender) => {
                let email = Self::find(&emails, &sender).expect("open email exists");
                let right = sender == target;
                if clicked("email-forward") {
                    (compose_page(email, true), Verdict::Continue)
                } else if clicked("email-reply") {
                    (compose_page(email, false), Verdict::Continue)
                } else if clicked("email-delete") {
                    let ok = right && task == "delete";
                    (inbox_page(&emails), if ok { Verdict::Success } else { Verdict::Failure })
                } else {
                    (apply_generic(page, action), Verdict::Continue)
                }
            }
            View::Forward(sender) => {
                let next = apply_generic(page, action);
                if clicked("email-send") {
                    let to = value_of(page, "forward-sender");
                    let ok = sender == target && task == "forward" && normalize(&to) == normalize(info.goal.get("to").unwrap_or_default());
                    (next, if ok { Verdict::Success } else { Verdict::Failure })
                } else {
                    (next, Verdict::Continue)
                }
            }
            View::Reply(sender) => {
                let next = apply_generic(page, action);
                if clicked("email-send") {
                    let text = value_of(page, "reply-text");
                    let ok =
                        sender == target && task == "reply" && normalize(&text) == normalize(info.goal.get("message").unwrap_or_default());
                    (next, if ok { Verdict::Success } else { Verdict::Failure })
                } else {
                    (next, Verdict::Continue)
                }
            }
        }
    }

    fn oracle_action(&self, info: EpisodeInfo<'_>, page: &DomSnapshot) -> Action {
        let target = info.goal.get("by").unwrap_or_default();
        let by_class = |class: &str| find_by_class(page, class).expect("element exists");
        match view(page) {
            View::Inbox => {
                let id = page
                    .preorder()
                    .iter()
                    .copied()
                    .find(|&id| has_class(page, id, "email-sender") && page.get(id).unwrap().text == target)
                    .expect("target email listed");
                Action::Click(id)
            }
            View::Open(_) => match info.goal.get("task") {
                Some("forward") => Action::Click(by_class("email-forward")),
                Some("reply") => Action::Click(by_class("email-reply")),
                _ => Action::Click(by_class("email-delete")),
            },
            View::Forward(_) => {
                let want = info.goal.get("to").unwrap_or_default();
                if value_of(page, "forward-sender") != want {
                    Action::Type(by_class("forward-sender"), want.into())
                } else {
                    Action::Click(by_class("email-send"))
                }
            }
            View::Reply(_) => {
                let want = info.goal.get("message").unwrap_or_default();
                if value_of(page, "reply-text") != want {
                    Action::Type(by_class("reply-text"), want.into())
                } else {
                    Action::Click(by_class("email-send"))
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{run_episode, Env, OraclePolicy};
    use alloc::collections::BTreeSet;

    #[test]
    fn goal_has_task_key_and_every_intent_occurs() {
        let env = Env::new("email-inbox").unwrap();
        let intents: BTreeSet<String> = (0..60).map(|s| String::from(env.reset(s).goal.get("task").unwrap())).collect();
        assert_eq!(intents.len(), 3);
    }

    #[test]
    fn target_sender_listed_exactly_once() {
        let env = Env::new("email-inbox").unwrap();
        for seed in 0..50 {
            let s = env.reset(seed);
            let by = s.goal.get("by").unwrap();
            let n = s.snapshot.elements().filter(|e| e.has_class("email-sender") && e.text == by).count();
            assert_eq!(n, 1);
        }
    }

    #[test]
    fn templated_utterances_mention_goal_values() {
        let env = Env::new("email-inbox-nl").unwrap();
        for seed in 0..60 {
            let s = env.reset(seed);
            let u = s.goal.utterance.clone().unwrap();
            assert!(u.iter().any(|t| t == s.goal.get("by").unwrap()));
            for key in ["to", "message"] {
                if let Some(v) = s.goal.get(key) {
                    assert!(s.goal.admits_text(v), "{v} in {u:?}");
                }
            }
        }
        for intent in INTENTS {
            assert!(templates(intent).len() >= 5);
        }
    }

    #[test]
    fn deleting_the_wrong_email_fails() {
        let env = Env::new("email-inbox").unwrap();
        let seed = (0..).find(|&s| env.reset(s).goal.get("task") == Some("delete")).unwrap();
        let s = env.reset(seed);
        let by = s.goal.get("by").unwrap();
        let other = s.snapshot.elements().find(|e| e.has_class("email-sender") && e.text != by).unwrap().id;
        let s1 = env.step(&s, &Action::Click(other)).unwrap();
        let del = s1.snapshot.elements().find(|e| e.has_class("email-delete")).unwrap().id;
        let s2 = env.step(&s1, &Action::Click(del)).unwrap();
        assert_eq!(s2.reward, -1);
    }

    #[test]
    fn oracle_lengths_fit_horizon() {
        for name in ["email-inbox", "email-inbox-nl"] {
            let env = Env::new(name).unwrap();
            for seed in 0..40 {
                let r = run_episode(&env, &mut OraclePolicy, seed);
                assert_eq!(r.reward(), 1);
                assert!(r.steps.len() <= 4);
            }
        }
    }
}
