use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{capitalize, pick, pick_distinct};
use crate::dom::{DomSnapshot, PageBuilder, Rect};
use crate::env::page::{add_background, apply_generic, find_by_class, has_class, SCREEN};
use crate::env::words::NAMES;
use crate::env::{episode_rng, Action, EpisodeInfo, Goal, Task, Verdict, PAGE_STREAM};
use crate::text::normalize;

/// Search for a name, page through the results and click the one at the
/// requested rank.
#[derive(Debug, Clone, Copy)]
pub struct SearchEngine;

pub const RESULTS_PER_PAGE: usize = 3;
pub const PAGES: usize = 3;

/// Result titles for a query: the target at its rank when the query matches,
/// otherwise a list that never mentions it.
fn results(info: EpisodeInfo<'_>, matched: bool) -> Vec<String> {
    let mut rng = episode_rng(info.seed, PAGE_STREAM);
    let target = info.goal.get("target").unwrap_or_default();
    let rank: usize = info.goal.get("rank").and_then(|r| r.parse().ok()).unwrap_or(1);
    let n = RESULTS_PER_PAGE * PAGES;
    let mut titles: Vec<String> =
        pick_distinct(&mut rng, NAMES, n + 1).into_iter().map(capitalize).filter(|t| !t.eq_ignore_ascii_case(target)).take(n).collect();
    if matched {
        titles[rank - 1] = target.into();
    }
    titles
}

fn page(query: &str, listing: Option<(&str, &[String], usize)>) -> DomSnapshot {
    let mut b = PageBuilder::new(SCREEN);
    let area = b.add_with(PageBuilder::ROOT, "div", SCREEN, "", &["area"]);
    let form = b.add_with(area, "div", Rect::new(0.0, 0.0, 160.0, 28.0), "", &["search-form"]);
    let bar = b.add_with(form, "input_text", Rect::new(6.0, 6.0, 104.0, 16.0), "", &["search-bar"]);
    b.get_mut(bar).value = query.into();
    b.add_with(form, "button", Rect::new(114.0, 6.0, 40.0, 16.0), "Search", &["search-button"]);
    if let Some((searched, titles, current)) = listing {
        let list = b.add_with(area, "div", Rect::new(0.0, 30.0, 160.0, 160.0), "", &["search-results"]);
        b.add_with(list, "span", Rect::new(8.0, 32.0, 140.0, 8.0), &format!("Results for {searched}"), &["search-query"]);
        for i in 0..RESULTS_PER_PAGE {
            let title = &titles[current * RESULTS_PER_PAGE + i];
            let y = 46.0 + i as f64 * 38.0;
            b.add_with(list, "a", Rect::new(8.0, y, 100.0, 12.0), title, &["search-title"]);
            let url = format!("www.{}.com", title.to_lowercase());
            b.add_with(list, "span", Rect::new(8.0, y + 14.0, 120.0, 10.0), &url, &["search-url"]);
        }
        let pager = b.add_with(list, "div", Rect::new(4.0, 166.0, 120.0, 18.0), "", &["pagination"]);
        let labels = ["<", "1", "2", "3", ">"];
        for (i, label) in labels.iter().enumerate() {
            let x = 8.0 + i as f64 * 20.0;
            let mut classes = alloc::vec!["page-link"];
            if *label == (current + 1).to_string() {
                classes.push("current");
            }
            b.add_with(pager, "a", Rect::new(x, 168.0, 14.0, 14.0), label, &classes);
        }
    }
    add_background(&mut b, area);
    b.build().expect("valid page")
}

fn current_page(snapshot: &DomSnapshot) -> Option<usize> {
    let id = find_by_class(snapshot, "current")?;
    snapshot.get(id)?.text.parse::<usize>().ok().map(|p| p - 1)
}

fn query(snapshot: &DomSnapshot) -> String {
    find_by_class(snapshot, "search-bar").map(|id| snapshot.get(id).unwrap().value.clone()).unwrap_or_default()
}

/// Whether the listing on screen was produced by searching for the target.
fn listing_matched(info: EpisodeInfo<'_>, snapshot: &DomSnapshot) -> bool {
    let target = info.goal.get("target").unwrap_or_default();
    find_by_class(snapshot, "search-query")
        .and_then(|id| snapshot.get(id).unwrap().text.strip_prefix("Results for ").map(normalize))
        .is_some_and(|q| q == normalize(target))
}

impl Task for SearchEngine {
    fn name(&self) -> &'static str {
        "search-engine"
    }

    fn horizon(&self) -> usize {
        10
    }

    fn sample_goal(&self, rng: &mut ChaCha8Rng) -> Goal {
        let target = capitalize(pick(rng, NAMES));
        let rank = rng.gen_range(1..=RESULTS_PER_PAGE * PAGES);
        Goal::structured([("target", target), ("rank", rank.to_string())])
    }

    fn initial_page(&self, _info: EpisodeInfo<'_>) -> DomSnapshot {
        page("", None)
    }

    fn transition(&self, info: EpisodeInfo<'_>, snapshot: &DomSnapshot, action: &Action) -> (DomSnapshot, Verdict) {
        let id = action.element();
        if matches!(action, Action::Type(..)) {
            return (apply_generic(snapshot, action), Verdict::Continue);
        }
        let target = info.goal.get("target").unwrap_or_default();
        let q = query(snapshot);
        if has_class(snapshot, id, "search-button") {
            let matched = normalize(&q) == normalize(target);
            let titles = results(info, matched);
            return (page(&q, Some((&q, &titles, 0))), Verdict::Continue);
        }
        if has_class(snapshot, id, "page-link") {
            let current = current_page(snapshot).unwrap_or(0);
            let next = match snapshot.get(id).unwrap().text.as_str() {
                "<" => current.saturating_sub(1),
                ">" => (current + 1).min(PAGES - 1),
                n => n.parse::<usize>().map(|n| n - 1).unwrap_or(current),
            };
            let searched = find_by_class(snapshot, "search-query")
                .and_then(|i| snapshot.get(i).unwrap().text.strip_prefix("Results for ").map(String::from))
                .unwrap_or_default();
            let titles = results(info, listing_matched(info, snapshot));
            return (page(&q, Some((&searched, &titles, next))), Verdict::Continue);
        }
        if has_class(snapshot, id, "search-title") {
            let ok = snapshot.get(id).unwrap().text == target;
            return (apply_generic(snapshot, action), if ok { Verdict::Success } else { Verdict::Failure });
        }
        (apply_generic(snapshot, action), Verdict::Continue)
    }

    fn oracle_action(&self, info: EpisodeInfo<'_>, snapshot: &DomSnapshot) -> Action {
        let target = info.goal.get("target").unwrap_or_default();
        let rank: usize = info.goal.get("rank").and_then(|r| r.parse().ok()).unwrap_or(1);
        let by_class = |class: &str| find_by_class(snapshot, class).expect("element exists");
        let link =
            |label: &str| snapshot.elements().find(|e| e.has_class("page-link") && e.text == label).map(|e| e.id).expect("link exists");
        if query(snapshot) != target {
            return Action::Type(by_class("search-bar"), target.into());
        }
        match current_page(snapshot) {
            Some(p) if listing_matched(info, snapshot) => {
                let want = (rank - 1) / RESULTS_PER_PAGE;
                if p < want {
                    Action::Click(link(">"))
                } else if p > want {
                    Action::Click(link("<"))
                } else {
                    Action::Click(
                        snapshot
                            .elements()
                            .find(|e| e.has_class("search-title") && e.text == target)
                            .map(|e| e.id)
                            .expect("target on page"),
                    )
                }
            }
            _ => Action::Click(by_class("search-button")),
        }
    }
}
