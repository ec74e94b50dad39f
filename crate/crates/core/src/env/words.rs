//! Word lists used by the task generators. The neural vocabulary is built
//! from these, so every generated word except random passwords is known.

use alloc::string::String;
use alloc::vec::Vec;

use crate::text::tokenize;

pub const NAMES: &[&str] = &[
    "ashlea",
    "krista",
    "ilka",
    "cheree",
    "bob",
    "alice",
    "marta",
    "lonnie",
    "deana",
    "ermentrude",
    "fidelia",
    "gwyn",
    "hollis",
    "inez",
    "jolene",
    "kamal",
    "lucius",
    "mabel",
    "nadia",
    "odell",
    "perla",
    "quinn",
    "rosalind",
    "sigrid",
    "tobias",
    "ursa",
    "vivian",
    "wendell",
    "xavi",
    "yusuf",
    "zelda",
    "brandt",
    "corinne",
    "dmitri",
    "esther",
    "fergus",
    "greta",
    "hamish",
    "ivo",
    "jasper",
];

/// Labels for buttons and checkboxes. No entry is a substring of another.
pub const WORDS: &[&str] = &[
    "apple", "bridge", "cactus", "dolphin", "ember", "falcon", "glacier", "harbor", "igloo", "jungle", "kettle", "lantern", "meadow",
    "nectar", "orchid", "pepper", "quartz", "raven", "saddle", "tulip", "umbrella", "velvet", "walrus", "yonder", "zephyr", "anchor",
    "blossom", "canyon", "dynamo", "estuary", "fjord", "gusto", "hazel", "indigo", "juniper", "kiwi", "lagoon", "magnet", "nimbus",
    "oyster", "pixel", "quiver", "rhubarb", "sequoia", "thistle", "uplift", "vortex", "wombat", "xylem", "yucca",
];

pub const SUBJECT_WORDS: &[&str] = &[
    "meeting", "lunch", "report", "invoice", "trip", "party", "update", "draft", "schedule", "budget", "review", "photos", "plans",
    "tickets", "notes",
];

pub const BODY_WORDS: &[&str] = &[
    "please", "see", "attached", "thanks", "for", "the", "quick", "reply", "let", "me", "know", "soon", "tomorrow", "friday", "morning",
    "call", "later", "agenda", "is", "ready",
];

pub const MESSAGE_WORDS: &[&str] = &["sounds", "good", "great", "will", "do", "thanks", "sure", "okay", "noted", "perfect"];

pub const DOMAINS: &[&str] = &["mail.com", "post.org", "inbox.net"];

/// Fixed strings that appear on generated pages, goal keys and utterance
/// templates.
pub const UI_WORDS: &[&str] = &[
    "login", "username", "user", "name", "password", "pass", "word", "key", "email", "address", "mail", "zip", "postal", "code", "your",
    "enter", "submit", "search", "forward", "reply", "delete", "send", "to", "subject", "from", "fwd", "re", "task", "by", "message",
    "target", "rank", "the", "i", "got", "it", "with", "a", "an", "me", "sent", "saying", "and", "respond", "answer", "remove", "trash",
    "discard", "along", "note", "on", "of", "get", "rid", "that", "back", "tell", "write", "results", "www", "done", "in", "over", "needs",
    "1", "2", "3", "com", "org", "net", "target1", "target2", "target3", "target4", "target5", "target6", "target7", "target8", "target9",
    "target10", "target11", "target12",
];

/// Every token that generated pages and goals can contain (passwords and
/// numbers aside), deduplicated and sorted.
pub fn vocabulary() -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for list in [NAMES, WORDS, SUBJECT_WORDS, BODY_WORDS, MESSAGE_WORDS, DOMAINS, UI_WORDS] {
        for w in list {
            out.extend(tokenize(w));
        }
    }
    out.sort();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_words_are_not_substrings_of_each_other() {
        for a in WORDS {
            for b in WORDS {
                assert!(a == b || !b.contains(a), "{a} inside {b}");
            }
        }
    }

    #[test]
    fn names_are_distinct() {
        let mut n: Vec<_> = NAMES.to_vec();
        n.sort();
        n.dedup();
        assert_eq!(n.len(), NAMES.len());
    }
}
