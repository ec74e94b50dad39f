//! Text normalization and tokenization shared by the selector language,
//! the environments and the neural embedders.

use alloc::string::String;
use alloc::vec::Vec;

/// Trimmed, lowercased form used for `Text`/`Like` comparisons.
pub fn normalize(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Lowercased alphanumeric word tokens.
pub fn tokenize(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(|t| t.to_lowercase()).collect()
}

/// Case-preserving tokens for natural-language utterances: alphanumeric runs
/// plus `@`/`.` glued inside them, so email-like values stay one token.
pub fn utterance_tokens(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    for raw in s.split_whitespace() {
        let t = raw.trim_matches(|c: char| !c.is_alphanumeric());
        if !t.is_empty() {
            out.push(String::from(t));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_splits_on_punctuation() {
        assert_eq!(tokenize("Ilka@mail.com, Login!"), ["ilka", "mail", "com", "login"]);
        assert!(tokenize("  ").is_empty());
    }

    #[test]
    fn utterance_tokens_keep_case_and_inner_punctuation() {
        assert_eq!(utterance_tokens("Forward Bob's note to ann@mail.com."), ["Forward", "Bob's", "note", "to", "ann@mail.com"]);
    }

    #[test]
    fn normalize_trims_and_lowercases() {
        assert_eq!(normalize("  LogIn "), "login");
    }
}
