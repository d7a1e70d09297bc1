//! Small text helpers shared by the stages, agents and scorer.

use alloc::string::String;
use alloc::vec::Vec;

/// Casefold, drop punctuation and collapse whitespace.
///
/// Apostrophes are removed without inserting a space so that "what's" and
/// "whats" compare equal.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.extend(ch.to_lowercase());
        } else if ch == '\'' || ch == '\u{2019}' {
            continue;
        } else {
            pending_space = true;
        }
    }
    out
}

/// Lower-cased alphanumeric words of `text`, in order.
pub fn words(text: &str) -> Vec<String> {
    normalize(text).split(' ').filter(|w| !w.is_empty()).map(String::from).collect()
}

/// True when the word sequence `phrase` occurs contiguously in `haystack`.
pub fn contains_phrase(haystack: &[String], phrase: &[String]) -> bool {
    if phrase.is_empty() || phrase.len() > haystack.len() {
        return false;
    }
    haystack.windows(phrase.len()).any(|w| w == phrase)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_strips_punctuation_and_case() {
        assert_eq!(normalize("  Move front, front,  front! "), "move front front front");
        assert_eq!(normalize("What's the gender?"), "whats the gender");
        assert_eq!(normalize("FEV1 (L)"), "fev1 l");
        assert_eq!(normalize(""), "");
    }

    #[test]
    fn phrase_search() {
        let hay = words("Can you hide the left lung?");
        assert!(contains_phrase(&hay, &words("left lung")));
        assert!(!contains_phrase(&hay, &words("right lung")));
        assert!(!contains_phrase(&hay, &[]));
    }
}
