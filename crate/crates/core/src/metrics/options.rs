//! Mapping free-text responses onto multiple-choice options.

use std::sync::OnceLock;

use regex::Regex;

/// Lowercases, replaces punctuation with spaces and collapses whitespace.
pub fn normalize_text(text: &str) -> String {
    let replaced: String = text
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    replaced.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn letter_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // "(b)", "(b) ...", "c.", "c)", "a:" or a bare letter
    RE.get_or_init(|| Regex::new(r"^\s*(?:\(([a-z])\)|([a-z])(?:[.):]|\s*$))").unwrap())
}

/// Returns the index of the option a response selects, if any.
///
/// A leading option letter wins; otherwise the longest option whose
/// normalized text occurs in the normalized response is chosen, ties going
/// to the earliest occurrence.
pub fn match_option<S: AsRef<str>>(response: &str, options: &[S]) -> Option<usize> {
    let lowered = response.to_lowercase();
    if let Some(caps) = letter_pattern().captures(&lowered) {
        let letter = caps.get(1).or_else(|| caps.get(2)).unwrap().as_str();
        let idx = (letter.as_bytes()[0] - b'a') as usize;
        if idx < options.len() {
            return Some(idx);
        }
    }
    let haystack = format!(" {} ", normalize_text(response));
    let mut best: Option<(usize, usize, usize)> = None; // (len, position, index)
    for (idx, opt) in options.iter().enumerate() {
        let needle = normalize_text(opt.as_ref());
        if needle.is_empty() {
            continue;
        }
        if let Some(pos) = haystack.find(&format!(" {needle} ")) {
            let better = match best {
                None => true,
                Some((len, bpos, _)) => needle.len() > len || (needle.len() == len && pos < bpos),
            };
            if better {
                best = Some((needle.len(), pos, idx));
            }
        }
    }
    best.map(|(_, _, idx)| idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const OPTS: [&str; 4] = ["edema", "pneumonia", "effusion", "normal"];

    #[test]
    fn parenthesized_letter_inside_sentence_falls_back_to_text() {
        assert_eq!(match_option("The answer is (B) pneumonia.", &OPTS), Some(1));
    }

    #[test]
    fn letter_rule() {
        assert_eq!(match_option("A", &OPTS), Some(0));
        assert_eq!(match_option("(c)", &OPTS), Some(2));
        assert_eq!(match_option("d. normal", &OPTS), Some(3));
        // out-of-range letters are not options
        assert_eq!(match_option("(e)", &OPTS), None);
        // an article is not a letter choice
        assert_eq!(match_option("a mild edema", &OPTS), Some(0));
        assert_eq!(match_option("a normal study", &OPTS), Some(3));
    }

    #[test]
    fn no_match() {
        assert_eq!(match_option("unsure", &OPTS), None);
        assert_eq!(match_option("", &OPTS), None);
    }

    #[test]
    fn longest_then_earliest() {
        let opts = ["pleural effusion", "left-sided pleural effusion", "right-sided pleural effusion"];
        assert_eq!(match_option("left-sided pleural effusion", &opts), Some(1));
        let all = opts.join(" or ");
        assert_eq!(match_option(&all, &opts), Some(2));
        let same_len = ["left lesion", "mild lesion"];
        assert_eq!(match_option("mild lesion and left lesion", &same_len), Some(1));
        assert_eq!(match_option("Yes", &["Yes", "No"]), Some(0));
        assert_eq!(match_option("No.", &["Yes", "No"]), Some(1));
    }

    #[test]
    fn word_boundaries() {
        assert_eq!(match_option("pneumonias", &["pneumonia"]), None);
        assert_eq!(match_option("PA view", &["AP", "PA", "lateral"]), Some(1));
    }

    proptest! {
        #[test]
        fn returned_text_is_in_response_unless_letter_rule(
            response in "[a-z() .,]{0,40}",
            options in proptest::collection::vec("[a-z]{1,6}( [a-z]{1,6})?", 2..5),
        ) {
            if let Some(idx) = match_option(&response, &options) {
                let letter_fired = letter_pattern().is_match(&response.to_lowercase());
                let contained = format!(" {} ", normalize_text(&response))
                    .contains(&format!(" {} ", normalize_text(&options[idx])));
                prop_assert!(letter_fired || contained);
            }
        }
    }
}
