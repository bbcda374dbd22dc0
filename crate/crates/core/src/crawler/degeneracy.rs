//! Detectors for degenerate entity labels.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegeneracyKind {
    QIdentifier,
    RepetitionLoop,
    OverlongLabel,
    /// Tagged by the backend; never inferred.
    OffTopic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegeneracyEvent {
    pub kind: DegeneracyKind,
    pub entity: String,
    pub layer: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub max_repeats: usize,
    pub overlong_chars: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            max_repeats: 3,
            overlong_chars: 200,
        }
    }
}

/// `Q` followed by one or more ASCII digits, nothing else.
pub fn detect_q_identifier(label: &str) -> bool {
    match label.strip_prefix('Q') {
        Some(digits) => !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()),
        None => false,
    }
}

/// True when the last token (split on `-` and whitespace) repeats at least
/// `max_repeats` times in a row at the end of the label.
pub fn detect_repetition_loop(label: &str, max_repeats: usize) -> bool {
    let max_repeats = max_repeats.max(2);
    let mut tokens = label
        .split(|c: char| c == '-' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .rev();
    let Some(last) = tokens.next() else {
        return false;
    };
    1 + tokens.take_while(|t| *t == last).count() >= max_repeats
}

pub fn detect_overlong(label: &str, max_chars: usize) -> bool {
    label.chars().count() > max_chars
}

impl DetectorConfig {
    /// First detector that fires, checked in a fixed order.
    pub fn classify(&self, label: &str) -> Option<DegeneracyKind> {
        if detect_q_identifier(label) {
            Some(DegeneracyKind::QIdentifier)
        } else if detect_repetition_loop(label, self.max_repeats) {
            Some(DegeneracyKind::RepetitionLoop)
        } else if detect_overlong(label, self.overlong_chars) {
            Some(DegeneracyKind::OverlongLabel)
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn q_identifiers() {
        assert!(detect_q_identifier("Q768509"));
        assert!(detect_q_identifier("Q1"));
        assert!(!detect_q_identifier("Queen Nefertiti"));
        assert!(!detect_q_identifier("Q"));
        assert!(!detect_q_identifier("Q12a"));
        assert!(!detect_q_identifier("q12"));
        assert!(!detect_q_identifier(" Q12"));
    }

    #[test]
    fn repetition_loops() {
        assert!(detect_repetition_loop("Nabu-mukin-zeri-mu-mu-mu", 3));
        assert!(!detect_repetition_loop("Nabu-mukin-zeri", 3));
        assert!(!detect_repetition_loop("la-la-land", 3));
        assert!(detect_repetition_loop("Nabu-mukin-zeri-mu-mu", 2));
        assert!(detect_repetition_loop("new new new", 3));
        assert!(!detect_repetition_loop("", 3));
        assert!(!detect_repetition_loop("---", 3));
    }

    #[test]
    fn overlong() {
        let cfg = DetectorConfig::default();
        assert_eq!(cfg.classify(&"a".repeat(201)), Some(DegeneracyKind::OverlongLabel));
        assert_eq!(cfg.classify(&"a".repeat(200)), None);
        assert_eq!(cfg.classify("Q768509"), Some(DegeneracyKind::QIdentifier));
        assert_eq!(cfg.classify("Hammurabi"), None);
    }

    proptest! {
        #[test]
        fn appending_the_last_token_keeps_a_loop(stem in "[A-Z][a-z]{1,8}", syl in "[a-z]{1,4}", n in 3usize..8) {
            let label = format!("{stem}{}", format!("-{syl}").repeat(n));
            prop_assert!(detect_repetition_loop(&label, 3));
            let longer = format!("{label}-{syl}");
            prop_assert!(detect_repetition_loop(&longer, 3));
        }

        #[test]
        fn q_identifier_matches_anchored_pattern(s in "\\PC{0,12}") {
            let expected = s.len() > 1 && s.starts_with('Q') && s[1..].bytes().all(|b| b.is_ascii_digit());
            prop_assert_eq!(detect_q_identifier(&s), expected);
        }
    }
}
