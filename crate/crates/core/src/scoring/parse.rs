//! Parsing of `choice - explanation` responses.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    DecSubst,
    Dec,
    NoChange,
    Inc,
    IncSubst,
    NoInfo,
}

impl Choice {
    pub const FIVE: [Choice; 5] = [Choice::DecSubst, Choice::Dec, Choice::NoChange, Choice::Inc, Choice::IncSubst];

    pub fn id(self) -> &'static str {
        match self {
            Choice::DecSubst => "dec_subst",
            Choice::Dec => "dec",
            Choice::NoChange => "no_change",
            Choice::Inc => "inc",
            Choice::IncSubst => "inc_subst",
            Choice::NoInfo => "no_info",
        }
    }

    /// The phrase a well-behaved model answers with.
    pub fn label(self) -> &'static str {
        match self {
            Choice::DecSubst => "Decrease substantially",
            Choice::Dec => "Decrease",
            Choice::NoChange => "No change",
            Choice::Inc => "Increase",
            Choice::IncSubst => "Increase substantially",
            Choice::NoInfo => "no information is provided",
        }
    }

    /// dec <-> inc, dec_subst <-> inc_subst.
    pub fn reversed(self) -> Choice {
        match self {
            Choice::DecSubst => Choice::IncSubst,
            Choice::Dec => Choice::Inc,
            Choice::Inc => Choice::Dec,
            Choice::IncSubst => Choice::DecSubst,
            other => other,
        }
    }
}

impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Choice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Choice::DecSubst, Choice::Dec, Choice::NoChange, Choice::Inc, Choice::IncSubst, Choice::NoInfo]
            .into_iter()
            .find(|c| c.id() == s)
            .ok_or_else(|| Error::invalid(format!("unknown choice `{s}`")))
    }
}

pub fn score_choice(choice: Choice) -> f64 {
    match choice {
        Choice::DecSubst => -1.0,
        Choice::Dec => -0.5,
        Choice::NoChange | Choice::NoInfo => 0.0,
        Choice::Inc => 0.5,
        Choice::IncSubst => 1.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    Ok,
    NoInfo,
    Malformed,
}

impl ParseStatus {
    pub fn id(self) -> &'static str {
        match self {
            ParseStatus::Ok => "ok",
            ParseStatus::NoInfo => "no_info",
            ParseStatus::Malformed => "malformed",
        }
    }
}

impl FromStr for ParseStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ok" => Ok(ParseStatus::Ok),
            "no_info" => Ok(ParseStatus::NoInfo),
            "malformed" => Ok(ParseStatus::Malformed),
            _ => Err(Error::invalid(format!("unknown parse status `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedResponse {
    /// `None` only when malformed; scored as 0.
    pub choice: Option<Choice>,
    pub explanation: String,
    pub status: ParseStatus,
}

impl ParsedResponse {
    pub fn score(&self) -> f64 {
        self.choice.map(score_choice).unwrap_or(0.0)
    }
}

const PHRASES: &[(&str, Choice)] = &[
    ("increase substantially", Choice::IncSubst),
    ("substantially increase", Choice::IncSubst),
    ("increase significantly", Choice::IncSubst),
    ("significantly increase", Choice::IncSubst),
    ("substantial increase", Choice::IncSubst),
    ("increase", Choice::Inc),
    ("no change", Choice::NoChange),
    ("decrease", Choice::Dec),
    ("decrease substantially", Choice::DecSubst),
    ("substantially decrease", Choice::DecSubst),
    ("decrease significantly", Choice::DecSubst),
    ("significantly decrease", Choice::DecSubst),
    ("substantial decrease", Choice::DecSubst),
];

fn normalise_phrase(s: &str) -> String {
    let trimmed = s
        .trim()
        .trim_matches(|c: char| c == '"' || c == '\'' || c == '*' || c == '`' || c == '\u{201c}' || c == '\u{201d}')
        .trim()
        .trim_end_matches('.')
        .trim();
    let lower = trimmed.to_lowercase();
    let lower = lower.strip_prefix("choice:").unwrap_or(&lower).trim().to_string();
    lower.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn declares_no_info(phrase: &str) -> bool {
    phrase.starts_with("no information") || phrase.starts_with("no relevant information")
}

pub fn parse_response(raw: &str) -> ParsedResponse {
    let (head, tail) = match raw.find(['-', '\u{2013}', '\u{2014}']) {
        Some(pos) => {
            let sep_len = raw[pos..].chars().next().map_or(1, char::len_utf8);
            (&raw[..pos], raw[pos + sep_len..].trim())
        }
        None => (raw, ""),
    };
    let phrase = normalise_phrase(head);
    if declares_no_info(&phrase) {
        return ParsedResponse {
            choice: Some(Choice::NoInfo),
            explanation: tail.to_string(),
            status: ParseStatus::NoInfo,
        };
    }
    match PHRASES.iter().find(|(p, _)| *p == phrase) {
        Some(&(_, choice)) => {
            ParsedResponse { choice: Some(choice), explanation: tail.to_string(), status: ParseStatus::Ok }
        }
        None => ParsedResponse { choice: None, explanation: raw.trim().to_string(), status: ParseStatus::Malformed },
    }
}

/// Renders an answer the way the prompt asks for it.
pub fn format_response(choice: Choice, explanation: &str) -> String {
    format!("{} - {}", choice.label(), explanation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mapping() {
        assert_eq!(score_choice(Choice::Inc), 0.5);
        assert_eq!(score_choice(Choice::NoInfo), 0.0);
        assert_eq!(score_choice(Choice::DecSubst), -1.0);
        for c in Choice::FIVE {
            assert_eq!(score_choice(c.reversed()), -score_choice(c));
        }
    }

    #[test]
    fn examples() {
        let p = parse_response("Increase - strong demand cited");
        assert_eq!(
            (p.choice, p.explanation.as_str(), p.status),
            (Some(Choice::Inc), "strong demand cited", ParseStatus::Ok)
        );
        let p = parse_response("no information is provided");
        assert_eq!((p.choice, p.explanation.as_str(), p.status), (Some(Choice::NoInfo), "", ParseStatus::NoInfo));
        let p = parse_response("maybe better?");
        assert_eq!(p.status, ParseStatus::Malformed);
        assert_eq!(p.score(), 0.0);
        assert_eq!(p.explanation, "maybe better?");
    }

    #[test]
    fn variants_and_punctuation() {
        assert_eq!(parse_response("Significantly increase - x").choice, Some(Choice::IncSubst));
        assert_eq!(parse_response("\"Decrease.\" - x").choice, Some(Choice::Dec));
        assert_eq!(parse_response("**No change** \u{2013} stable").explanation, "stable");
        assert_eq!(parse_response("No information is provided.").status, ParseStatus::NoInfo);
        assert_eq!(parse_response("Increase.").choice, Some(Choice::Inc));
        assert_eq!(parse_response("").status, ParseStatus::Malformed);
        assert_eq!(parse_response("-").status, ParseStatus::Malformed);
    }

    proptest! {
        #[test]
        fn round_trip(idx in 0usize..5, explanation in "([a-zA-Z0-9,;'%()-]+( [a-zA-Z0-9,;'%()-]+)*)?") {
            let choice = Choice::FIVE[idx];
            let parsed = parse_response(&format_response(choice, &explanation));
            prop_assert_eq!(parsed.choice, Some(choice));
            prop_assert_eq!(parsed.explanation, explanation);
            prop_assert_eq!(parsed.status, ParseStatus::Ok);
        }

        #[test]
        fn never_panics(raw in "\\PC{0,80}") {
            let p = parse_response(&raw);
            prop_assert!(p.score().abs() <= 1.0);
        }
    }
}
