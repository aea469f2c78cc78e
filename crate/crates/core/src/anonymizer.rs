//! Masked-identity transcripts: years, month names and tagged entities are
//! replaced by `###`, one marker per masked word.

use std::collections::HashSet;
use std::io::Write;
use std::process::{Command, Stdio};
use std::sync::OnceLock;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::Transcript;
use crate::error::{Error, Result};

pub const MASK: &str = "###";

/// Month names and abbreviations matched as whole words. A trailing period
/// after an abbreviation is left in place.
pub const MONTH_TOKENS: &[&str] = &[
    "january",
    "february",
    "march",
    "april",
    "may",
    "june",
    "july",
    "august",
    "september",
    "october",
    "november",
    "december",
    "jan",
    "feb",
    "mar",
    "apr",
    "jun",
    "jul",
    "aug",
    "sep",
    "sept",
    "oct",
    "nov",
    "dec",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskCategory {
    Year,
    Month,
    Person,
    Organization,
    Product,
}

/// Byte span `[start, end)` in the original text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Replacement {
    pub start: usize,
    pub end: usize,
    pub category: MaskCategory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskReport {
    pub call_id: String,
    pub masked_text: String,
    pub replacements: Vec<Replacement>,
}

fn year_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b(?:19|20)[0-9]{2}\b").expect("year pattern"))
}

fn month_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let alternatives = MONTH_TOKENS.join("|");
        Regex::new(&format!(r"(?i)\b(?:{alternatives})\b")).expect("month pattern")
    })
}

/// Finds year (1900–2099) and month-name spans, sorted by start offset.
pub fn find_dates(text: &str) -> Vec<Replacement> {
    let mut spans: Vec<Replacement> = year_regex()
        .find_iter(text)
        .map(|m| Replacement { start: m.start(), end: m.end(), category: MaskCategory::Year })
        .chain(month_regex().find_iter(text).map(|m| Replacement {
            start: m.start(),
            end: m.end(),
            category: MaskCategory::Month,
        }))
        .collect();
    spans.sort_by_key(|r| r.start);
    spans
}

/// Replaces every maximal non-whitespace run inside each span with `###`.
/// Spans must be sorted and non-overlapping.
fn apply_spans(text: &str, spans: &[Replacement]) -> String {
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    for span in spans {
        out.push_str(&text[cursor..span.start]);
        let mut in_word = false;
        for ch in text[span.start..span.end].chars() {
            if ch.is_whitespace() {
                out.push(ch);
                in_word = false;
            } else if !in_word {
                out.push_str(MASK);
                in_word = true;
            }
        }
        cursor = span.end;
    }
    out.push_str(&text[cursor..]);
    out
}

pub fn mask_dates(text: &str) -> (String, Vec<Replacement>) {
    let spans = find_dates(text);
    (apply_spans(text, &spans), spans)
}

/// A named-entity span source. Implementations must be callable from several
/// threads at once.
pub trait EntityTagger: Send + Sync {
    fn id(&self) -> &str;

    /// Byte spans with categories in {person, organization, product}.
    fn tag(&self, text: &str) -> Result<Vec<Replacement>>;
}

fn validate_tagged(tagger: &str, text: &str, spans: &mut [Replacement]) -> Result<()> {
    spans.sort_by_key(|s| (s.start, s.end));
    let fail = |offset: usize, message: String| Error::Tagger { tagger: tagger.to_string(), offset, message };
    let mut prev_end = 0;
    for (i, s) in spans.iter().enumerate() {
        if !matches!(s.category, MaskCategory::Person | MaskCategory::Organization | MaskCategory::Product) {
            return Err(fail(s.start, format!("category {:?} is not an entity category", s.category)));
        }
        if s.start >= s.end || s.end > text.len() {
            return Err(fail(s.start, format!("span {}..{} out of bounds", s.start, s.end)));
        }
        if !text.is_char_boundary(s.start) || !text.is_char_boundary(s.end) {
            return Err(fail(s.start, "span not on a character boundary".into()));
        }
        if i > 0 && s.start < prev_end {
            return Err(fail(s.start, format!("span overlaps previous span ending at {prev_end}")));
        }
        prev_end = s.end;
    }
    Ok(())
}

pub fn mask_entities(text: &str, tagger: &dyn EntityTagger) -> Result<(String, Vec<Replacement>)> {
    let mut spans = tagger.tag(text)?;
    validate_tagged(tagger.id(), text, &mut spans)?;
    Ok((apply_spans(text, &spans), spans))
}

/// Dates and entities together. Date spans that touch an entity span are
/// merged into it so every replacement stays disjoint.
pub fn mask_text(text: &str, tagger: &dyn EntityTagger) -> Result<(String, Vec<Replacement>)> {
    let mut entities = tagger.tag(text)?;
    validate_tagged(tagger.id(), text, &mut entities)?;
    let mut all: Vec<Replacement> = entities;
    all.extend(find_dates(text));
    all.sort_by_key(|s| (s.start, std::cmp::Reverse(s.end)));
    let mut merged: Vec<Replacement> = Vec::with_capacity(all.len());
    for s in all {
        match merged.last_mut() {
            Some(last) if s.start < last.end => last.end = last.end.max(s.end),
            _ => merged.push(s),
        }
    }
    Ok((apply_spans(text, &merged), merged))
}

pub fn mask_transcript(t: &Transcript, tagger: &dyn EntityTagger) -> Result<(Transcript, MaskReport)> {
    let (masked_text, replacements) = mask_text(&t.text, tagger)?;
    let masked = Transcript { text: masked_text.clone(), ..t.clone() };
    Ok((masked, MaskReport { call_id: t.call_id.clone(), masked_text, replacements }))
}

/// Deterministic subsample of `floor(fraction * N)` transcripts in input order.
pub fn sample_corpus<T: Clone>(items: &[T], fraction: f64, seed: u64) -> Result<Vec<T>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("fraction {fraction} outside (0, 1]")));
    }
    let n = items.len();
    let take = ((fraction * n as f64) + 1e-9).floor() as usize;
    let take = take.min(n);
    if take == n {
        return Ok(items.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, n, take).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| items[i].clone()).collect())
}

/// Capitalised word runs not at a sentence start, plus gazetteer phrases.
#[derive(Debug, Clone, Default)]
pub struct HeuristicTagger {
    gazetteer: Vec<(Vec<String>, MaskCategory)>,
    ignore: HashSet<String>,
}

impl HeuristicTagger {
    pub fn new() -> Self {
        let ignore = ["I", "I'm", "I've", "I'd", "I'll", "Q1", "Q2", "Q3", "Q4", "CEO", "CFO", "OK"]
            .into_iter()
            .map(String::from)
            .collect();
        Self { gazetteer: Vec::new(), ignore }
    }

    /// Gazetteer lines are `category<TAB>phrase`; `#` starts a comment.
    pub fn with_gazetteer(mut self, source: &str) -> Result<Self> {
        for (i, line) in source.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (cat, phrase) = line
                .split_once('\t')
                .ok_or_else(|| Error::Record { line: i + 1, message: "expected category<TAB>phrase".into() })?;
            let category = match cat.trim() {
                "person" => MaskCategory::Person,
                "organization" => MaskCategory::Organization,
                "product" => MaskCategory::Product,
                other => return Err(Error::Record { line: i + 1, message: format!("unknown category `{other}`") }),
            };
            let words: Vec<String> = phrase.split_whitespace().map(str::to_lowercase).collect();
            if !words.is_empty() {
                self.gazetteer.push((words, category));
            }
        }
        // longest phrases first so they win over their prefixes
        self.gazetteer.sort_by_key(|e| std::cmp::Reverse(e.0.len()));
        Ok(self)
    }
}

fn strip_punct(word: &str) -> &str {
    word.trim_matches(|c: char| !c.is_alphanumeric())
}

fn is_month(word: &str) -> bool {
    month_regex().find(word).is_some_and(|m| m.len() == word.len())
}

impl EntityTagger for HeuristicTagger {
    fn id(&self) -> &str {
        "heuristic"
    }

    fn tag(&self, text: &str) -> Result<Vec<Replacement>> {
        // (start, end, core) per whitespace word
        let words: Vec<(usize, usize, &str)> = text
            .split_whitespace()
            .map(|w| {
                let start = w.as_ptr() as usize - text.as_ptr() as usize;
                (start, start + w.len(), w)
            })
            .collect();
        let mut spans = Vec::new();
        let mut i = 0;
        while i < words.len() {
            if let Some((len, cat)) = self.gazetteer.iter().find_map(|(phrase, cat)| {
                let fits = i + phrase.len() <= words.len()
                    && phrase.iter().zip(&words[i..]).all(|(p, w)| strip_punct(w.2).to_lowercase() == *p);
                fits.then_some((phrase.len(), *cat))
            }) {
                spans.push(Replacement { start: words[i].0, end: words[i + len - 1].1, category: cat });
                i += len;
                continue;
            }
            let sentence_start = i == 0 || words[i - 1].2.ends_with(['.', '?', '!', ':']);
            let core = strip_punct(words[i].2);
            let capitalised =
                core.chars().next().is_some_and(char::is_uppercase) && core.chars().any(char::is_alphabetic);
            if !sentence_start && capitalised && !self.ignore.contains(core) && !is_month(core) {
                let mut j = i;
                // extend through following capitalised words until punctuation breaks the run
                while j + 1 < words.len() {
                    let w = words[j].2;
                    let next = strip_punct(words[j + 1].2);
                    let breaks = w.ends_with(|c: char| !c.is_alphanumeric());
                    if breaks
                        || !next.chars().next().is_some_and(char::is_uppercase)
                        || self.ignore.contains(next)
                        || is_month(next)
                    {
                        break;
                    }
                    j += 1;
                }
                spans.push(Replacement { start: words[i].0, end: words[j].1, category: MaskCategory::Organization });
                i = j + 1;
                continue;
            }
            i += 1;
        }
        Ok(spans)
    }
}

#[derive(Debug, Deserialize)]
struct ExternalSpan {
    start: usize,
    end: usize,
    category: MaskCategory,
}

/// Runs an external NER command: transcript text on stdin, a JSON array of
/// `{start, end, category}` byte spans on stdout.
#[derive(Debug, Clone)]
pub struct CommandTagger {
    program: String,
    args: Vec<String>,
}

impl CommandTagger {
    pub fn new(command_line: &str) -> Result<Self> {
        let mut parts = command_line.split_whitespace().map(String::from);
        let program = parts.next().ok_or_else(|| Error::invalid("empty tagger command"))?;
        Ok(Self { program, args: parts.collect() })
    }
}

impl EntityTagger for CommandTagger {
    fn id(&self) -> &str {
        &self.program
    }

    fn tag(&self, text: &str) -> Result<Vec<Replacement>> {
        let fail = |message: String| Error::Tagger { tagger: self.program.clone(), offset: 0, message };
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| fail(e.to_string()))?;
        {
            let mut stdin = child.stdin.take().ok_or_else(|| fail("no stdin".into()))?;
            stdin.write_all(text.as_bytes()).map_err(|e| fail(e.to_string()))?;
        }
        let output = child.wait_with_output().map_err(|e| fail(e.to_string()))?;
        if !output.status.success() {
            return Err(fail(format!(
                "exit status {}: {}",
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        let spans: Vec<ExternalSpan> = serde_json::from_slice(&output.stdout).map_err(|e| fail(e.to_string()))?;
        Ok(spans.into_iter().map(|s| Replacement { start: s.start, end: s.end, category: s.category }).collect())
    }
}
