//! N-gram summaries of the explanations attached to low and high answers.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::{Choice, ChunkAnswer};

const STOPWORDS_EN: &str = include_str!("../data/stopwords_en.txt");
const WORDLIST_EN: &str = include_str!("../data/english_words.txt");

/// A set of lowercase words, one per line; `#` lines are comments.
#[derive(Debug, Clone, Default)]
pub struct WordSet(HashSet<String>);

impl WordSet {
    pub fn parse(src: &str) -> Self {
        Self(
            src.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?))
    }

    pub fn contains(&self, w: &str) -> bool {
        self.0.contains(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn bundled_stopwords() -> &'static WordSet {
    static SET: OnceLock<WordSet> = OnceLock::new();
    SET.get_or_init(|| WordSet::parse(STOPWORDS_EN))
}

pub fn bundled_wordlist() -> &'static WordSet {
    static SET: OnceLock<WordSet> = OnceLock::new();
    SET.get_or_init(|| WordSet::parse(WORDLIST_EN))
}

pub trait Lemmatizer: Send + Sync {
    fn lemmatize(&self, token: &str) -> String;
}

/// Leaves tokens unchanged.
pub struct IdentityLemmatizer;

impl Lemmatizer for IdentityLemmatizer {
    fn lemmatize(&self, token: &str) -> String {
        token.to_string()
    }
}

/// Strips plural `-ies/-es/-s`, `-ed` and `-ing`, undoubling a final
/// consonant where needed. A strip only applies when the stem is itself a
/// dictionary word of three or more letters; no trailing `e` is restored.
pub struct SuffixLemmatizer<'a> {
    words: &'a WordSet,
}

impl<'a> SuffixLemmatizer<'a> {
    pub fn new(words: &'a WordSet) -> Self {
        Self { words }
    }

    fn known(&self, stem: &str) -> bool {
        stem.len() >= 3 && self.words.contains(stem)
    }

    fn undoubled(stem: &str) -> Option<&str> {
        let b = stem.as_bytes();
        let n = b.len();
        (n >= 2 && b[n - 1] == b[n - 2] && !b"aeiou".contains(&b[n - 1])).then(|| &stem[..n - 1])
    }

    fn candidates(token: &str) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(s) = token.strip_suffix("ies") {
            out.push(format!("{s}y"));
        }
        if token.ends_with('s') && !token.ends_with("ss") {
            out.push(token[..token.len() - 1].to_string());
            if let Some(s) = token.strip_suffix("es") {
                out.push(s.to_string());
            }
        }
        if let Some(s) = token.strip_suffix("ed") {
            out.push(format!("{s}e"));
            out.push(s.to_string());
            if let Some(u) = Self::undoubled(s) {
                out.push(u.to_string());
            }
        }
        if let Some(s) = token.strip_suffix("ing") {
            out.push(s.to_string());
            if let Some(u) = Self::undoubled(s) {
                out.push(u.to_string());
            }
        }
        out
    }
}

impl Lemmatizer for SuffixLemmatizer<'_> {
    fn lemmatize(&self, token: &str) -> String {
        Self::candidates(token).into_iter().find(|c| self.known(c)).unwrap_or_else(|| token.to_string())
    }
}

pub struct Normalizer<'a> {
    pub stopwords: &'a WordSet,
    pub wordlist: &'a WordSet,
    pub lemmatizer: &'a dyn Lemmatizer,
}

impl<'a> Normalizer<'a> {
    pub fn new(stopwords: &'a WordSet, wordlist: &'a WordSet, lemmatizer: &'a dyn Lemmatizer) -> Self {
        Self { stopwords, wordlist, lemmatizer }
    }

    pub fn normalize(&self, text: &str) -> Vec<String> {
        normalize_tokens(text, self)
    }
}

fn trim_punct(raw: &str) -> &str {
    raw.trim_matches(|c: char| !c.is_alphanumeric())
}

/// Lowercased dictionary words with stopwords and apparent proper nouns
/// removed, then lemmatized. A word counts as a proper noun when any of its
/// occurrences is capitalized somewhere other than the start of a sentence.
pub fn normalize_tokens(text: &str, norm: &Normalizer<'_>) -> Vec<String> {
    let mut proper: HashSet<String> = HashSet::new();
    let mut sentence_start = true;
    let mut tokens = Vec::new();
    for raw in text.split_whitespace() {
        let word = trim_punct(raw);
        if !word.is_empty() {
            if !sentence_start && word.chars().next().is_some_and(char::is_uppercase) {
                proper.insert(word.to_lowercase());
            }
            tokens.push(word);
            sentence_start = false;
        }
        if raw.ends_with(['.', '?', '!']) {
            sentence_start = true;
        }
    }
    tokens
        .into_iter()
        .filter(|w| w.chars().all(char::is_alphabetic))
        .map(str::to_lowercase)
        .filter(|w| !proper.contains(w) && !norm.stopwords.contains(w))
        .filter_map(|w| {
            let lemma = norm.lemmatizer.lemmatize(&w);
            (norm.wordlist.contains(&w) || norm.wordlist.contains(&lemma)).then_some(lemma)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    Low,
    High,
}

impl Bucket {
    pub fn of(choice: Choice) -> Option<Self> {
        match choice {
            Choice::Dec | Choice::DecSubst => Some(Bucket::Low),
            Choice::Inc | Choice::IncSubst => Some(Bucket::High),
            _ => None,
        }
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Bucket::Low => "low",
            Bucket::High => "high",
        })
    }
}

impl FromStr for Bucket {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(Bucket::Low),
            "high" => Ok(Bucket::High),
            _ => Err(Error::invalid(format!("unknown bucket `{s}` (expected low or high)"))),
        }
    }
}

/// Explanations of answers that fall in a bucket.
pub fn bucket_explanations(answers: &[ChunkAnswer]) -> Vec<(Bucket, String)> {
    answers.iter().filter_map(|a| a.choice.and_then(Bucket::of).map(|b| (b, a.explanation.clone()))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramTable {
    pub bucket: Bucket,
    pub n: usize,
    pub entries: Vec<(String, usize)>,
}

/// Count of every n-gram inside each normalized explanation.
pub fn ngram_counts(token_lists: &[Vec<String>], n: usize) -> HashMap<String, usize> {
    token_lists
        .par_iter()
        .fold(HashMap::new, |mut acc: HashMap<String, usize>, toks| {
            for w in toks.windows(n) {
                *acc.entry(w.join(" ")).or_default() += 1;
            }
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_default() += v;
            }
            a
        })
}

/// The `k` most frequent n-grams in one bucket; ties break on the phrase.
pub fn top_ngrams(
    explanations: &[(Bucket, String)],
    bucket: Bucket,
    n: usize,
    k: usize,
    norm: &Normalizer<'_>,
) -> Result<NgramTable> {
    if !(3..=4).contains(&n) {
        return Err(Error::invalid(format!("n-gram size {n} not in 3..=4")));
    }
    if k == 0 {
        return Err(Error::invalid("top-k must be at least 1"));
    }
    let token_lists: Vec<Vec<String>> =
        explanations.par_iter().filter(|(b, _)| *b == bucket).map(|(_, text)| norm.normalize(text)).collect();
    let mut entries: Vec<(String, usize)> = ngram_counts(&token_lists, n).into_iter().collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    entries.truncate(k);
    Ok(NgramTable { bucket, n, entries })
}

pub fn write_ngram_tables(path: &Path, tables: &[NgramTable]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["bucket", "n", "rank", "phrase", "count"])?;
    for t in tables {
        for (i, (phrase, count)) in t.entries.iter().enumerate() {
            w.write_record([
                t.bucket.to_string(),
                t.n.to_string(),
                (i + 1).to_string(),
                phrase.clone(),
                count.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_default<R>(f: impl FnOnce(&Normalizer<'_>) -> R) -> R {
        let lem = SuffixLemmatizer::new(bundled_wordlist());
        f(&Normalizer::new(bundled_stopwords(), bundled_wordlist(), &lem))
    }

    #[test]
    fn bundled_sizes() {
        assert_eq!(bundled_stopwords().len(), 179);
        assert!(bundled_wordlist().len() > 200_000);
    }

    #[test]
    fn markets_example() {
        let toks = with_default(|n| n.normalize("The markets were challenging"));
        assert_eq!(toks, vec!["market", "challenging"]);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(with_default(|n| n.normalize("")).is_empty());
        assert!(with_default(|n| n.normalize("and the of it was")).is_empty());
    }

    #[test]
    fn suffix_rules() {
        let lem = SuffixLemmatizer::new(bundled_wordlist());
        for (w, want) in [
            ("companies", "company"),
            ("prices", "price"),
            ("boxes", "box"),
            ("business", "business"),
            ("increased", "increase"),
            ("stopped", "stop"),
            ("lowered", "lower"),
            ("growing", "grow"),
            ("running", "run"),
            ("increasing", "increasing"),
            ("this", "this"),
        ] {
            assert_eq!(lem.lemmatize(w), want, "{w}");
        }
    }

    #[test]
    fn drops_mid_sentence_capitals_and_non_words() {
        let toks = with_default(|n| n.normalize("Demand rose at Acme and acme stores. Costs 2024 qzxv fell."));
        assert_eq!(toks, vec!["demand", "rose", "store", "cost", "fell"]);
    }

    #[test]
    fn windows_stay_inside_explanations() {
        let lem = IdentityLemmatizer;
        let words = WordSet::parse("alpha\nbeta\ngamma\ndelta\nepsilon");
        let empty = WordSet::default();
        let norm = Normalizer::new(&empty, &words, &lem);
        let ex = vec![
            (Bucket::High, "alpha beta gamma delta epsilon".to_string()),
            (Bucket::High, "alpha beta".to_string()),
            (Bucket::Low, "alpha beta gamma".to_string()),
        ];
        let t = top_ngrams(&ex, Bucket::High, 3, 10, &norm).unwrap();
        assert_eq!(t.entries.len(), 3);
        assert!(t.entries.iter().all(|(_, c)| *c == 1));
        assert_eq!(t.entries[0].0, "alpha beta gamma");
        let doubled: Vec<_> = ex.iter().chain(ex.iter()).cloned().collect();
        let t2 = top_ngrams(&doubled, Bucket::High, 3, 10, &norm).unwrap();
        assert!(t2.entries.iter().all(|(_, c)| *c == 2));
        assert!(top_ngrams(&ex, Bucket::High, 2, 10, &norm).is_err());
    }
}
