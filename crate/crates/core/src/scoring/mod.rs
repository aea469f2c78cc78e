//! Prompting a chat model about each chunk, parsing its answers and turning
//! them into firm-quarter scores.

pub mod backend;
pub mod cache;
pub mod parse;
pub mod prompt;
pub mod questions;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use backend::{ChatRequest, MockBackend, ModelBackend, OpenAiCompatBackend, DEFAULT_API_KEY_ENV};
pub use cache::{sha256_hex, CacheKey, ResponseCache};
pub use parse::{parse_response, score_choice, Choice, ParseStatus, ParsedResponse};
pub use prompt::build_prompt;
pub use questions::QuestionId;

use crate::corpus::{chunk_transcript, Chunk, Transcript};
use crate::error::{Error, Result};
use crate::period::Quarter;

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkAnswer {
    pub call_id: String,
    pub chunk_index: usize,
    pub question: QuestionId,
    pub choice: Option<Choice>,
    pub explanation: String,
    pub raw: String,
    pub status: ParseStatus,
}

impl ChunkAnswer {
    pub fn from_raw(call_id: &str, chunk_index: usize, question: QuestionId, raw: String) -> Self {
        let parsed = parse_response(&raw);
        Self {
            call_id: call_id.to_string(),
            chunk_index,
            question,
            choice: parsed.choice,
            explanation: parsed.explanation,
            raw,
            status: parsed.status,
        }
    }

    pub fn score(&self) -> f64 {
        self.choice.map(score_choice).unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirmQuarterScore {
    pub firm_id: String,
    pub quarter: Quarter,
    pub question: QuestionId,
    pub score: f64,
    pub n_chunks: usize,
    pub n_malformed: usize,
}

/// Mean chunk score for one call and question.
pub fn score_call(call: &Transcript, answers: &[ChunkAnswer]) -> Result<FirmQuarterScore> {
    let first = answers.first().ok_or_else(|| Error::invalid(format!("no answers for call `{}`", call.call_id)))?;
    if let Some(bad) = answers.iter().find(|a| a.call_id != call.call_id || a.question != first.question) {
        return Err(Error::invalid(format!(
            "answer for ({}, {}) mixed into ({}, {})",
            bad.call_id, bad.question, call.call_id, first.question
        )));
    }
    let total: f64 = answers.iter().map(ChunkAnswer::score).sum();
    Ok(FirmQuarterScore {
        firm_id: call.firm_id.clone(),
        quarter: call.quarter,
        question: first.question,
        score: total / answers.len() as f64,
        n_chunks: answers.len(),
        n_malformed: answers.iter().filter(|a| a.status == ParseStatus::Malformed).count(),
    })
}

/// Folds several calls of the same firm and quarter into one score (mean of
/// call scores); single calls pass through untouched.
pub fn merge_firm_quarters(call_scores: Vec<FirmQuarterScore>) -> Vec<FirmQuarterScore> {
    let mut groups: BTreeMap<(String, Quarter, QuestionId), Vec<FirmQuarterScore>> = BTreeMap::new();
    for s in call_scores {
        groups.entry((s.firm_id.clone(), s.quarter, s.question)).or_default().push(s);
    }
    groups
        .into_values()
        .map(|mut group| {
            if group.len() == 1 {
                return group.pop().expect("non-empty group");
            }
            let n = group.len() as f64;
            let mut merged = group[0].clone();
            merged.score = group.iter().map(|s| s.score).sum::<f64>() / n;
            merged.n_chunks = group.iter().map(|s| s.n_chunks).sum();
            merged.n_malformed = group.iter().map(|s| s.n_malformed).sum();
            merged
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ScoringOptions {
    pub max_words: usize,
    pub max_inflight: usize,
    pub retries: u32,
    pub backoff: Duration,
    pub temperature: f64,
    pub seed: Option<u64>,
}

impl Default for ScoringOptions {
    fn default() -> Self {
        Self {
            max_words: crate::corpus::DEFAULT_MAX_WORDS,
            max_inflight: 4,
            retries: 3,
            backoff: Duration::from_millis(500),
            temperature: 0.0,
            seed: Some(0),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScoringStats {
    pub backend_calls: usize,
    pub cache_hits: usize,
}

#[derive(Debug, Clone)]
pub struct ScoringOutput {
    pub answers: Vec<ChunkAnswer>,
    pub scores: Vec<FirmQuarterScore>,
    pub stats: ScoringStats,
}

struct WorkItem<'a> {
    transcript: usize,
    chunk: &'a Chunk,
    question: QuestionId,
}

fn ask(
    item: &WorkItem<'_>,
    backend: &dyn ModelBackend,
    cache: Option<&ResponseCache>,
    opts: &ScoringOptions,
    stats: (&AtomicUsize, &AtomicUsize),
) -> Result<String> {
    let key = CacheKey::new(&item.chunk.text, item.question, backend.model());
    if let Some(cache) = cache {
        if let Some(hit) = cache.get(&key)? {
            stats.1.fetch_add(1, Ordering::Relaxed);
            return Ok(hit);
        }
    }
    let request =
        ChatRequest::user(backend.model(), build_prompt(item.question, item.chunk)?, opts.temperature, opts.seed);
    let mut attempt = 0;
    let reply = loop {
        stats.0.fetch_add(1, Ordering::Relaxed);
        match backend.complete(&request) {
            Ok(reply) => break reply,
            Err(e) if e.retryable && attempt < opts.retries => {
                std::thread::sleep(opts.backoff * 2u32.saturating_pow(attempt));
                attempt += 1;
            }
            Err(e) => {
                return Err(Error::Backend {
                    backend: backend.id().to_string(),
                    call_id: item.chunk.call_id.clone(),
                    chunk_index: item.chunk.index,
                    question: item.question.id().to_string(),
                    message: e.message,
                })
            }
        }
    };
    if let Some(cache) = cache {
        cache.put(&key, &reply)?;
    }
    Ok(reply)
}

/// Answers every (chunk, question) pair once. Responses are cached as they
/// arrive, so a failed run keeps everything it already paid for. Output order
/// follows the corpus, chunk and question order regardless of completion order.
pub fn run_scoring(
    corpus: &[Transcript],
    questions: &[QuestionId],
    backend: &dyn ModelBackend,
    cache: Option<&ResponseCache>,
    opts: &ScoringOptions,
) -> Result<ScoringOutput> {
    let chunked: Vec<Vec<Chunk>> = corpus.iter().map(|t| chunk_transcript(t, opts.max_words)).collect::<Result<_>>()?;
    let items: Vec<WorkItem<'_>> = chunked
        .iter()
        .enumerate()
        .flat_map(|(ti, chunks)| {
            chunks.iter().flat_map(move |chunk| {
                questions.iter().map(move |&question| WorkItem { transcript: ti, chunk, question })
            })
        })
        .collect();

    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let calls = AtomicUsize::new(0);
    let hits = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<String>>> = items.iter().map(|_| Mutex::new(None)).collect();
    let first_error: Mutex<Option<(usize, Error)>> = Mutex::new(None);
    let workers = opts.max_inflight.max(1).min(items.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if failed.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                match ask(item, backend, cache, opts, (&calls, &hits)) {
                    Ok(reply) => *slots[i].lock().expect("slot lock") = Some(reply),
                    Err(e) => {
                        failed.store(true, Ordering::Relaxed);
                        let mut guard = first_error.lock().expect("error lock");
                        // keep the earliest item's error so reports are stable
                        if guard.as_ref().is_none_or(|(j, _)| i < *j) {
                            *guard = Some((i, e));
                        }
                        break;
                    }
                }
            });
        }
    });

    if let Some((_, e)) = first_error.into_inner().expect("error lock") {
        return Err(e);
    }

    let answers: Vec<ChunkAnswer> = items
        .iter()
        .zip(slots)
        .map(|(item, slot)| {
            let raw = slot.into_inner().expect("slot lock").expect("every item answered");
            ChunkAnswer::from_raw(&item.chunk.call_id, item.chunk.index, item.question, raw)
        })
        .collect();

    let mut grouped: BTreeMap<(usize, QuestionId), Vec<ChunkAnswer>> = BTreeMap::new();
    for (item, answer) in items.iter().zip(&answers) {
        grouped.entry((item.transcript, item.question)).or_default().push(answer.clone());
    }
    let call_scores =
        grouped.into_iter().map(|((ti, _), group)| score_call(&corpus[ti], &group)).collect::<Result<Vec<_>>>()?;

    Ok(ScoringOutput {
        answers,
        scores: merge_firm_quarters(call_scores),
        stats: ScoringStats { backend_calls: calls.into_inner(), cache_hits: hits.into_inner() },
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct ScoreRow {
    firm_id: String,
    year: i32,
    quarter: u8,
    question_id: QuestionId,
    score: f64,
    n_chunks: usize,
    n_malformed: usize,
}

pub fn write_scores(path: &Path, scores: &[FirmQuarterScore]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for s in scores {
        w.serialize(ScoreRow {
            firm_id: s.firm_id.clone(),
            year: s.quarter.year,
            quarter: s.quarter.quarter,
            question_id: s.question,
            score: s.score,
            n_chunks: s.n_chunks,
            n_malformed: s.n_malformed,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_scores(path: &Path) -> Result<Vec<FirmQuarterScore>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize::<ScoreRow>()
        .map(|row| {
            let row = row?;
            if !(-1.0..=1.0).contains(&row.score) {
                return Err(Error::invalid(format!("score {} for {} outside [-1, 1]", row.score, row.firm_id)));
            }
            Ok(FirmQuarterScore {
                firm_id: row.firm_id,
                quarter: Quarter::new(row.year, row.quarter)?,
                question: row.question_id,
                score: row.score,
                n_chunks: row.n_chunks,
                n_malformed: row.n_malformed,
            })
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnswerRow {
    pub call_id: String,
    pub chunk_index: usize,
    pub question_id: QuestionId,
    pub choice: String,
    pub parse_status: String,
    pub explanation: String,
    pub raw: String,
}

pub fn write_answers(path: &Path, answers: &[ChunkAnswer]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for a in answers {
        w.serialize(AnswerRow {
            call_id: a.call_id.clone(),
            chunk_index: a.chunk_index,
            question_id: a.question,
            choice: a.choice.map(|c| c.id().to_string()).unwrap_or_default(),
            parse_status: a.status.id().to_string(),
            explanation: a.explanation.clone(),
            raw: a.raw.clone(),
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_answers(path: &Path) -> Result<Vec<ChunkAnswer>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize::<AnswerRow>()
        .map(|row| {
            let row = row?;
            Ok(ChunkAnswer {
                call_id: row.call_id,
                chunk_index: row.chunk_index,
                question: row.question_id,
                choice: if row.choice.is_empty() { None } else { Some(row.choice.parse()?) },
                explanation: row.explanation,
                raw: row.raw,
                status: row.parse_status.parse()?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Sector;
    use crate::scoring::backend::BackendError;

    fn call(id: &str, firm: &str, text: &str) -> Transcript {
        Transcript {
            call_id: id.into(),
            firm_id: firm.into(),
            sector: Sector::Finance,
            quarter: Quarter::new(2010, 1).unwrap(),
            call_date: "2010-02-01".into(),
            text: text.into(),
        }
    }

    fn answer(choice: Choice) -> ChunkAnswer {
        ChunkAnswer::from_raw("c1", 0, QuestionId::EconomyUs, parse::format_response(choice, "x"))
    }

    #[test]
    fn call_means() {
        let t = call("c1", "F", "");
        let s = score_call(&t, &[answer(Choice::Inc), answer(Choice::NoChange), answer(Choice::IncSubst)]).unwrap();
        assert_eq!(s.score, 0.5);
        assert_eq!(s.n_chunks, 3);
        let none = ChunkAnswer::from_raw("c1", 0, QuestionId::EconomyUs, "no information is provided".into());
        assert_eq!(score_call(&t, &[none.clone(), none]).unwrap().score, 0.0);
        assert_eq!(score_call(&t, &[answer(Choice::Dec), answer(Choice::Inc)]).unwrap().score, 0.0);
    }

    #[test]
    fn call_errors() {
        let t = call("c1", "F", "");
        assert!(score_call(&t, &[]).is_err());
        let mut other = answer(Choice::Inc);
        other.call_id = "c2".into();
        assert!(score_call(&t, &[answer(Choice::Inc), other]).is_err());
    }

    #[test]
    fn malformed_counts() {
        let t = call("c1", "F", "");
        let bad = ChunkAnswer::from_raw("c1", 1, QuestionId::EconomyUs, "hmm".into());
        let s = score_call(&t, &[answer(Choice::IncSubst), bad]).unwrap();
        assert_eq!((s.score, s.n_malformed), (0.5, 1));
    }

    struct Counting {
        inner: MockBackend,
        calls: AtomicUsize,
    }

    impl ModelBackend for Counting {
        fn id(&self) -> &str {
            "counting"
        }
        fn model(&self) -> &str {
            self.inner.model()
        }
        fn complete(&self, r: &ChatRequest) -> std::result::Result<String, BackendError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.inner.complete(r)
        }
    }

    #[test]
    fn cardinality_and_warm_cache() {
        let text: String = (0..30).map(|i| format!("Sales rose {i}. ")).collect();
        let corpus = vec![call("c1", "F", &text)];
        let opts = ScoringOptions { max_words: 30, max_inflight: 3, ..Default::default() };
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let backend = Counting { inner: MockBackend::new("m", 1), calls: AtomicUsize::new(0) };
        let out = run_scoring(&corpus, &QuestionId::ALL, &backend, Some(&cache), &opts).unwrap();
        assert_eq!(out.answers.len(), 3 * 14);
        assert_eq!(out.scores.len(), 14);
        assert_eq!(backend.calls.load(Ordering::SeqCst), 42);
        let again = run_scoring(&corpus, &QuestionId::ALL, &backend, Some(&cache), &opts).unwrap();
        assert_eq!(backend.calls.load(Ordering::SeqCst), 42);
        assert_eq!(again.stats, ScoringStats { backend_calls: 0, cache_hits: 42 });
        assert_eq!(again.answers, out.answers);
    }

    #[test]
    fn concurrency_does_not_change_output() {
        let corpus: Vec<Transcript> = (0..5)
            .map(|i| call(&format!("c{i}"), &format!("F{}", i % 2), &format!("Call {i} text. ").repeat(40)))
            .collect();
        let backend = MockBackend::new("m", 7);
        let serial = run_scoring(
            &corpus,
            &QuestionId::ALL,
            &backend,
            None,
            &ScoringOptions { max_words: 25, max_inflight: 1, ..Default::default() },
        )
        .unwrap();
        let parallel = run_scoring(
            &corpus,
            &QuestionId::ALL,
            &backend,
            None,
            &ScoringOptions { max_words: 25, max_inflight: 8, ..Default::default() },
        )
        .unwrap();
        assert_eq!(serial.answers, parallel.answers);
        assert_eq!(serial.scores, parallel.scores);
        assert!(serial.scores.iter().all(|s| s.score.abs() <= 1.0));
    }

    struct Flaky {
        failures_left: AtomicUsize,
    }

    impl ModelBackend for Flaky {
        fn id(&self) -> &str {
            "flaky"
        }
        fn model(&self) -> &str {
            "m"
        }
        fn complete(&self, _: &ChatRequest) -> std::result::Result<String, BackendError> {
            if self.failures_left.load(Ordering::SeqCst) > 0 {
                self.failures_left.fetch_sub(1, Ordering::SeqCst);
                return Err(BackendError::transient("busy"));
            }
            Ok("Increase - fine".into())
        }
    }

    #[test]
    fn retries_then_fails_with_context() {
        let corpus = vec![call("c1", "F", "Hello world.")];
        let opts =
            ScoringOptions { retries: 2, backoff: Duration::from_millis(1), max_inflight: 1, ..Default::default() };
        let ok = Flaky { failures_left: AtomicUsize::new(2) };
        assert!(run_scoring(&corpus, &[QuestionId::Demand], &ok, None, &opts).is_ok());
        let hopeless = Flaky { failures_left: AtomicUsize::new(100) };
        match run_scoring(&corpus, &[QuestionId::Demand], &hopeless, None, &opts) {
            Err(Error::Backend { call_id, chunk_index, question, .. }) => {
                assert_eq!((call_id.as_str(), chunk_index, question.as_str()), ("c1", 0, "demand"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn two_calls_same_quarter_are_averaged() {
        let mut a = FirmQuarterScore {
            firm_id: "F".into(),
            quarter: Quarter::new(2010, 1).unwrap(),
            question: QuestionId::Revenue,
            score: 1.0,
            n_chunks: 2,
            n_malformed: 0,
        };
        let mut b = a.clone();
        b.score = 0.0;
        b.n_chunks = 3;
        let merged = merge_firm_quarters(vec![a.clone(), b]);
        assert_eq!(merged.len(), 1);
        assert_eq!((merged[0].score, merged[0].n_chunks), (0.5, 5));
        a.firm_id = "G".into();
        assert_eq!(merge_firm_quarters(vec![a.clone()]), vec![a]);
    }
}
