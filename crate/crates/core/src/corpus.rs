//! Transcript ingestion and word-bounded chunking.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::period::Quarter;

pub const DEFAULT_MAX_WORDS: usize = 2500;

/// NAICS sectors after folding "Other Services (except Public Administration)"
/// into "Public Administration".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sector {
    Agriculture,
    Mining,
    Utilities,
    Construction,
    Manufacturing,
    WholesaleTrade,
    RetailTrade,
    Transportation,
    Information,
    Finance,
    RealEstate,
    ProfessionalServices,
    Management,
    Administrative,
    Education,
    HealthCare,
    Arts,
    Accommodation,
    PublicAdministration,
}

impl Sector {
    pub const ALL: [Sector; 19] = [
        Sector::Agriculture,
        Sector::Mining,
        Sector::Utilities,
        Sector::Construction,
        Sector::Manufacturing,
        Sector::WholesaleTrade,
        Sector::RetailTrade,
        Sector::Transportation,
        Sector::Information,
        Sector::Finance,
        Sector::RealEstate,
        Sector::ProfessionalServices,
        Sector::Management,
        Sector::Administrative,
        Sector::Education,
        Sector::HealthCare,
        Sector::Arts,
        Sector::Accommodation,
        Sector::PublicAdministration,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Sector::Agriculture => "agriculture",
            Sector::Mining => "mining",
            Sector::Utilities => "utilities",
            Sector::Construction => "construction",
            Sector::Manufacturing => "manufacturing",
            Sector::WholesaleTrade => "wholesale_trade",
            Sector::RetailTrade => "retail_trade",
            Sector::Transportation => "transportation",
            Sector::Information => "information",
            Sector::Finance => "finance",
            Sector::RealEstate => "real_estate",
            Sector::ProfessionalServices => "professional_services",
            Sector::Management => "management",
            Sector::Administrative => "administrative",
            Sector::Education => "education",
            Sector::HealthCare => "health_care",
            Sector::Arts => "arts",
            Sector::Accommodation => "accommodation",
            Sector::PublicAdministration => "public_administration",
        }
    }

    pub fn naics_code(self) -> &'static str {
        match self {
            Sector::Agriculture => "11",
            Sector::Mining => "21",
            Sector::Utilities => "22",
            Sector::Construction => "23",
            Sector::Manufacturing => "31-33",
            Sector::WholesaleTrade => "42",
            Sector::RetailTrade => "44-45",
            Sector::Transportation => "48-49",
            Sector::Information => "51",
            Sector::Finance => "52",
            Sector::RealEstate => "53",
            Sector::ProfessionalServices => "54",
            Sector::Management => "55",
            Sector::Administrative => "56",
            Sector::Education => "61",
            Sector::HealthCare => "62",
            Sector::Arts => "71",
            Sector::Accommodation => "72",
            Sector::PublicAdministration => "92",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Sector::Agriculture => "Agriculture, Forestry, Fishing and Hunting",
            Sector::Mining => "Mining, Quarrying, and Oil and Gas Extraction",
            Sector::Utilities => "Utilities",
            Sector::Construction => "Construction",
            Sector::Manufacturing => "Manufacturing",
            Sector::WholesaleTrade => "Wholesale Trade",
            Sector::RetailTrade => "Retail Trade",
            Sector::Transportation => "Transportation and Warehousing",
            Sector::Information => "Information",
            Sector::Finance => "Finance and Insurance",
            Sector::RealEstate => "Real Estate and Rental and Leasing",
            Sector::ProfessionalServices => "Professional, Scientific, and Technical Services",
            Sector::Management => "Management of Companies and Enterprises",
            Sector::Administrative => "Administrative and Support and Waste Management and Remediation Services",
            Sector::Education => "Educational Services",
            Sector::HealthCare => "Health Care and Social Assistance",
            Sector::Arts => "Arts, Entertainment, and Recreation",
            Sector::Accommodation => "Accommodation and Food Services",
            Sector::PublicAdministration => "Public Administration",
        }
    }
}

impl fmt::Display for Sector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Sector {
    type Err = Error;

    /// Accepts the snake-case id, the NAICS code (including single codes inside
    /// ranges such as `32`), or the full NAICS title. Other Services maps onto
    /// Public Administration.
    fn from_str(label: &str) -> Result<Self> {
        let norm = label.trim().to_ascii_lowercase();
        match norm.as_str() {
            "other_services" | "81" | "other services" | "other services (except public administration)" => {
                return Ok(Sector::PublicAdministration)
            }
            "31" | "32" | "33" => return Ok(Sector::Manufacturing),
            "44" | "45" => return Ok(Sector::RetailTrade),
            "48" | "49" => return Ok(Sector::Transportation),
            "public administration (not covered in economic census)" => return Ok(Sector::PublicAdministration),
            _ => {}
        }
        Sector::ALL
            .into_iter()
            .find(|s| s.id() == norm || s.naics_code() == norm || s.title().to_ascii_lowercase() == norm)
            .ok_or_else(|| Error::UnknownSector(label.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub call_id: String,
    pub firm_id: String,
    pub sector: Sector,
    pub quarter: Quarter,
    pub call_date: String,
    pub text: String,
}

/// One line of the JSON Lines corpus format.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptRecord {
    pub call_id: String,
    pub firm_id: String,
    pub naics_sector: String,
    pub year: i32,
    pub quarter: u8,
    pub call_date: String,
    pub text: String,
}

impl TryFrom<TranscriptRecord> for Transcript {
    type Error = Error;

    fn try_from(rec: TranscriptRecord) -> Result<Self> {
        if rec.call_id.trim().is_empty() {
            return Err(Error::invalid("empty call_id"));
        }
        if rec.firm_id.trim().is_empty() {
            return Err(Error::invalid("empty firm_id"));
        }
        let sector: Sector = rec.naics_sector.parse()?;
        let quarter = Quarter::new(rec.year, rec.quarter)?;
        let dated = Quarter::of_date(&rec.call_date)?;
        if dated != quarter {
            return Err(Error::invalid(format!("call_date {} falls in {dated}, record says {quarter}", rec.call_date)));
        }
        Ok(Transcript {
            call_id: rec.call_id,
            firm_id: rec.firm_id,
            sector,
            quarter,
            call_date: rec.call_date,
            text: rec.text,
        })
    }
}

impl From<&Transcript> for TranscriptRecord {
    fn from(t: &Transcript) -> Self {
        TranscriptRecord {
            call_id: t.call_id.clone(),
            firm_id: t.firm_id.clone(),
            naics_sector: t.sector.id().to_string(),
            year: t.quarter.year,
            quarter: t.quarter.quarter,
            call_date: t.call_date.clone(),
            text: t.text.clone(),
        }
    }
}

/// Parses a JSON Lines corpus from a reader. Blank lines are skipped.
pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Vec<Transcript>> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Record { line: line_no, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TranscriptRecord =
            serde_json::from_str(&line).map_err(|e| Error::Record { line: line_no, message: e.to_string() })?;
        let transcript = Transcript::try_from(record).map_err(|e| match e {
            Error::UnknownSector(_) => e,
            other => Error::Record { line: line_no, message: other.to_string() },
        })?;
        if let Some(&first_line) = seen.get(&transcript.call_id) {
            return Err(Error::DuplicateCall { call_id: transcript.call_id, first_line, second_line: line_no });
        }
        seen.insert(transcript.call_id.clone(), line_no);
        out.push(transcript);
    }
    out.sort_by(|a, b| (&a.firm_id, a.quarter, &a.call_id).cmp(&(&b.firm_id, b.quarter, &b.call_id)));
    Ok(out)
}

pub fn ingest_corpus(path: &Path) -> Result<Vec<Transcript>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(BufReader::new(file))
}

pub fn write_corpus(path: &Path, transcripts: &[Transcript]) -> Result<()> {
    let mut buf = Vec::new();
    for t in transcripts {
        serde_json::to_writer(&mut buf, &TranscriptRecord::from(t))?;
        buf.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub call_id: String,
    pub index: usize,
    pub text: String,
    pub word_count: usize,
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// True when `word` closes a sentence and `next` opens a new one.
fn is_sentence_break(word: &str, next: &str) -> bool {
    word.ends_with(['.', '?', '!']) && next.chars().next().is_some_and(char::is_uppercase)
}

/// Splits a transcript into chunks of at most `max_words` words, cutting at the
/// last sentence boundary inside the limit when one exists.
pub fn chunk_transcript(t: &Transcript, max_words: usize) -> Result<Vec<Chunk>> {
    chunk_text(&t.call_id, &t.text, max_words)
}

pub fn chunk_text(call_id: &str, text: &str, max_words: usize) -> Result<Vec<Chunk>> {
    if max_words == 0 {
        return Err(Error::invalid("max_words must be at least 1"));
    }
    let words: Vec<&str> = text.split_whitespace().collect();
    let mut chunks = Vec::new();
    let mut start = 0;
    while start < words.len() {
        let limit = start + max_words;
        let end = if limit >= words.len() {
            words.len()
        } else {
            // a cut at `e` is a sentence boundary when words[e-1] ends one and words[e] starts one
            (start + 1..=limit).rev().find(|&e| is_sentence_break(words[e - 1], words[e])).unwrap_or(limit)
        };
        chunks.push(Chunk {
            call_id: call_id.to_string(),
            index: chunks.len(),
            text: words[start..end].join(" "),
            word_count: end - start,
        });
        start = end;
    }
    Ok(chunks)
}
