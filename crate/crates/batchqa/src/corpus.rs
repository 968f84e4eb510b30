//! Transcript / question / reference corpus: loading, validation, token stats.
//!
//! Input files are line-delimited JSON, one record per line. Transcripts hold
//! 1-indexed utterances; every reference answer must point at an existing
//! question and transcript, with navigation indices inside 1..=M.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Agent,
    Customer,
    Unknown,
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Speaker::Agent => write!(f, "agent"),
            Speaker::Customer => write!(f, "customer"),
            Speaker::Unknown => write!(f, "unknown"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Utterance {
    pub index: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub speaker: Option<Speaker>,
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Transcript {
    pub id: String,
    pub utterances: Vec<Utterance>,
}

impl Transcript {
    /// Number of utterances (symbol M in reports).
    pub fn utterance_count(&self) -> u32 {
        self.utterances.len() as u32
    }

    fn validate(&self) -> Result<()> {
        if self.utterances.is_empty() {
            return Err(Error::NonContiguousIndices {
                transcript_id: self.id.clone(),
                detail: "transcript has no utterances".into(),
            });
        }
        for (pos, utt) in self.utterances.iter().enumerate() {
            let expected = pos as u32 + 1;
            if utt.index != expected {
                return Err(Error::NonContiguousIndices {
                    transcript_id: self.id.clone(),
                    detail: format!("position {} has index {}, expected {}", pos, utt.index, expected),
                });
            }
            if utt.text.trim().is_empty() {
                return Err(Error::NonContiguousIndices {
                    transcript_id: self.id.clone(),
                    detail: format!("utterance {} has empty text", utt.index),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
}

/// Gold navigation: a supporting utterance index, or NA for "No" answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Navigation {
    Index(u32),
    Na,
}

impl Serialize for Navigation {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Navigation::Index(i) => s.serialize_u32(*i),
            Navigation::Na => s.serialize_str("NA"),
        }
    }
}

impl<'de> Deserialize<'de> for Navigation {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(d)?;
        match value {
            serde_json::Value::Number(n) => n
                .as_u64()
                .filter(|&i| i >= 1)
                .map(|i| Navigation::Index(i as u32))
                .ok_or_else(|| D::Error::custom("navigation index must be a positive integer")),
            serde_json::Value::String(s) if s.eq_ignore_ascii_case("na") => Ok(Navigation::Na),
            other => Err(D::Error::custom(format!(
                "navigation must be a positive integer or \"NA\", got {other}"
            ))),
        }
    }
}

impl fmt::Display for Navigation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Navigation::Index(i) => write!(f, "{i}"),
            Navigation::Na => write!(f, "NA"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Judgment {
    Yes,
    No,
}

impl fmt::Display for Judgment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Judgment::Yes => write!(f, "Yes"),
            Judgment::No => write!(f, "No"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceAnswer {
    pub transcript_id: String,
    pub question_id: String,
    pub judgment: Judgment,
    pub navigation: Navigation,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub transcripts: Vec<Transcript>,
    pub questions: Vec<Question>,
    pub references: Vec<ReferenceAnswer>,
    /// (transcript_id, question_id) -> index into `references`.
    reference_index: HashMap<(String, String), usize>,
}

impl Corpus {
    pub fn new(
        transcripts: Vec<Transcript>,
        questions: Vec<Question>,
        references: Vec<ReferenceAnswer>,
    ) -> Result<Self> {
        let mut corpus = Corpus {
            transcripts,
            questions,
            references,
            reference_index: HashMap::new(),
        };
        corpus.validate()?;
        Ok(corpus)
    }

    fn validate(&mut self) -> Result<()> {
        for t in &self.transcripts {
            t.validate()?;
        }
        let transcript_m: HashMap<&str, u32> = self
            .transcripts
            .iter()
            .map(|t| (t.id.as_str(), t.utterance_count()))
            .collect();
        if transcript_m.len() != self.transcripts.len() {
            return Err(Error::DanglingReference("duplicate transcript id".into()));
        }
        let question_ids: HashSet<&str> = self.questions.iter().map(|q| q.id.as_str()).collect();
        if question_ids.len() != self.questions.len() {
            return Err(Error::DanglingReference("duplicate question id".into()));
        }

        self.reference_index.clear();
        for (i, r) in self.references.iter().enumerate() {
            let m = *transcript_m.get(r.transcript_id.as_str()).ok_or_else(|| {
                Error::DanglingReference(format!("unknown transcript id {:?}", r.transcript_id))
            })?;
            if !question_ids.contains(r.question_id.as_str()) {
                return Err(Error::DanglingReference(format!(
                    "unknown question id {:?}",
                    r.question_id
                )));
            }
            if let Navigation::Index(idx) = r.navigation {
                if idx < 1 || idx > m {
                    return Err(Error::DanglingReference(format!(
                        "reference ({}, {}) navigates to utterance {} but transcript has {}",
                        r.transcript_id, r.question_id, idx, m
                    )));
                }
            }
            let key = (r.transcript_id.clone(), r.question_id.clone());
            if self.reference_index.insert(key, i).is_some() {
                return Err(Error::DanglingReference(format!(
                    "duplicate reference for ({}, {})",
                    r.transcript_id, r.question_id
                )));
            }
        }
        Ok(())
    }

    pub fn transcript(&self, id: &str) -> Option<&Transcript> {
        self.transcripts.iter().find(|t| t.id == id)
    }

    pub fn question(&self, id: &str) -> Option<&Question> {
        self.questions.iter().find(|q| q.id == id)
    }

    pub fn reference(&self, transcript_id: &str, question_id: &str) -> Option<&ReferenceAnswer> {
        self.reference_index
            .get(&(transcript_id.to_string(), question_id.to_string()))
            .map(|&i| &self.references[i])
    }

    /// Question ids that have a reference answer for the given transcript,
    /// in question-pool order.
    pub fn referenced_questions(&self, transcript_id: &str) -> Vec<&Question> {
        self.questions
            .iter()
            .filter(|q| self.reference(transcript_id, &q.id).is_some())
            .collect()
    }
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::MalformedRecord {
        path: path.display().to_string(),
        line: 0,
        reason: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            path: path.display().to_string(),
            line: lineno + 1,
            reason: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Load and validate a corpus from three line-delimited JSON files.
pub fn load_corpus(
    transcripts_path: &Path,
    questions_path: &Path,
    references_path: &Path,
) -> Result<Corpus> {
    let transcripts = read_jsonl(transcripts_path)?;
    let questions = read_jsonl(questions_path)?;
    let references = read_jsonl(references_path)?;
    Corpus::new(transcripts, questions, references)
}

/// Pluggable token counter for transcript statistics.
pub trait TokenCounter {
    fn count(&self, text: &str) -> usize;
}

/// Default counter: whitespace-separated word count.
pub struct WhitespaceCounter;

impl TokenCounter for WhitespaceCounter {
    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CorpusStats {
    pub token_counts: Vec<usize>,
    /// Nearest-rank percentiles at ranks 25, 50, 75, 95.
    pub percentiles: BTreeMap<u8, usize>,
}

/// Nearest-rank percentile: the ceil(p/100 * n)-th order statistic.
pub fn nearest_rank(sorted: &[usize], p: u8) -> usize {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = ((p as usize * n) + 99) / 100;
    sorted[rank.max(1) - 1]
}

pub fn compute_token_stats(corpus: &Corpus, tokenizer: &dyn TokenCounter) -> Result<CorpusStats> {
    if corpus.transcripts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let token_counts: Vec<usize> = corpus
        .transcripts
        .iter()
        .map(|t| t.utterances.iter().map(|u| tokenizer.count(&u.text)).sum())
        .collect();
    let mut sorted = token_counts.clone();
    sorted.sort_unstable();
    let percentiles = [25u8, 50, 75, 95]
        .iter()
        .map(|&p| (p, nearest_rank(&sorted, p)))
        .collect();
    Ok(CorpusStats {
        token_counts,
        percentiles,
    })
}
