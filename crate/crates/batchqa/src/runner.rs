//! Sweep orchestration: build groups, render, dispatch, archive raw
//! completions, parse and score, then emit CSV reports.
//!
//! Raw completions are archived before parsing so metric definitions can
//! change without re-querying models; `rescore` replays an archive offline
//! under different parse/accuracy modes.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{load_corpus, Corpus, Judgment, Navigation};
use crate::error::{Error, Result};
use crate::grouping::make_eval_groups;
use crate::llm_backend::{build_backend, complete_batch, BackendConfig};
use crate::metrics::{aggregate_report, AccuracyMode, EvalReport, ScoringUnit};
use crate::parser::{parse_response_with_mode, ParseMode};
use crate::prompt::{render_prompt, RenderOptions};

fn default_parse_mode() -> ParseMode {
    ParseMode::Strict
}
fn default_accuracy_mode() -> AccuracyMode {
    AccuracyMode::ExcludeDecodeFailures
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub transcripts: PathBuf,
    pub questions: PathBuf,
    pub references: PathBuf,
    pub backends: Vec<BackendConfig>,
    pub n_list: Vec<usize>,
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "default_parse_mode")]
    pub parse_mode: ParseMode,
    #[serde(default = "default_accuracy_mode")]
    pub accuracy_mode: AccuracyMode,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() {
            return Err(Error::Config("n_list must not be empty".into()));
        }
        if !self.n_list.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config("n_list must be strictly ascending".into()));
        }
        if self.backends.is_empty() {
            return Err(Error::Config("at least one backend is required".into()));
        }
        for b in &self.backends {
            b.validate()?;
        }
        Ok(())
    }

    pub fn from_toml(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let config: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchiveRecord {
    /// Content hash of (prompt text, backend name, model name); the resume key.
    pub key: String,
    pub model_name: String,
    pub n: usize,
    pub transcript_id: String,
    pub utterance_count: u32,
    pub prompt_hash: String,
    /// Raw model text; empty when the item failed at transport level.
    pub raw_text: String,
    #[serde(default)]
    pub item_error: Option<String>,
    /// (judgment, navigation) per question position, enabling offline rescoring.
    pub references: Vec<(Judgment, Navigation)>,
    pub timestamp_ms: u64,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn content_key(prompt_text: &str, backend_name: &str, model_name: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(prompt_text.as_bytes());
    hasher.update([0]);
    hasher.update(backend_name.as_bytes());
    hasher.update([0]);
    hasher.update(model_name.as_bytes());
    hex(&hasher.finalize()[..16])
}

fn text_hash(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    hex(&hasher.finalize()[..8])
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn archive_file(output_dir: &Path, model_name: &str, n: usize) -> PathBuf {
    let safe: String = model_name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    output_dir.join("archive").join(format!("{safe}_N{n}.jsonl"))
}

fn read_archive_file(path: &Path) -> Result<Vec<ArchiveRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut records = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::CorruptArchive(format!("{}: {e}", path.display())))?,
        );
    }
    Ok(records)
}

#[derive(Debug)]
struct LockGuard {
    path: PathBuf,
}

impl LockGuard {
    fn acquire(output_dir: &Path) -> Result<Self> {
        let path = output_dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(LockGuard { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Config(format!(
                "output directory is locked by another sweep ({})",
                path.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn score_records(
    records: &[ArchiveRecord],
    model_name: &str,
    n: usize,
    parse_mode: ParseMode,
    accuracy_mode: AccuracyMode,
) -> Result<EvalReport> {
    // Deterministic reduction order regardless of completion order.
    let mut sorted: Vec<&ArchiveRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.transcript_id.cmp(&b.transcript_id));
    let units: Vec<ScoringUnit> = sorted
        .iter()
        .map(|r| ScoringUnit {
            references: r.references.clone(),
            outcome: parse_response_with_mode(&r.raw_text, n, parse_mode),
            utterance_count: r.utterance_count,
        })
        .collect();
    aggregate_report(model_name, n, &units, accuracy_mode)
}

/// Run the full (backend x N) sweep over a pre-loaded corpus. Already-archived
/// items are skipped, so an interrupted sweep resumes where it stopped.
pub fn run_sweep_on(corpus: &Corpus, config: &RunConfig) -> Result<Vec<EvalReport>> {
    config.validate()?;
    fs::create_dir_all(&config.output_dir)?;
    fs::create_dir_all(config.output_dir.join("archive"))?;
    let _lock = LockGuard::acquire(&config.output_dir)?;

    let mut reports = Vec::new();
    for backend_config in &config.backends {
        let backend = build_backend(backend_config, corpus)?;
        for &n in &config.n_list {
            let groups = make_eval_groups(corpus, n, config.seed)?;
            let path = archive_file(&config.output_dir, backend.name(), n);
            let mut records = read_archive_file(&path)?;
            let existing: HashSet<String> = records.iter().map(|r| r.key.clone()).collect();

            let mut pending = Vec::new();
            for group in &groups {
                let transcript = corpus.transcript(&group.transcript_id).unwrap();
                let prompt = render_prompt(transcript, corpus, group, &RenderOptions::default())?;
                let key = content_key(&prompt.text, backend.name(), &backend_config.model_name);
                if existing.contains(&key) {
                    continue;
                }
                let references = group
                    .question_ids
                    .iter()
                    .map(|qid| {
                        let r = corpus.reference(&group.transcript_id, qid).unwrap();
                        (r.judgment, r.navigation)
                    })
                    .collect();
                pending.push((key, prompt, references));
            }

            if !pending.is_empty() {
                let prompts: Vec<_> = pending.iter().map(|(_, p, _)| p.clone()).collect();
                let completions = complete_batch(&*backend, &prompts, backend_config.max_parallel);
                let mut writer = BufWriter::new(
                    OpenOptions::new().create(true).append(true).open(&path)?,
                );
                for ((key, prompt, references), completion) in
                    pending.into_iter().zip(completions)
                {
                    let (raw_text, item_error) = match completion {
                        Ok(c) => (c.raw_text, None),
                        Err(e) => (String::new(), Some(e.to_string())),
                    };
                    let record = ArchiveRecord {
                        key,
                        model_name: backend_config.model_name.clone(),
                        n,
                        transcript_id: prompt.transcript_id.clone(),
                        utterance_count: prompt.utterance_count,
                        prompt_hash: text_hash(&prompt.text),
                        raw_text,
                        item_error,
                        references,
                        timestamp_ms: now_ms(),
                    };
                    writeln!(writer, "{}", serde_json::to_string(&record).unwrap())?;
                    records.push(record);
                }
                writer.flush()?;
            }

            reports.push(score_records(
                &records,
                &backend_config.model_name,
                n,
                config.parse_mode,
                config.accuracy_mode,
            )?);
        }
    }

    write_reports_csv(&config.output_dir.join("report.csv"), &reports)?;
    let mut jsonl = BufWriter::new(File::create(config.output_dir.join("report.jsonl"))?);
    for report in &reports {
        writeln!(jsonl, "{}", serde_json::to_string(report).unwrap())?;
    }
    jsonl.flush()?;
    Ok(reports)
}

pub fn run_sweep(config: &RunConfig) -> Result<Vec<EvalReport>> {
    let corpus = load_corpus(&config.transcripts, &config.questions, &config.references)?;
    run_sweep_on(&corpus, config)
}

/// Recompute reports from archived raw text under possibly different modes.
/// No network, no corpus files.
pub fn rescore(
    archive_dir: &Path,
    parse_mode: ParseMode,
    accuracy_mode: AccuracyMode,
) -> Result<Vec<EvalReport>> {
    let archive = if archive_dir.join("archive").is_dir() {
        archive_dir.join("archive")
    } else {
        archive_dir.to_path_buf()
    };
    let mut files: Vec<PathBuf> = fs::read_dir(&archive)
        .map_err(|_| Error::CorruptArchive(format!("no archive at {}", archive.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "jsonl"))
        .collect();
    files.sort();

    let mut by_group: BTreeMap<(String, usize), Vec<ArchiveRecord>> = BTreeMap::new();
    for file in files {
        for record in read_archive_file(&file)? {
            by_group
                .entry((record.model_name.clone(), record.n))
                .or_default()
                .push(record);
        }
    }
    if by_group.is_empty() {
        return Err(Error::EmptyInput("archive contains no records".into()));
    }
    by_group
        .into_iter()
        .map(|((model_name, n), records)| {
            score_records(&records, &model_name, n, parse_mode, accuracy_mode)
        })
        .collect()
}

/// Headline CSV: one row per (model, N), fixed column set.
pub fn write_reports_csv(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    writeln!(
        writer,
        "model,N,judgment_accuracy,navigation_f1,navigation_mae,json_decode_error_rate,scored_questions,decode_failures,unanswered,nav_pairs_used"
    )?;
    for r in reports {
        writeln!(
            writer,
            "{},{},{:.6},{:.6},{:.6},{:.6},{},{},{},{}",
            r.model_name,
            r.group_size,
            r.judgment_accuracy,
            r.navigation_f1,
            r.navigation_mae,
            r.json_decode_error_rate,
            r.counts.scored_questions,
            r.counts.decode_failures,
            r.counts.unanswered,
            r.counts.nav_pairs_used,
        )?;
    }
    writer.flush()?;
    Ok(())
}
