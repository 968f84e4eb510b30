//! Fine-tuning training export and evaluation manifests.
//!
//! Training records pair a rendered prompt with the canonical answer object
//! built from references, so training targets match exactly what evaluation
//! parses. Manifests pin (transcript, question set) per group size for
//! bit-exact re-runs.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Judgment, Navigation};
use crate::error::{Error, Result};
use crate::grouping::{make_eval_groups, make_training_groups, QuestionGroup, SamplerConfig};
use crate::parser::serialize_canonical;
use crate::prompt::{render_prompt, RenderOptions};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingExample {
    pub prompt: String,
    pub completion: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingManifest {
    pub records: usize,
    pub seed: u64,
    pub k_min: usize,
    pub n_max: usize,
    /// Group size -> number of exported records of that size.
    pub k_histogram: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub seed: u64,
    pub tool_version: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestReference {
    pub question_id: String,
    pub judgment: Judgment,
    pub navigation: Navigation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub n: usize,
    pub transcript_id: String,
    pub question_ids: Vec<String>,
    pub references: Vec<ManifestReference>,
}

pub fn training_example(corpus: &Corpus, group: &QuestionGroup) -> Result<TrainingExample> {
    let transcript = corpus.transcript(&group.transcript_id).ok_or_else(|| {
        Error::AlignmentError(format!("unknown transcript {:?}", group.transcript_id))
    })?;
    let prompt = render_prompt(transcript, corpus, group, &RenderOptions::default())?;
    let parts: Vec<(String, String)> = group
        .question_ids
        .iter()
        .map(|qid| {
            let reference = corpus.reference(&group.transcript_id, qid).ok_or_else(|| {
                Error::AlignmentError(format!(
                    "no reference for ({}, {qid})",
                    group.transcript_id
                ))
            })?;
            Ok((reference.judgment.to_string(), reference.navigation.to_string()))
        })
        .collect::<Result<_>>()?;
    Ok(TrainingExample {
        prompt: prompt.text,
        completion: serialize_canonical(&parts),
    })
}

/// One prompt/completion line per transcript, with K drawn per the sampler
/// config. Returns a manifest with the per-K histogram.
pub fn export_training_set(
    corpus: &Corpus,
    config: &SamplerConfig,
    out_path: &Path,
) -> Result<TrainingManifest> {
    let groups = make_training_groups(corpus, config)?;
    let mut writer = BufWriter::new(File::create(out_path)?);
    let mut k_histogram: BTreeMap<usize, usize> = BTreeMap::new();
    for group in &groups {
        let example = training_example(corpus, group)?;
        writeln!(writer, "{}", serde_json::to_string(&example).unwrap())?;
        *k_histogram.entry(group.group_size()).or_default() += 1;
    }
    writer.flush()?;
    Ok(TrainingManifest {
        records: groups.len(),
        seed: config.seed,
        k_min: config.k_min,
        n_max: config.n_max,
        k_histogram,
    })
}

fn manifest_entries_for(corpus: &Corpus, n: usize, seed: u64) -> Result<Vec<ManifestEntry>> {
    make_eval_groups(corpus, n, seed)?
        .into_iter()
        .map(|group| {
            let references = group
                .question_ids
                .iter()
                .map(|qid| {
                    let r = corpus.reference(&group.transcript_id, qid).unwrap();
                    ManifestReference {
                        question_id: qid.clone(),
                        judgment: r.judgment,
                        navigation: r.navigation,
                    }
                })
                .collect();
            Ok(ManifestEntry {
                n,
                transcript_id: group.transcript_id,
                question_ids: group.question_ids,
                references,
            })
        })
        .collect()
}

/// Header line plus one entry per (N, transcript). Each N draws from its own
/// substream, so adding group sizes never perturbs existing sections.
pub fn export_eval_manifest(
    corpus: &Corpus,
    n_list: &[usize],
    seed: u64,
    out_path: &Path,
) -> Result<Vec<ManifestEntry>> {
    if n_list.is_empty() {
        eprintln!("warning: empty group-size list, writing a header-only manifest");
    }
    let mut entries = Vec::new();
    for &n in n_list {
        entries.extend(manifest_entries_for(corpus, n, seed)?);
    }
    let mut writer = BufWriter::new(File::create(out_path)?);
    let header = ManifestHeader {
        seed,
        tool_version: TOOL_VERSION.to_string(),
    };
    writeln!(writer, "{}", serde_json::to_string(&header).unwrap())?;
    for entry in &entries {
        writeln!(writer, "{}", serde_json::to_string(entry).unwrap())?;
    }
    writer.flush()?;
    Ok(entries)
}

pub fn read_eval_manifest(path: &Path) -> Result<(ManifestHeader, Vec<ManifestEntry>)> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::CorruptArchive("manifest is empty".into()))??;
    let header: ManifestHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::CorruptArchive(format!("bad manifest header: {e}")))?;
    let mut entries = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        entries.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::CorruptArchive(format!("bad manifest entry: {e}")))?,
        );
    }
    Ok((header, entries))
}
