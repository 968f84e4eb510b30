//! Deterministic prompt rendering: transcript utterances, the question group,
//! and the fixed JSON-format instruction block with its in-context example.
//!
//! The instruction block lives in a versioned template asset
//! (`assets/prompt_v1.txt`) so prompt revisions stay diffable.

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Transcript};
use crate::error::{Error, Result};
use crate::grouping::QuestionGroup;

pub const TEMPLATE_V1: &str = include_str!("../assets/prompt_v1.txt");

#[derive(Debug, Clone, Copy)]
pub struct RenderOptions {
    /// Render "Utterance k (agent): ..." when the speaker is known.
    pub include_speaker: bool,
    /// Hard cap on rendered characters; exceeding it is an error, never a
    /// silent truncation.
    pub max_chars: Option<usize>,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            include_speaker: false,
            max_chars: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub transcript_id: String,
    pub question_ids: Vec<String>,
    pub group_size: usize,
    pub utterance_count: u32,
}

pub fn render_prompt(
    transcript: &Transcript,
    corpus: &Corpus,
    group: &QuestionGroup,
    options: &RenderOptions,
) -> Result<RenderedPrompt> {
    if group.transcript_id != transcript.id {
        return Err(Error::MismatchedTranscript(format!(
            "group is for {:?}, transcript is {:?}",
            group.transcript_id, transcript.id
        )));
    }
    if group.question_ids.is_empty() {
        return Err(Error::MismatchedTranscript(
            "empty question group".to_string(),
        ));
    }

    let mut utterance_lines = String::new();
    for (i, u) in transcript.utterances.iter().enumerate() {
        if i > 0 {
            utterance_lines.push('\n');
        }
        match (options.include_speaker, u.speaker) {
            (true, Some(speaker)) => {
                utterance_lines.push_str(&format!("Utterance {} ({}): {}", u.index, speaker, u.text))
            }
            _ => utterance_lines.push_str(&format!("Utterance {}: {}", u.index, u.text)),
        }
    }

    let mut question_lines = String::new();
    for (i, qid) in group.question_ids.iter().enumerate() {
        let question = corpus.question(qid).ok_or_else(|| {
            Error::MismatchedTranscript(format!("group references unknown question {qid:?}"))
        })?;
        if i > 0 {
            question_lines.push('\n');
        }
        question_lines.push_str(&format!("Question {}: {}", i + 1, question.text));
    }

    let text = TEMPLATE_V1
        .replace("{{UTTERANCES}}", &utterance_lines)
        .replace("{{QUESTIONS}}", &question_lines)
        .replace("\r\n", "\n");

    if let Some(limit) = options.max_chars {
        if text.chars().count() > limit {
            return Err(Error::PromptTooLong {
                actual: text.chars().count(),
                limit,
            });
        }
    }

    Ok(RenderedPrompt {
        text,
        transcript_id: transcript.id.clone(),
        question_ids: group.question_ids.clone(),
        group_size: group.question_ids.len(),
        utterance_count: transcript.utterance_count(),
    })
}
