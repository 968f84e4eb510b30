//! Structured-answer extraction from raw model text.
//!
//! Every input yields a `ParseOutcome`; failures are classified, never thrown.
//! Container-level failures (no JSON object, syntax error, wrong top-level
//! shape) are decode errors and feed the decode error rate. Key- and
//! value-level defects inside a decodable object are anomalies and degrade
//! accuracy instead.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{Judgment, Navigation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParseStatus {
    Ok,
    DecodeError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecodeErrorClass {
    NoJsonFound,
    JsonSyntax,
    WrongShape,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Anomaly {
    MissingKey(usize),
    ExtraKey(String),
    InvalidJudgment(usize),
    InvalidNavigation(usize),
    WrongArity(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAnswer {
    /// 1-based question position, i.e. the "Q{i}" key.
    pub position: usize,
    pub judgment: Judgment,
    pub justification: String,
    /// None when the navigation part was present but invalid.
    pub navigation: Option<Navigation>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParseOutcome {
    pub status: ParseStatus,
    pub answers: BTreeMap<usize, ParsedAnswer>,
    pub anomalies: Vec<Anomaly>,
    pub error_class: Option<DecodeErrorClass>,
}

impl ParseOutcome {
    fn decode_error(class: DecodeErrorClass) -> Self {
        ParseOutcome {
            status: ParseStatus::DecodeError,
            answers: BTreeMap::new(),
            anomalies: Vec::new(),
            error_class: Some(class),
        }
    }

    pub fn is_decode_error(&self) -> bool {
        self.status == ParseStatus::DecodeError
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    /// No repair. Trailing commas, single quotes etc. are decode errors,
    /// keeping the decode error rate an honest model-quality signal.
    Strict,
    /// Opt-in repair for production use: straightens smart quotes and drops
    /// trailing commas before re-parsing. Never used during evaluation.
    Lenient,
}

impl fmt::Display for ParseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseMode::Strict => write!(f, "strict"),
            ParseMode::Lenient => write!(f, "lenient"),
        }
    }
}

/// Find the first maximal balanced `{...}` region, skipping braces inside
/// string literals. Surrounding prose and code fences are ignored because the
/// scan only anchors on braces.
pub fn extract_json(raw_text: &str) -> Option<&str> {
    let bytes = raw_text.as_bytes();
    let mut start = 0;
    while let Some(open) = raw_text[start..].find('{').map(|i| i + start) {
        let mut depth = 0usize;
        let mut in_string = false;
        let mut escaped = false;
        for (i, &b) in bytes.iter().enumerate().skip(open) {
            if in_string {
                if escaped {
                    escaped = false;
                } else if b == b'\\' {
                    escaped = true;
                } else if b == b'"' {
                    in_string = false;
                }
                continue;
            }
            match b {
                b'"' => in_string = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(&raw_text[open..=i]);
                    }
                }
                _ => {}
            }
        }
        // No balanced region from this opening brace; try the next one.
        start = open + 1;
    }
    None
}

fn repair_lenient(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_string = false;
    let mut escaped = false;
    let mut pending_comma = false;
    for c in text.chars() {
        let c = if !in_string {
            match c {
                '\u{201c}' | '\u{201d}' => '"',
                other => other,
            }
        } else {
            c
        };
        if in_string {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            continue;
        }
        match c {
            '"' => {
                if pending_comma {
                    out.push(',');
                    pending_comma = false;
                }
                in_string = true;
                out.push(c);
            }
            ',' => {
                if pending_comma {
                    out.push(',');
                }
                pending_comma = true;
            }
            '}' | ']' => {
                // drop the trailing comma
                pending_comma = false;
                out.push(c);
            }
            c if c.is_whitespace() => out.push(c),
            other => {
                if pending_comma {
                    out.push(',');
                    pending_comma = false;
                }
                out.push(other);
            }
        }
    }
    out
}

/// Accept "Q{i}" (case-insensitive) or the bare integer string "{i}".
fn key_position(key: &str) -> Option<usize> {
    let digits = key
        .strip_prefix('Q')
        .or_else(|| key.strip_prefix('q'))
        .unwrap_or(key);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse::<usize>().ok().filter(|&i| i >= 1)
}

/// First alphabetic token of the judgment string, lowercased.
fn leading_alpha_token(text: &str) -> Option<(String, &str)> {
    let start = text.find(|c: char| c.is_alphabetic())?;
    let rest = &text[start..];
    let end = rest
        .find(|c: char| !c.is_alphabetic())
        .unwrap_or(rest.len());
    Some((rest[..end].to_lowercase(), &rest[end..]))
}

fn parse_judgment(text: &str) -> Option<(Judgment, String)> {
    let (token, rest) = leading_alpha_token(text)?;
    let judgment = match token.as_str() {
        "yes" => Judgment::Yes,
        "no" => Judgment::No,
        _ => return None,
    };
    let justification = rest
        .trim_start_matches([',', '.', ':', ';', '-', ' ', '\t'])
        .to_string();
    Some((judgment, justification))
}

fn parse_navigation(value: &Value) -> Option<Navigation> {
    match value {
        Value::Number(n) => n
            .as_u64()
            .filter(|&i| i >= 1 && i <= u32::MAX as u64)
            .map(|i| Navigation::Index(i as u32)),
        Value::String(s) => {
            let s = s.trim();
            if s.eq_ignore_ascii_case("na") {
                Some(Navigation::Na)
            } else {
                s.parse::<u32>().ok().filter(|&i| i >= 1).map(Navigation::Index)
            }
        }
        _ => None,
    }
}

pub fn parse_response(raw_text: &str, n: usize) -> ParseOutcome {
    parse_response_with_mode(raw_text, n, ParseMode::Strict)
}

pub fn parse_response_with_mode(raw_text: &str, n: usize, mode: ParseMode) -> ParseOutcome {
    let Some(candidate) = extract_json(raw_text) else {
        return ParseOutcome::decode_error(DecodeErrorClass::NoJsonFound);
    };
    let parsed: std::result::Result<Value, _> = match mode {
        ParseMode::Strict => serde_json::from_str(candidate),
        ParseMode::Lenient => serde_json::from_str(candidate)
            .or_else(|_| serde_json::from_str(&repair_lenient(candidate))),
    };
    let value = match parsed {
        Ok(v) => v,
        Err(_) => return ParseOutcome::decode_error(DecodeErrorClass::JsonSyntax),
    };
    let Value::Object(map) = value else {
        return ParseOutcome::decode_error(DecodeErrorClass::WrongShape);
    };

    let mut answers = BTreeMap::new();
    let mut anomalies = Vec::new();
    let mut seen = vec![false; n + 1];

    for (key, val) in &map {
        let position = match key_position(key) {
            Some(i) if i <= n => i,
            _ => {
                anomalies.push(Anomaly::ExtraKey(key.clone()));
                continue;
            }
        };
        seen[position] = true;

        let parts = match val {
            Value::Array(a) if a.len() == 2 => a,
            _ => {
                anomalies.push(Anomaly::WrongArity(position));
                continue;
            }
        };
        let judgment_text = match &parts[0] {
            Value::String(s) => s.as_str(),
            _ => {
                anomalies.push(Anomaly::InvalidJudgment(position));
                continue;
            }
        };
        let Some((judgment, justification)) = parse_judgment(judgment_text) else {
            anomalies.push(Anomaly::InvalidJudgment(position));
            continue;
        };
        let navigation = parse_navigation(&parts[1]);
        if navigation.is_none() {
            anomalies.push(Anomaly::InvalidNavigation(position));
        }
        answers.insert(
            position,
            ParsedAnswer {
                position,
                judgment,
                justification,
                navigation,
            },
        );
    }

    for i in 1..=n {
        if !seen[i] {
            anomalies.push(Anomaly::MissingKey(i));
        }
    }

    ParseOutcome {
        status: ParseStatus::Ok,
        answers,
        anomalies,
        error_class: None,
    }
}

/// Fraction of outcomes that are container-level decode errors. Anomalies on
/// Ok outcomes do not count here.
pub fn decode_error_rate(outcomes: &[ParseOutcome]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::EmptyInput("decode_error_rate".into()));
    }
    let failures = outcomes.iter().filter(|o| o.is_decode_error()).count();
    Ok(failures as f64 / outcomes.len() as f64)
}

/// Canonical answer-object serializer: keys "Q1".."QN" ascending, each value
/// `[judgment_text, navigation_string]`, no trailing whitespace. Used by the
/// mock oracle and the fine-tuning exporter so training targets match exactly
/// what evaluation parses.
pub fn serialize_canonical(parts: &[(String, String)]) -> String {
    let mut out = String::from("{");
    for (i, (judgment_text, navigation)) in parts.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&format!(
            "{}: [{}, {}]",
            serde_json::to_string(&format!("Q{}", i + 1)).unwrap(),
            serde_json::to_string(judgment_text).unwrap(),
            serde_json::to_string(navigation).unwrap(),
        ));
    }
    out.push('}');
    out
}
