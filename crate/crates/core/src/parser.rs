//! Extracting a scene graph from raw model output, plus the binary format
//! reward.
//!
//! Parsing runs in stages (answer block, JSON value, required keys, schema,
//! graph validation) and the outcome records the first stage that failed.

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::graph::{validate_graph, ImageDims, Origin, RawGraph, SceneGraph};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseMode {
    /// `<think>…</think><answer>…</answer>` required.
    #[default]
    Strict,
    /// A lone `<answer>` block or a bare JSON body is accepted too.
    Lenient,
}

impl fmt::Display for ParseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParseMode::Strict => "strict",
            ParseMode::Lenient => "lenient",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ParseStatus {
    Ok,
    NoAnswerBlock,
    NoJson,
    MalformedJson,
    SchemaViolation,
    MissingKeywords,
}

impl ParseStatus {
    pub const ALL: [ParseStatus; 6] = [
        ParseStatus::Ok,
        ParseStatus::NoAnswerBlock,
        ParseStatus::NoJson,
        ParseStatus::MalformedJson,
        ParseStatus::SchemaViolation,
        ParseStatus::MissingKeywords,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ParseStatus::Ok => "Ok",
            ParseStatus::NoAnswerBlock => "NoAnswerBlock",
            ParseStatus::NoJson => "NoJson",
            ParseStatus::MalformedJson => "MalformedJson",
            ParseStatus::SchemaViolation => "SchemaViolation",
            ParseStatus::MissingKeywords => "MissingKeywords",
        }
    }
}

/// How the answer segment was located.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerSource {
    /// Full `<think>…</think><answer>…</answer>` template.
    Template,
    /// `<answer>…</answer>` without a matching think block.
    AnswerTag,
    /// No tags; the response body itself.
    Bare,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnswerBlocks<'a> {
    pub think: Option<&'a str>,
    pub answer: Option<&'a str>,
    pub source: Option<AnswerSource>,
}

static TEMPLATE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?s)\A\s*<think>(.*?)</think>\s*<answer>(.*?)</answer>\s*\z").expect("valid regex"));
static ANSWER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)<answer>(.*?)</answer>").expect("valid regex"));

/// Locate the think and answer segments.
pub fn extract_answer_block(response: &str, mode: ParseMode) -> AnswerBlocks<'_> {
    if let Some(caps) = TEMPLATE.captures(response) {
        return AnswerBlocks {
            think: caps.get(1).map(|m| m.as_str()),
            answer: caps.get(2).map(|m| m.as_str()),
            source: Some(AnswerSource::Template),
        };
    }
    let none = AnswerBlocks { think: None, answer: None, source: None };
    if mode == ParseMode::Strict {
        return none;
    }
    if let Some(caps) = ANSWER.captures(response) {
        return AnswerBlocks {
            think: None,
            answer: caps.get(1).map(|m| m.as_str()),
            source: Some(AnswerSource::AnswerTag),
        };
    }
    if response.contains("<answer>") {
        return none;
    }
    let body = match response.rfind("</think>") {
        Some(at) => &response[at + "</think>".len()..],
        None => response,
    };
    if body.contains('{') {
        AnswerBlocks { think: None, answer: Some(body.trim()), source: Some(AnswerSource::Bare) }
    } else {
        none
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParseOutcome {
    pub status: ParseStatus,
    #[serde(skip)]
    pub graph: Option<SceneGraph>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub think_text: Option<String>,
    #[serde(skip)]
    pub answer_text: Option<String>,
    #[serde(skip)]
    pub answer_source: Option<AnswerSource>,
    pub diagnostics: Vec<String>,
}

impl ParseOutcome {
    pub fn is_ok(&self) -> bool {
        self.status == ParseStatus::Ok
    }

    /// Diagnostic record: status, diagnostics and the extracted graph.
    pub fn to_record(&self) -> Value {
        let mut record = serde_json::to_value(self).expect("outcome serializes");
        if let Some(graph) = &self.graph {
            record["graph"] = serde_json::to_value(graph.to_raw()).expect("graph serializes");
        }
        record
    }
}

/// Strip a surrounding markdown fence, if any.
fn strip_fence(text: &str) -> &str {
    let Some(open) = text.find("```") else {
        return text;
    };
    let after = &text[open + 3..];
    let body_start = after.find('\n').map_or(after.len(), |nl| {
        let tag = after[..nl].trim();
        if tag.is_empty() || tag.chars().all(|c| c.is_ascii_alphanumeric()) {
            nl + 1
        } else {
            0
        }
    });
    let body = &after[body_start..];
    match body.find("```") {
        Some(close) => &body[..close],
        None => body,
    }
}

/// Parse a model response into a validated scene graph.
///
/// `dims`, when known, lets out-of-image boxes be clamped.
pub fn parse_response(response: &str, mode: ParseMode, dims: Option<ImageDims>) -> ParseOutcome {
    let blocks = extract_answer_block(response, mode);
    let mut outcome = ParseOutcome {
        status: ParseStatus::NoAnswerBlock,
        graph: None,
        think_text: blocks.think.map(str::to_string),
        answer_text: blocks.answer.map(str::to_string),
        answer_source: blocks.source,
        diagnostics: Vec::new(),
    };
    let Some(answer) = blocks.answer else {
        outcome.diagnostics.push(format!("no answer block found ({mode} mode)"));
        return outcome;
    };

    let body = strip_fence(answer);
    let Some(start) = body.find('{') else {
        outcome.status = ParseStatus::NoJson;
        outcome.diagnostics.push("answer contains no JSON object".into());
        return outcome;
    };
    let mut stream = serde_json::Deserializer::from_str(&body[start..]).into_iter::<Value>();
    let value = match stream.next() {
        Some(Ok(v)) => v,
        Some(Err(e)) => {
            outcome.status = ParseStatus::MalformedJson;
            outcome.diagnostics.push(format!("malformed JSON: {e}"));
            return outcome;
        }
        None => {
            outcome.status = ParseStatus::NoJson;
            outcome.diagnostics.push("answer contains no JSON object".into());
            return outcome;
        }
    };
    let consumed = start + stream.byte_offset();
    if !body[consumed..].trim().is_empty() {
        outcome.diagnostics.push("ignored trailing text after the first JSON object".into());
    }

    let has_keys = value.get("objects").is_some() && value.get("relationships").is_some();
    if !has_keys {
        outcome.status = ParseStatus::MissingKeywords;
        outcome.diagnostics.push("JSON lacks \"objects\" or \"relationships\"".into());
        return outcome;
    }
    let raw: RawGraph = match serde_json::from_value(value) {
        Ok(raw) => raw,
        Err(e) => {
            outcome.status = ParseStatus::SchemaViolation;
            outcome.diagnostics.push(format!("schema: {e}"));
            return outcome;
        }
    };
    match validate_graph(&raw.objects, &raw.relationships, dims, Origin::Prediction) {
        Ok(valid) => {
            outcome.diagnostics.extend(valid.warnings.iter().map(ToString::to_string));
            outcome.graph = Some(valid.graph);
            outcome.status = ParseStatus::Ok;
        }
        Err(violations) => {
            outcome.status = ParseStatus::SchemaViolation;
            outcome.diagnostics.extend(violations.iter().map(ToString::to_string));
        }
    }
    outcome
}

/// 1 when the response follows the tag structure required by `mode` and the
/// answer text contains both `object` and `relationships`; otherwise 0.
pub fn format_reward(outcome: &ParseOutcome, mode: ParseMode) -> f64 {
    let structured = matches!(
        (mode, outcome.answer_source),
        (_, Some(AnswerSource::Template)) | (ParseMode::Lenient, Some(AnswerSource::AnswerTag))
    );
    let keywords = outcome.answer_text.as_deref().is_some_and(|a| a.contains("object") && a.contains("relationships"));
    if structured && keywords {
        1.0
    } else {
        0.0
    }
}
