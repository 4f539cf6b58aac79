//! Grading of learner answers and the mastery history.

mod history;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{AnswerKey, AnswerType, QuestionInstance, ValueKind};
use crate::lang::{quote_str, SourceSpan};

pub use history::{HistoryError, HistoryEvent, LearnerHistory, MasterySummary};

/// A selection must cover this fraction of an accepted region.
pub const REGION_OVERLAP: f64 = 0.8;

/// Incorrect attempts after which the key is shown.
pub const REVEAL_AFTER_ATTEMPTS: u32 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum AnswerPayload {
    Text(String),
    Options(BTreeSet<String>),
    Region(SourceSpan),
}

impl AnswerPayload {
    fn variant(&self) -> &'static str {
        match self {
            AnswerPayload::Text(_) => "text",
            AnswerPayload::Options(_) => "options",
            AnswerPayload::Region(_) => "region",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LearnerAnswer {
    pub question_id: String,
    pub payload: AnswerPayload,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Verdict {
    Correct,
    Incorrect,
    NotAutoGradable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GradeResult {
    pub verdict: Verdict,
    pub feedback: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canonical_answer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GradeError {
    #[error("answer is for question {answer} but was graded against {question}")]
    WrongQuestion { question: String, answer: String },
    #[error("question {question_id} expects a {expected} payload, not {found}")]
    PayloadMismatch {
        question_id: String,
        expected: &'static str,
        found: &'static str,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("`{raw}` is not a valid {expected}")]
pub struct Unparseable {
    pub raw: String,
    pub expected: &'static str,
}

fn kind_noun(kind: ValueKind) -> &'static str {
    match kind {
        ValueKind::Int => "whole number",
        ValueKind::Line => "line number",
        ValueKind::Char => "single character",
        ValueKind::String => "string",
        ValueKind::Boolean => "boolean (true or false)",
    }
}

fn strip_quotes(s: &str) -> &str {
    for q in ['\'', '"'] {
        if s.len() >= 2 && s.starts_with(q) && s.ends_with(q) {
            return &s[1..s.len() - 1];
        }
    }
    s
}

/// Reads a typed single-value answer into the canonical text keys use.
pub fn normalize_single_value(raw: &str, kind: ValueKind) -> Result<String, Unparseable> {
    let unparseable = || Unparseable {
        raw: raw.to_owned(),
        expected: kind_noun(kind),
    };
    let t = raw.trim();
    match kind {
        ValueKind::Int => t
            .parse::<i64>()
            .map(|v| v.to_string())
            .map_err(|_| unparseable()),
        ValueKind::Line => t
            .strip_prefix('+')
            .unwrap_or(t)
            .parse::<u32>()
            .ok()
            .filter(|&n| n >= 1 && t.chars().all(|c| c.is_ascii_digit() || c == '+'))
            .map(|v| v.to_string())
            .ok_or_else(unparseable),
        ValueKind::Char => {
            let inner = strip_quotes(t);
            let mut chars = inner.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => Ok(c.to_string()),
                _ => Err(unparseable()),
            }
        }
        ValueKind::String => Ok(quote_str(strip_quotes(t))),
        ValueKind::Boolean => match t.to_ascii_lowercase().as_str() {
            "true" => Ok("true".to_owned()),
            "false" => Ok("false".to_owned()),
            _ => Err(unparseable()),
        },
    }
}

fn expected_payload(answer_type: AnswerType) -> &'static str {
    match answer_type {
        AnswerType::MultipleChoice | AnswerType::MultiSelect => "options",
        AnswerType::SingleValue | AnswerType::OpenEnded => "text",
        AnswerType::SelectInCode => "region",
    }
}

/// The key as a learner would read it.
pub fn canonical_answer(question: &QuestionInstance) -> Option<String> {
    match &question.answer_key {
        AnswerKey::ExactValue { value } => Some(value.clone()),
        AnswerKey::ValueSet { values } => Some(values.join(" or ")),
        AnswerKey::OptionSet { options } => Some(
            options
                .iter()
                .map(|id| question.option_text(id).unwrap_or(id.as_str()))
                .collect::<Vec<_>>()
                .join(", "),
        ),
        AnswerKey::CodeRegion { spans, .. } => Some(
            spans
                .iter()
                .map(|s| format!("lines {}-{}", s.start_line, s.end_line))
                .collect::<Vec<_>>()
                .join(" or "),
        ),
        AnswerKey::None => None,
    }
}

fn offset(widths: &[u32], line: u32, col: u32) -> i64 {
    let before: i64 = widths
        .iter()
        .take(line.saturating_sub(1) as usize)
        .map(|w| i64::from(*w) + 1)
        .sum();
    before + i64::from(col) - 1
}

/// Characters of `accepted` that `chosen` also covers.
fn overlap(widths: &[u32], accepted: &SourceSpan, chosen: &SourceSpan) -> (i64, i64) {
    let (a0, a1) = (
        offset(widths, accepted.start_line, accepted.start_col),
        offset(widths, accepted.end_line, accepted.end_col),
    );
    let (c0, c1) = (
        offset(widths, chosen.start_line, chosen.start_col),
        offset(widths, chosen.end_line, chosen.end_col),
    );
    ((a1.min(c1) - a0.max(c0) + 1).max(0), a1 - a0 + 1)
}

/// Grades a first attempt. See [`grade_attempt`].
pub fn grade(question: &QuestionInstance, answer: &LearnerAnswer) -> Result<GradeResult, GradeError> {
    grade_attempt(question, answer, 1)
}

/// Grades `answer`; `attempt` is 1-based. The key is shown for correct
/// answers and once [`REVEAL_AFTER_ATTEMPTS`] incorrect attempts are reached.
pub fn grade_attempt(
    question: &QuestionInstance,
    answer: &LearnerAnswer,
    attempt: u32,
) -> Result<GradeResult, GradeError> {
    if answer.question_id != question.question_id {
        return Err(GradeError::WrongQuestion {
            question: question.question_id.clone(),
            answer: answer.question_id.clone(),
        });
    }
    let expected = expected_payload(question.answer_type);
    if answer.payload.variant() != expected {
        return Err(GradeError::PayloadMismatch {
            question_id: question.question_id.clone(),
            expected,
            found: answer.payload.variant(),
        });
    }

    let hint = &question.feedback_hint;
    let (correct, problem) = match (&question.answer_key, &answer.payload) {
        (AnswerKey::None, _) => {
            return Ok(GradeResult {
                verdict: Verdict::NotAutoGradable,
                feedback: "Thank you. Your answer has been saved for review; explanations like this one are not graded automatically.".to_owned(),
                canonical_answer: None,
            })
        }
        (AnswerKey::ExactValue { value }, AnswerPayload::Text(raw)) => {
            match normalize_single_value(raw, question.value_kind.unwrap_or(ValueKind::String)) {
                Ok(v) => (v == *value, None),
                Err(e) => (false, Some(format!("Your answer could not be read: {e}."))),
            }
        }
        (AnswerKey::ValueSet { values }, AnswerPayload::Text(raw)) => {
            match normalize_single_value(raw, question.value_kind.unwrap_or(ValueKind::String)) {
                Ok(v) => (values.contains(&v), None),
                Err(e) => (false, Some(format!("Your answer could not be read: {e}."))),
            }
        }
        (AnswerKey::OptionSet { options }, AnswerPayload::Options(chosen)) => {
            let unknown: Vec<&str> = chosen
                .iter()
                .filter(|c| question.option_text(c).is_none())
                .map(|c| c.as_str())
                .collect();
            if unknown.is_empty() {
                (chosen == options, None)
            } else {
                (
                    false,
                    Some(format!("There is no option {}.", unknown.join(", "))),
                )
            }
        }
        (AnswerKey::CodeRegion { spans, line_widths }, AnswerPayload::Region(chosen)) => {
            let hit = spans.iter().any(|s| {
                let (covered, len) = overlap(line_widths, s, chosen);
                len > 0 && covered as f64 >= REGION_OVERLAP * len as f64
            });
            (hit, None)
        }
        _ => {
            return Err(GradeError::PayloadMismatch {
                question_id: question.question_id.clone(),
                expected,
                found: answer.payload.variant(),
            })
        }
    };

    if correct {
        return Ok(GradeResult {
            verdict: Verdict::Correct,
            feedback: "Correct.".to_owned(),
            canonical_answer: canonical_answer(question),
        });
    }
    let reveal = attempt >= REVEAL_AFTER_ATTEMPTS;
    let mut feedback = String::from("Not quite.");
    if let Some(p) = problem {
        feedback.push(' ');
        feedback.push_str(&p);
    }
    if !hint.is_empty() {
        feedback.push(' ');
        feedback.push_str(hint);
    }
    let canonical = if reveal {
        let key = canonical_answer(question);
        if let Some(k) = &key {
            feedback.push_str(&format!(" The expected answer is {k}."));
        }
        key
    } else {
        feedback.push_str(" You may try once more.");
        None
    };
    Ok(GradeResult {
        verdict: Verdict::Incorrect,
        feedback,
        canonical_answer: canonical,
    })
}

/// An answer that grades as correct against `question`, if it has a key.
pub fn key_as_answer(question: &QuestionInstance) -> Option<LearnerAnswer> {
    let payload = match &question.answer_key {
        AnswerKey::ExactValue { value } => AnswerPayload::Text(value.clone()),
        AnswerKey::ValueSet { values } => AnswerPayload::Text(values.first()?.clone()),
        AnswerKey::OptionSet { options } => AnswerPayload::Options(options.clone()),
        AnswerKey::CodeRegion { spans, .. } => AnswerPayload::Region(*spans.first()?),
        AnswerKey::None => return None,
    };
    Some(LearnerAnswer {
        question_id: question.question_id.clone(),
        payload,
    })
}

fn near_misses(value: &str, kind: ValueKind) -> Vec<String> {
    match kind {
        ValueKind::Int => value
            .parse::<i64>()
            .map(|v| {
                [v.checked_sub(1), v.checked_add(1)]
                    .into_iter()
                    .flatten()
                    .map(|n| n.to_string())
                    .collect()
            })
            .unwrap_or_default(),
        ValueKind::Line => value
            .parse::<u32>()
            .map(|v| {
                [v.checked_sub(1).filter(|&n| n >= 1), v.checked_add(1)]
                    .into_iter()
                    .flatten()
                    .map(|n| n.to_string())
                    .collect()
            })
            .unwrap_or_default(),
        ValueKind::Char => value
            .chars()
            .next()
            .map(|c| {
                [c as u32 + 1, (c as u32).wrapping_sub(1)]
                    .into_iter()
                    .filter_map(char::from_u32)
                    .map(|c| c.to_string())
                    .collect()
            })
            .unwrap_or_default(),
        ValueKind::String => vec![format!("{}x", strip_quotes(value))],
        ValueKind::Boolean => vec![(value != "true").to_string()],
    }
}

/// Answers that differ slightly from the key: numbers and characters off by
/// one, strings extended, booleans flipped, and option sets with one option
/// toggled. Values the key also accepts are left out.
pub fn key_mutations(question: &QuestionInstance) -> Vec<LearnerAnswer> {
    let kind = question.value_kind.unwrap_or(ValueKind::String);
    let payloads: Vec<AnswerPayload> = match &question.answer_key {
        AnswerKey::ExactValue { value } => near_misses(value, kind)
            .into_iter()
            .filter(|m| normalize_single_value(m, kind).ok().as_ref() != Some(value))
            .map(AnswerPayload::Text)
            .collect(),
        AnswerKey::ValueSet { values } => values
            .iter()
            .flat_map(|v| near_misses(v, kind))
            .filter(|m| {
                normalize_single_value(m, kind).is_ok_and(|n| !values.contains(&n))
            })
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(AnswerPayload::Text)
            .collect(),
        AnswerKey::OptionSet { options } => question
            .options
            .iter()
            .map(|o| {
                let mut toggled = options.clone();
                if !toggled.remove(&o.id) {
                    toggled.insert(o.id.clone());
                }
                AnswerPayload::Options(toggled)
            })
            .collect(),
        AnswerKey::CodeRegion { .. } | AnswerKey::None => Vec::new(),
    };
    payloads
        .into_iter()
        .map(|payload| LearnerAnswer {
            question_id: question.question_id.clone(),
            payload,
        })
        .collect()
}
