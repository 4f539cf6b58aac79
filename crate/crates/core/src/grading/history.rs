use std::collections::BTreeMap;
use std::io::BufRead;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::TemplateId;

use super::Verdict;

/// One line of the history stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct HistoryEvent {
    pub learner_id: String,
    pub template_id: TemplateId,
    pub timestamp: DateTime<Utc>,
    pub verdict: Verdict,
}

impl HistoryEvent {
    /// The event as one JSON line, newline included.
    pub fn to_json_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("history events always serialize");
        line.push('\n');
        line
    }
}

#[derive(Debug, Error)]
pub enum HistoryError {
    #[error("only correct or incorrect verdicts count toward mastery")]
    NotRecordable,
    #[error("history line {line}: {source}")]
    Malformed {
        line: usize,
        source: serde_json::Error,
    },
    #[error("reading history: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MasterySummary {
    pub correct: u32,
    pub incorrect: u32,
}

/// Append-only record of graded answers.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LearnerHistory {
    events: Vec<HistoryEvent>,
}

impl LearnerHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn events(&self) -> &[HistoryEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Appends one event and returns it.
    pub fn record(
        &mut self,
        learner_id: &str,
        template_id: TemplateId,
        verdict: Verdict,
        timestamp: DateTime<Utc>,
    ) -> Result<&HistoryEvent, HistoryError> {
        if verdict == Verdict::NotAutoGradable {
            return Err(HistoryError::NotRecordable);
        }
        self.events.push(HistoryEvent {
            learner_id: learner_id.to_owned(),
            template_id,
            timestamp,
            verdict,
        });
        Ok(self.events.last().expect("just pushed"))
    }

    /// Adds an event read back from storage.
    pub fn push(&mut self, event: HistoryEvent) -> Result<(), HistoryError> {
        if event.verdict == Verdict::NotAutoGradable {
            return Err(HistoryError::NotRecordable);
        }
        self.events.push(event);
        Ok(())
    }

    pub fn correct_count(&self, learner_id: &str, template_id: TemplateId) -> u32 {
        self.events
            .iter()
            .filter(|e| {
                e.learner_id == learner_id
                    && e.template_id == template_id
                    && e.verdict == Verdict::Correct
            })
            .count() as u32
    }

    pub fn is_mastered(&self, learner_id: &str, template_id: TemplateId, threshold: u32) -> bool {
        self.correct_count(learner_id, template_id) >= threshold.max(1)
    }

    pub fn summary(&self, learner_id: &str) -> BTreeMap<TemplateId, MasterySummary> {
        let mut out: BTreeMap<TemplateId, MasterySummary> = BTreeMap::new();
        for e in self.events.iter().filter(|e| e.learner_id == learner_id) {
            let s = out.entry(e.template_id).or_default();
            match e.verdict {
                Verdict::Correct => s.correct += 1,
                Verdict::Incorrect => s.incorrect += 1,
                Verdict::NotAutoGradable => {}
            }
        }
        out
    }

    /// Reads a JSON-lines stream; blank lines are skipped.
    pub fn from_jsonl(reader: impl BufRead) -> Result<Self, HistoryError> {
        let mut history = Self::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let event: HistoryEvent = serde_json::from_str(&line)
                .map_err(|source| HistoryError::Malformed { line: i + 1, source })?;
            history.push(event)?;
        }
        Ok(history)
    }

    pub fn to_jsonl(&self) -> String {
        self.events.iter().map(HistoryEvent::to_json_line).collect()
    }
}
