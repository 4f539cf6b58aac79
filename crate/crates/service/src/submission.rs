use chrono::{DateTime, Utc};
use qlc_core::analysis::analyze;
use qlc_core::engine::{generate, QuestionInstance, QuestionView, TemplateId};
use qlc_core::grading::{canonical_answer, grade_attempt, AnswerPayload, GradeError, LearnerAnswer, LearnerHistory, Verdict};
use qlc_core::interp::{execute, Fuel, RuntimeError};
use qlc_core::lang::{parse_program, Expr, SourceSpan};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exercise::Exercise;

/// Largest accepted program, in bytes.
pub const MAX_CODE_BYTES: usize = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SubmissionState {
    FailedChecks,
    AwaitingAnswers,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CheckResult {
    pub entry: String,
    pub expected: String,
    pub actual: Option<String>,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<RuntimeError>,
}

/// A problem found before any check could run, or a note about generation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Diagnostic {
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<SourceSpan>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum QuestionStatus {
    Pending,
    /// Answered incorrectly once; one more attempt is allowed.
    Retry,
    Correct,
    /// Answered incorrectly twice; the key has been shown.
    Revealed,
    /// Open-ended answer stored for review.
    Submitted,
    Skipped,
}

impl QuestionStatus {
    pub fn is_settled(self) -> bool {
        !matches!(self, QuestionStatus::Pending | QuestionStatus::Retry)
    }

    fn shows_key(self) -> bool {
        matches!(self, QuestionStatus::Correct | QuestionStatus::Revealed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum AnswerVerdict {
    Correct,
    Incorrect,
    NotAutoGradable,
    Skipped,
}

impl From<Verdict> for AnswerVerdict {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Correct => AnswerVerdict::Correct,
            Verdict::Incorrect => AnswerVerdict::Incorrect,
            Verdict::NotAutoGradable => AnswerVerdict::NotAutoGradable,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Attempt {
    /// Absent for skips.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<AnswerPayload>,
    pub verdict: AnswerVerdict,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QuestionRecord {
    pub question: QuestionInstance,
    pub status: QuestionStatus,
    pub attempts: Vec<Attempt>,
}

impl QuestionRecord {
    fn graded_attempts(&self) -> u32 {
        self.attempts
            .iter()
            .filter(|a| a.verdict != AnswerVerdict::Skipped)
            .count() as u32
    }
}

/// Stored form of a submission, answer keys included.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Submission {
    pub submission_id: String,
    pub exercise_id: String,
    pub learner_id: String,
    pub code: String,
    pub received_at: DateTime<Utc>,
    pub check_results: Vec<CheckResult>,
    pub diagnostics: Vec<Diagnostic>,
    pub questions: Vec<QuestionRecord>,
    pub state: SubmissionState,
}

/// A question as sent to the learner. The key appears only once the
/// question is answered correctly or revealed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct QuestionStatusView {
    #[serde(flatten)]
    pub question: QuestionView,
    pub status: QuestionStatus,
    pub attempts: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub canonical_answer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SubmissionView {
    pub submission_id: String,
    pub exercise_id: String,
    pub learner_id: String,
    pub received_at: DateTime<Utc>,
    pub state: SubmissionState,
    pub check_results: Vec<CheckResult>,
    pub diagnostics: Vec<Diagnostic>,
    pub questions: Vec<QuestionStatusView>,
}

impl Submission {
    pub fn view(&self) -> SubmissionView {
        SubmissionView {
            submission_id: self.submission_id.clone(),
            exercise_id: self.exercise_id.clone(),
            learner_id: self.learner_id.clone(),
            received_at: self.received_at,
            state: self.state,
            check_results: self.check_results.clone(),
            diagnostics: self.diagnostics.clone(),
            questions: self
                .questions
                .iter()
                .map(|r| QuestionStatusView {
                    question: r.question.view(),
                    status: r.status,
                    attempts: r.graded_attempts(),
                    canonical_answer: r
                        .status
                        .shows_key()
                        .then(|| canonical_answer(&r.question))
                        .flatten(),
                })
                .collect(),
        }
    }
}

/// Result of checking and questioning one program.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub check_results: Vec<CheckResult>,
    pub diagnostics: Vec<Diagnostic>,
    pub questions: Vec<QuestionInstance>,
    pub state: SubmissionState,
}

/// Runs every check with the default fuel.
pub fn run_checks(program: &qlc_core::Program, exercise: &Exercise) -> Vec<CheckResult> {
    exercise
        .spec
        .checks
        .iter()
        .zip(&exercise.check_entries)
        .map(|(check, entry): (_, &Expr)| {
            let facts = execute(program, entry, Fuel::default());
            let actual = facts.result.as_ref().ok().map(|v| v.canonical());
            CheckResult {
                entry: check.entry.clone(),
                expected: check.expected.clone(),
                pass: actual.as_deref() == Some(check.expected.as_str()),
                actual,
                error: facts.result.err(),
            }
        })
        .collect()
}

fn failed(diagnostics: Vec<Diagnostic>) -> Evaluation {
    Evaluation {
        check_results: Vec::new(),
        diagnostics,
        questions: Vec::new(),
        state: SubmissionState::FailedChecks,
    }
}

/// Parses, checks and, when every check passes, generates questions.
pub fn evaluate(
    exercise: &Exercise,
    code: &str,
    history: &LearnerHistory,
    learner_id: &str,
    per_submission_seed: u64,
) -> Evaluation {
    let program = match parse_program(code) {
        Ok(p) => p,
        Err(errors) => {
            return failed(
                errors
                    .into_iter()
                    .map(|e| Diagnostic {
                        message: e.to_string(),
                        span: Some(e.span),
                    })
                    .collect(),
            )
        }
    };
    if let Err(errors) = analyze(&program) {
        return failed(
            errors
                .into_iter()
                .map(|e| Diagnostic {
                    span: e.span(),
                    message: e.to_string(),
                })
                .collect(),
        );
    }
    let check_results = run_checks(&program, exercise);
    if !check_results.iter().all(|c| c.pass) {
        return Evaluation {
            check_results,
            diagnostics: Vec::new(),
            questions: Vec::new(),
            state: SubmissionState::FailedChecks,
        };
    }
    let config = &exercise.spec.qlc_config;
    let seed = config.seed_policy.resolve(per_submission_seed);
    let (questions, diagnostics) = match generate(
        &program,
        &exercise.dynamic_entries,
        config,
        history,
        learner_id,
        seed,
    ) {
        Ok(questions) => (questions, Vec::new()),
        Err(e) => (
            Vec::new(),
            vec![Diagnostic {
                message: format!("no questions could be generated: {e}"),
                span: None,
            }],
        ),
    };
    let state = if questions.is_empty() {
        SubmissionState::Complete
    } else {
        SubmissionState::AwaitingAnswers
    };
    Evaluation {
        check_results,
        diagnostics,
        questions,
        state,
    }
}

/// Body of an answer: a graded payload or an explicit skip.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnswerInput {
    Skip(SkipMarker),
    Answer(AnswerPayload),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkipMarker {
    pub skip: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AnswerResponse {
    pub verdict: AnswerVerdict,
    pub feedback: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub canonical_answer: Option<String>,
    pub attempt: u32,
    pub question_status: QuestionStatus,
    pub submission_state: SubmissionState,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerOutcome {
    pub response: AnswerResponse,
    /// First graded attempt, to be written to the learner's history.
    pub record: Option<(TemplateId, Verdict)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnswerError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Invalid(String),
}

impl Submission {
    pub fn answer(
        &mut self,
        question_id: &str,
        input: AnswerInput,
        at: DateTime<Utc>,
    ) -> Result<AnswerOutcome, AnswerError> {
        if self.state != SubmissionState::AwaitingAnswers {
            return Err(AnswerError::Conflict(format!(
                "submission {} is not awaiting answers",
                self.submission_id
            )));
        }
        let record = self
            .questions
            .iter_mut()
            .find(|r| r.question.question_id == question_id)
            .ok_or_else(|| {
                AnswerError::NotFound(format!(
                    "submission {} has no question {question_id}",
                    self.submission_id
                ))
            })?;
        if record.status.is_settled() {
            return Err(AnswerError::Conflict(format!(
                "question {question_id} has already been answered"
            )));
        }

        let attempt = record.graded_attempts() + 1;
        let (response, history) = match input {
            AnswerInput::Skip(SkipMarker { skip: false }) => {
                return Err(AnswerError::Invalid("`skip` must be true".to_owned()))
            }
            AnswerInput::Skip(SkipMarker { skip: true }) => {
                record.status = QuestionStatus::Skipped;
                record.attempts.push(Attempt {
                    payload: None,
                    verdict: AnswerVerdict::Skipped,
                    at,
                });
                (
                    (AnswerVerdict::Skipped, "Skipped.".to_owned(), None),
                    None,
                )
            }
            AnswerInput::Answer(payload) => {
                let answer = LearnerAnswer {
                    question_id: question_id.to_owned(),
                    payload,
                };
                let result = grade_attempt(&record.question, &answer, attempt).map_err(|e| match e {
                    GradeError::WrongQuestion { .. } => AnswerError::NotFound(e.to_string()),
                    GradeError::PayloadMismatch { .. } => AnswerError::Invalid(e.to_string()),
                })?;
                record.status = match result.verdict {
                    Verdict::Correct => QuestionStatus::Correct,
                    Verdict::NotAutoGradable => QuestionStatus::Submitted,
                    Verdict::Incorrect if result.canonical_answer.is_some() => QuestionStatus::Revealed,
                    Verdict::Incorrect if attempt >= qlc_core::grading::REVEAL_AFTER_ATTEMPTS => {
                        QuestionStatus::Revealed
                    }
                    Verdict::Incorrect => QuestionStatus::Retry,
                };
                record.attempts.push(Attempt {
                    payload: Some(answer.payload),
                    verdict: result.verdict.into(),
                    at,
                });
                let history = (attempt == 1 && result.verdict != Verdict::NotAutoGradable)
                    .then_some((record.question.template_id, result.verdict));
                (
                    (result.verdict.into(), result.feedback, result.canonical_answer),
                    history,
                )
            }
        };
        let question_status = record.status;
        if self.questions.iter().all(|r| r.status.is_settled()) {
            self.state = SubmissionState::Complete;
        }
        let (verdict, feedback, canonical_answer) = response;
        Ok(AnswerOutcome {
            response: AnswerResponse {
                verdict,
                feedback,
                canonical_answer,
                attempt,
                question_status,
                submission_state: self.state,
            },
            record: history,
        })
    }
}
