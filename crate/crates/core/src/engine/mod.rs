//! Template catalog and question engine.
//!
//! The pipeline is `analyze` → `execute` per entry → [`applicable_templates`]
//! → [`select_templates`] → [`instantiate`]; [`generate`] runs all of it.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64`, so a fixed seed gives the same questions on every
//! platform and every run.

mod catalog;
mod instantiate;
mod select;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{analyze, AnalysisError};
use crate::grading::LearnerHistory;
use crate::interp::{execute, Fuel, RuntimeError};
use crate::lang::{Expr, LoopId, Program, SourceSpan};

pub use catalog::{applicable_templates, catalog, template, Applicable, Candidate};
pub use instantiate::{instantiate, InstantiateError};
pub use select::{select_templates, Selected};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TemplateId {
    #[serde(rename = "T-VARNAMES")]
    VarNames,
    #[serde(rename = "T-LOOPEND")]
    LoopEnd,
    #[serde(rename = "T-DECLLINE")]
    DeclLine,
    #[serde(rename = "T-ASSIGNVAL")]
    AssignVal,
    #[serde(rename = "T-LOOPITER")]
    LoopIter,
    #[serde(rename = "T-VARROLE")]
    VarRole,
    #[serde(rename = "T-STACKDEPTH")]
    StackDepth,
    #[serde(rename = "T-CONDPURPOSE")]
    CondPurpose,
    #[serde(rename = "T-NAMEJUSTIFY")]
    NameJustify,
    #[serde(rename = "T-SUBGOALSELECT")]
    SubgoalSelect,
    #[serde(rename = "T-LOOPPURPOSE")]
    LoopPurpose,
    #[serde(rename = "T-CROSSPROGRAM")]
    CrossProgram,
    #[serde(rename = "T-RECURSIVE")]
    Recursive,
    #[serde(rename = "T-PARAMNAMES")]
    ParamNames,
}

impl TemplateId {
    pub const ALL: [TemplateId; 14] = [
        TemplateId::VarNames,
        TemplateId::LoopEnd,
        TemplateId::DeclLine,
        TemplateId::AssignVal,
        TemplateId::LoopIter,
        TemplateId::VarRole,
        TemplateId::StackDepth,
        TemplateId::CondPurpose,
        TemplateId::NameJustify,
        TemplateId::SubgoalSelect,
        TemplateId::LoopPurpose,
        TemplateId::CrossProgram,
        TemplateId::Recursive,
        TemplateId::ParamNames,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::VarNames => "T-VARNAMES",
            TemplateId::LoopEnd => "T-LOOPEND",
            TemplateId::DeclLine => "T-DECLLINE",
            TemplateId::AssignVal => "T-ASSIGNVAL",
            TemplateId::LoopIter => "T-LOOPITER",
            TemplateId::VarRole => "T-VARROLE",
            TemplateId::StackDepth => "T-STACKDEPTH",
            TemplateId::CondPurpose => "T-CONDPURPOSE",
            TemplateId::NameJustify => "T-NAMEJUSTIFY",
            TemplateId::SubgoalSelect => "T-SUBGOALSELECT",
            TemplateId::LoopPurpose => "T-LOOPPURPOSE",
            TemplateId::CrossProgram => "T-CROSSPROGRAM",
            TemplateId::Recursive => "T-RECURSIVE",
            TemplateId::ParamNames => "T-PARAMNAMES",
        }
    }

    /// Position in [`TemplateId::ALL`].
    pub fn ordinal(self) -> usize {
        TemplateId::ALL
            .iter()
            .position(|&t| t == self)
            .expect("ALL lists every id")
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown template id `{0}`")]
pub struct UnknownTemplate(pub String);

impl FromStr for TemplateId {
    type Err = UnknownTemplate;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| UnknownTemplate(s.to_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Scale {
    Atom,
    Block,
    Relational,
    Macro,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Dimension {
    Text,
    Execution,
    Function,
}

/// A cell of the Block Model. Every scale/dimension pair is a valid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BlockModelTag {
    pub scale: Scale,
    pub dimension: Dimension,
}

impl fmt::Display for BlockModelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let scale = match self.scale {
            Scale::Atom => "atom",
            Scale::Block => "block",
            Scale::Relational => "relational",
            Scale::Macro => "macro",
        };
        let dimension = match self.dimension {
            Dimension::Text => "text",
            Dimension::Execution => "execution",
            Dimension::Function => "function",
        };
        write!(f, "{scale}-{dimension}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum AnswerType {
    MultipleChoice,
    MultiSelect,
    SingleValue,
    SelectInCode,
    OpenEnded,
}

/// How a single-value answer is read before comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ValueKind {
    Int,
    Char,
    String,
    Line,
    Boolean,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct QlcTemplate {
    pub template_id: TemplateId,
    pub tag: BlockModelTag,
    pub answer_type: AnswerType,
    pub text_pattern: &'static str,
    pub enabled_by_default: bool,
    /// Needs at least one successful execution.
    #[serde(skip)]
    pub needs_execution: bool,
}

impl QlcTemplate {
    pub fn auto_gradable(&self) -> bool {
        self.answer_type != AnswerType::OpenEnded
    }
}

/// Concrete facts a template is instantiated with.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", rename_all_fields = "camelCase")]
pub enum Binding {
    Program,
    Function {
        function: String,
    },
    Loop {
        loop_id: LoopId,
    },
    Condition {
        function: String,
        line: u32,
    },
    Variable {
        function: String,
        name: String,
        decl_line: u32,
    },
    Use {
        function: String,
        name: String,
        line: u32,
    },
    /// `entry` indexes the executions passed to the engine.
    Execution {
        entry: usize,
    },
    LoopRun {
        entry: usize,
        loop_id: LoopId,
    },
    Assignment {
        entry: usize,
        function: String,
        name: String,
        invocation: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", rename_all_fields = "camelCase")]
pub enum AnswerKey {
    ExactValue {
        value: String,
    },
    ValueSet {
        values: Vec<String>,
    },
    OptionSet {
        options: BTreeSet<String>,
    },
    /// `line_widths` holds the character count of every source line so
    /// overlaps can be measured without the program.
    CodeRegion {
        spans: Vec<SourceSpan>,
        line_widths: Vec<u32>,
    },
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionOption {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QuestionInstance {
    pub question_id: String,
    pub template_id: TemplateId,
    pub answer_type: AnswerType,
    pub text: String,
    pub options: Vec<QuestionOption>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_kind: Option<ValueKind>,
    pub answer_key: AnswerKey,
    pub source_refs: Vec<SourceSpan>,
    /// Placeholder text substituted into the pattern.
    pub facts_used: BTreeMap<String, String>,
    pub binding: Binding,
    /// Where the key comes from, phrased for the learner; never contains the key.
    #[serde(default)]
    pub feedback_hint: String,
}

/// What a learner may see before answering: no key, no hint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QuestionView {
    pub question_id: String,
    pub template_id: TemplateId,
    pub answer_type: AnswerType,
    pub text: String,
    pub options: Vec<QuestionOption>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_kind: Option<ValueKind>,
    pub source_refs: Vec<SourceSpan>,
}

impl QuestionInstance {
    pub fn view(&self) -> QuestionView {
        QuestionView {
            question_id: self.question_id.clone(),
            template_id: self.template_id,
            answer_type: self.answer_type,
            text: self.text.clone(),
            options: self.options.clone(),
            value_kind: self.value_kind,
            source_refs: self.source_refs.clone(),
        }
    }

    pub fn option_text(&self, id: &str) -> Option<&str> {
        self.options
            .iter()
            .find(|o| o.id == id)
            .map(|o| o.text.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SeedPolicy {
    Fixed(u64),
    PerSubmission,
}

impl SeedPolicy {
    /// The seed to generate with; `per_submission` applies unless fixed.
    pub fn resolve(self, per_submission: u64) -> u64 {
        match self {
            SeedPolicy::Fixed(seed) => seed,
            SeedPolicy::PerSubmission => per_submission,
        }
    }
}

/// Teacher settings. Dimensions missing from `level_weights` weigh 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TeacherConfig {
    pub enabled_templates: BTreeSet<TemplateId>,
    pub max_questions: u32,
    pub level_weights: BTreeMap<Dimension, f64>,
    pub mastery_threshold: u32,
    pub seed_policy: SeedPolicy,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("enabledTemplates must list at least one template")]
    NoTemplates,
    #[error("maxQuestions must be at least 1")]
    MaxQuestions,
    #[error("masteryThreshold must be at least 1")]
    MasteryThreshold,
    #[error("levelWeights.{0:?} must be a finite number >= 0")]
    Weight(Dimension),
    #[error("invalid teacher config: {0}")]
    Json(String),
}

impl TeacherConfig {
    /// Every template in the catalog, five questions, even weights.
    pub fn all_templates() -> Self {
        Self {
            enabled_templates: TemplateId::ALL.into_iter().collect(),
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: Self =
            serde_json::from_str(text).map_err(|e| ConfigError::Json(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.enabled_templates.is_empty() {
            return Err(ConfigError::NoTemplates);
        }
        if self.max_questions < 1 {
            return Err(ConfigError::MaxQuestions);
        }
        if self.mastery_threshold < 1 {
            return Err(ConfigError::MasteryThreshold);
        }
        for (d, w) in &self.level_weights {
            if !w.is_finite() || *w < 0.0 {
                return Err(ConfigError::Weight(*d));
            }
        }
        Ok(())
    }

    pub fn weight(&self, dimension: Dimension) -> f64 {
        self.level_weights.get(&dimension).copied().unwrap_or(1.0)
    }
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            enabled_templates: catalog()
                .iter()
                .filter(|t| t.enabled_by_default)
                .map(|t| t.template_id)
                .collect(),
            max_questions: 5,
            level_weights: [Dimension::Text, Dimension::Execution, Dimension::Function]
                .into_iter()
                .map(|d| (d, 1.0))
                .collect(),
            mastery_threshold: 2,
            seed_policy: SeedPolicy::PerSubmission,
        }
    }
}

/// How call-stack depth is counted in questions and keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum DepthConvention {
    /// The entry call is the first frame.
    #[default]
    IncludeEntry,
    /// Only calls made from inside the program count.
    ExcludeEntry,
}

impl DepthConvention {
    pub fn apply(self, max_stack_depth: u32) -> u32 {
        match self {
            DepthConvention::IncludeEntry => max_stack_depth,
            DepthConvention::ExcludeEntry => max_stack_depth.saturating_sub(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EngineOptions {
    pub fuel: Fuel,
    pub depth_convention: DepthConvention,
}

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[serde(tag = "reason", rename_all = "camelCase", rename_all_fields = "camelCase")]
pub enum GenerationUnavailable {
    #[error("the program has {} static error(s); the first is: {}", errors.len(), errors[0])]
    StaticErrors { errors: Vec<AnalysisError> },
    #[error("executing {entry} failed: {error}")]
    RuntimeError { entry: String, error: RuntimeError },
    #[error("internal error: {message}")]
    Internal { message: String },
}

/// Runs the whole pipeline for one submission.
pub fn generate(
    program: &Program,
    entries: &[Expr],
    config: &TeacherConfig,
    history: &LearnerHistory,
    learner_id: &str,
    seed: u64,
) -> Result<Vec<QuestionInstance>, GenerationUnavailable> {
    generate_with(
        program,
        entries,
        config,
        history,
        learner_id,
        seed,
        EngineOptions::default(),
    )
}

pub fn generate_with(
    program: &Program,
    entries: &[Expr],
    config: &TeacherConfig,
    history: &LearnerHistory,
    learner_id: &str,
    seed: u64,
    options: EngineOptions,
) -> Result<Vec<QuestionInstance>, GenerationUnavailable> {
    let facts = analyze(program).map_err(|errors| GenerationUnavailable::StaticErrors { errors })?;
    let mut runs = Vec::with_capacity(entries.len());
    for entry in entries {
        let run = execute(program, entry, options.fuel);
        if let Err(error) = &run.result {
            return Err(GenerationUnavailable::RuntimeError {
                entry: entry.to_string(),
                error: error.clone(),
            });
        }
        runs.push(run);
    }
    let enabled: Vec<&QlcTemplate> = catalog()
        .iter()
        .filter(|t| config.enabled_templates.contains(&t.template_id))
        .collect();
    let applicable = applicable_templates(&facts, &runs, &enabled);
    let selected = select_templates(&applicable, config, history, learner_id, seed);
    selected
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut q = instantiate::instantiate_with(
                s.template,
                &s.binding,
                program,
                &facts,
                &runs,
                seed,
                options.depth_convention,
            )
            .map_err(|e| GenerationUnavailable::Internal {
                message: e.to_string(),
            })?;
            q.question_id = format!("q{}", i + 1);
            Ok(q)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_ids_round_trip() {
        for id in TemplateId::ALL {
            assert_eq!(id.as_str().parse::<TemplateId>(), Ok(id));
            let json = serde_json::to_string(&id).unwrap();
            assert_eq!(json, format!("\"{}\"", id.as_str()));
        }
        assert!("T-NOPE".parse::<TemplateId>().is_err());
    }

    #[test]
    fn teacher_config_keys_are_exact() {
        let config = TeacherConfig {
            seed_policy: SeedPolicy::Fixed(42),
            ..TeacherConfig::default()
        };
        let json = serde_json::to_value(&config).unwrap();
        let keys: Vec<&str> = json.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        assert_eq!(
            keys,
            ["enabledTemplates", "levelWeights", "masteryThreshold", "maxQuestions", "seedPolicy"]
        );
        assert_eq!(json["seedPolicy"], serde_json::json!({"fixed": 42}));
        let back = TeacherConfig::from_json(&json.to_string()).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn teacher_config_rejects_bad_documents() {
        let ok = r#"{"enabledTemplates":["T-RECURSIVE"],"maxQuestions":1,
            "levelWeights":{"text":0.5},"masteryThreshold":1,"seedPolicy":"perSubmission"}"#;
        assert!(TeacherConfig::from_json(ok).is_ok());
        let cases = [
            (ok.replace(r#"["T-RECURSIVE"]"#, "[]"), "at least one"),
            (ok.replace(r#""maxQuestions":1"#, r#""maxQuestions":0"#), "maxQuestions"),
            (ok.replace(r#""masteryThreshold":1"#, r#""masteryThreshold":0"#), "masteryThreshold"),
            (ok.replace("0.5", "-1"), "levelWeights"),
            (ok.replace("T-RECURSIVE", "T-BOGUS"), "unknown variant"),
            (ok.replace(r#""maxQuestions""#, r#""extra":1,"maxQuestions""#), "unknown field"),
        ];
        for (doc, needle) in cases {
            let err = TeacherConfig::from_json(&doc).unwrap_err().to_string();
            assert!(err.contains(needle), "{err}");
        }
    }
}
