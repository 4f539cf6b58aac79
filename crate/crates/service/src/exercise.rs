use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use qlc_core::engine::TeacherConfig;
use qlc_core::lang::{parse_entry_expression, Expr};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One teacher-defined functional check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CheckSpec {
    pub entry: String,
    /// Canonical rendering of the expected value, e.g. `A`, `5`, `"abc"`.
    pub expected: String,
}

/// An exercise file as written by the teacher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExerciseSpec {
    pub exercise_id: String,
    pub title: String,
    pub statement: String,
    #[serde(default)]
    pub starter_code: Option<String>,
    pub checks: Vec<CheckSpec>,
    pub qlc_config: TeacherConfig,
    /// Defaults to the checks' entries.
    #[serde(default)]
    pub entries_for_dynamic_facts: Option<Vec<String>>,
}

/// What learners may see of an exercise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ExerciseSummary {
    pub exercise_id: String,
    pub title: String,
    pub statement: String,
    pub starter_code: Option<String>,
}

/// A validated exercise with its entry calls parsed.
#[derive(Debug, Clone)]
pub struct Exercise {
    pub spec: ExerciseSpec,
    pub check_entries: Vec<Expr>,
    pub dynamic_entries: Vec<Expr>,
}

impl Exercise {
    pub fn from_spec(spec: ExerciseSpec) -> Result<Self, String> {
        if spec.exercise_id.trim().is_empty() {
            return Err("exerciseId must not be empty".to_owned());
        }
        if spec.checks.is_empty() {
            return Err("at least one check is required".to_owned());
        }
        spec.qlc_config.validate().map_err(|e| e.to_string())?;
        let parse = |text: &String| {
            parse_entry_expression(text).map_err(|e| format!("entry `{text}`: {e}"))
        };
        let check_entries = spec.checks.iter().map(|c| parse(&c.entry)).collect::<Result<Vec<_>, _>>()?;
        let dynamic_entries = match &spec.entries_for_dynamic_facts {
            Some(entries) => entries.iter().map(parse).collect::<Result<Vec<_>, _>>()?,
            None => check_entries.clone(),
        };
        Ok(Self {
            spec,
            check_entries,
            dynamic_entries,
        })
    }

    pub fn summary(&self) -> ExerciseSummary {
        ExerciseSummary {
            exercise_id: self.spec.exercise_id.clone(),
            title: self.spec.title.clone(),
            statement: self.spec.statement.clone(),
            starter_code: self.spec.starter_code.clone(),
        }
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read exercises directory {dir}: {source}")]
    Dir {
        dir: PathBuf,
        source: std::io::Error,
    },
    #[error("exercise file {file}: {message}")]
    File { file: PathBuf, message: String },
}

/// Loads every `*.json` file in `dir`, in file-name order.
pub fn load_exercises(dir: &Path) -> Result<Vec<Exercise>, LoadError> {
    let dir_err = |source| LoadError::Dir {
        dir: dir.to_owned(),
        source,
    };
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(dir_err)?
        .collect::<Result<Vec<_>, _>>()
        .map_err(dir_err)?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();

    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for file in files {
        let fail = |message: String| LoadError::File {
            file: file.clone(),
            message,
        };
        let text = fs::read_to_string(&file).map_err(|e| fail(e.to_string()))?;
        let spec: ExerciseSpec = serde_json::from_str(&text).map_err(|e| fail(e.to_string()))?;
        let exercise = Exercise::from_spec(spec).map_err(fail)?;
        if !seen.insert(exercise.spec.exercise_id.clone()) {
            return Err(fail(format!(
                "exerciseId `{}` is used by another file",
                exercise.spec.exercise_id
            )));
        }
        out.push(exercise);
    }
    Ok(out)
}
