use std::fmt;

use serde::{Deserialize, Serialize};

use crate::lang::{quote_str, TypeName};

/// Runtime value of a MiniJava-QLC expression.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "camelCase")]
pub enum Value {
    Int(i64),
    Char(char),
    Bool(bool),
    Str(String),
    Void,
}

impl Value {
    pub fn type_name(&self) -> TypeName {
        match self {
            Value::Int(_) => TypeName::Int,
            Value::Char(_) => TypeName::Char,
            Value::Bool(_) => TypeName::Boolean,
            Value::Str(_) => TypeName::String,
            Value::Void => TypeName::Void,
        }
    }

    /// Canonical text used in answer keys and check expectations: integers
    /// in decimal, characters bare, strings double-quoted, booleans as
    /// `true`/`false`.
    pub fn canonical(&self) -> String {
        match self {
            Value::Int(v) => v.to_string(),
            Value::Char(c) => c.to_string(),
            Value::Bool(b) => b.to_string(),
            Value::Str(s) => quote_str(s),
            Value::Void => "void".to_owned(),
        }
    }

    /// Text appended by string concatenation.
    pub(crate) fn concat_text(&self) -> String {
        match self {
            Value::Str(s) => s.clone(),
            other => other.canonical(),
        }
    }

    /// Noun used when asking about a value of this type.
    pub fn noun(&self) -> &'static str {
        match self {
            Value::Int(_) => "number",
            Value::Char(_) => "character",
            Value::Bool(_) => "boolean value",
            Value::Str(_) => "string",
            Value::Void => "value",
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}
