//! Tracing tree-walking interpreter and the dynamic facts it records.
//!
//! Conventions the question engine relies on:
//!
//! * stack depth counts user-function frames, the entry call included;
//!   built-in methods add no frame;
//! * invocation indices count entries of each function from 1 over the whole
//!   run, so the "second invocation" of `f` is invocation 2;
//! * loop iteration counts are body entries summed over every activation.

mod machine;
mod value;

use std::collections::BTreeMap;
use std::fmt;

use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::lang::{Expr, LoopId};

pub use machine::execute;
pub use value::Value;

/// Execution budget for untrusted code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Fuel {
    /// Statements executed, loop conditions checked and calls made.
    pub max_steps: u64,
    /// Frames on the user call stack; values above [`Fuel::CALL_DEPTH_CAP`]
    /// are clamped.
    pub max_call_depth: u32,
}

impl Fuel {
    pub const CALL_DEPTH_CAP: u32 = 4096;

    pub fn new(max_steps: u64, max_call_depth: u32) -> Self {
        assert!(max_steps > 0 && max_call_depth > 0, "fuel bounds must be positive");
        Self {
            max_steps,
            max_call_depth,
        }
    }
}

impl Default for Fuel {
    fn default() -> Self {
        Self {
            max_steps: 100_000,
            max_call_depth: 256,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RuntimeErrorKind {
    TypeError,
    DivisionByZero,
    IndexOutOfBounds,
    UndefinedFunction,
    FuelExhausted,
    StackOverflow,
    IntegerOverflow,
}

impl fmt::Display for RuntimeErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RuntimeErrorKind::TypeError => "type error",
            RuntimeErrorKind::DivisionByZero => "division by zero",
            RuntimeErrorKind::IndexOutOfBounds => "index out of bounds",
            RuntimeErrorKind::UndefinedFunction => "undefined function",
            RuntimeErrorKind::FuelExhausted => "step limit exceeded",
            RuntimeErrorKind::StackOverflow => "call stack too deep",
            RuntimeErrorKind::IntegerOverflow => "integer overflow",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
#[error("{kind} on line {line}: {message}")]
pub struct RuntimeError {
    pub kind: RuntimeErrorKind,
    pub message: String,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", rename_all_fields = "camelCase")]
pub enum TraceEvent {
    CallEnter {
        fn_name: String,
        args: Vec<Value>,
        /// Frames on the stack after entering, the entry call being 1.
        depth: u32,
        invocation_index: u32,
    },
    CallExit {
        fn_name: String,
        return_value: Value,
    },
    Assign {
        var_name: String,
        line: u32,
        value: Value,
        fn_name: String,
        invocation_index: u32,
    },
    LoopIter {
        loop_id: LoopId,
        /// 1-based within the current activation of the loop.
        iteration_index: u64,
    },
}

/// Identifies every value a variable received during one invocation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AssignKey {
    pub var_name: String,
    pub fn_name: String,
    pub invocation_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FactLookupError {
    #[error("`{var_name}` is never assigned during invocation {invocation_index} of `{fn_name}`")]
    NeverAssigned {
        var_name: String,
        fn_name: String,
        invocation_index: u32,
    },
    #[error("`{var_name}` is assigned only {available} time(s) during that invocation")]
    NoSuchOccurrence { var_name: String, available: usize },
}

/// Everything observed while running one entry call.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicFacts {
    pub entry: Expr,
    pub result: Result<Value, RuntimeError>,
    pub trace: Vec<TraceEvent>,
    pub max_stack_depth: u32,
    pub loop_iterations: BTreeMap<LoopId, u64>,
    pub assignments: BTreeMap<AssignKey, Vec<Value>>,
}

impl DynamicFacts {
    /// Rebuilds the aggregates from a trace.
    pub(crate) fn from_trace(
        entry: Expr,
        result: Result<Value, RuntimeError>,
        trace: Vec<TraceEvent>,
    ) -> Self {
        let mut max_stack_depth = 0;
        let mut loop_iterations = BTreeMap::new();
        let mut assignments: BTreeMap<AssignKey, Vec<Value>> = BTreeMap::new();
        for ev in &trace {
            match ev {
                TraceEvent::CallEnter { depth, .. } => max_stack_depth = max_stack_depth.max(*depth),
                TraceEvent::LoopIter { loop_id, .. } => {
                    *loop_iterations.entry(*loop_id).or_insert(0) += 1
                }
                TraceEvent::Assign {
                    var_name,
                    value,
                    fn_name,
                    invocation_index,
                    ..
                } => assignments
                    .entry(AssignKey {
                        var_name: var_name.clone(),
                        fn_name: fn_name.clone(),
                        invocation_index: *invocation_index,
                    })
                    .or_default()
                    .push(value.clone()),
                TraceEvent::CallExit { .. } => {}
            }
        }
        Self {
            entry,
            result,
            trace,
            max_stack_depth,
            loop_iterations,
            assignments,
        }
    }

    pub fn succeeded(&self) -> bool {
        self.result.is_ok()
    }

    /// Deepest user call stack reached.
    pub fn max_call_depth(&self) -> u32 {
        self.max_stack_depth
    }

    /// Body entries of `loop_id` over the whole run.
    pub fn loop_iterations(&self, loop_id: LoopId) -> u64 {
        self.loop_iterations.get(&loop_id).copied().unwrap_or(0)
    }

    /// The `occurrence`-th (1-based) value assigned to `var_name` during the
    /// given invocation of `fn_name`.
    pub fn assignment_value(
        &self,
        var_name: &str,
        fn_name: &str,
        invocation_index: u32,
        occurrence: usize,
    ) -> Result<&Value, FactLookupError> {
        let key = AssignKey {
            var_name: var_name.to_owned(),
            fn_name: fn_name.to_owned(),
            invocation_index,
        };
        let values = self
            .assignments
            .get(&key)
            .ok_or_else(|| FactLookupError::NeverAssigned {
                var_name: var_name.to_owned(),
                fn_name: fn_name.to_owned(),
                invocation_index,
            })?;
        occurrence
            .checked_sub(1)
            .and_then(|i| values.get(i))
            .ok_or(FactLookupError::NoSuchOccurrence {
                var_name: var_name.to_owned(),
                available: values.len(),
            })
    }

    /// Assign events in trace order.
    pub fn assign_events(&self) -> impl Iterator<Item = &TraceEvent> {
        self.trace
            .iter()
            .filter(|e| matches!(e, TraceEvent::Assign { .. }))
    }
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
enum ResultJson<'a> {
    Value(&'a Value),
    Error(&'a RuntimeError),
}

impl Serialize for DynamicFacts {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("DynamicFacts", 5)?;
        s.serialize_field("entry", &self.entry.to_string())?;
        s.serialize_field(
            "result",
            &match &self.result {
                Ok(v) => ResultJson::Value(v),
                Err(e) => ResultJson::Error(e),
            },
        )?;
        s.serialize_field("maxStackDepth", &self.max_stack_depth)?;
        let loops: BTreeMap<String, u64> = self
            .loop_iterations
            .iter()
            .map(|(k, v)| (k.0.to_string(), *v))
            .collect();
        s.serialize_field("loopIterations", &loops)?;
        s.serialize_field("trace", &self.trace)?;
        s.end()
    }
}
