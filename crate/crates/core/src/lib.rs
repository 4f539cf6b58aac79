//! Questions about learners' code: parsing, static and dynamic analysis,
//! question generation and grading for MiniJava-QLC programs.

pub mod analysis;
pub mod engine;
pub mod grading;
pub mod interp;
pub mod lang;

pub use analysis::{analyze, StaticFacts};
pub use engine::{generate, QuestionInstance, TeacherConfig, TemplateId};
pub use grading::{grade, LearnerHistory};
pub use interp::{execute, DynamicFacts, Fuel};
pub use lang::{parse_entry_expression, parse_program, Program};
