//! Static facts about a parsed program: functions, variables, loops, the
//! call graph, recursion and variable roles.

mod callgraph;
mod resolve;
mod roles;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::{ExprKind, LoopId, Program, SourceSpan, Stmt, StmtKind, TypeName};

pub use callgraph::{detect_recursion, CallGraph};
pub use roles::{classify_variable_role, Role};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum AnalysisError {
    #[error("call to undefined function `{name}` at line {}", span.start_line)]
    UndefinedFunction { name: String, span: SourceSpan },
    #[error("`{name}` at line {} is used before it is declared", span.start_line)]
    UndefinedVariable { name: String, span: SourceSpan },
    #[error("`{name}` is declared twice in the same scope (line {})", span.start_line)]
    Redeclared { name: String, span: SourceSpan },
    #[error("`{name}` expects {expected} argument(s) but is called with {found} at line {}", span.start_line)]
    ArityMismatch {
        name: String,
        expected: usize,
        found: usize,
        span: SourceSpan,
    },
    #[error("line {line} does not use a variable named `{name}`")]
    NoSuchUse { name: String, line: u32 },
}

impl AnalysisError {
    pub fn span(&self) -> Option<SourceSpan> {
        match self {
            AnalysisError::UndefinedFunction { span, .. }
            | AnalysisError::UndefinedVariable { span, .. }
            | AnalysisError::Redeclared { span, .. }
            | AnalysisError::ArityMismatch { span, .. } => Some(*span),
            AnalysisError::NoSuchUse { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StaticFacts {
    pub functions: Vec<FunctionFacts>,
    pub loops: Vec<LoopFacts>,
    pub call_graph: CallGraph,
    pub recursive_functions: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FunctionFacts {
    pub name: String,
    pub param_names: Vec<String>,
    /// Parameters first, then locals in declaration order.
    pub variables: Vec<VariableFacts>,
    /// Lines holding an `if` condition.
    pub condition_lines: Vec<u32>,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VariableFacts {
    pub name: String,
    pub function: String,
    pub is_parameter: bool,
    #[serde(rename = "type")]
    pub ty: TypeName,
    /// For parameters, the function header line.
    pub decl_line: u32,
    pub use_lines: Vec<u32>,
    pub assign_lines: Vec<u32>,
    /// Lines where the value stored (initializer or reassignment) comes from
    /// an expression containing a user-function call.
    pub call_assign_lines: Vec<u32>,
    pub role: Role,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum LoopKind {
    While,
    For,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LoopFacts {
    pub loop_id: LoopId,
    pub kind: LoopKind,
    pub start_line: u32,
    pub last_body_stmt_line: u32,
    /// Last line of the loop; holds the `}` for braced bodies.
    pub closing_brace_line: u32,
    pub enclosing_function: String,
}

impl StaticFacts {
    pub fn function(&self, name: &str) -> Option<&FunctionFacts> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn loop_facts(&self, id: LoopId) -> Option<&LoopFacts> {
        self.loops.iter().find(|l| l.loop_id == id)
    }

    pub fn is_recursive(&self, function: &str) -> bool {
        self.recursive_functions.contains(function)
    }
}

fn loop_facts(stmt: &Stmt, function: &str) -> LoopFacts {
    let (loop_id, kind, body) = match &stmt.kind {
        StmtKind::While { id, body, .. } => (*id, LoopKind::While, body),
        StmtKind::For { id, body, .. } => (*id, LoopKind::For, body),
        _ => unreachable!("not a loop"),
    };
    let last_body_stmt_line = match &body.kind {
        StmtKind::Block(b) => b
            .stmts
            .last()
            .map_or(b.span.start_line, |s| s.span.end_line),
        _ => body.span.end_line,
    };
    LoopFacts {
        loop_id,
        kind,
        start_line: stmt.span.start_line,
        last_body_stmt_line,
        closing_brace_line: stmt.span.end_line,
        enclosing_function: function.to_owned(),
    }
}

fn sorted_lines(lines: impl IntoIterator<Item = u32>) -> Vec<u32> {
    lines
        .into_iter()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Extracts the static facts of `program`.
///
/// Fails with every undefined function, undefined variable, duplicate
/// declaration and arity mismatch found.
pub fn analyze(program: &Program) -> Result<StaticFacts, Vec<AnalysisError>> {
    let mut errors = Vec::new();
    let mut functions = Vec::new();
    let mut loops = Vec::new();
    let mut call_graph = CallGraph::new();

    for func in &program.functions {
        call_graph.insert(func.name.name.clone(), BTreeSet::new());
    }

    for func in &program.functions {
        let name = func.name.name.as_str();
        let scopes = resolve::resolve(func, &mut errors);

        for call in &scopes.calls {
            match program.function(call.callee) {
                Some(target) => {
                    if target.params.len() != call.arity {
                        errors.push(AnalysisError::ArityMismatch {
                            name: call.callee.to_owned(),
                            expected: target.params.len(),
                            found: call.arity,
                            span: call.span,
                        });
                    }
                    call_graph
                        .get_mut(name)
                        .expect("every function has a node")
                        .insert(call.callee.to_owned());
                }
                None => errors.push(AnalysisError::UndefinedFunction {
                    name: call.callee.to_owned(),
                    span: call.span,
                }),
            }
        }

        let variables = scopes
            .decls
            .iter()
            .enumerate()
            .map(|(id, decl)| {
                let sites = scopes.assigns.iter().filter(|a| a.decl == id);
                let mut call_lines: Vec<u32> = sites
                    .clone()
                    .filter(|a| a.value.contains_user_call())
                    .map(|a| a.line)
                    .collect();
                if decl.init.is_some_and(|e| e.contains_user_call()) {
                    call_lines.push(decl.line);
                }
                VariableFacts {
                    name: decl.name.to_owned(),
                    function: name.to_owned(),
                    is_parameter: decl.is_param,
                    ty: decl.ty,
                    decl_line: decl.line,
                    use_lines: sorted_lines(
                        scopes.refs.iter().filter(|r| r.decl == id).map(|r| r.line),
                    ),
                    assign_lines: sorted_lines(sites.map(|a| a.line)),
                    call_assign_lines: sorted_lines(call_lines),
                    role: roles::classify(&scopes, id),
                }
            })
            .collect();

        loops.extend(scopes.loops.iter().map(|s| loop_facts(s, name)));
        functions.push(FunctionFacts {
            name: name.to_owned(),
            param_names: func.params.iter().map(|p| p.name.name.clone()).collect(),
            variables,
            condition_lines: sorted_lines(scopes.conditions.iter().map(|c| c.span.start_line)),
            span: func.span,
        });
    }

    if !errors.is_empty() {
        return Err(errors);
    }
    loops.sort_by_key(|l| l.loop_id);
    let recursive_functions = detect_recursion(&call_graph);
    Ok(StaticFacts {
        functions,
        loops,
        call_graph,
        recursive_functions,
    })
}

/// Line of the innermost declaration of `name` visible at its first use on
/// `use_line`.
pub fn find_declaration(program: &Program, use_line: u32, name: &str) -> Result<u32, AnalysisError> {
    let mut errors = Vec::new();
    for func in &program.functions {
        if !func.span.contains_line(use_line) {
            continue;
        }
        let scopes = resolve::resolve(func, &mut errors);
        if let Some(r) = scopes
            .refs
            .iter()
            .filter(|r| r.line == use_line && scopes.decls[r.decl].name == name)
            .min_by_key(|r| r.span.start())
        {
            return Ok(scopes.decls[r.decl].line);
        }
    }
    Err(AnalysisError::NoSuchUse {
        name: name.to_owned(),
        line: use_line,
    })
}

/// Text of every literal in the program, in source order.
pub fn literal_texts(program: &Program) -> Vec<String> {
    fn stmt(s: &Stmt, out: &mut Vec<String>) {
        for e in s.exprs() {
            e.walk(&mut |e| match &e.kind {
                ExprKind::Int(v) => out.push(v.to_string()),
                ExprKind::Char(c) => out.push(c.to_string()),
                ExprKind::Str(s) => out.push(s.clone()),
                ExprKind::Bool(b) => out.push(b.to_string()),
                _ => {}
            });
        }
        for c in s.children() {
            stmt(c, out);
        }
    }
    let mut out = Vec::new();
    for f in &program.functions {
        for s in &f.body.stmts {
            stmt(s, &mut out);
        }
    }
    out
}
