use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::analysis::{classify_variable_role, find_declaration, literal_texts, Role, StaticFacts};
use crate::interp::{DynamicFacts, Value};
use crate::lang::{FunctionDecl, LoopId, Program, SourceSpan, Stmt, StmtKind, TypeName};

use super::{
    AnswerKey, AnswerType, Binding, DepthConvention, QlcTemplate, QuestionInstance,
    QuestionOption, TemplateId, ValueKind,
};

const MAX_DISTRACTORS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InstantiateError {
    #[error("{template} cannot be bound to {binding}")]
    BindingMismatch { template: TemplateId, binding: String },
    #[error("{template}: {fact} is missing from the facts")]
    MissingFact { template: TemplateId, fact: String },
    #[error("{template}: placeholder {placeholder} was left unfilled")]
    UnfilledPlaceholder {
        template: TemplateId,
        placeholder: String,
    },
}

/// Fills `template` with the facts behind `binding`.
///
/// The question id is left empty; [`super::generate`] numbers questions.
pub fn instantiate(
    template: &QlcTemplate,
    binding: &Binding,
    program: &Program,
    facts: &StaticFacts,
    runs: &[DynamicFacts],
    seed: u64,
) -> Result<QuestionInstance, InstantiateError> {
    instantiate_with(
        template,
        binding,
        program,
        facts,
        runs,
        seed,
        DepthConvention::default(),
    )
}

struct Builder<'a> {
    template: &'a QlcTemplate,
    placeholders: BTreeMap<String, String>,
    options: Vec<QuestionOption>,
    value_kind: Option<ValueKind>,
    key: AnswerKey,
    refs: Vec<SourceSpan>,
    hint: String,
}

impl Builder<'_> {
    fn set(&mut self, placeholder: &str, value: impl Into<String>) {
        self.placeholders.insert(placeholder.to_owned(), value.into());
    }

    fn missing(&self, fact: impl Into<String>) -> InstantiateError {
        InstantiateError::MissingFact {
            template: self.template.template_id,
            fact: fact.into(),
        }
    }

    fn render(&self) -> Result<String, InstantiateError> {
        let mut out = String::new();
        let mut rest = self.template.text_pattern;
        while let Some(open) = rest.find('[') {
            out.push_str(&rest[..open]);
            let close = rest[open..]
                .find(']')
                .map(|c| open + c)
                .unwrap_or(rest.len() - 1);
            let name = &rest[open + 1..close];
            let value = self.placeholders.get(name).ok_or_else(|| {
                InstantiateError::UnfilledPlaceholder {
                    template: self.template.template_id,
                    placeholder: format!("[{name}]"),
                }
            })?;
            out.push_str(value);
            rest = &rest[close + 1..];
        }
        out.push_str(rest);
        Ok(out)
    }

    /// Shuffles `correct` and `distractors` into labelled options and keys
    /// the labels of `correct`.
    fn choices(&mut self, correct: &[String], distractors: &[String], rng: &mut ChaCha8Rng) {
        let mut all: Vec<(&String, bool)> = correct
            .iter()
            .map(|c| (c, true))
            .chain(distractors.iter().map(|d| (d, false)))
            .collect();
        all.shuffle(rng);
        let mut key = BTreeSet::new();
        self.options = all
            .into_iter()
            .enumerate()
            .map(|(i, (text, is_correct))| {
                let id = label(i);
                if is_correct {
                    key.insert(id.clone());
                }
                QuestionOption {
                    id,
                    text: text.clone(),
                }
            })
            .collect();
        self.key = AnswerKey::OptionSet { options: key };
    }
}

/// `a`, `b`, ..., `z`, `aa`, `ab`, ...
fn label(i: usize) -> String {
    let mut n = i;
    let mut s = Vec::new();
    loop {
        s.push(b'a' + (n % 26) as u8);
        if n < 26 {
            break;
        }
        n = n / 26 - 1;
    }
    s.reverse();
    String::from_utf8(s).expect("ascii")
}

fn ordinal(n: u32) -> String {
    const WORDS: [&str; 10] = [
        "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth",
        "tenth",
    ];
    if let Some(w) = WORDS.get((n as usize).wrapping_sub(1)) {
        return (*w).to_owned();
    }
    let suffix = match (n % 10, n % 100) {
        (_, 11..=13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    };
    format!("{n}{suffix}")
}

fn value_kind(value: &Value) -> ValueKind {
    match value.type_name() {
        TypeName::Int => ValueKind::Int,
        TypeName::Char => ValueKind::Char,
        TypeName::Boolean => ValueKind::Boolean,
        TypeName::String | TypeName::Void => ValueKind::String,
    }
}

fn sample(pool: BTreeSet<String>, rng: &mut ChaCha8Rng) -> Vec<String> {
    let pool: Vec<String> = pool.into_iter().collect();
    pool.choose_multiple(rng, MAX_DISTRACTORS.min(pool.len()))
        .cloned()
        .collect()
}

/// Pads an identifier pool with literal texts when it is too small.
fn padded(mut pool: BTreeSet<String>, exclude: &[String], program: &Program) -> BTreeSet<String> {
    if pool.len() < MAX_DISTRACTORS {
        for lit in literal_texts(program) {
            if pool.len() >= MAX_DISTRACTORS {
                break;
            }
            if !lit.trim().is_empty() && !exclude.contains(&lit) {
                pool.insert(lit);
            }
        }
    }
    pool
}

fn stmts_of<'a>(stmt: &'a Stmt, out: &mut Vec<&'a Stmt>) {
    out.push(stmt);
    for c in stmt.children() {
        stmts_of(c, out);
    }
}

fn all_stmts(func: &FunctionDecl) -> Vec<&Stmt> {
    let mut out = Vec::new();
    for s in &func.body.stmts {
        stmts_of(s, &mut out);
    }
    out
}

fn find_loop(program: &Program, id: LoopId) -> Option<&Stmt> {
    program
        .functions
        .iter()
        .flat_map(all_stmts)
        .find(|s| s.loop_id() == Some(id))
}

/// Span of the `while` or `for` keyword.
fn keyword_span(stmt: &Stmt) -> SourceSpan {
    let len = match stmt.kind {
        StmtKind::While { .. } => 5,
        _ => 3,
    };
    SourceSpan::new(
        stmt.span.start_line,
        stmt.span.start_col,
        stmt.span.start_line,
        stmt.span.start_col + len - 1,
    )
}

/// Where `name` is declared or assigned on `line`, or a parameter when
/// `line` is the header line.
fn binding_site(func: &FunctionDecl, name: &str, line: u32) -> Option<SourceSpan> {
    if line == func.header_line() {
        if let Some(p) = func.params.iter().find(|p| p.name.name == name) {
            return Some(p.name.span);
        }
    }
    all_stmts(func).into_iter().find_map(|s| match &s.kind {
        StmtKind::VarDecl { name: n, .. } | StmtKind::Assign { target: n, .. }
            if n.name == name && n.span.start_line == line =>
        {
            Some(n.span)
        }
        _ => None,
    })
}

/// First read of `name` on `line`, or the assignment to it there.
fn use_site(func: &FunctionDecl, name: &str, line: u32) -> Option<SourceSpan> {
    let mut found: Option<SourceSpan> = None;
    for s in all_stmts(func) {
        for e in s.exprs() {
            e.walk(&mut |e| {
                if let crate::lang::ExprKind::Var(n) = &e.kind {
                    if n == name
                        && e.span.start_line == line
                        && found.is_none_or(|f| e.span.start() < f.start())
                    {
                        found = Some(e.span);
                    }
                }
            });
        }
    }
    found.or_else(|| {
        all_stmts(func).into_iter().find_map(|s| match &s.kind {
            StmtKind::Assign { target, .. }
                if target.name == name && target.span.start_line == line =>
            {
                Some(target.span)
            }
            _ => None,
        })
    })
}

fn condition_site(func: &FunctionDecl, line: u32) -> Option<SourceSpan> {
    all_stmts(func).into_iter().find_map(|s| match &s.kind {
        StmtKind::If { cond, .. } if cond.span.start_line == line => Some(cond.span),
        _ => None,
    })
}

pub(crate) fn instantiate_with(
    template: &QlcTemplate,
    binding: &Binding,
    program: &Program,
    facts: &StaticFacts,
    runs: &[DynamicFacts],
    seed: u64,
    depth: DepthConvention,
) -> Result<QuestionInstance, InstantiateError> {
    let id = template.template_id;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id.ordinal() as u64 + 1);
    let mut b = Builder {
        template,
        placeholders: BTreeMap::new(),
        options: Vec::new(),
        value_kind: None,
        key: AnswerKey::None,
        refs: Vec::new(),
        hint: String::new(),
    };
    let mismatch = || InstantiateError::BindingMismatch {
        template: id,
        binding: format!("{binding:?}"),
    };
    let function = |name: &str| {
        program.function(name).ok_or_else(|| InstantiateError::MissingFact {
            template: id,
            fact: format!("function `{name}`"),
        })
    };
    let run = |entry: usize| {
        runs.get(entry)
            .filter(|r| r.succeeded())
            .ok_or_else(|| InstantiateError::MissingFact {
                template: id,
                fact: format!("a successful execution #{entry}"),
            })
    };

    match (id, binding) {
        (TemplateId::VarNames, Binding::Function { function: f }) => {
            let ff = facts.function(f).ok_or_else(|| b.missing(format!("function `{f}`")))?;
            let decl = function(f)?;
            let names: Vec<String> = ff
                .variables
                .iter()
                .map(|v| v.name.clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let mut pool: BTreeSet<String> =
                facts.functions.iter().map(|g| g.name.clone()).collect();
            for g in facts.functions.iter().filter(|g| g.name != *f) {
                pool.extend(g.variables.iter().map(|v| v.name.clone()));
            }
            pool.retain(|p| !names.contains(p));
            let distractors = sample(padded(pool, &names, program), &mut rng);
            b.set("F", f);
            b.choices(&names, &distractors, &mut rng);
            b.refs.push(decl.name.span);
            b.hint = format!(
                "Look at the parameters in the header of {f} and at every variable declared in its body."
            );
        }
        (TemplateId::Recursive, Binding::Program) => {
            let names: Vec<String> = facts.functions.iter().map(|f| f.name.clone()).collect();
            let recursive: Vec<String> = facts.recursive_functions.iter().cloned().collect();
            let others: Vec<String> = names
                .iter()
                .filter(|n| !facts.is_recursive(n))
                .cloned()
                .collect();
            b.set("K", names.len().to_string());
            b.choices(&recursive, &others, &mut rng);
            b.refs = program.functions.iter().map(|f| f.name.span).collect();
            b.hint = "A function is recursive when it can end up calling itself, directly or through other functions you wrote.".to_owned();
        }
        (TemplateId::ParamNames, Binding::Function { function: f }) => {
            let ff = facts.function(f).ok_or_else(|| b.missing(format!("function `{f}`")))?;
            let decl = function(f)?;
            let params = ff.param_names.clone();
            let mut pool: BTreeSet<String> = facts
                .functions
                .iter()
                .flat_map(|g| g.variables.iter().map(|v| v.name.clone()))
                .collect();
            pool.extend(facts.functions.iter().map(|g| g.name.clone()));
            pool.remove(f);
            pool.retain(|p| !params.contains(p));
            let distractors = sample(padded(pool, &params, program), &mut rng);
            b.set("F", f);
            b.choices(&params, &distractors, &mut rng);
            b.refs.push(decl.name.span);
            b.hint = format!(
                "The parameters are declared between the parentheses in the header of {f} on line {}.",
                decl.header_line()
            );
        }
        (TemplateId::LoopEnd | TemplateId::LoopPurpose, Binding::Loop { loop_id }) => {
            let lf = facts
                .loop_facts(*loop_id)
                .ok_or_else(|| b.missing(format!("loop {loop_id}")))?;
            let stmt = find_loop(program, *loop_id).ok_or_else(|| b.missing(format!("loop {loop_id}")))?;
            b.set("N", lf.start_line.to_string());
            b.refs.push(keyword_span(stmt));
            if id == TemplateId::LoopEnd {
                let values: BTreeSet<u32> =
                    [lf.closing_brace_line, lf.last_body_stmt_line].into_iter().collect();
                b.key = AnswerKey::ValueSet {
                    values: values.into_iter().rev().map(|v| v.to_string()).collect(),
                };
                b.value_kind = Some(ValueKind::Line);
                b.hint = format!(
                    "Find the closing brace that matches the opening brace of the loop on line {}.",
                    lf.start_line
                );
            } else {
                b.set("M", lf.enclosing_function.clone());
            }
        }
        (TemplateId::DeclLine, Binding::Use { function: f, name, line }) => {
            let decl_line = find_declaration(program, *line, name)
                .map_err(|e| b.missing(e.to_string()))?;
            b.set("N", line.to_string());
            b.set("V", name);
            b.key = AnswerKey::ExactValue {
                value: decl_line.to_string(),
            };
            b.value_kind = Some(ValueKind::Line);
            b.refs.push(
                use_site(function(f)?, name, *line)
                    .ok_or_else(|| b.missing(format!("a use of `{name}` on line {line}")))?,
            );
            b.hint = format!(
                "Starting from line {line}, look upwards through the enclosing blocks of {f} for the declaration of {name} that is in scope there."
            );
        }
        (
            TemplateId::AssignVal,
            Binding::Assignment {
                entry,
                function: f,
                name,
                invocation,
            },
        ) => {
            let r = run(*entry)?;
            let value = r
                .assignment_value(name, f, *invocation, 1)
                .map_err(|e| b.missing(e.to_string()))?;
            let line = r.assign_events().find_map(|e| match e {
                crate::interp::TraceEvent::Assign {
                    var_name,
                    fn_name,
                    invocation_index,
                    line,
                    ..
                } if var_name == name && fn_name == f && invocation_index == invocation => {
                    Some(*line)
                }
                _ => None,
            });
            b.set("E", r.entry.to_string());
            b.set("T", value.noun());
            b.set("V", name);
            b.set("I", ordinal(*invocation));
            b.set("F", f);
            b.key = AnswerKey::ExactValue {
                value: value.canonical(),
            };
            b.value_kind = Some(value_kind(value));
            if let Some(span) = line.and_then(|l| binding_site(function(f).ok()?, name, l)) {
                b.refs.push(span);
            }
            b.hint = format!(
                "Trace {} call by call. Count the calls of {f} from the start and follow {name} during call number {invocation}.",
                r.entry
            );
        }
        (TemplateId::LoopIter, Binding::LoopRun { entry, loop_id }) => {
            let r = run(*entry)?;
            let lf = facts
                .loop_facts(*loop_id)
                .ok_or_else(|| b.missing(format!("loop {loop_id}")))?;
            let stmt = find_loop(program, *loop_id).ok_or_else(|| b.missing(format!("loop {loop_id}")))?;
            b.set("E", r.entry.to_string());
            b.set("N", lf.start_line.to_string());
            b.key = AnswerKey::ExactValue {
                value: r.loop_iterations(*loop_id).to_string(),
            };
            b.value_kind = Some(ValueKind::Int);
            b.refs.push(keyword_span(stmt));
            b.hint = format!(
                "Trace {} and count every time the body of the loop on line {} starts, adding up all calls of {}.",
                r.entry, lf.start_line, lf.enclosing_function
            );
        }
        (TemplateId::StackDepth, Binding::Execution { entry }) => {
            let r = run(*entry)?;
            b.set("E", r.entry.to_string());
            b.key = AnswerKey::ExactValue {
                value: depth.apply(r.max_call_depth()).to_string(),
            };
            b.value_kind = Some(ValueKind::Int);
            if let crate::lang::ExprKind::Call { callee, .. } = &r.entry.kind {
                b.refs.push(function(&callee.name)?.name.span);
            }
            b.hint = match depth {
                DepthConvention::IncludeEntry => format!(
                    "Trace {} and count the calls that are still running at the deepest point, counting the first call as well.",
                    r.entry
                ),
                DepthConvention::ExcludeEntry => format!(
                    "Trace {} and count the calls that are still running at the deepest point, not counting the first call.",
                    r.entry
                ),
            };
        }
        (
            TemplateId::VarRole | TemplateId::NameJustify,
            Binding::Variable {
                function: f,
                name,
                decl_line,
            },
        ) => {
            let var = facts
                .function(f)
                .and_then(|ff| {
                    ff.variables
                        .iter()
                        .find(|v| v.name == *name && v.decl_line == *decl_line)
                })
                .ok_or_else(|| b.missing(format!("variable `{name}` of `{f}`")))?;
            let span = binding_site(function(f)?, name, *decl_line)
                .ok_or_else(|| b.missing(format!("the declaration of `{name}`")))?;
            b.refs.push(span);
            if id == TemplateId::NameJustify {
                b.set("V", name);
                b.set("N", decl_line.to_string());
            } else {
                let homonyms = facts
                    .functions
                    .iter()
                    .flat_map(|g| &g.variables)
                    .filter(|v| v.name == *name)
                    .count();
                if homonyms > 1 {
                    b.set("V", format!("{name} (declared on line {decl_line})"));
                } else {
                    b.set("V", name);
                }
                let role = classify_variable_role(var, program);
                let others: Vec<Role> = Role::ALL.into_iter().filter(|r| *r != role).collect();
                let distractors: Vec<String> = others
                    .choose_multiple(&mut rng, MAX_DISTRACTORS.min(others.len()))
                    .map(|r| r.description().to_owned())
                    .collect();
                b.choices(&[role.description().to_owned()], &distractors, &mut rng);
                b.hint = format!(
                    "Look at the declaration of {name} on line {decl_line} and at every line where {name} receives a new value."
                );
            }
        }
        (TemplateId::CondPurpose, Binding::Condition { function: f, line }) => {
            b.set("N", line.to_string());
            b.refs.push(
                condition_site(function(f)?, *line)
                    .ok_or_else(|| b.missing(format!("a condition on line {line}")))?,
            );
        }
        _ => return Err(mismatch()),
    }

    debug_assert_eq!(
        matches!(b.key, AnswerKey::None),
        template.answer_type == AnswerType::OpenEnded
    );
    let text = b.render()?;
    Ok(QuestionInstance {
        question_id: String::new(),
        template_id: id,
        answer_type: template.answer_type,
        text,
        options: b.options,
        value_kind: b.value_kind,
        answer_key: b.key,
        source_refs: b.refs,
        facts_used: b.placeholders,
        binding: binding.clone(),
        feedback_hint: b.hint,
    })
}
