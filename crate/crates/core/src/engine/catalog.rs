use std::sync::OnceLock;

use serde::Serialize;

use crate::analysis::{Role, StaticFacts};
use crate::interp::{DynamicFacts, TraceEvent};
use crate::lang::ExprKind;

use super::{AnswerType, Binding, BlockModelTag, Dimension, QlcTemplate, Scale, TemplateId};

fn tag(scale: Scale, dimension: Dimension) -> BlockModelTag {
    BlockModelTag { scale, dimension }
}

fn entry(
    template_id: TemplateId,
    tag: BlockModelTag,
    answer_type: AnswerType,
    text_pattern: &'static str,
) -> QlcTemplate {
    QlcTemplate {
        template_id,
        tag,
        answer_type,
        text_pattern,
        enabled_by_default: true,
        needs_execution: matches!(
            template_id,
            TemplateId::AssignVal | TemplateId::LoopIter | TemplateId::StackDepth
        ),
    }
}

/// The built-in templates, in catalog order.
pub fn catalog() -> &'static [QlcTemplate] {
    static CATALOG: OnceLock<Vec<QlcTemplate>> = OnceLock::new();
    CATALOG.get_or_init(|| {
        use AnswerType::*;
        use Dimension::*;
        use Scale::*;
        let mut templates = vec![
            entry(
                TemplateId::VarNames,
                tag(Atom, Text),
                MultiSelect,
                "Which of the following are variable names in your function [F]?",
            ),
            entry(
                TemplateId::LoopEnd,
                tag(Block, Text),
                SingleValue,
                "A loop starts on line [N]. Enter the number of the last line inside this loop.",
            ),
            entry(
                TemplateId::DeclLine,
                tag(Relational, Text),
                SingleValue,
                "Line [N] uses the variable [V]. Enter the line number where that variable is declared.",
            ),
            entry(
                TemplateId::AssignVal,
                tag(Atom, Execution),
                SingleValue,
                "When executing [E], which [T] is assigned to [V] during the [I] invocation of [F]?",
            ),
            entry(
                TemplateId::LoopIter,
                tag(Block, Execution),
                SingleValue,
                "During the execution of [E], how many iterations are performed by the loop starting on line [N]?",
            ),
            entry(
                TemplateId::VarRole,
                tag(Relational, Execution),
                MultipleChoice,
                "Which of the following best describes the role of your variable [V]?",
            ),
            entry(
                TemplateId::StackDepth,
                tag(Relational, Execution),
                SingleValue,
                "How deep does the call stack grow when executing [E]?",
            ),
            entry(
                TemplateId::CondPurpose,
                tag(Atom, Function),
                OpenEnded,
                "Describe the purpose of the condition on line [N].",
            ),
            entry(
                TemplateId::NameJustify,
                tag(Block, Function),
                OpenEnded,
                "Justify your choice of name [V] for the variable declared on line [N]. Do you have a better suggestion?",
            ),
            entry(
                TemplateId::SubgoalSelect,
                tag(Block, Function),
                SelectInCode,
                "Select the part of your program that is responsible for [X].",
            ),
            entry(
                TemplateId::LoopPurpose,
                tag(Relational, Function),
                OpenEnded,
                "Explain, in your own words, the purpose of the loop that begins on line [N], and how that loop helps method [M] accomplish its task.",
            ),
            entry(
                TemplateId::CrossProgram,
                tag(Relational, Function),
                SelectInCode,
                "Here is a little example program that has some similarities with yours. Select the part of your program that serves a similar purpose as the highlighted code in the example.",
            ),
            entry(
                TemplateId::Recursive,
                tag(Relational, Text),
                MultiSelect,
                "You wrote [K] functions. Which of those are recursive?",
            ),
            entry(
                TemplateId::ParamNames,
                tag(Atom, Text),
                MultiSelect,
                "What are the parameter names of your function [F]?",
            ),
        ];
        for t in &mut templates {
            if matches!(t.template_id, TemplateId::SubgoalSelect | TemplateId::CrossProgram) {
                t.enabled_by_default = false;
            }
        }
        templates
    })
}

pub fn template(id: TemplateId) -> &'static QlcTemplate {
    &catalog()[id.ordinal()]
}

/// One way to fill a template. Lower `rank` is preferred; selection picks
/// among the candidates sharing the lowest rank.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Candidate {
    pub binding: Binding,
    pub rank: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Applicable {
    pub template: &'static QlcTemplate,
    pub candidates: Vec<Candidate>,
}

fn candidate(binding: Binding, rank: Vec<i64>) -> Candidate {
    Candidate { binding, rank }
}

fn flag(b: bool) -> i64 {
    if b {
        0
    } else {
        1
    }
}

/// Every template in `db` whose requirements hold, with all of its bindings.
///
/// `runs` are the executions of the teacher's entries; failed runs provide
/// no bindings.
pub fn applicable_templates(
    facts: &StaticFacts,
    runs: &[DynamicFacts],
    db: &[&'static QlcTemplate],
) -> Vec<Applicable> {
    db.iter()
        .filter_map(|&template| {
            let candidates = bindings(template.template_id, facts, runs);
            (!candidates.is_empty()).then_some(Applicable {
                template,
                candidates,
            })
        })
        .collect()
}

fn successful(runs: &[DynamicFacts]) -> impl Iterator<Item = (usize, &DynamicFacts)> {
    runs.iter().enumerate().filter(|(_, r)| r.succeeded())
}

fn entry_function(run: &DynamicFacts) -> Option<&str> {
    match &run.entry.kind {
        ExprKind::Call { callee, .. } => Some(&callee.name),
        _ => None,
    }
}

fn bindings(id: TemplateId, facts: &StaticFacts, runs: &[DynamicFacts]) -> Vec<Candidate> {
    let locals = || {
        facts
            .functions
            .iter()
            .flat_map(|f| &f.variables)
            .filter(|v| !v.is_parameter)
    };
    match id {
        TemplateId::VarNames => facts
            .functions
            .iter()
            .filter(|f| !f.variables.is_empty())
            .map(|f| {
                candidate(
                    Binding::Function {
                        function: f.name.clone(),
                    },
                    vec![-(f.variables.len() as i64)],
                )
            })
            .collect(),
        TemplateId::Recursive => {
            if facts.functions.len() >= 2 && !facts.recursive_functions.is_empty() {
                vec![candidate(Binding::Program, vec![0])]
            } else {
                Vec::new()
            }
        }
        TemplateId::ParamNames => facts
            .functions
            .iter()
            .filter(|f| !f.param_names.is_empty())
            .map(|f| {
                candidate(
                    Binding::Function {
                        function: f.name.clone(),
                    },
                    vec![
                        flag(facts.is_recursive(&f.name)),
                        -(f.param_names.len() as i64),
                    ],
                )
            })
            .collect(),
        TemplateId::LoopEnd | TemplateId::LoopPurpose => facts
            .loops
            .iter()
            .map(|l| candidate(Binding::Loop { loop_id: l.loop_id }, vec![0]))
            .collect(),
        TemplateId::DeclLine => {
            let mut out = Vec::new();
            for v in facts.functions.iter().flat_map(|f| &f.variables) {
                for &line in &v.use_lines {
                    if line != v.decl_line {
                        out.push(candidate(
                            Binding::Use {
                                function: v.function.clone(),
                                name: v.name.clone(),
                                line,
                            },
                            vec![-(i64::from(line.abs_diff(v.decl_line)))],
                        ));
                    }
                }
            }
            out.sort_by(|a, b| a.binding.cmp(&b.binding));
            out.dedup_by(|a, b| a.binding == b.binding);
            out
        }
        TemplateId::AssignVal => {
            let recursion = !facts.recursive_functions.is_empty();
            let mut out = Vec::new();
            for (i, run) in successful(runs) {
                let entry_recursive = entry_function(run).is_some_and(|f| facts.is_recursive(f));
                for (key, values) in &run.assignments {
                    if values.len() != 1 {
                        continue;
                    }
                    let line = run.assign_events().find_map(|e| match e {
                        TraceEvent::Assign {
                            var_name,
                            fn_name,
                            invocation_index,
                            line,
                            ..
                        } if *var_name == key.var_name
                            && *fn_name == key.fn_name
                            && *invocation_index == key.invocation_index =>
                        {
                            Some(*line)
                        }
                        _ => None,
                    });
                    let var = facts.function(&key.fn_name).and_then(|f| {
                        f.variables.iter().find(|v| {
                            v.name == key.var_name
                                && line.is_some_and(|l| {
                                    v.decl_line == l || v.assign_lines.contains(&l)
                                })
                        })
                    });
                    let from_call = var.is_some_and(|v| {
                        line.is_some_and(|l| v.call_assign_lines.contains(&l))
                    });
                    let is_param = var.is_some_and(|v| v.is_parameter);
                    out.push(candidate(
                        Binding::Assignment {
                            entry: i,
                            function: key.fn_name.clone(),
                            name: key.var_name.clone(),
                            invocation: key.invocation_index,
                        },
                        vec![
                            flag(!recursion || key.invocation_index >= 2),
                            flag(entry_recursive),
                            flag(from_call),
                            flag(!is_param),
                            i64::from(key.invocation_index),
                        ],
                    ));
                }
            }
            out
        }
        TemplateId::LoopIter => successful(runs)
            .flat_map(|(i, run)| {
                run.loop_iterations
                    .iter()
                    .filter(|(_, &n)| n >= 1)
                    .map(move |(&loop_id, _)| {
                        candidate(Binding::LoopRun { entry: i, loop_id }, vec![0])
                    })
            })
            .collect(),
        TemplateId::StackDepth => successful(runs)
            .filter(|(_, run)| run.max_stack_depth >= 2)
            .map(|(i, run)| {
                candidate(
                    Binding::Execution { entry: i },
                    vec![-i64::from(run.max_stack_depth)],
                )
            })
            .collect(),
        TemplateId::VarRole => locals()
            .map(|v| {
                candidate(
                    Binding::Variable {
                        function: v.function.clone(),
                        name: v.name.clone(),
                        decl_line: v.decl_line,
                    },
                    vec![
                        flag(v.role != Role::FixedValue),
                        flag(!v.call_assign_lines.is_empty()),
                    ],
                )
            })
            .collect(),
        TemplateId::NameJustify => locals()
            .map(|v| {
                candidate(
                    Binding::Variable {
                        function: v.function.clone(),
                        name: v.name.clone(),
                        decl_line: v.decl_line,
                    },
                    vec![0],
                )
            })
            .collect(),
        TemplateId::CondPurpose => facts
            .functions
            .iter()
            .flat_map(|f| {
                f.condition_lines.iter().map(|&line| {
                    candidate(
                        Binding::Condition {
                            function: f.name.clone(),
                            line,
                        },
                        vec![0],
                    )
                })
            })
            .collect(),
        TemplateId::SubgoalSelect | TemplateId::CrossProgram => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_is_indexed_by_ordinal() {
        assert_eq!(catalog().len(), TemplateId::ALL.len());
        for id in TemplateId::ALL {
            assert_eq!(template(id).template_id, id);
            let t = template(id);
            assert_eq!(t.auto_gradable(), t.answer_type != AnswerType::OpenEnded);
        }
        assert!(!template(TemplateId::SubgoalSelect).enabled_by_default);
        assert!(!template(TemplateId::CrossProgram).enabled_by_default);
        assert!(template(TemplateId::VarRole).enabled_by_default);
    }

    #[test]
    fn patterns_use_known_placeholders() {
        let known = ["[N]", "[V]", "[F]", "[E]", "[M]", "[X]", "[K]", "[I]", "[T]"];
        for t in catalog() {
            let mut rest = t.text_pattern;
            while let Some(i) = rest.find('[') {
                let tail = &rest[i..];
                assert!(
                    known.iter().any(|k| tail.starts_with(k)),
                    "{}: {}",
                    t.template_id,
                    t.text_pattern
                );
                rest = &tail[1..];
            }
        }
    }
}
