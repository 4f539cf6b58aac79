use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::time::Instant;

use chrono::DateTime;
use qlc_core::analysis::{analyze, find_declaration, Role, StaticFacts};
use qlc_core::engine::{
    applicable_templates, catalog, generate, generate_with, instantiate, select_templates,
    template, AnswerKey, AnswerType, Binding, DepthConvention, Dimension, EngineOptions,
    GenerationUnavailable, QlcTemplate, QuestionInstance, SeedPolicy, TeacherConfig, TemplateId,
};
use qlc_core::grading::{grade, key_as_answer, key_mutations, LearnerHistory, Verdict};
use qlc_core::interp::{execute, DynamicFacts, Fuel, TraceEvent};
use qlc_core::lang::{parse_entry_expression, parse_program, Expr, LineIndex, LoopId, Program};
use serde::Deserialize;

#[derive(Deserialize)]
struct CorpusEntry {
    file: String,
    entries: Vec<String>,
}

struct Case {
    name: String,
    program: Program,
    entries: Vec<Expr>,
}

fn fixture_dir() -> String {
    format!("{}/fixtures", env!("CARGO_MANIFEST_DIR"))
}

fn corpus() -> Vec<Case> {
    let manifest = fs::read_to_string(format!("{}/corpus.json", fixture_dir())).unwrap();
    let entries: Vec<CorpusEntry> = serde_json::from_str(&manifest).unwrap();
    entries
        .into_iter()
        .map(|c| Case {
            program: parse_program(&fs::read_to_string(format!("{}/{}", fixture_dir(), c.file)).unwrap())
                .unwrap(),
            entries: c
                .entries
                .iter()
                .map(|e| parse_entry_expression(e).unwrap())
                .collect(),
            name: c.file,
        })
        .collect()
}

fn smallest_example() -> Case {
    corpus().into_iter().find(|c| c.name == "smallest.mjq").unwrap()
}

fn runs(case: &Case) -> Vec<DynamicFacts> {
    case.entries
        .iter()
        .map(|e| execute(&case.program, e, Fuel::default()))
        .collect()
}

fn config(ids: &[TemplateId], max_questions: u32) -> TeacherConfig {
    TeacherConfig {
        enabled_templates: ids.iter().copied().collect(),
        max_questions,
        seed_policy: SeedPolicy::Fixed(0),
        ..TeacherConfig::default()
    }
}

const EXAMPLE_TEMPLATES: [TemplateId; 5] = [
    TemplateId::Recursive,
    TemplateId::ParamNames,
    TemplateId::StackDepth,
    TemplateId::AssignVal,
    TemplateId::VarRole,
];

fn option_texts(q: &QuestionInstance, ids: &BTreeSet<String>) -> BTreeSet<String> {
    ids.iter()
        .map(|id| q.option_text(id).unwrap().to_owned())
        .collect()
}

fn key_texts(q: &QuestionInstance) -> BTreeSet<String> {
    match &q.answer_key {
        AnswerKey::OptionSet { options } => option_texts(q, options),
        AnswerKey::ExactValue { value } => [value.clone()].into(),
        other => panic!("unexpected key {other:?}"),
    }
}

/// Checks one instance against the expected question for the smallest
/// example. The count of functions is expected as a word, the template
/// fills in digits.
fn assert_example_question(q: &QuestionInstance) {
    let (text, key): (&str, Vec<&str>) = match q.template_id {
        TemplateId::Recursive => (
            "You wrote two functions. Which of those are recursive?",
            vec!["smallestFrom"],
        ),
        TemplateId::ParamNames => (
            "What are the parameter names of your function smallestFrom?",
            vec!["index", "word"],
        ),
        TemplateId::StackDepth => (
            "How deep does the call stack grow when executing smallest(\"ABBA\")?",
            vec!["5"],
        ),
        TemplateId::AssignVal => (
            "When executing smallestFrom(\"ACDC\", 0), which character is assigned to rest during the second invocation of smallestFrom?",
            vec!["C"],
        ),
        TemplateId::VarRole => (
            "Which of the following best describes the role of your variable rest?",
            vec![Role::FixedValue.description()],
        ),
        _ => return,
    };
    assert_eq!(q.text.replace("wrote 2 ", "wrote two "), text);
    assert_eq!(
        key_texts(q),
        key.into_iter().map(str::to_owned).collect::<BTreeSet<_>>(),
        "{}",
        q.template_id
    );
}

#[test]
fn smallest_produces_the_example_questions() {
    let case = smallest_example();
    let started = Instant::now();
    for seed in 0..20 {
        let qs = generate(
            &case.program,
            &case.entries,
            &config(&EXAMPLE_TEMPLATES, 5),
            &LearnerHistory::new(),
            "ann",
            seed,
        )
        .unwrap();
        let ids: BTreeSet<TemplateId> = qs.iter().map(|q| q.template_id).collect();
        assert_eq!(ids, EXAMPLE_TEMPLATES.into_iter().collect());
        qs.iter().for_each(assert_example_question);
    }
    assert!(started.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn smallest_with_every_template_enabled() {
    let case = smallest_example();
    let mut seen = BTreeSet::new();
    for seed in 0..200 {
        let qs = generate(
            &case.program,
            &case.entries,
            &TeacherConfig::all_templates(),
            &LearnerHistory::new(),
            "ann",
            seed,
        )
        .unwrap();
        assert_eq!(qs.len(), 5);
        for q in &qs {
            assert_example_question(q);
            seen.insert(q.template_id);
        }
    }
    for id in EXAMPLE_TEMPLATES {
        assert!(seen.contains(&id), "{id} never selected");
    }
}

#[test]
fn applicability_examples() {
    let case = smallest_example();
    let facts = analyze(&case.program).unwrap();
    let run = vec![execute(&case.program, &case.entries[0], Fuel::default())];
    let all: Vec<&'static QlcTemplate> = catalog().iter().collect();
    let ids = |a: &[qlc_core::engine::Applicable]| -> BTreeSet<TemplateId> {
        a.iter().map(|a| a.template.template_id).collect()
    };
    let fig = ids(&applicable_templates(&facts, &run, &all));
    assert!(fig.contains(&TemplateId::Recursive));
    assert!(fig.contains(&TemplateId::StackDepth));
    assert!(!fig.contains(&TemplateId::LoopEnd));
    assert!(!fig.contains(&TemplateId::SubgoalSelect));

    // without executions only static templates apply
    let static_only = ids(&applicable_templates(&facts, &[], &all));
    assert!(!static_only.contains(&TemplateId::StackDepth));
    assert!(!static_only.contains(&TemplateId::AssignVal));
    assert!(static_only.contains(&TemplateId::Recursive));

    let looped = parse_program(
        "static int total(int n) {\n  int s = 0;\n  for (int i = 0; i < n; i = i + 1) {\n    s = s + i;\n  }\n  return s;\n}\n",
    )
    .unwrap();
    let facts = analyze(&looped).unwrap();
    let run = vec![execute(&looped, &parse_entry_expression("total(4)").unwrap(), Fuel::default())];
    let a = ids(&applicable_templates(&facts, &run, &all));
    assert!(a.contains(&TemplateId::LoopEnd));
    assert!(a.contains(&TemplateId::LoopIter));
    assert!(!a.contains(&TemplateId::StackDepth));
    assert!(!a.contains(&TemplateId::Recursive));

    // a failed execution binds nothing
    let failed = vec![execute(&looped, &parse_entry_expression("missing(4)").unwrap(), Fuel::default())];
    assert!(!ids(&applicable_templates(&facts, &failed, &all)).contains(&TemplateId::LoopIter));

    let empty = parse_program("").unwrap();
    let facts = analyze(&empty).unwrap();
    assert!(applicable_templates(&facts, &[], &all).is_empty());
}

#[test]
fn selection_is_deterministic_and_bounded() {
    let case = smallest_example();
    let facts = analyze(&case.program).unwrap();
    let runs = runs(&case);
    let all: Vec<&'static QlcTemplate> = catalog().iter().collect();
    let applicable = applicable_templates(&facts, &runs, &all);
    assert!(applicable.len() >= 5);
    let cfg = TeacherConfig {
        max_questions: 2,
        ..TeacherConfig::all_templates()
    };
    let first = select_templates(&applicable, &cfg, &LearnerHistory::new(), "ann", 42);
    assert_eq!(first.len(), 2);
    for _ in 0..10 {
        assert_eq!(
            select_templates(&applicable, &cfg, &LearnerHistory::new(), "ann", 42),
            first
        );
    }
    let cfg = TeacherConfig {
        max_questions: 50,
        ..TeacherConfig::all_templates()
    };
    let picked = select_templates(&applicable, &cfg, &LearnerHistory::new(), "ann", 1);
    let ids: BTreeSet<TemplateId> = picked.iter().map(|s| s.template.template_id).collect();
    assert_eq!(ids.len(), picked.len(), "a template id repeated");
    assert_eq!(picked.len(), applicable.len());
}

#[test]
fn zero_weight_dimension_is_never_selected() {
    let case = smallest_example();
    let mut cfg = TeacherConfig::all_templates();
    cfg.level_weights.insert(Dimension::Text, 0.0);
    for seed in 0..50 {
        let qs = generate(&case.program, &case.entries, &cfg, &LearnerHistory::new(), "ann", seed)
            .unwrap();
        assert!(!qs.is_empty());
        for q in qs {
            assert_ne!(template(q.template_id).tag.dimension, Dimension::Text);
        }
    }
}

#[test]
fn mastered_templates_are_retired() {
    let case = smallest_example();
    let mut cfg = config(&EXAMPLE_TEMPLATES, 5);
    cfg.mastery_threshold = 2;
    let mut history = LearnerHistory::new();
    let t = DateTime::from_timestamp(1_700_000_000, 0).unwrap();
    history.record("ann", TemplateId::Recursive, Verdict::Correct, t).unwrap();
    let qs = generate(&case.program, &case.entries, &cfg, &history, "ann", 3).unwrap();
    assert!(qs.iter().any(|q| q.template_id == TemplateId::Recursive));
    history.record("ann", TemplateId::Recursive, Verdict::Correct, t).unwrap();
    for seed in 0..30 {
        let qs = generate(&case.program, &case.entries, &cfg, &history, "ann", seed).unwrap();
        assert_eq!(qs.len(), 4);
        assert!(qs.iter().all(|q| q.template_id != TemplateId::Recursive));
        // other learners are unaffected
        let qs = generate(&case.program, &case.entries, &cfg, &history, "bob", seed).unwrap();
        assert_eq!(qs.len(), 5);
    }
}

#[test]
fn generation_is_byte_identical_for_a_seed() {
    for case in corpus() {
        let out = |seed| {
            serde_json::to_string(
                &generate(
                    &case.program,
                    &case.entries,
                    &TeacherConfig::all_templates(),
                    &LearnerHistory::new(),
                    "ann",
                    seed,
                )
                .unwrap(),
            )
            .unwrap()
        };
        let first = out(7);
        for _ in 0..10 {
            assert_eq!(out(7), first, "{}", case.name);
        }
    }
}

#[test]
fn generation_unavailable_outcomes() {
    let bad = parse_program("static int f() {\n  return g();\n}\n").unwrap();
    let err = generate(&bad, &[], &TeacherConfig::all_templates(), &LearnerHistory::new(), "a", 1)
        .unwrap_err();
    assert!(matches!(err, GenerationUnavailable::StaticErrors { .. }));
    let json = serde_json::to_value(&err).unwrap();
    assert_eq!(json["reason"], "staticErrors");

    let spin = parse_program("static int f() {\n  while (true) {\n  }\n  return 0;\n}\n").unwrap();
    let err = generate(
        &spin,
        &[parse_entry_expression("f()").unwrap()],
        &TeacherConfig::all_templates(),
        &LearnerHistory::new(),
        "a",
        1,
    )
    .unwrap_err();
    assert!(matches!(err, GenerationUnavailable::RuntimeError { .. }));
}

#[test]
fn instantiate_rejects_foreign_bindings() {
    let case = smallest_example();
    let facts = analyze(&case.program).unwrap();
    let err = instantiate(
        template(TemplateId::LoopEnd),
        &Binding::Loop { loop_id: LoopId(3) },
        &case.program,
        &facts,
        &[],
        0,
    )
    .unwrap_err();
    assert!(err.to_string().contains("loop"));
    assert!(instantiate(
        template(TemplateId::StackDepth),
        &Binding::Program,
        &case.program,
        &facts,
        &[],
        0
    )
    .is_err());
    assert!(instantiate(
        template(TemplateId::StackDepth),
        &Binding::Execution { entry: 0 },
        &case.program,
        &facts,
        &[],
        0
    )
    .is_err());
}

#[test]
fn depth_convention_switch() {
    let case = smallest_example();
    let cfg = config(&[TemplateId::StackDepth], 1);
    let q = |convention| {
        generate_with(
            &case.program,
            &case.entries,
            &cfg,
            &LearnerHistory::new(),
            "ann",
            0,
            EngineOptions {
                depth_convention: convention,
                ..EngineOptions::default()
            },
        )
        .unwrap()
        .remove(0)
    };
    assert_eq!(
        q(DepthConvention::IncludeEntry).answer_key,
        AnswerKey::ExactValue { value: "5".into() }
    );
    assert_eq!(
        q(DepthConvention::ExcludeEntry).answer_key,
        AnswerKey::ExactValue { value: "4".into() }
    );
}

/// Every instance the engine can produce for every corpus program, one per
/// binding.
fn every_instance() -> Vec<(Case, StaticFacts, Vec<DynamicFacts>, QuestionInstance)> {
    let mut out = Vec::new();
    for case in corpus() {
        let facts = analyze(&case.program).unwrap();
        let runs = runs(&case);
        let all: Vec<&'static QlcTemplate> = catalog().iter().collect();
        let mut qs = Vec::new();
        for a in applicable_templates(&facts, &runs, &all) {
            for c in &a.candidates {
                let mut q = instantiate(a.template, &c.binding, &case.program, &facts, &runs, 11)
                    .unwrap_or_else(|e| panic!("{}: {e}", case.name));
                q.question_id = format!("q{}", qs.len() + 1);
                qs.push(q);
            }
        }
        for q in qs {
            out.push((
                Case {
                    name: case.name.clone(),
                    program: case.program.clone(),
                    entries: case.entries.clone(),
                },
                facts.clone(),
                runs.clone(),
                q,
            ));
        }
    }
    out
}

#[test]
fn every_enabled_template_is_covered_by_the_corpus() {
    let covered: BTreeSet<TemplateId> = every_instance().iter().map(|(_, _, _, q)| q.template_id).collect();
    for t in catalog().iter().filter(|t| t.enabled_by_default) {
        assert!(covered.contains(&t.template_id), "{} is never instantiated", t.template_id);
    }
}

#[test]
fn instances_are_well_formed() {
    for (case, _, _, q) in every_instance() {
        let t = template(q.template_id);
        assert_eq!(q.answer_type, t.answer_type);
        assert!(!q.text.contains('['), "{}", q.text);
        assert_eq!(q.answer_key == AnswerKey::None, q.answer_type == AnswerType::OpenEnded);
        match q.answer_type {
            AnswerType::MultipleChoice => {
                let AnswerKey::OptionSet { options } = &q.answer_key else { panic!() };
                assert_eq!(options.len(), 1);
                assert_eq!(q.options.len(), 4);
            }
            AnswerType::MultiSelect => {
                let AnswerKey::OptionSet { options } = &q.answer_key else { panic!() };
                assert!(!options.is_empty());
                if q.template_id != TemplateId::Recursive {
                    assert!(options.len() < q.options.len(), "{}: {}", case.name, q.text);
                }
            }
            _ => assert!(q.options.is_empty()),
        }
        let labels: Vec<&str> = q.options.iter().map(|o| o.id.as_str()).collect();
        let expected: Vec<String> = (0..labels.len()).map(|i| ((b'a' + i as u8) as char).to_string()).collect();
        assert_eq!(labels, expected);
        let texts: BTreeSet<&str> = q.options.iter().map(|o| o.text.as_str()).collect();
        assert_eq!(texts.len(), q.options.len(), "duplicate option in {}", q.text);
    }
}

#[test]
fn no_hallucinated_references() {
    for (case, _, _, q) in every_instance() {
        let src = &case.program.source;
        let index = LineIndex::new(src);
        for span in &q.source_refs {
            let slice = index.slice(span).unwrap_or_else(|| panic!("{span} outside {}", case.name));
            assert!(!slice.trim().is_empty());
        }
        for (placeholder, value) in &q.facts_used {
            match placeholder.as_str() {
                "N" => {
                    let line: u32 = value.parse().unwrap();
                    let text = index.line(line).unwrap();
                    assert!(!text.trim().is_empty(), "line {line} is blank in {}", case.name);
                }
                "V" | "F" | "M" => {
                    let name = value.split(' ').next().unwrap();
                    assert!(
                        q.source_refs.iter().any(|s| index.slice(s) == Some(name))
                            || q.facts_used.get("N").is_some_and(|n| {
                                index.line(n.parse().unwrap()).unwrap().contains(name)
                            })
                            || src.contains(name),
                        "{name} not found in {}",
                        case.name
                    );
                }
                _ => {}
            }
        }
        // identifiers named by the question sit where the question points
        if let Some(v) = q.facts_used.get("V") {
            let name = v.split(' ').next().unwrap();
            assert!(
                q.source_refs.iter().any(|s| index.slice(s) == Some(name)),
                "{}: no reference to {name}",
                q.text
            );
        }
        if let Some(n) = q.facts_used.get("N") {
            let line: u32 = n.parse().unwrap();
            assert!(q.source_refs.iter().any(|s| s.start_line == line), "{}", q.text);
        }
    }
}

/// Recomputes what each key should be straight from the facts.
fn rederive(program: &Program, facts: &StaticFacts, runs: &[DynamicFacts], q: &QuestionInstance) -> Option<BTreeSet<String>> {
    let set = |it: &mut dyn Iterator<Item = String>| Some(it.collect::<BTreeSet<String>>());
    match &q.binding {
        Binding::Program => set(&mut facts.recursive_functions.iter().cloned()),
        Binding::Function { function } if q.template_id == TemplateId::ParamNames => {
            set(&mut facts.function(function)?.param_names.iter().cloned())
        }
        Binding::Function { function } => {
            set(&mut facts.function(function)?.variables.iter().map(|v| v.name.clone()))
        }
        Binding::Loop { loop_id } if q.template_id == TemplateId::LoopEnd => {
            let l = facts.loop_facts(*loop_id)?;
            set(&mut [l.closing_brace_line, l.last_body_stmt_line].into_iter().map(|n| n.to_string()))
        }
        Binding::Use { name, line, .. } => {
            set(&mut std::iter::once(find_declaration(program, *line, name).ok()?.to_string()))
        }
        Binding::Execution { entry } => set(&mut std::iter::once(
            runs[*entry]
                .trace
                .iter()
                .filter_map(|e| match e {
                    TraceEvent::CallEnter { depth, .. } => Some(*depth),
                    _ => None,
                })
                .max()?
                .to_string(),
        )),
        Binding::LoopRun { entry, loop_id } => set(&mut std::iter::once(
            runs[*entry]
                .trace
                .iter()
                .filter(|e| matches!(e, TraceEvent::LoopIter { loop_id: l, .. } if l == loop_id))
                .count()
                .to_string(),
        )),
        Binding::Assignment { entry, function, name, invocation } => {
            let values: Vec<String> = runs[*entry]
                .trace
                .iter()
                .filter_map(|e| match e {
                    TraceEvent::Assign { var_name, fn_name, invocation_index, value, .. }
                        if var_name == name && fn_name == function && invocation_index == invocation =>
                    {
                        Some(value.canonical())
                    }
                    _ => None,
                })
                .collect();
            assert_eq!(values.len(), 1);
            set(&mut values.into_iter())
        }
        Binding::Variable { function, name, decl_line } if q.template_id == TemplateId::VarRole => {
            let v = facts
                .function(function)?
                .variables
                .iter()
                .find(|v| v.name == *name && v.decl_line == *decl_line)?;
            set(&mut std::iter::once(v.role.description().to_owned()))
        }
        _ => None,
    }
}

#[test]
fn keys_are_rederivable_from_facts() {
    let mut checked = BTreeMap::new();
    for (case, facts, runs, q) in every_instance() {
        let Some(expected) = rederive(&case.program, &facts, &runs, &q) else {
            assert_eq!(q.answer_key, AnswerKey::None, "{}", q.text);
            continue;
        };
        let got = match &q.answer_key {
            AnswerKey::OptionSet { options } => option_texts(&q, options),
            AnswerKey::ExactValue { value } => [value.clone()].into(),
            AnswerKey::ValueSet { values } => values.iter().cloned().collect(),
            other => panic!("{other:?}"),
        };
        assert_eq!(got, expected, "{}: {}", case.name, q.text);
        *checked.entry(q.template_id).or_insert(0) += 1;
    }
    assert!(checked.len() >= 9, "{checked:?}");
}

#[test]
fn canonical_keys_grade_correct() {
    for (_, _, _, q) in every_instance() {
        match key_as_answer(&q) {
            Some(answer) => assert_eq!(grade(&q, &answer).unwrap().verdict, Verdict::Correct, "{}", q.text),
            None => assert_eq!(q.answer_type, AnswerType::OpenEnded),
        }
    }
}

#[test]
fn mutated_keys_grade_incorrect() {
    let mut mutated = 0;
    for (_, _, _, q) in every_instance() {
        let mutations = key_mutations(&q);
        if q.answer_type != AnswerType::OpenEnded {
            assert!(!mutations.is_empty(), "{}", q.text);
        }
        for answer in mutations {
            assert_eq!(grade(&q, &answer).unwrap().verdict, Verdict::Incorrect, "{}: {answer:?}", q.text);
            mutated += 1;
        }
    }
    assert!(mutated > 50, "{mutated}");
}
