use std::collections::BTreeMap;
use std::fs;

use proptest::prelude::*;
use qlc_core::interp::{execute, FactLookupError, Fuel, RuntimeErrorKind, TraceEvent, Value};
use qlc_core::lang::{parse_entry_expression, parse_program, LoopId, Program};

fn fixture(name: &str) -> Program {
    let path = format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    parse_program(&fs::read_to_string(path).unwrap()).unwrap()
}

fn program(src: &str) -> Program {
    parse_program(src).unwrap_or_else(|e| panic!("{e:?}"))
}

fn run(p: &Program, entry: &str) -> qlc_core::interp::DynamicFacts {
    execute(p, &parse_entry_expression(entry).unwrap(), Fuel::default())
}

fn run_fuel(p: &Program, entry: &str, fuel: Fuel) -> qlc_core::interp::DynamicFacts {
    execute(p, &parse_entry_expression(entry).unwrap(), fuel)
}

#[test]
fn smallest_of_abba() {
    let facts = run(&fixture("smallest.mjq"), r#"smallest("ABBA")"#);
    assert_eq!(facts.result, Ok(Value::Char('A')));
    assert_eq!(facts.max_stack_depth, 5);
}

#[test]
fn smallest_from_acdc() {
    let facts = run(&fixture("smallest.mjq"), r#"smallestFrom("ACDC", 0)"#);
    assert_eq!(facts.result, Ok(Value::Char('A')));
    assert_eq!(facts.max_stack_depth, 4);
    // invocation 2 starts at index 1 and its recursive call sees "DC"
    assert_eq!(
        facts.assignment_value("rest", "smallestFrom", 2, 1),
        Ok(&Value::Char('C'))
    );
    assert_eq!(
        facts.assignment_value("current", "smallestFrom", 1, 1),
        Ok(&Value::Char('A'))
    );
    assert_eq!(
        facts.assignment_value("current", "smallestFrom", 3, 1),
        Ok(&Value::Char('D'))
    );
    // the last invocation takes the base case
    assert!(matches!(
        facts.assignment_value("rest", "smallestFrom", 4, 1),
        Err(FactLookupError::NeverAssigned { .. })
    ));
    assert!(matches!(
        facts.assignment_value("rest", "smallestFrom", 1, 2),
        Err(FactLookupError::NoSuchOccurrence { available: 1, .. })
    ));
}

#[test]
fn loop_counts_on_fixtures() {
    let p = fixture("count_vowels.mjq");
    let facts = run(&p, r#"countVowels("ABBA")"#);
    assert_eq!(facts.result, Ok(Value::Int(0)));
    assert_eq!(facts.loop_iterations(LoopId(0)), 4);

    let facts = run(&p, r#"countVowels("")"#);
    assert_eq!(facts.loop_iterations(LoopId(0)), 0);
    assert!(!facts.loop_iterations.contains_key(&LoopId(0)));

    let facts = run(&p, r#"countVowels("education")"#);
    assert_eq!(facts.result, Ok(Value::Int(5)));

    let p = program(
        "static int inner(int n) {\n int s = 0;\n for (int j = 0; j < 2; j = j + 1) {\n s = s + n;\n }\n return s;\n}\n\
         static int outer() {\n int t = 0;\n for (int i = 0; i < 3; i = i + 1) {\n t = t + inner(i);\n }\n return t;\n}\n",
    );
    let facts = run(&p, "outer()");
    assert_eq!(facts.result, Ok(Value::Int(6)));
    // the loop in inner: 2 iterations in each of 3 calls
    assert_eq!(facts.loop_iterations(LoopId(0)), 6);
    assert_eq!(facts.loop_iterations(LoopId(1)), 3);
    let per_activation: Vec<u64> = facts
        .trace
        .iter()
        .filter_map(|e| match e {
            TraceEvent::LoopIter {
                loop_id: LoopId(0),
                iteration_index,
            } => Some(*iteration_index),
            _ => None,
        })
        .collect();
    assert_eq!(per_activation, [1, 2, 1, 2, 1, 2]);
}

#[test]
fn other_fixtures_compute_expected_results() {
    let facts = run(&fixture("min_char.mjq"), r#"minChar("qlcode")"#);
    assert_eq!(facts.result, Ok(Value::Char('c')));
    assert_eq!(facts.loop_iterations(LoopId(0)), 5);

    let facts = run(&fixture("sum_digits.mjq"), "sumTo(12)");
    // 1..9 gives 45, then 1, 2, 3
    assert_eq!(facts.result, Ok(Value::Int(51)));
    assert_eq!(facts.loop_iterations(LoopId(1)), 12);
    assert_eq!(facts.loop_iterations(LoopId(0)), 9 + 3 * 2);
    assert_eq!(facts.max_stack_depth, 2);

    let facts = run(&fixture("reverse.mjq"), r#"reverse("stressed")"#);
    assert_eq!(facts.result, Ok(Value::Str("desserts".into())));

    let facts = run(&fixture("parity.mjq"), "isEven(7)");
    assert_eq!(facts.result, Ok(Value::Bool(false)));
    assert_eq!(facts.max_stack_depth, 8);
}

#[test]
fn infinite_loop_runs_out_of_fuel() {
    let p = program("static int spin() {\n int i = 0;\n while (true) {\n i = i + 1;\n }\n return i;\n}\n");
    let facts = run(&p, "spin()");
    let e = facts.result.clone().unwrap_err();
    assert_eq!(e.kind, RuntimeErrorKind::FuelExhausted);
    assert!(facts.loop_iterations(LoopId(0)) > 0);
}

#[test]
fn unbounded_recursion_overflows_the_stack() {
    let p = program("static int down(int n) {\n return down(n + 1);\n}\n");
    let facts = run_fuel(&p, "down(0)", Fuel::new(10_000_000, 100));
    assert_eq!(facts.result.clone().unwrap_err().kind, RuntimeErrorKind::StackOverflow);
    assert_eq!(facts.max_stack_depth, 100);

    // the cap applies even when the budget asks for more
    let facts = run_fuel(&p, "down(0)", Fuel::new(10_000_000, u32::MAX));
    assert_eq!(facts.result.clone().unwrap_err().kind, RuntimeErrorKind::StackOverflow);
    assert_eq!(facts.max_stack_depth, Fuel::CALL_DEPTH_CAP);
}

#[test]
fn runtime_errors_carry_kind_and_line() {
    let cases = [
        ("static int f(int x) {\n return 10 / x;\n}\n", "f(0)", RuntimeErrorKind::DivisionByZero, 2),
        ("static int f(int x) {\n return 10 % x;\n}\n", "f(0)", RuntimeErrorKind::DivisionByZero, 2),
        (
            "static char f(String s) {\n return s.charAt(5);\n}\n",
            r#"f("abc")"#,
            RuntimeErrorKind::IndexOutOfBounds,
            2,
        ),
        (
            "static char f(String s) {\n return s.charAt(-1);\n}\n",
            r#"f("abc")"#,
            RuntimeErrorKind::IndexOutOfBounds,
            2,
        ),
        (
            "static int f(int x) {\n int y = x * x;\n return y * y;\n}\n",
            "f(100000)",
            RuntimeErrorKind::IntegerOverflow,
            3,
        ),
        ("static int f(int x) {\n return g(x);\n}\n", "f(1)", RuntimeErrorKind::UndefinedFunction, 2),
        ("static int f(int x) {\n return x;\n}\n", "f('a')", RuntimeErrorKind::TypeError, 1),
        ("static int f(int x) {\n return x;\n}\n", "f(1, 2)", RuntimeErrorKind::TypeError, 1),
        ("static int f(int x) {\n return x;\n}\n", "g(1)", RuntimeErrorKind::UndefinedFunction, 1),
        (
            "static int f(int x) {\n if (x > 0) {\n return 1;\n }\n}\n",
            "f(0)",
            RuntimeErrorKind::TypeError,
            5,
        ),
        (
            "static int f(int x) {\n return x > 0;\n}\n",
            "f(0)",
            RuntimeErrorKind::TypeError,
            2,
        ),
        (
            "static int f(int x) {\n if (x) {\n return 1;\n }\n return 0;\n}\n",
            "f(0)",
            RuntimeErrorKind::TypeError,
            2,
        ),
        (
            "static boolean f(char c) {\n return c < 3;\n}\n",
            "f('a')",
            RuntimeErrorKind::TypeError,
            2,
        ),
        (
            "static int f(int x) {\n char c = x;\n return x;\n}\n",
            "f(1)",
            RuntimeErrorKind::TypeError,
            2,
        ),
        (
            "static int f(int x) {\n x = \"s\";\n return x;\n}\n",
            "f(1)",
            RuntimeErrorKind::TypeError,
            2,
        ),
    ];
    for (src, entry, kind, line) in cases {
        let p = program(src);
        let entry = parse_entry_expression(entry).unwrap();
        let facts = execute(&p, &entry, Fuel::default());
        let e = facts.result.expect_err(src);
        assert_eq!((e.kind, e.line), (kind, line), "{src} with {entry}");
    }
}

#[test]
fn untaken_branch_has_no_assignment() {
    let p = program(
        "static int f(int x) {\n int y = 0;\n if (x > 0) {\n int z = x;\n y = z;\n }\n return y;\n}\n",
    );
    let facts = run(&p, "f(-1)");
    assert_eq!(facts.result, Ok(Value::Int(0)));
    assert!(facts.assignment_value("z", "f", 1, 1).is_err());
    assert_eq!(facts.assignment_value("y", "f", 1, 1), Ok(&Value::Int(0)));
    assert!(facts.assignment_value("y", "f", 1, 2).is_err());
}

/// Hand-derived expectations; see `fixtures/conformance.json`.
#[derive(serde::Deserialize)]
#[serde(rename_all = "camelCase")]
struct Conformance {
    name: String,
    source: String,
    entry: String,
    /// Canonical value, or the error kind for failing runs.
    result: String,
    max_stack_depth: u32,
    loop_iterations: BTreeMap<u32, u64>,
    /// `function.variable#invocation` to the values assigned, in order.
    assignments: BTreeMap<String, Vec<String>>,
}

#[test]
fn conformance_fixtures() {
    let text = fs::read_to_string(format!("{}/fixtures/conformance.json", env!("CARGO_MANIFEST_DIR"))).unwrap();
    let cases: Vec<Conformance> = serde_json::from_str(&text).unwrap();
    assert!(cases.len() >= 20);
    for case in cases {
        let p = program(&case.source);
        let facts = run(&p, &case.entry);
        let got = match &facts.result {
            Ok(v) => v.canonical(),
            Err(e) => serde_json::to_value(e.kind).unwrap().as_str().unwrap().to_owned(),
        };
        assert_eq!(got, case.result, "{}", case.name);
        assert_eq!(facts.max_stack_depth, case.max_stack_depth, "{}", case.name);
        let loops: BTreeMap<u32, u64> = facts.loop_iterations.iter().map(|(k, v)| (k.0, *v)).collect();
        assert_eq!(loops, case.loop_iterations, "{}", case.name);
        let assignments: BTreeMap<String, Vec<String>> = facts
            .assignments
            .iter()
            .map(|(k, vs)| {
                (
                    format!("{}.{}#{}", k.fn_name, k.var_name, k.invocation_index),
                    vs.iter().map(Value::canonical).collect(),
                )
            })
            .collect();
        assert_eq!(assignments, case.assignments, "{}", case.name);
    }
}

#[test]
fn dynamic_facts_json_shape() {
    let facts = run(&fixture("count_vowels.mjq"), r#"countVowels("oak")"#);
    let json = serde_json::to_value(&facts).unwrap();
    assert_eq!(json["entry"], r#"countVowels("oak")"#);
    assert_eq!(json["result"]["value"], serde_json::json!({"type": "int", "value": 2}));
    assert_eq!(json["maxStackDepth"], 1);
    assert_eq!(json["loopIterations"]["0"], 3);
    assert_eq!(json["trace"][0]["kind"], "callEnter");
    assert_eq!(json["trace"][0]["fnName"], "countVowels");
    assert_eq!(json["trace"][0]["invocationIndex"], 1);
    let last = json["trace"].as_array().unwrap().last().unwrap().clone();
    assert_eq!(last["kind"], "callExit");
    let events: Vec<TraceEvent> = serde_json::from_value(json["trace"].clone()).unwrap();
    assert_eq!(events, facts.trace);
}

fn check_trace_balance(facts: &qlc_core::interp::DynamicFacts) {
    let mut stack: Vec<&str> = Vec::new();
    let mut max = 0;
    for ev in &facts.trace {
        match ev {
            TraceEvent::CallEnter { fn_name, depth, .. } => {
                stack.push(fn_name);
                assert_eq!(*depth as usize, stack.len());
                max = max.max(stack.len());
            }
            TraceEvent::CallExit { fn_name, .. } => {
                assert_eq!(stack.pop(), Some(fn_name.as_str()));
            }
            _ => assert!(!stack.is_empty()),
        }
    }
    if facts.succeeded() {
        assert!(stack.is_empty());
    }
    assert_eq!(max as u32, facts.max_stack_depth);
}

// --- loop-count oracle -----------------------------------------------------

/// Test-only description of a loop nest: each loop runs `v` from `lo` while
/// `v < hi + (outer ? enclosing variable : 0)` stepping by `step`.
#[derive(Debug, Clone)]
struct LoopSpec {
    is_while: bool,
    lo: i64,
    hi: i64,
    step: i64,
    bound_on_outer: bool,
    body: Vec<LoopSpec>,
    call_helper: bool,
}

#[derive(Debug, Clone)]
struct LoopProgram {
    loops: Vec<LoopSpec>,
    helper_hi: i64,
}

fn loop_spec(depth: u32) -> BoxedStrategy<LoopSpec> {
    let leaf = (any::<bool>(), -2i64..3, 0i64..6, 1i64..4, any::<bool>(), any::<bool>()).prop_map(
        |(is_while, lo, hi, step, bound_on_outer, call_helper)| LoopSpec {
            is_while,
            lo,
            hi,
            step,
            bound_on_outer,
            body: Vec::new(),
            call_helper,
        },
    );
    if depth == 0 {
        return leaf.boxed();
    }
    (leaf, prop::collection::vec(loop_spec(depth - 1), 0..3))
        .prop_map(|(mut l, body)| {
            l.body = body;
            l
        })
        .boxed()
}

fn loop_program() -> impl Strategy<Value = LoopProgram> {
    (prop::collection::vec(loop_spec(2), 1..3), 0i64..4)
        .prop_map(|(loops, helper_hi)| LoopProgram { loops, helper_hi })
}

impl LoopProgram {
    fn render(&self) -> String {
        let mut out = String::new();
        // helper owns loop 0
        out.push_str(&format!(
            "static int helper(int n) {{\n  int h = 0;\n  for (int q = 0; q < {}; q = q + 1) {{\n    h = h + n;\n  }}\n  return h;\n}}\n",
            self.helper_hi
        ));
        out.push_str("static int main(int seed) {\n  int acc = seed;\n");
        let mut counter = 0;
        for l in &self.loops {
            render_loop(l, "seed", 1, &mut counter, &mut out);
        }
        out.push_str("  return acc;\n}\n");
        out
    }
}

fn render_loop(l: &LoopSpec, outer: &str, indent: usize, counter: &mut u32, out: &mut String) {
    let pad = "  ".repeat(indent);
    let v = format!("v{counter}");
    *counter += 1;
    let hi = if l.bound_on_outer {
        format!("{} + {outer}", l.hi)
    } else {
        l.hi.to_string()
    };
    if l.is_while {
        out.push_str(&format!("{pad}  int {v} = {};\n{pad}  while ({v} < {hi}) {{\n", l.lo));
    } else {
        out.push_str(&format!(
            "{pad}  for (int {v} = {}; {v} < {hi}; {v} = {v} + {}) {{\n",
            l.lo, l.step
        ));
    }
    if l.call_helper {
        out.push_str(&format!("{pad}    acc = acc + helper({v});\n"));
    }
    for inner in &l.body {
        render_loop(inner, &v, indent + 1, counter, out);
    }
    if l.is_while {
        out.push_str(&format!("{pad}    {v} = {v} + {};\n", l.step));
    }
    out.push_str(&format!("{pad}  }}\n"));
}

/// Independent counter: walks the spec with native loops, numbering loops in
/// the same pre-order the source uses.
fn oracle_counts(p: &LoopProgram, seed: i64) -> Vec<u64> {
    fn count_ids(l: &LoopSpec) -> usize {
        1 + l.body.iter().map(count_ids).sum::<usize>()
    }
    let total = 1 + p.loops.iter().map(count_ids).sum::<usize>();
    let mut counts = vec![0u64; total];
    fn walk(l: &LoopSpec, id: usize, outer: i64, helper_hi: i64, counts: &mut [u64]) {
        let hi = l.hi + if l.bound_on_outer { outer } else { 0 };
        let mut v = l.lo;
        while v < hi {
            counts[id] += 1;
            if l.call_helper {
                counts[0] += helper_hi.max(0) as u64;
            }
            let mut child = id + 1;
            for inner in &l.body {
                walk(inner, child, v, helper_hi, counts);
                child += {
                    fn n(l: &LoopSpec) -> usize {
                        1 + l.body.iter().map(n).sum::<usize>()
                    }
                    n(inner)
                };
            }
            v += l.step;
        }
    }
    let mut id = 1;
    for l in &p.loops {
        walk(l, id, seed, p.helper_hi, &mut counts);
        id += count_ids(l);
    }
    counts
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn loop_counts_match_oracle(p in loop_program(), seed in 0i64..4) {
        let src = p.render();
        let prog = program(&src);
        let facts = execute(
            &prog,
            &parse_entry_expression(&format!("main({seed})")).unwrap(),
            Fuel::new(10_000_000, 64),
        );
        prop_assert!(facts.succeeded(), "{src}: {:?}", facts.result);
        let expected = oracle_counts(&p, seed);
        for (id, want) in expected.iter().enumerate() {
            prop_assert_eq!(facts.loop_iterations(LoopId(id as u32)), *want, "loop {} in\n{}", id, src);
        }
        check_trace_balance(&facts);
    }

    #[test]
    fn recursion_depth_and_balance(n in 0i64..60, limit in 1u32..80) {
        let prog = program(
            "static int down(int n) {\n if (n == 0) {\n return 0;\n }\n return 1 + down(n - 1);\n}\n",
        );
        let facts = run_fuel(&prog, &format!("down({n})"), Fuel::new(1_000_000, limit));
        check_trace_balance(&facts);
        if (n + 1) as u32 <= limit {
            prop_assert_eq!(facts.result.clone(), Ok(Value::Int(n)));
            prop_assert_eq!(facts.max_stack_depth as i64, n + 1);
        } else {
            prop_assert_eq!(facts.result.clone().unwrap_err().kind, RuntimeErrorKind::StackOverflow);
            prop_assert_eq!(facts.max_stack_depth, limit);
        }
    }

    #[test]
    fn more_fuel_never_changes_a_finished_run(steps in 1u64..400) {
        let prog = fixture("sum_digits.mjq");
        let entry = parse_entry_expression("sumTo(9)").unwrap();
        let full = execute(&prog, &entry, Fuel::default());
        prop_assert!(full.succeeded());
        let limited = execute(&prog, &entry, Fuel::new(steps, 256));
        match &limited.result {
            Ok(_) => prop_assert_eq!(&limited, &full),
            Err(e) => {
                prop_assert_eq!(e.kind, RuntimeErrorKind::FuelExhausted);
                // a truncated run is a prefix of the full one
                prop_assert!(limited.trace.len() <= full.trace.len());
                prop_assert_eq!(&full.trace[..limited.trace.len()], &limited.trace[..]);
            }
        }
        let more = execute(&prog, &entry, Fuel::new(steps + 1, 256));
        prop_assert!(more.trace.len() >= limited.trace.len());
    }
}
