//! `qlc`: command-line access to every stage of the pipeline.
//!
//! stdout carries only the JSON document; diagnostics go to stderr.
//! Exit codes: 0 success, 1 grading failures, 2 usage or input errors,
//! 3 generation unavailable.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use qlc_core::analysis::{analyze, AnalysisError};
use qlc_core::engine::{catalog, generate, QuestionInstance, TeacherConfig};
use qlc_core::grading::{grade, LearnerAnswer, LearnerHistory, Verdict};
use qlc_core::interp::{execute, Fuel};
use qlc_core::lang::{parse_entry_expression, parse_program, Expr, Program};
use qlc_service::{App, Exercise, ExerciseSpec, ServiceConfig};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(name = "qlc", version, about = "Questions about learners' code")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print static facts, and dynamic facts for each entry call.
    Analyze {
        file: PathBuf,
        /// Entry call such as `smallest("ABBA")`; repeatable.
        #[arg(long = "entry", value_name = "EXPR")]
        entries: Vec<String>,
    },
    /// Generate questions about a program.
    Generate(GenerateArgs),
    /// Grade answers against questions generated with --with-keys.
    Grade {
        #[arg(long, value_name = "FILE")]
        questions: PathBuf,
        #[arg(long, value_name = "FILE")]
        answers: PathBuf,
    },
    /// List the template catalog.
    Templates {
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Defaults to $QLC_EXERCISES_DIR, then ./exercises.
        #[arg(long, value_name = "DIR")]
        exercises: Option<PathBuf>,
        /// Defaults to $QLC_DATA_DIR, then ./data.
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
    },
}

#[derive(Args)]
#[command(group(ArgGroup::new("settings").required(true).args(["exercise", "config"])))]
struct GenerateArgs {
    file: PathBuf,
    /// Exercise file; supplies the teacher config and entry calls.
    #[arg(long, value_name = "FILE")]
    exercise: Option<PathBuf>,
    /// Teacher config file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Entry call; repeatable. Replaces the exercise's entries.
    #[arg(long = "entry", value_name = "EXPR")]
    entries: Vec<String>,
    /// Overrides the config's seed policy.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "ID", default_value = "anonymous")]
    learner: String,
    /// History as JSON lines.
    #[arg(long, value_name = "FILE")]
    history: Option<PathBuf>,
    /// Include answer keys, hints and bindings.
    #[arg(long)]
    with_keys: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
}

/// A failed command: exit code plus the message for stderr.
struct Failure {
    code: u8,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type CmdResult = Result<u8, Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn emit(value: &impl Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| usage(e.to_string()))?;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(usage(format!("writing output: {e}"))),
        _ => Ok(()),
    }
}

fn load_program(path: &Path) -> Result<Program, Failure> {
    let source = read(path)?;
    parse_program(&source).map_err(|errors| {
        usage(
            errors
                .iter()
                .map(|e| format!("{}:{}:{}: {e}", path.display(), e.span.start_line, e.span.start_col))
                .collect::<Vec<_>>()
                .join("\n"),
        )
    })
}

fn static_failure(path: &Path, errors: &[AnalysisError], code: u8) -> Failure {
    Failure {
        code,
        message: errors
            .iter()
            .map(|e| match e.span() {
                Some(s) => format!("{}:{}:{}: {e}", path.display(), s.start_line, s.start_col),
                None => format!("{}: {e}", path.display()),
            })
            .collect::<Vec<_>>()
            .join("\n"),
    }
}

fn parse_entries(entries: &[String]) -> Result<Vec<Expr>, Failure> {
    entries
        .iter()
        .map(|e| parse_entry_expression(e).map_err(|err| usage(format!("--entry {e}: {err}"))))
        .collect()
}

fn cmd_analyze(file: &Path, entries: &[String]) -> CmdResult {
    let program = load_program(file)?;
    let entries = parse_entries(entries)?;
    let facts = analyze(&program).map_err(|errors| static_failure(file, &errors, 2))?;
    let mut doc = serde_json::Map::new();
    doc.insert("staticFacts".into(), serde_json::to_value(&facts).map_err(|e| usage(e.to_string()))?);
    if !entries.is_empty() {
        let runs: Vec<_> = entries.iter().map(|e| execute(&program, e, Fuel::default())).collect();
        doc.insert("dynamicFacts".into(), serde_json::to_value(&runs).map_err(|e| usage(e.to_string()))?);
    }
    emit(&doc)?;
    Ok(0)
}

fn source_seed(source: &str) -> u64 {
    let digest = Sha256::digest(source.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

fn cmd_generate(args: &GenerateArgs) -> CmdResult {
    let program = load_program(&args.file)?;
    let (config, mut entries) = match (&args.exercise, &args.config) {
        (Some(path), _) => {
            let spec: ExerciseSpec = serde_json::from_str(&read(path)?)
                .map_err(|e| usage(format!("{}: {e}", path.display())))?;
            let exercise = Exercise::from_spec(spec).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            (exercise.spec.qlc_config.clone(), exercise.dynamic_entries)
        }
        (None, Some(path)) => (
            TeacherConfig::from_json(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))?,
            Vec::new(),
        ),
        (None, None) => return Err(usage("one of --exercise or --config is required")),
    };
    if !args.entries.is_empty() {
        entries = parse_entries(&args.entries)?;
    }
    let history = match &args.history {
        Some(path) => {
            let f = fs::File::open(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            LearnerHistory::from_jsonl(BufReader::new(f))
                .map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => LearnerHistory::new(),
    };
    let seed = args
        .seed
        .unwrap_or_else(|| config.seed_policy.resolve(source_seed(&program.source)));
    let questions = generate(&program, &entries, &config, &history, &args.learner, seed).map_err(|e| {
        match &e {
            qlc_core::engine::GenerationUnavailable::StaticErrors { errors } => {
                static_failure(&args.file, errors, 3)
            }
            _ => Failure {
                code: 3,
                message: format!("{}: {e}", args.file.display()),
            },
        }
    })?;
    if args.with_keys {
        emit(&questions)?;
    } else {
        emit(&questions.iter().map(QuestionInstance::view).collect::<Vec<_>>())?;
    }
    Ok(0)
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct GradeReport {
    results: Vec<QuestionReport>,
    correct: usize,
    incorrect: usize,
    not_auto_gradable: usize,
    unanswered: Vec<String>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct QuestionReport {
    question_id: String,
    verdict: Verdict,
    feedback: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    canonical_answer: Option<String>,
}

fn cmd_grade(questions: &Path, answers: &Path) -> CmdResult {
    let questions: Vec<QuestionInstance> = serde_json::from_str(&read(questions)?)
        .map_err(|e| usage(format!("{}: {e}", questions.display())))?;
    let answers: Vec<LearnerAnswer> = serde_json::from_str(&read(answers)?)
        .map_err(|e| usage(format!("{}: {e}", answers.display())))?;
    let by_id: BTreeMap<&str, &QuestionInstance> =
        questions.iter().map(|q| (q.question_id.as_str(), q)).collect();

    let mut results = Vec::new();
    for answer in &answers {
        let q = by_id
            .get(answer.question_id.as_str())
            .ok_or_else(|| usage(format!("answer for unknown question {}", answer.question_id)))?;
        let r = grade(q, answer).map_err(|e| usage(e.to_string()))?;
        results.push(QuestionReport {
            question_id: answer.question_id.clone(),
            verdict: r.verdict,
            feedback: r.feedback,
            canonical_answer: r.canonical_answer,
        });
    }
    let count = |v: Verdict| results.iter().filter(|r| r.verdict == v).count();
    let answered: Vec<&str> = answers.iter().map(|a| a.question_id.as_str()).collect();
    let report = GradeReport {
        correct: count(Verdict::Correct),
        incorrect: count(Verdict::Incorrect),
        not_auto_gradable: count(Verdict::NotAutoGradable),
        unanswered: questions
            .iter()
            .filter(|q| !answered.contains(&q.question_id.as_str()))
            .map(|q| q.question_id.clone())
            .collect(),
        results,
    };
    emit(&report)?;
    let unanswered_gradable = questions
        .iter()
        .any(|q| report.unanswered.contains(&q.question_id) && q.answer_key != qlc_core::engine::AnswerKey::None);
    Ok(if report.incorrect > 0 || unanswered_gradable { 1 } else { 0 })
}

fn cmd_templates() -> CmdResult {
    emit(&catalog())?;
    Ok(0)
}

fn cmd_serve(port: u16, exercises: Option<PathBuf>, data: Option<PathBuf>) -> CmdResult {
    let mut config = ServiceConfig::from_env();
    if let Some(dir) = exercises {
        config.exercises_dir = dir;
    }
    if let Some(dir) = data {
        config.data_dir = dir;
    }
    let app = App::load(&config).map_err(|e| usage(e.to_string()))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| usage(e.to_string()))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(("127.0.0.1", port))
            .await
            .map_err(|e| usage(format!("cannot listen on port {port}: {e}")))?;
        let addr = listener.local_addr().map_err(|e| usage(e.to_string()))?;
        eprintln!(
            "qlc: serving {} exercise(s) on http://{addr}",
            app.exercises().len()
        );
        qlc_service::serve(listener, app, qlc_service::shutdown_signal())
            .await
            .map_err(|e| Failure {
                code: 1,
                message: e.to_string(),
            })?;
        eprintln!("qlc: shut down");
        Ok(0)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze { file, entries } => cmd_analyze(file, entries),
        Command::Generate(args) => cmd_generate(args),
        Command::Grade { questions, answers } => cmd_grade(questions, answers),
        Command::Templates { format: Format::Json } => cmd_templates(),
        Command::Serve {
            port,
            exercises,
            data,
        } => cmd_serve(*port, exercises.clone(), data.clone()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("qlc: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
