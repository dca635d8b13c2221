//! guipilot — command-line driver for the explore-learn GUI agent.
//!
//! Points the agent at a JSON app document and runs single tasks, task
//! suites, or knowledge-accumulation sweeps; inspects saved run reports,
//! knowledge bases, and oracle transcripts.
//!
//! Exit status: 0 on success, 1 on errors, 2 when a task ran but did not
//! verifiably complete (or a suite had rows that errored before running).

use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use guipilot_core::agent::{run_task, AgentConfig, ConfirmationPolicy, RunReport, RunStatus};
use guipilot_core::env::{load_app_from_path, AppDoc, TaskDef};
use guipilot_core::eval::{
    evaluate_run, knowledge_accumulation_sweep, render_sweep_table, render_table, run_suite,
    SuiteDefinition, SweepConfig, TaskResult,
};
use guipilot_core::experience::EdgeKind;
use guipilot_core::knowledge::KnowledgeBase;
use guipilot_core::oracle::heuristic::HeuristicOracle;
use guipilot_core::oracle::remote::RemoteOracle;
use guipilot_core::oracle::transcript::{RecordingOracle, ReplayOracle};
use guipilot_core::oracle::{Oracle, OracleProvider};

#[derive(Parser)]
#[command(name = "guipilot", version, about = "Explore-learn GUI automation agent")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one task (exploring or replaying) and print the step trace.
    Run(RunArgs),
    /// Run a task suite and print the per-task metrics table.
    Suite(SuiteArgs),
    /// Measure how donor knowledge reduces redundancy on misled tasks.
    Sweep(SweepArgs),
    /// Inspect saved run reports.
    Trace {
        #[command(subcommand)]
        command: TraceCommand,
    },
    /// Inspect saved knowledge bases.
    Kb {
        #[command(subcommand)]
        command: KbCommand,
    },
    /// Run a task while recording every oracle call to a transcript file.
    RecordTranscript(RecordArgs),
    /// Re-run a task answering every oracle call from a transcript file.
    ReplayTranscript(ReplayArgs),
}

#[derive(Subcommand)]
enum TraceCommand {
    /// Print the step trace of a saved run report.
    Show {
        /// Report file written by `run --out` (task result or bare report).
        #[arg(long)]
        report: PathBuf,
    },
}

#[derive(Subcommand)]
enum KbCommand {
    /// Print the contents of a saved knowledge base directory.
    Show {
        /// Directory written by `run --save-kb`.
        #[arg(long)]
        kb: PathBuf,
    },
}

// ── shared argument groups ───────────────────────────────────────────────

#[derive(Args)]
struct AppArg {
    /// App document (pages, transitions, tasks) in JSON.
    #[arg(long)]
    app: PathBuf,
}

#[derive(Args)]
struct ConfigArgs {
    /// Disable checking, knowledge, and summarization (ablation baseline).
    #[arg(long, conflicts_with = "config")]
    baseline: bool,
    /// JSON file with a full agent configuration.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OracleChoice {
    /// Deterministic embedded scorer; no network, reproducible.
    Heuristic,
    /// Chat-completions endpoint from ORACLE_URL (and optional EMBED_URL).
    Remote,
    /// Recorded transcript; requires --transcript.
    Transcript,
}

#[derive(Args)]
struct OracleArgs {
    /// Oracle provider answering the agent's questions.
    #[arg(long, value_enum, default_value_t = OracleChoice::Heuristic)]
    oracle: OracleChoice,
    /// Transcript file for `--oracle transcript`.
    #[arg(long, required_if_eq("oracle", "transcript"))]
    transcript: Option<PathBuf>,
}

#[derive(Args)]
struct KbArgs {
    /// Load this knowledge base directory before the run.
    #[arg(long)]
    kb: Option<PathBuf>,
    /// Save the (possibly grown) knowledge base to this directory afterwards.
    #[arg(long)]
    save_kb: Option<PathBuf>,
}

// ── subcommand arguments ─────────────────────────────────────────────────

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    app: AppArg,
    /// Task id from the app document.
    #[arg(long)]
    task: String,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    oracle: OracleArgs,
    #[command(flatten)]
    kb: KbArgs,
    /// Write the graded task result (metrics plus full report) as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ask how completion claims should be treated before running:
    /// y=confirm, n=not completed, q=force-terminate, i=ignore.
    #[arg(long)]
    interactive_confirm: bool,
}

#[derive(Args)]
struct SuiteArgs {
    #[command(flatten)]
    app: AppArg,
    /// Comma-separated task ids (default: every task in the app document).
    #[arg(long, value_delimiter = ',')]
    tasks: Vec<String>,
    /// Seed for the task execution order.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep the app document's task order instead of shuffling.
    #[arg(long)]
    no_shuffle: bool,
    /// Carry one knowledge base across tasks instead of starting fresh.
    #[arg(long)]
    accumulate: bool,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    oracle: OracleArgs,
    /// Write the full suite report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    app: AppArg,
    /// Comma-separated task ids (default: every task in the app document).
    #[arg(long, value_delimiter = ',')]
    tasks: Vec<String>,
    /// Donor-pool fractions to sample (default: 0.2,0.4,0.6,0.8,1.0).
    #[arg(long, value_delimiter = ',')]
    fractions: Vec<f64>,
    /// Repetitions per fraction with different donor subsets.
    #[arg(long, default_value_t = 10)]
    reps: usize,
    /// Seed for donor subset sampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    oracle: OracleArgs,
    /// Write the full sweep report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InnerOracleChoice {
    Heuristic,
    Remote,
}

#[derive(Args)]
struct RecordArgs {
    #[command(flatten)]
    app: AppArg,
    /// Task id from the app document.
    #[arg(long)]
    task: String,
    /// Transcript file to write.
    #[arg(long)]
    out: PathBuf,
    /// Oracle whose answers get recorded.
    #[arg(long, value_enum, default_value_t = InnerOracleChoice::Heuristic)]
    oracle: InnerOracleChoice,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    kb: KbArgs,
    /// Ask how completion claims should be treated before running:
    /// y=confirm, n=not completed, q=force-terminate, i=ignore.
    #[arg(long)]
    interactive_confirm: bool,
}

#[derive(Args)]
struct ReplayArgs {
    #[command(flatten)]
    app: AppArg,
    /// Task id from the app document.
    #[arg(long)]
    task: String,
    /// Transcript file recorded earlier for this task and configuration.
    #[arg(long)]
    transcript: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    kb: KbArgs,
    /// Write the graded task result (metrics plus full report) as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

// ── helpers ──────────────────────────────────────────────────────────────

fn build_oracle(args: &OracleArgs, app: &Arc<AppDoc>) -> Result<Oracle> {
    let provider: Arc<dyn OracleProvider> = match args.oracle {
        OracleChoice::Heuristic => Arc::new(HeuristicOracle::for_app(app)),
        OracleChoice::Remote => Arc::new(
            RemoteOracle::from_env()
                .context("remote oracle: set ORACLE_URL (and optionally EMBED_URL)")?,
        ),
        OracleChoice::Transcript => {
            let path = args.transcript.as_ref().expect("clap enforces --transcript");
            Arc::new(
                ReplayOracle::load(path)
                    .with_context(|| format!("loading transcript {}", path.display()))?,
            )
        }
    };
    Ok(Oracle::new(provider))
}

fn resolve_config(args: &ConfigArgs, interactive: bool) -> Result<AgentConfig> {
    let mut config = if args.baseline {
        AgentConfig::baseline()
    } else {
        AgentConfig::default()
    };
    if let Some(path) = &args.config {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        config = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
    }
    if interactive {
        config.confirmation = ask_confirmation_policy()?;
    }
    Ok(config)
}

fn ask_confirmation_policy() -> Result<ConfirmationPolicy> {
    eprint!("completion claims: [y]=confirm [n]=not completed [q]=force-terminate [i]=ignore > ");
    io::stderr().flush().ok();
    let mut line = String::new();
    io::stdin()
        .read_line(&mut line)
        .context("reading confirmation choice")?;
    match line.trim() {
        "y" | "Y" => Ok(ConfirmationPolicy::Confirm),
        "n" | "N" => Ok(ConfirmationPolicy::NotCompleted),
        "q" | "Q" => Ok(ConfirmationPolicy::ForceTerminate),
        "" | "i" | "I" => Ok(ConfirmationPolicy::Ignore),
        other => bail!("unrecognized choice {other:?} (expected y, n, q, or i)"),
    }
}

fn load_kb(path: Option<&Path>) -> Result<KnowledgeBase> {
    match path {
        Some(dir) => KnowledgeBase::load_dir(dir)
            .with_context(|| format!("loading knowledge base {}", dir.display())),
        None => Ok(KnowledgeBase::new()),
    }
}

fn save_kb(kb: &KnowledgeBase, path: Option<&Path>) -> Result<()> {
    if let Some(dir) = path {
        kb.save_dir(dir)
            .with_context(|| format!("saving knowledge base {}", dir.display()))?;
        eprintln!("knowledge base saved to {}", dir.display());
    }
    Ok(())
}

fn find_task<'a>(app: &'a AppDoc, id: &str) -> Result<&'a TaskDef> {
    app.tasks.iter().find(|t| t.id == id).with_context(|| {
        let known: Vec<&str> = app.tasks.iter().map(|t| t.id.as_str()).collect();
        format!("unknown task {id:?}; app defines: {}", known.join(", "))
    })
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path, what: &str) -> Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    fs::write(path, json).with_context(|| format!("writing {what} {}", path.display()))?;
    eprintln!("{what} written to {}", path.display());
    Ok(())
}

fn print_trace(report: &RunReport) {
    println!("task     {}", report.task_id);
    println!("command  {}", report.command);
    println!("intent   {}", report.intent);
    if !report.parameters.is_empty() {
        let params: Vec<String> = report
            .parameters
            .iter()
            .map(|(name, value)| format!("{name} = {value}"))
            .collect();
        println!("params   {}", params.join(", "));
    }
    println!(
        "status   {:?}{}",
        report.status,
        if report.via_replay { " (replay)" } else { "" }
    );
    println!(
        "success  {}",
        if report.ground_truth_success { "yes" } else { "no" }
    );
    println!("steps:");
    for edge in report.graph.edges() {
        let marker = match edge.kind {
            EdgeKind::Forward if edge.undone => "x", // later reverted
            EdgeKind::Forward => "+",
            EdgeKind::Undo => "<",
        };
        let score = edge
            .score
            .map(|s| format!("{s:.3}"))
            .unwrap_or_else(|| "-".to_string());
        println!("  {:>3} {marker} {:<44} score {score}", edge.step_index, edge.description);
    }
}

fn print_metrics(result: &TaskResult) {
    println!(
        "metrics  steps {}, correct {}, accuracy {:.2}, redundancy {:.2}, backtracks {}",
        result.executed_steps,
        result.correct_steps,
        result.step_accuracy,
        result.step_redundancy,
        result.backtrack_count
    );
}

/// Prints, grades, and optionally saves one finished run. Returns the
/// process exit code: 0 when the run verifiably completed, 2 otherwise.
fn finish_run(
    task: &TaskDef,
    report: RunReport,
    out: Option<&Path>,
) -> Result<ExitCode> {
    let completed = report.status == RunStatus::Completed && report.ground_truth_success;
    print_trace(&report);
    let result = evaluate_run(task, report);
    print_metrics(&result);
    if let Some(path) = out {
        write_json(&result, path, "task result")?;
    }
    Ok(if completed { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

// ── subcommands ──────────────────────────────────────────────────────────

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let app = load_app_from_path(&args.app.app)?;
    let oracle = build_oracle(&args.oracle, &app)?;
    let config = resolve_config(&args.config, args.interactive_confirm)?;
    let task = find_task(&app, &args.task)?.clone();
    let mut kb = load_kb(args.kb.kb.as_deref())?;
    let report = run_task(&oracle, &config, &app, &args.task, &mut kb)?;
    save_kb(&kb, args.kb.save_kb.as_deref())?;
    finish_run(&task, report, args.out.as_deref())
}

fn cmd_suite(args: SuiteArgs) -> Result<ExitCode> {
    let app = load_app_from_path(&args.app.app)?;
    let oracle = build_oracle(&args.oracle, &app)?;
    let config = resolve_config(&args.config, false)?;
    let task_ids = if args.tasks.is_empty() {
        app.tasks.iter().map(|t| t.id.clone()).collect()
    } else {
        args.tasks.clone()
    };
    let suite = SuiteDefinition {
        app: app.clone(),
        task_ids,
        seed: args.seed,
        shuffle: !args.no_shuffle,
        accumulate: args.accumulate,
        config,
    };
    let report = run_suite(&oracle, &suite)?;
    println!("{}", render_table(&report));
    if let Some(path) = &args.out {
        write_json(&report, path, "suite report")?;
    }
    let errored = report.results.iter().filter(|r| r.error.is_some()).count();
    if errored > 0 {
        eprintln!("{errored} task(s) errored before running");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode> {
    let app = load_app_from_path(&args.app.app)?;
    let oracle = build_oracle(&args.oracle, &app)?;
    let config = resolve_config(&args.config, false)?;
    let task_ids = if args.tasks.is_empty() {
        app.tasks.iter().map(|t| t.id.clone()).collect()
    } else {
        args.tasks.clone()
    };
    let suite = SuiteDefinition {
        app: app.clone(),
        task_ids,
        seed: args.seed,
        shuffle: true,
        accumulate: false,
        config,
    };
    let mut sweep = SweepConfig {
        repetitions: args.reps,
        ..SweepConfig::default()
    };
    if !args.fractions.is_empty() {
        sweep.fractions = args.fractions.clone();
    }
    let report = knowledge_accumulation_sweep(&oracle, &suite, &sweep)?;
    println!("{}", render_sweep_table(&report));
    if let Some(path) = &args.out {
        write_json(&report, path, "sweep report")?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_trace_show(path: &Path) -> Result<ExitCode> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    // `run --out` writes a graded task result; accept a bare report too.
    let report = match serde_json::from_str::<TaskResult>(&text) {
        Ok(result) => result
            .run
            .with_context(|| format!("{} holds no run report", path.display()))?,
        Err(_) => serde_json::from_str::<RunReport>(&text)
            .with_context(|| format!("parsing {} as a task result or run report", path.display()))?,
    };
    print_trace(&report);
    Ok(ExitCode::SUCCESS)
}

fn cmd_kb_show(dir: &Path) -> Result<ExitCode> {
    let kb = KnowledgeBase::load_dir(dir)
        .with_context(|| format!("loading knowledge base {}", dir.display()))?;

    println!("sequences ({}):", kb.sequences().len());
    for s in kb.sequences() {
        println!("  [{}] intent '{}'", s.task_id, s.intent);
        for (i, step) in s.steps.iter().enumerate() {
            let param = step
                .parameter
                .as_deref()
                .map(|p| format!(" with '{p}'"))
                .unwrap_or_default();
            println!("    {} {:?} '{}'{param}", i + 1, step.action, step.element_text);
        }
    }
    println!("task items ({}):", kb.task_items().len());
    for item in kb.task_items() {
        println!("  [{}] {}", item.task_id, item.render());
    }
    println!("environment lessons ({}):", kb.env_lessons().len());
    for lesson in kb.env_lessons() {
        println!("  [{}] {}", lesson.task_id, lesson.text);
    }
    println!("execution lessons ({}):", kb.exec_lessons().len());
    for lesson in kb.exec_lessons() {
        println!("  [{}] {}", lesson.task_id, lesson.text);
    }
    println!("transition triplets ({}):", kb.triplets().len());
    for t in kb.triplets() {
        let param = t
            .parameter
            .as_deref()
            .map(|p| format!(" with '{p}'"))
            .unwrap_or_default();
        println!(
            "  [{}] {} --{:?} '{}'{param}--> {}",
            t.task_id,
            page_name(&t.before_page, &t.before_fp.0),
            t.action,
            t.element_text,
            page_name(&t.after_page, &t.after_fp.0),
        );
    }
    Ok(ExitCode::SUCCESS)
}

/// Compact page identity for display: the page's first labeled text, or the
/// fingerprint when the serialization carries no text at all.
fn page_name(serialized: &str, fingerprint: &str) -> String {
    serialized
        .split("text=\"")
        .nth(1)
        .and_then(|rest| rest.split('"').next())
        .map(|text| {
            let text = text
                .replace("&lt;", "<")
                .replace("&gt;", ">")
                .replace("&quot;", "\"")
                .replace("&amp;", "&");
            format!("'{text}'")
        })
        .unwrap_or_else(|| fingerprint.to_string())
}

fn cmd_record_transcript(args: RecordArgs) -> Result<ExitCode> {
    let app = load_app_from_path(&args.app.app)?;
    let inner: Arc<dyn OracleProvider> = match args.oracle {
        InnerOracleChoice::Heuristic => Arc::new(HeuristicOracle::for_app(&app)),
        InnerOracleChoice::Remote => Arc::new(
            RemoteOracle::from_env()
                .context("remote oracle: set ORACLE_URL (and optionally EMBED_URL)")?,
        ),
    };
    let recorder = Arc::new(RecordingOracle::new(inner));
    let oracle = Oracle::new(recorder.clone());
    let config = resolve_config(&args.config, args.interactive_confirm)?;
    let task = find_task(&app, &args.task)?.clone();
    let mut kb = load_kb(args.kb.kb.as_deref())?;
    let run = run_task(&oracle, &config, &app, &args.task, &mut kb);
    // Keep the transcript even when the run fails: it documents the failure.
    recorder
        .save(&args.out)
        .with_context(|| format!("writing transcript {}", args.out.display()))?;
    eprintln!(
        "recorded {} oracle calls to {}",
        recorder.recorded_calls(),
        args.out.display()
    );
    let report = run?;
    save_kb(&kb, args.kb.save_kb.as_deref())?;
    finish_run(&task, report, None)
}

fn cmd_replay_transcript(args: ReplayArgs) -> Result<ExitCode> {
    let app = load_app_from_path(&args.app.app)?;
    let replay = Arc::new(
        ReplayOracle::load(&args.transcript)
            .with_context(|| format!("loading transcript {}", args.transcript.display()))?,
    );
    let oracle = Oracle::new(replay.clone());
    let config = resolve_config(&args.config, false)?;
    let task = find_task(&app, &args.task)?.clone();
    let mut kb = load_kb(args.kb.kb.as_deref())?;
    let report = run_task(&oracle, &config, &app, &args.task, &mut kb)?;
    if replay.remaining() > 0 {
        eprintln!(
            "note: {} transcript entries left unused (run diverged or transcript is longer)",
            replay.remaining()
        );
    }
    save_kb(&kb, args.kb.save_kb.as_deref())?;
    finish_run(&task, report, args.out.as_deref())
}

fn main() -> Result<ExitCode> {
    // Die quietly when a pipe reader (head, less) closes stdout early.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    env_logger::init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Suite(args) => cmd_suite(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Trace { command: TraceCommand::Show { report } } => cmd_trace_show(&report),
        Command::Kb { command: KbCommand::Show { kb } } => cmd_kb_show(&kb),
        Command::RecordTranscript(args) => cmd_record_transcript(args),
        Command::ReplayTranscript(args) => cmd_replay_transcript(args),
    }
}
