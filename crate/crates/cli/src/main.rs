//! `kgqa`: ask questions over a knowledge graph, chat in a terminal, serve the
//! session API or score a benchmark file.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use kgqa_core::config::SystemMode;
use kgqa_core::eval::{load_bench, run_benchmark, EvalMode};
use kgqa_core::orchestrator::{Engine, TurnResult};
use kgqa_core::{desk, EngineConfig, SessionState};
use kgqa_service::{AppState, ServiceOptions};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "kgqa", version, about = "Conversational question answering over knowledge graphs")]
struct Cli {
    #[command(flatten)]
    engine: EngineArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct EngineArgs {
    /// TOML config file; relative paths inside it resolve against its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// SPARQL endpoint URL.
    #[arg(long, global = true, conflicts_with = "store_file")]
    endpoint: Option<String>,
    /// Local N-Triples file loaded into the embedded store.
    #[arg(long, global = true)]
    store_file: Option<PathBuf>,
    /// Directory receiving one JSON trace file per turn.
    #[arg(long, global = true)]
    trace_dir: Option<PathBuf>,
    /// Use the bundled demo graph with its scripted LLM.
    #[arg(long, global = true, conflicts_with_all = ["endpoint", "store_file", "config"])]
    desk: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    MultiTurn,
    SingleTurn,
}

#[derive(Subcommand)]
enum Command {
    /// Answer one question and exit.
    Ask {
        question: String,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Print the full turn result as JSON.
        #[arg(long)]
        json: bool,
        /// Print the turn trace as JSON to stderr.
        #[arg(long)]
        trace: bool,
    },
    /// Multi-turn chat on the terminal.
    Repl {
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        trace: bool,
    },
    /// Run the HTTP session API.
    Serve {
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        /// Append each session's events to `<dir>/<session>.jsonl`.
        #[arg(long)]
        persist_dir: Option<PathBuf>,
        #[arg(long)]
        cors_origin: Option<String>,
    },
    /// Score a benchmark file.
    Eval {
        /// Benchmark JSON; with `--desk` the bundled suite is used when omitted.
        #[arg(long)]
        bench: Option<PathBuf>,
        /// Bundled suite to run with `--desk`.
        #[arg(long, value_enum, default_value = "single")]
        suite: Suite,
        /// `single` asks every item in a fresh session using its standalone
        /// form; `dialogue` shares one session per dialogue.
        #[arg(long, value_enum, default_value = "single")]
        mode: EvalModeArg,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Single,
    Dialogue,
    Absent,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalModeArg {
    Single,
    Dialogue,
}

/// Makes a relative path in the config file relative to the file itself.
fn rebase(path: &mut Option<PathBuf>, base: &Path) {
    if let Some(p) = path {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
}

fn load_config(args: &EngineArgs, mode: Option<ModeArg>) -> Result<EngineConfig> {
    let mut config = if args.desk {
        desk::config()
    } else if let Some(path) = &args.config {
        let mut config = EngineConfig::load(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        rebase(&mut config.store_file, base);
        rebase(&mut config.trace_dir, base);
        rebase(&mut config.llm.script, base);
        config
    } else {
        EngineConfig::default()
    };
    if let Some(url) = &args.endpoint {
        config.endpoint_url = Some(url.clone());
        config.store_file = None;
    }
    if let Some(path) = &args.store_file {
        config.store_file = Some(path.clone());
    }
    if let Some(mode) = mode {
        config.system_mode = match mode {
            ModeArg::MultiTurn => SystemMode::MultiTurn,
            ModeArg::SingleTurn => SystemMode::SingleTurn,
        };
    }
    if let Some(dir) = &args.trace_dir {
        config.trace_dir = Some(dir.clone());
    }
    config.validate()?;
    Ok(config)
}

fn build_engine(args: &EngineArgs, mode: Option<ModeArg>) -> Result<Engine> {
    let config = load_config(args, mode)?;
    if let Some(dir) = &config.trace_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating trace dir {}", dir.display()))?;
    }
    if args.desk {
        return Ok(desk::engine_with(config, desk::backend()).0);
    }
    Engine::from_config(config).context("building engine (pass --endpoint, --store-file, --config or --desk)")
}

fn print_turn(out: &mut impl Write, result: &TurnResult) -> Result<()> {
    writeln!(out, "{}", result.final_text)?;
    for answer in &result.answers {
        match &answer.display_label {
            Some(label) if label != &answer.value => writeln!(out, "  - {label} <{}>", answer.value)?,
            _ => writeln!(out, "  - {}", answer.value)?,
        }
    }
    if let Some(err) = &result.error {
        writeln!(out, "  ! {:?} failed: {}", err.stage, err.message)?;
    }
    if !result.degraded.is_empty() {
        writeln!(out, "  ~ degraded: {:?}", result.degraded)?;
    }
    Ok(())
}

fn print_trace(session: &SessionState, turn: usize) -> Result<()> {
    if let Some(trace) = session.trace(turn) {
        eprintln!("{}", serde_json::to_string_pretty(trace)?);
    }
    Ok(())
}

fn ask(engine: &Engine, question: &str, json: bool, trace: bool) -> Result<()> {
    let mut session = engine.new_session();
    let result = engine.process_turn(&mut session, question)?;
    let mut out = std::io::stdout().lock();
    if json {
        writeln!(out, "{}", serde_json::to_string_pretty(&result)?)?;
    } else {
        print_turn(&mut out, &result)?;
    }
    if trace {
        print_trace(&session, result.turn)?;
    }
    Ok(())
}

fn repl(engine: &Engine, trace: bool) -> Result<()> {
    let stdin = std::io::stdin();
    let mut out = std::io::stdout().lock();
    let mut session = engine.new_session();
    writeln!(out, "Ask a question. `:new` starts a new dialogue, `:quit` exits.")?;
    loop {
        write!(out, "> ")?;
        out.flush()?;
        let mut line = String::new();
        if stdin.lock().read_line(&mut line)? == 0 {
            break;
        }
        match line.trim() {
            "" => continue,
            ":quit" | ":q" => break,
            ":new" => {
                session = engine.new_session();
                writeln!(out, "(new dialogue)")?;
            }
            question => match engine.process_turn(&mut session, question) {
                Ok(result) => {
                    print_turn(&mut out, &result)?;
                    if trace {
                        print_trace(&session, result.turn)?;
                    }
                }
                Err(e) => writeln!(out, "  ! {e}")?,
            },
        }
    }
    Ok(())
}

fn serve(engine: Engine, bind: &str, options: ServiceOptions) -> Result<()> {
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(bind)
            .await
            .with_context(|| format!("binding {bind}"))?;
        let addr = listener.local_addr()?;
        println!("listening on http://{addr}");
        kgqa_service::serve(listener, AppState::new(engine, options), kgqa_service::shutdown_signal()).await?;
        Ok(())
    })
}

fn eval(args: &EngineArgs, engine: &Engine, bench: Option<&Path>, suite: Suite, mode: EvalModeArg, out: Option<&Path>) -> Result<()> {
    let items = match (bench, args.desk) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            load_bench(&text).with_context(|| format!("loading {}", path.display()))?
        }
        (None, true) => match suite {
            Suite::Single => desk::single_items(),
            Suite::Dialogue => desk::dialogue_items(),
            Suite::Absent => desk::absent_items(),
        },
        (None, false) => bail!("--bench is required unless --desk is given"),
    };
    let mode = match mode {
        EvalModeArg::Single => EvalMode::Single,
        EvalModeArg::Dialogue => EvalMode::Dialogue,
    };
    let report = run_benchmark(engine, &items, mode);
    print!("{}", report.to_table());
    if let Some(path) = out {
        std::fs::write(path, serde_json::to_string_pretty(&report)?).with_context(|| format!("writing {}", path.display()))?;
        eprintln!("report written to {}", path.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("KGQA_LOG").unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let args = &cli.engine;
    match cli.command {
        Command::Ask {
            question,
            mode,
            json,
            trace,
        } => ask(&build_engine(args, mode)?, &question, json, trace),
        Command::Repl { mode, trace } => repl(&build_engine(args, mode)?, trace),
        Command::Serve {
            mode,
            bind,
            persist_dir,
            cors_origin,
        } => serve(build_engine(args, mode)?, &bind, ServiceOptions { persist_dir, cors_origin }),
        Command::Eval { bench, suite, mode, out } => {
            eval(args, &build_engine(args, None)?, bench.as_deref(), suite, mode, out.as_deref())
        }
    }
}
