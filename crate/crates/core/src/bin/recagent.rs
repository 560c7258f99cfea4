use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use recagent::bench;
use recagent::config::{FileConfig, ProviderKind, Providers};
use recagent::crm::Recommender;
use recagent::llm::{ChatProvider, PromptDump};
use recagent::model::{to_canonical, Outcome, Subgoal};
use recagent::orchestrator::{
    Agent, Event, FeedbackChannel, RunReport, ScriptedFeedback, SessionConfig, TerminalFeedback,
};
use recagent::service::{self, ScenarioCatalog, SessionManager};
use recagent::sim::{Environment, Scenario};

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NOT_COMPLETED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "recagent",
    version,
    about = "GUI agent with candidate element recommendation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one task against a scenario bundle.
    Run(RunArgs),
    /// Evaluate a benchmark suite.
    Bench(BenchArgs),
    /// Print the candidate set for a goal on the scenario's first screen.
    Recommend(RecommendArgs),
    /// Re-render a saved run log. Makes no model calls.
    Replay(ReplayArgs),
    /// Serve interactive sessions over HTTP.
    Serve(ServeArgs),
}

#[derive(Args)]
struct Common {
    /// scripted or http. Defaults to the config file value, then scripted.
    #[arg(long)]
    provider: Option<ProviderKind>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scripted responses. Defaults to script.jsonl in the scenario or suite.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Disable candidate recommendation; every element is offered.
    #[arg(long)]
    no_crm: bool,
    #[arg(long)]
    max_steps: Option<u32>,
    /// Write every assembled prompt to PATH, or stderr when PATH is omitted.
    #[arg(long, value_name = "PATH", num_args = 0..=1, default_missing_value = "-")]
    dump_prompts: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    task: String,
    #[arg(long)]
    scenario: PathBuf,
    /// Write the run log (events plus report) here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Answer feedback questions from this list instead of the terminal.
    #[arg(long = "answer", value_name = "TEXT")]
    answers: Vec<String>,
    /// Print events as they happen.
    #[arg(long, short)]
    verbose: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    suite: PathBuf,
    /// Write the report as JSON here.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct RecommendArgs {
    /// Goal text used as the subgoal.
    #[arg(long)]
    task: String,
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long = "exclude", value_name = "ELEMENT_ID")]
    exclude: Vec<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    /// Directory holding scenario bundles.
    #[arg(long, default_value = "fixtures")]
    fixtures: PathBuf,
    #[arg(long)]
    listen: Option<String>,
    /// Static console bundle served at /.
    #[arg(long)]
    console: Option<PathBuf>,
    #[arg(long)]
    provider: Option<ProviderKind>,
    #[arg(long)]
    config: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Runtime(String),
    NotCompleted(Outcome),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Runtime(_) => EXIT_RUNTIME,
            Failure::NotCompleted(_) => EXIT_NOT_COMPLETED,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn load_file(path: Option<&Path>) -> Result<FileConfig, Failure> {
    match path {
        Some(p) => FileConfig::load(p).map_err(config_err),
        None => Ok(FileConfig::default()),
    }
}

impl Common {
    fn file(&self) -> Result<FileConfig, Failure> {
        load_file(self.config.as_deref())
    }

    fn session_config(&self, file: &FileConfig) -> Result<SessionConfig, Failure> {
        let mut c = file
            .session_config(SessionConfig::default())
            .map_err(config_err)?;
        if self.no_crm {
            c.use_crm = false;
        }
        if let Some(n) = self.max_steps {
            c.max_steps = n;
        }
        c.validate().map_err(config_err)?;
        Ok(c)
    }

    fn providers(&self, file: &FileConfig, default_script: &Path) -> Result<Providers, Failure> {
        let kind = self.provider.or(file.provider).unwrap_or_default();
        let script = self
            .script
            .clone()
            .unwrap_or_else(|| default_script.to_path_buf());
        let mut p = Providers::build(kind, &script, file).map_err(config_err)?;
        if let Some(path) = &self.dump_prompts {
            let sink: Box<dyn Write + Send> =
                if path.as_os_str() == "-" {
                    Box::new(std::io::stderr())
                } else {
                    Box::new(fs::File::create(path).map_err(|e| {
                        config_err(format!("cannot create {}: {e}", path.display()))
                    })?)
                };
            let chat: Arc<dyn ChatProvider> = Arc::new(PromptDump::new(p.chat, sink));
            p.chat = chat;
        }
        Ok(p)
    }
}

fn load_scenario(dir: &Path) -> Result<Scenario, Failure> {
    Scenario::load(dir).map_err(config_err)
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let file = args.common.file()?;
    let config = args.common.session_config(&file)?;
    let mut scenario = load_scenario(&args.scenario)?;
    let providers = args
        .common
        .providers(&file, &args.scenario.join(bench::SCRIPT_FILE))?;
    let agent = Agent::new(&*providers.chat, &*providers.embedder, config).map_err(config_err)?;
    let feedback: Box<dyn FeedbackChannel> = if args.answers.is_empty() {
        Box::new(TerminalFeedback)
    } else {
        Box::new(ScriptedFeedback::new(args.answers.clone()))
    };
    let verbose = args.verbose;
    let printer = move |e: &Event| {
        if verbose {
            eprintln!("{}", render(e));
        }
    };
    let report = agent.run_task(&args.task, &mut scenario, &*feedback, Some(&printer));
    if let Some(path) = &args.report {
        write_file(path, &report.to_log())?;
    }
    println!("{}", summary(&report));
    match report.outcome {
        Outcome::Completed => Ok(()),
        other => Err(Failure::NotCompleted(other)),
    }
}

fn summary(report: &RunReport) -> String {
    let mut s = format!(
        "outcome: {} in {} step(s)",
        report.outcome, report.steps_used
    );
    if let Some(r) = &report.reason {
        s += &format!(" ({r})");
    }
    for m in &report.memory {
        s += &format!(
            "\n  {:>2}. [{}] {}  # {}",
            m.step_index,
            if m.success { "ok" } else { "failed" },
            m.action,
            m.summary
        );
        if let (Some(q), Some(a)) = (&m.query, &m.user_answer) {
            s += &format!("\n      asked {q:?}, answer {a:?}");
        }
    }
    s
}

fn render(e: &Event) -> String {
    match e.kind.step() {
        Some(step) => format!("[{step:>2}] {:<18} {}", e.kind.name(), e.kind.describe()),
        None => format!("     {:<18} {}", e.kind.name(), e.kind.describe()),
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| runtime_err(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| runtime_err(format!("{}: {e}", path.display())))
}

fn bench_cmd(args: BenchArgs) -> Result<(), Failure> {
    let file = args.common.file()?;
    let config = args.common.session_config(&file)?;
    let cases = bench::load_suite(&args.suite).map_err(config_err)?;
    if cases.is_empty() {
        return Err(config_err(format!("no cases in {}", args.suite.display())));
    }
    let providers = args
        .common
        .providers(&file, &args.suite.join(bench::SCRIPT_FILE))?;
    let report = bench::evaluate_suite(
        &*providers.chat,
        &*providers.embedder,
        &config.crm,
        &cases,
        config.use_crm,
    );
    print!("{}", report.to_table());
    if let Some(path) = &args.report {
        write_file(path, &(to_canonical(&report) + "\n"))?;
    }
    Ok(())
}

fn recommend(args: RecommendArgs) -> Result<(), Failure> {
    let file = args.common.file()?;
    let config = args.common.session_config(&file)?;
    let scenario = load_scenario(&args.scenario)?;
    let goal = Subgoal::new(args.task.clone()).map_err(config_err)?;
    let providers = args
        .common
        .providers(&file, &args.scenario.join(bench::SCRIPT_FILE))?;
    let state = scenario.observe();
    let excluded: BTreeSet<String> = args.exclude.into_iter().collect();
    let set = Recommender::new(&*providers.chat, &*providers.embedder, config.crm)
        .recommend(&goal, &state, &excluded);
    println!("{}", to_canonical(&set));
    Ok(())
}

fn replay(args: ReplayArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.report)
        .map_err(|e| config_err(format!("{}: {e}", args.report.display())))?;
    let report = RunReport::from_log(&text).map_err(config_err)?;
    println!("task: {}", report.task);
    for e in &report.events {
        println!("{}", render(e));
    }
    println!("{}", summary(&report));
    Ok(())
}

fn serve(args: ServeArgs) -> Result<(), Failure> {
    let file = load_file(args.config.as_deref())?;
    let kind = args.provider.or(file.provider).unwrap_or_default();
    let listen = args
        .listen
        .clone()
        .or_else(|| file.listen.clone())
        .unwrap_or_else(|| "127.0.0.1:8080".into());
    if !args.fixtures.is_dir() {
        return Err(config_err(format!(
            "no fixtures directory {}",
            args.fixtures.display()
        )));
    }
    if let Some(dir) = &args.console {
        if !dir.is_dir() {
            return Err(config_err(format!(
                "no console directory {}",
                dir.display()
            )));
        }
    }
    let manager = Arc::new(SessionManager::with_provider_kind(
        ScenarioCatalog::new(&args.fixtures),
        kind,
        file,
    ));
    let rt = tokio::runtime::Runtime::new().map_err(runtime_err)?;
    rt.block_on(service::serve(manager, &listen, args.console, |addr| {
        eprintln!("listening on http://{addr}");
    }))
    .map_err(|e| runtime_err(format!("{listen}: {e}")))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Bench(a) => bench_cmd(a),
        Command::Recommend(a) => recommend(a),
        Command::Replay(a) => replay(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(m) => eprintln!("error: {m}"),
                Failure::Runtime(m) => eprintln!("error: {m}"),
                Failure::NotCompleted(o) => eprintln!("task not completed: {o}"),
            }
            ExitCode::from(f.code())
        }
    }
}
