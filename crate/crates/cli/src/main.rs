use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use storymap_agents::geocoder::{Geocoder, GeocoderConfig};
use storymap_agents::llm::{Gateway, LlmConfig, Mode};
use storymap_agents::{compile_for_script, BreakdownOptions, Researcher};
use storymap_core::canonical::{to_canonical_pretty, to_canonical_string};
use storymap_core::ids::{Clock, SystemClock};
use storymap_core::sequencer::export_stream;
use storymap_core::{script_hash, validate_timeline, Project};
use storymap_service::{ApiError, AppState, ErrorCode, ServiceConfig};

#[derive(Parser)]
#[command(name = "storymap", version, about = "Turn a narration script into a map animation timeline")]
struct Cli {
    /// Transport for model calls; overrides LLM_MODE.
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<Mode>,
    /// Fixture directory; overrides LLM_FIXTURES_DIR.
    #[arg(long, global = true)]
    fixtures_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan animation blocks for a script and write a new project.
    Breakdown {
        script: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Target animation length in seconds.
        #[arg(long, default_value_t = 30.0)]
        duration: f64,
        /// Project id; derived from the script when omitted.
        #[arg(long)]
        id: Option<String>,
    },
    /// Resolve geometry for every unresolved block of a project.
    Research {
        project: PathBuf,
        /// Write here instead of updating the project in place.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Schedule the resolved blocks into a timeline.
    Compile {
        project: PathBuf,
        #[arg(long, default_value_t = 30.0)]
        duration: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Evaluate the timeline at a fixed frame rate, one frame per line.
    Frames {
        project: PathBuf,
        #[arg(long, default_value_t = 30)]
        fps: u32,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print the timeline validation report; fails if it has errors.
    Validate { project: PathBuf },
    /// Run the HTTP service.
    Serve {
        /// Overrides DATA_DIR.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Overrides BIND_ADDR.
        #[arg(long)]
        bind: Option<std::net::SocketAddr>,
    },
    /// Run breakdown and research against live providers, saving fixtures.
    RecordFixtures {
        script: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 30.0)]
        duration: f64,
    },
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

struct Failure(ApiError);

impl<E> From<E> for Failure
where
    ApiError: From<E>,
{
    fn from(e: E) -> Self {
        Failure(ApiError::from(e))
    }
}

type Outcome = Result<(), Failure>;

fn fail(code: ErrorCode, message: impl Into<String>) -> Failure {
    Failure(ApiError::new(code, message))
}

fn internal(e: impl std::fmt::Display) -> Failure {
    fail(ErrorCode::Internal, e.to_string())
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| {
        let code = if e.kind() == std::io::ErrorKind::NotFound {
            ErrorCode::NotFound
        } else {
            ErrorCode::Internal
        };
        fail(code, format!("{}: {e}", path.display()))
    })
}

fn read_project(path: &Path) -> Result<Project, Failure> {
    Project::from_document(&read_text(path)?)
        .map_err(|e| fail(ErrorCode::InvalidInput, format!("{}: {e}", path.display())))
}

/// Writes `text` to `path` via a temp file, or to stdout when `path` is `None`.
fn emit(path: Option<&Path>, text: &str) -> Outcome {
    use std::io::Write;
    match path {
        None => std::io::stdout().lock().write_all(text.as_bytes()).map_err(internal),
        Some(p) => {
            let tmp = p.with_extension("tmp");
            std::fs::write(&tmp, text).map_err(|e| fail(ErrorCode::Internal, format!("{}: {e}", tmp.display())))?;
            std::fs::rename(&tmp, p).map_err(|e| fail(ErrorCode::Internal, format!("{}: {e}", p.display())))
        }
    }
}

fn write_project(path: Option<&Path>, project: &Project) -> Outcome {
    emit(path, &project.to_document().map_err(internal)?)
}

struct Env {
    llm: LlmConfig,
    geocoder: GeocoderConfig,
}

impl Env {
    fn load(cli: &Cli) -> Result<Self, Failure> {
        let mut llm = LlmConfig::from_env().map_err(|e| fail(ErrorCode::InvalidInput, e))?;
        if let Some(m) = cli.mode {
            llm.mode = m;
        }
        if let Some(d) = &cli.fixtures_dir {
            llm.fixtures_dir = d.clone();
        }
        let geocoder = GeocoderConfig::from_env().map_err(|e| fail(ErrorCode::InvalidInput, e))?;
        Ok(Self { llm, geocoder })
    }

    fn gateway(&self) -> Gateway {
        Gateway::from_config(&self.llm)
    }

    fn geocoder(&self) -> Result<Geocoder, Failure> {
        Geocoder::from_config(&self.geocoder, self.llm.mode, &self.llm.fixtures_dir, None).map_err(internal)
    }

    /// Replay output carries no wall-clock time so it is byte-stable.
    fn now_ms(&self) -> u64 {
        match self.llm.mode {
            Mode::Replay => 0,
            _ => SystemClock.now_ms(),
        }
    }
}

fn options(duration: f64) -> Result<BreakdownOptions, Failure> {
    let opts = BreakdownOptions {
        target_duration: duration,
        ..BreakdownOptions::default()
    };
    opts.check().map_err(|e| fail(ErrorCode::InvalidInput, e))?;
    Ok(opts)
}

async fn plan(env: &Env, gateway: &Gateway, script_path: &Path, duration: f64, id: Option<String>) -> Result<Project, Failure> {
    let script = read_text(script_path)?;
    let opts = options(duration)?;
    let breakdown = storymap_agents::breakdown(gateway, &script, &opts).await?;
    let id = id.unwrap_or_else(|| format!("p-{}", &script_hash(&script)[..16]));
    let mut project = Project::new(id, script, env.now_ms());
    project.breakdown = breakdown;
    Ok(project)
}

/// Researches unresolved items; the project is updated even when some fail.
async fn research(env: &Env, gateway: &Gateway, project: &mut Project) -> Outcome {
    let geocoder = env.geocoder()?;
    let researcher = Researcher::new(gateway, &geocoder);
    let (breakdown, sessions) = researcher.research_all(&project.breakdown).await?;
    project.breakdown = breakdown;
    for s in sessions {
        project.sessions.insert(s.block_id.clone(), s);
    }
    project.modified_at = env.now_ms();
    Ok(())
}

fn unresolved(project: &Project) -> Result<(), Failure> {
    let missing: Vec<_> = project
        .breakdown
        .items
        .iter()
        .filter(|i| !i.resolved)
        .map(|i| json!({"id": i.id, "error": project.sessions.get(&i.id).and_then(|s| s.error.clone())}))
        .collect();
    if missing.is_empty() {
        return Ok(());
    }
    Err(Failure(
        ApiError::new(ErrorCode::AgentFailed, format!("{} block(s) could not be resolved", missing.len()))
            .with_detail(json!({ "unresolved": missing })),
    ))
}

async fn run(cli: Cli) -> Outcome {
    let env = Env::load(&cli)?;
    match cli.command {
        Command::Breakdown {
            script,
            output,
            duration,
            id,
        } => {
            let project = plan(&env, &env.gateway(), &script, duration, id).await?;
            write_project(output.as_deref(), &project)
        }
        Command::Research { project, output } => {
            let mut p = read_project(&project)?;
            research(&env, &env.gateway(), &mut p).await?;
            write_project(Some(output.as_deref().unwrap_or(&project)), &p)?;
            unresolved(&p)
        }
        Command::Compile {
            project,
            duration,
            output,
        } => {
            let mut p = read_project(&project)?;
            let mut timeline = compile_for_script(&p.breakdown, &p.script, &options(duration)?)?;
            timeline.map_style = p.timeline.map_style;
            p.timeline = timeline;
            p.modified_at = env.now_ms();
            write_project(Some(output.as_deref().unwrap_or(&project)), &p)
        }
        Command::Frames { project, fps, output } => {
            let p = read_project(&project)?;
            let stream = export_stream(&p.timeline, fps).map_err(|e| fail(ErrorCode::InvalidInput, e.to_string()))?;
            emit(output.as_deref(), &stream)
        }
        Command::Validate { project } => {
            let p = read_project(&project)?;
            let report = validate_timeline(&p.timeline);
            emit(None, &to_canonical_pretty(&report).map_err(internal)?)?;
            let problems = p.check();
            if !report.is_valid() || !problems.is_empty() {
                let errors = report.errors().count();
                return Err(Failure(
                    ApiError::invalid(format!("{errors} timeline error(s), {} project error(s)", problems.len()))
                        .with_detail(json!({ "project": problems })),
                ));
            }
            Ok(())
        }
        Command::Serve { data_dir, bind } => {
            let mut cfg = ServiceConfig::from_env().map_err(|e| fail(ErrorCode::InvalidInput, e))?;
            cfg.llm = env.llm;
            if let Some(d) = data_dir {
                cfg.data_dir = d;
            }
            if let Some(b) = bind {
                cfg.bind_addr = b;
            }
            let state = AppState::from_config(&cfg)?;
            storymap_service::serve(state, cfg.bind_addr).await.map_err(internal)
        }
        Command::RecordFixtures {
            script,
            output,
            duration,
        } => {
            let env = Env {
                llm: LlmConfig {
                    mode: Mode::Record,
                    ..env.llm
                },
                geocoder: env.geocoder,
            };
            let gateway = env.gateway();
            let mut p = plan(&env, &gateway, &script, duration, None).await?;
            research(&env, &gateway, &mut p).await?;
            if output.is_some() {
                write_project(output.as_deref(), &p)?;
            }
            eprintln!(
                "recorded {} provider call(s) under {}",
                gateway.network_calls(),
                env.llm.fixtures_dir.display()
            );
            unresolved(&p)
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .init();
    match run(cli).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(e)) => {
            eprintln!("{}", to_canonical_string(&e).unwrap_or_else(|_| e.message.clone()));
            ExitCode::from(1)
        }
    }
}
