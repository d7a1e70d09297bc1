use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use visa::eval_run::evaluate;
use visa::intake::{stdin_source, ExternalSttSource};
use visa::io::{self, ResourceFiles};
use visa::live::{LiveBackend, LiveConfig};
use visa::report::{summary_text, write_evaluation};
use visa::script::build_mock_script;
use visa::service::{self, AppState, BackendFactory};
use visa::session::{BoxedBackend, Session};
use visa_core::agents::ar::StructureManifest;
use visa_core::agents::ir::{sample_record, ColumnManifest};
use visa_core::agents::volume::Volume;
use visa_core::llm::{MockBackend, MockScript};
use visa_core::model::DEFAULT_IC_MAX;
use visa_core::stages::{CorrectionRules, TranscriptSource};

#[derive(Parser)]
#[command(name = "visa", version, about = "Voice-driven surgical overlay assistant: evaluation, interactive runs and HTTP service")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    /// Scripted replies from a JSON-lines file.
    Mock,
    /// OpenAI-compatible chat-completions server.
    Live,
}

#[derive(clap::Args)]
struct BackendArgs {
    #[arg(long, value_enum, default_value_t = BackendKind::Mock)]
    backend: BackendKind,
    /// Mock script (JSON lines). For `eval` it defaults to a script derived from the dataset.
    #[arg(long)]
    mock_script: Option<PathBuf>,
    /// Require exactly one matching reusable entry per request.
    #[arg(long)]
    strict: bool,
    #[command(flatten)]
    live: LiveConfig,
}

impl BackendArgs {
    fn mock_script(&self) -> Result<Option<MockScript>> {
        self.mock_script.as_deref().map(|p| io::load_mock_script(p, self.strict)).transpose()
    }

    fn factory(&self) -> Result<BackendFactory> {
        Ok(match self.backend {
            BackendKind::Mock => {
                let script = self.mock_script()?.context("--backend mock needs --mock-script")?;
                Arc::new(move || Ok(Box::new(MockBackend::new(script.clone())) as BoxedBackend))
            }
            BackendKind::Live => {
                let cfg = self.live.clone();
                Arc::new(move || Ok(Box::new(LiveBackend::new(cfg.clone())?) as BoxedBackend))
            }
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run an annotated dataset through the workflow and report stage metrics.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        /// Scripted model mistakes, used when the mock script is derived from the dataset.
        #[arg(long)]
        overrides: Option<PathBuf>,
        /// Output directory for report.csv, report.json, rows.csv and traces.jsonl.
        #[arg(long, default_value = "eval-out")]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_IC_MAX)]
        ic_max: u32,
        #[command(flatten)]
        backend: BackendArgs,
        #[command(flatten)]
        resources: ResourceFiles,
    },
    /// Process utterances interactively, one clip per input line (blank line = silence).
    Run {
        /// External recogniser command run once per clip instead of reading stdin.
        #[arg(long)]
        stt_cmd: Option<String>,
        #[arg(long, default_value_t = DEFAULT_IC_MAX)]
        ic_max: u32,
        #[command(flatten)]
        backend: BackendArgs,
        #[command(flatten)]
        resources: ResourceFiles,
    },
    /// Serve the session HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long, default_value_t = DEFAULT_IC_MAX)]
        ic_max: u32,
        #[command(flatten)]
        backend: BackendArgs,
        #[command(flatten)]
        resources: ResourceFiles,
    },
    /// Validate a dataset and print its category distribution.
    CheckDataset {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        resources: ResourceFiles,
    },
    /// Generate input files.
    #[command(subcommand)]
    Gen(Gen),
}

#[derive(Subcommand)]
enum Gen {
    /// Synthetic chest CT phantom (<out>.json header + <out>.raw voxels).
    Volume {
        #[arg(long)]
        out: PathBuf,
        /// Voxels along x,y,z.
        #[arg(long, value_delimiter = ',', default_values_t = [128, 128, 96])]
        dims: Vec<usize>,
    },
    /// Default IR column manifest.
    Columns {
        #[arg(long)]
        out: PathBuf,
    },
    /// Default AR structure manifest.
    Structures {
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthetic patient record.
    Record {
        #[arg(long)]
        out: PathBuf,
    },
    /// Default correction rules.
    Rules {
        #[arg(long)]
        out: PathBuf,
    },
    /// 240 empty records with the reference category distribution, for annotation.
    DatasetSkeleton {
        #[arg(long)]
        out: PathBuf,
    },
    /// Strict mock script that replays a dataset, optionally with scripted mistakes.
    MockScript {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        overrides: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn pretty<T: serde::Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn derived_script(dataset: &Path, overrides: Option<&Path>, resources: &ResourceFiles) -> Result<MockScript> {
    let manifest = resources.load()?.agents.ir_manifest;
    let (records, _) = io::load_dataset(dataset, &manifest)?;
    let overrides = overrides.map(io::load_overrides).transpose()?.unwrap_or_default();
    build_mock_script(&records, &overrides)
}

fn run_eval(
    dataset: &Path,
    overrides: Option<&Path>,
    out: &Path,
    ic_max: u32,
    backend: &BackendArgs,
    files: &ResourceFiles,
) -> Result<()> {
    let resources = files.load()?;
    let (records, summary) = io::load_dataset(dataset, &resources.agents.ir_manifest)?;
    log::info!("{} records: {:?}", summary.total, summary.agent);
    let started = std::time::Instant::now();
    let (ev, leftover) = match backend.backend {
        BackendKind::Mock => {
            let script = match backend.mock_script()? {
                Some(s) => s,
                None => derived_script(dataset, overrides, files)?,
            };
            let mut mock = MockBackend::new(script);
            let ev = evaluate(&records, &mut mock, &resources, ic_max)?;
            (ev, mock.remaining_once())
        }
        BackendKind::Live => {
            if overrides.is_some() {
                bail!("--overrides only applies to the mock backend");
            }
            let mut live = LiveBackend::new(backend.live.clone())?;
            (evaluate(&records, &mut live, &resources, ic_max)?, 0)
        }
    };
    if leftover > 0 {
        log::warn!("{leftover} scripted one-time replies were never used; the script may not match the dataset");
    }
    let paths = write_evaluation(&ev, out)?;
    print!("{}", summary_text(&ev.report));
    println!("elapsed {:.2} s; wrote {}", started.elapsed().as_secs_f64(), paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "));
    Ok(())
}

fn run_interactive(stt_cmd: Option<&str>, ic_max: u32, backend: &BackendArgs, files: &ResourceFiles) -> Result<()> {
    let resources = Arc::new(files.load()?);
    let mut session = Session::new("cli", (backend.factory()?)()?, resources, ic_max);
    let mut source: Box<dyn TranscriptSource> = match stt_cmd {
        Some(cmd) => Box::new(ExternalSttSource::new(cmd)?),
        None => Box::new(stdin_source()),
    };
    loop {
        let transcript = match source.next_transcript() {
            Ok(t) => t,
            Err(visa_core::stages::IntakeError::SourceExhausted) => return Ok(()),
            Err(e) => return Err(e.into()),
        };
        let reply = session.submit(transcript)?;
        println!("{}", serde_json::to_string(&reply)?);
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Eval { dataset, overrides, out, ic_max, backend, resources } => {
            run_eval(&dataset, overrides.as_deref(), &out, ic_max, &backend, &resources)
        }
        Command::Run { stt_cmd, ic_max, backend, resources } => {
            run_interactive(stt_cmd.as_deref(), ic_max, &backend, &resources)
        }
        Command::Serve { addr, ic_max, backend, resources } => {
            let app = AppState::new(backend.factory()?, resources.load()?, ic_max);
            tokio::runtime::Runtime::new()?.block_on(service::serve(addr, app))
        }
        Command::CheckDataset { dataset, resources } => {
            let (_, summary) = io::load_dataset(&dataset, &resources.load()?.agents.ir_manifest)?;
            print!("{}", pretty(&summary)?);
            Ok(())
        }
        Command::Gen(g) => match g {
            Gen::Volume { out, dims } => {
                if dims.len() != 3 {
                    bail!("--dims needs three comma-separated sizes, got {}", dims.len());
                }
                let volume = Volume::phantom([dims[0], dims[1], dims[2]])?;
                io::save_volume(&volume, &out)
            }
            Gen::Columns { out } => io::write(&out, &pretty(&ColumnManifest::default())?),
            Gen::Structures { out } => io::write(&out, &pretty(&StructureManifest::default())?),
            Gen::Record { out } => io::write(&out, &pretty(&sample_record())?),
            Gen::Rules { out } => io::write(&out, &pretty(&CorrectionRules::default())?),
            Gen::DatasetSkeleton { out } => {
                let lines: Vec<String> =
                    visa::gen::dataset_skeleton().iter().map(serde_json::to_string).collect::<Result<_, _>>()?;
                io::write(&out, &(lines.join("\n") + "\n"))
            }
            Gen::MockScript { dataset, overrides, out } => {
                io::write(&out, &derived_script(&dataset, overrides.as_deref(), &ResourceFiles::default())?.to_jsonl())
            }
        },
    }
}
