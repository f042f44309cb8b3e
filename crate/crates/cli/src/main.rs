use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use capsule_twin_core::characterize::{characterize, Kind};
use capsule_twin_core::headless::{run_headless, RunOptions};
use capsule_twin_core::scenario::{bundled_scenario, bundled_scenario_names, load_scenario, ScenarioConfig};
use capsule_twin_core::telemetry::write_ndjson;
use capsule_twin_core::trace::{bundled_trace, bundled_trace_names, CommandTrace};
use capsule_twin_core::{pilot, SimError};
use capsule_twin_server::{serve, ServeOptions, Session, SessionOptions};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "capsule-twin", version, about = "MRI-driven capsule and HIFU release simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario headless, optionally replaying a command trace.
    Run(RunArgs),
    /// Write one of the characterization tables as CSV.
    Characterize {
        kind: Kind,
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Host a live teleoperation session.
    Serve {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: SocketAddr,
        #[arg(long, default_value_t = 1.0)]
        time_scale: f64,
        /// Let clients request ground truth in state messages.
        #[arg(long)]
        debug: bool,
        /// On shutdown, write the session telemetry and recorded trace here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regenerate a bundled trace with the scripted operator.
    Pilot {
        /// greedy_path or four_targets
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List bundled scenarios and traces.
    List,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Bundled scenario name or path to a TOML file.
    #[arg(long, default_value = "open_pool")]
    scenario: String,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Bundled trace name or path to a JSON trace.
    #[arg(long)]
    trace: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Pace the run at this many simulated seconds per wall second.
    #[arg(long)]
    time_scale: Option<f64>,
    /// Dump every MR frame as PNG.
    #[arg(long)]
    frames: bool,
    /// Write this characterization table instead of running a trace.
    #[arg(long)]
    characterize: Option<Kind>,
}

enum Failure {
    Validation(String),
    Incomplete(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Incomplete(_) => 3,
            Failure::Io(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Incomplete(m) | Failure::Io(m) => m,
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e.root() {
            SimError::Io(_) => Failure::Io(e.to_string()),
            SimError::IncompleteRun { .. } => Failure::Incomplete(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Io(format!("{}: {e}", path.display()))
}

fn resolve_scenario(args: &ScenarioArgs) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match bundled_scenario(&args.scenario) {
        Some(c) => c,
        None => {
            let path = Path::new(&args.scenario);
            let text = fs::read_to_string(path).map_err(io(path))?;
            load_scenario(&text).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn resolve_trace(name: &str) -> Result<CommandTrace, Failure> {
    if let Some(t) = bundled_trace(name) {
        return Ok(t);
    }
    let path = Path::new(name);
    let text = fs::read_to_string(path).map_err(io(path))?;
    CommandTrace::from_json(&text).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(io(path))
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let cfg = resolve_scenario(&args.scenario)?;
    fs::create_dir_all(&args.out).map_err(io(&args.out))?;
    if let Some(kind) = args.characterize {
        let table = characterize(kind, &cfg)?;
        let name = serde_json::to_value(kind).expect("kind serializes");
        return write(&args.out.join(format!("{}.csv", name.as_str().unwrap_or("table"))), table);
    }
    let trace = match &args.trace {
        Some(t) => resolve_trace(t)?,
        None => CommandTrace::default(),
    };
    let options = RunOptions { keep_frames: args.frames, time_scale: args.time_scale.filter(|s| s.is_finite() && *s > 0.0) };
    let result = run_headless(&cfg, &trace, options)?;

    let telemetry_path = args.out.join("telemetry.ndjson");
    let file = fs::File::create(&telemetry_path).map_err(io(&telemetry_path))?;
    write_ndjson(&result.telemetry, std::io::BufWriter::new(file)).map_err(io(&telemetry_path))?;
    write(&args.out.join("scenario.toml"), cfg.to_toml())?;
    write(&args.out.join("trace.json"), trace.to_json())?;
    let dye_path = args.out.join("dye.csv");
    let file = fs::File::create(&dye_path).map_err(io(&dye_path))?;
    result.dye.write_csv(std::io::BufWriter::new(file)).map_err(io(&dye_path))?;
    if args.frames {
        let dir = args.out.join("frames");
        fs::create_dir_all(&dir).map_err(io(&dir))?;
        for f in &result.frames {
            let png = f.to_png().map_err(|e| Failure::Io(e.to_string()))?;
            write(&dir.join(format!("frame_{:05}.png", f.sequence_index)), png)?;
        }
    }
    let metrics = result.metrics()?;
    write(&args.out.join("metrics.json"), serde_json::to_string_pretty(&metrics).expect("metrics serialize"))?;
    eprintln!(
        "{}: {:?} at {:.3} s, path {:.4} m, released {:.3e} m^3, {} target(s) delivered",
        cfg.name, result.end, metrics.duration, metrics.path_length, metrics.cumulative_released, metrics.targets_delivered
    );
    Ok(())
}

fn serve_cmd(scenario: ScenarioArgs, addr: SocketAddr, time_scale: f64, debug: bool, out: Option<PathBuf>) -> Result<(), Failure> {
    if !(time_scale > 0.0 && time_scale.is_finite()) {
        return Err(Failure::Validation("--time-scale must be a positive number".into()));
    }
    let cfg = resolve_scenario(&scenario)?;
    let options = SessionOptions { time_scale, allow_debug: debug, ..SessionOptions::default() };
    let session = Session::new(format!("{}-{}", cfg.name, std::process::id()), cfg, options)?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Io(e.to_string()))?;
    let session = rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| Failure::Io(format!("{addr}: {e}")))?;
        tracing::info!("listening on {addr}");
        Ok::<_, Failure>(
            serve(listener, session, ServeOptions::default(), async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await,
        )
    })?;
    if let Some(dir) = out {
        fs::create_dir_all(&dir).map_err(io(&dir))?;
        let path = dir.join("telemetry.ndjson");
        let file = fs::File::create(&path).map_err(io(&path))?;
        write_ndjson(session.telemetry(), std::io::BufWriter::new(file)).map_err(io(&path))?;
        write(&dir.join("trace.json"), session.trace().to_json())?;
        write(&dir.join("scenario.toml"), session.simulation().config().to_toml())?;
    }
    Ok(())
}

fn pilot_cmd(name: &str, out: Option<PathBuf>) -> Result<(), Failure> {
    let scenario = pilot::scenario_for(name).ok_or_else(|| Failure::Validation(format!("no pilot for `{name}`")))?;
    let cfg = bundled_scenario(scenario).expect("pilot scenarios are bundled");
    let trace = pilot::generate(name, cfg).expect("name checked above")?;
    match out {
        Some(path) => write(&path, trace.to_json()),
        None => {
            println!("{}", trace.to_json());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Run(args) => run(args),
        Cmd::Characterize { kind, scenario, out } => resolve_scenario(&scenario).and_then(|cfg| {
            let table = characterize(kind, &cfg)?;
            match out {
                Some(path) => write(&path, table),
                None => {
                    print!("{table}");
                    Ok(())
                }
            }
        }),
        Cmd::Serve { scenario, addr, time_scale, debug, out } => serve_cmd(scenario, addr, time_scale, debug, out),
        Cmd::Pilot { name, out } => pilot_cmd(&name, out),
        Cmd::List => {
            println!("scenarios: {}", bundled_scenario_names().collect::<Vec<_>>().join(", "));
            println!("traces: {}", bundled_trace_names().collect::<Vec<_>>().join(", "));
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
