mod config;

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gammagate_core::dl3::{read_dl3_bytes, validate_dl3, Severity};
use gammagate_core::gateway::{Gateway, GatewayError};
use gammagate_core::processing::{read_provenance_cards, ProcessingError};
use gammagate_core::provenance::{decode_cards, reconstruct, serialize_provjson, serialize_provn, ProvError, ProvGraph};
use gammagate_core::votable::{write_csv, write_votable};

const OK: u8 = 0;
const DATA_ERROR: u8 = 1;
const USAGE_ERROR: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "gateway", version, about = "VO gateway for gamma-ray DL3 data: ObsTAP, processing, provenance")]
struct Cli {
    /// TOML config file
    #[arg(long, global = true, env = "GATEWAY_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    catalog: Option<PathBuf>,
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    port: Option<u16>,
    #[arg(long, global = true)]
    base_url: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate, catalogue and store DL3 files
    Ingest {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Check one DL3 file; exit 0 iff it has no errors
    Validate { file: PathBuf },
    /// Run an ADQL query against the catalog
    Query {
        adql: String,
        #[arg(long, value_enum, default_value = "votable")]
        format: QueryFormat,
        #[arg(long)]
        maxrec: Option<usize>,
    },
    /// Serve TAP, data files, processing and provenance over HTTP
    Serve,
    /// Run a registered activity on catalogued observations
    Run {
        activity: String,
        /// Parameter as name=value (repeatable)
        #[arg(long = "param", value_parser = parse_param)]
        params: Vec<(String, String)>,
        /// Input entity id (repeatable)
        #[arg(long = "in", required = true)]
        inputs: Vec<String>,
        #[arg(long)]
        agent: Option<String>,
    },
    /// Provenance access
    Prov {
        #[command(subcommand)]
        command: ProvCommand,
    },
}

#[derive(Debug, Subcommand)]
enum ProvCommand {
    /// Write the ancestry of an entity as PROV-N or PROV-JSON
    Export {
        entity: String,
        #[arg(long, value_enum, default_value = "provjson")]
        format: ProvFormat,
        #[command(flatten)]
        depth: Depth,
        /// Output file; standard output when absent
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// List the activities and entities an entity derives from
    Ancestry {
        entity: String,
        #[command(flatten)]
        depth: Depth,
    },
    /// Rebuild a graph from the PRV* cards of FITS files, printed as PROV-JSON
    Reconstruct {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct Depth {
    /// Activity hops to follow; unlimited when absent
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    depth: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum QueryFormat {
    Votable,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProvFormat {
    Provn,
    Provjson,
}

fn parse_param(s: &str) -> Result<(String, String), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k.to_owned(), v.to_owned())),
        _ => Err(format!("expected name=value, got {s:?}")),
    }
}

struct Failure {
    code: u8,
    message: String,
}

type Outcome = Result<(), Failure>;

fn data_err(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: DATA_ERROR,
        message: e.to_string(),
    }
}

fn usage_err(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: USAGE_ERROR,
        message: e.to_string(),
    }
}

fn write_stdout(bytes: &[u8]) -> Outcome {
    let mut out = std::io::stdout().lock();
    out.write_all(bytes).and_then(|_| out.flush()).map_err(data_err)
}

fn open(cli: &Cli) -> Result<Gateway, Failure> {
    let flags = config::Overrides {
        catalog: cli.catalog.clone(),
        store: cli.store.clone(),
        data_dir: cli.data_dir.clone(),
        port: cli.port,
        base_url: cli.base_url.clone(),
    };
    let cfg = config::load(cli.config.as_deref(), None, &flags).map_err(usage_err)?;
    Gateway::open(cfg).map_err(|e| match e {
        GatewayError::InvalidConfig(_) => usage_err(e),
        other => data_err(other),
    })
}

fn ingest(gw: &Gateway, files: &[PathBuf]) -> Outcome {
    let mut failed = 0;
    for f in files {
        match gw.ingest_file(f) {
            Ok(r) => {
                let note = if r.replaced { " (replaced)" } else { "" };
                println!("ok {} -> {}{note}", f.display(), r.obs_id);
                for w in r.warnings {
                    println!("  warning {}: {}", w.field, w.message);
                }
            }
            Err(e) => {
                failed += 1;
                println!("error {}: {e}", f.display());
            }
        }
    }
    if failed == 0 {
        Ok(())
    } else {
        Err(data_err(format!("{failed} of {} files failed", files.len())))
    }
}

fn validate(file: &Path) -> Outcome {
    let bytes = std::fs::read(file).map_err(|e| data_err(format!("{}: {e}", file.display())))?;
    let obs = match read_dl3_bytes(&bytes) {
        Ok(o) => o,
        Err(e) => {
            println!("error: {e}");
            return Err(data_err(format!("{} is not a valid DL3 file", file.display())));
        }
    };
    let findings = validate_dl3(&obs);
    for f in &findings {
        let level = match f.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        println!("{level}: {}: {}", f.field, f.message);
    }
    let errors = findings.iter().filter(|f| f.severity == Severity::Error).count();
    if errors == 0 {
        if findings.is_empty() {
            println!("ok: {}", file.display());
        }
        Ok(())
    } else {
        Err(data_err(format!("{errors} error(s) in {}", file.display())))
    }
}

fn query(gw: &Gateway, adql: &str, format: QueryFormat, maxrec: Option<usize>) -> Outcome {
    let r = gw.query(adql, maxrec).map_err(usage_err)?;
    let bytes = match format {
        QueryFormat::Votable => write_votable(&r.columns, &r.rows, r.overflow),
        QueryFormat::Csv => write_csv(&r.columns, &r.rows),
    };
    write_stdout(&bytes)
}

fn run(gw: &Gateway, activity: &str, params: &[(String, String)], inputs: &[String], agent: Option<&str>) -> Outcome {
    let mut map = BTreeMap::new();
    for (k, v) in params {
        if map.insert(k.clone(), v.clone()).is_some() {
            return Err(usage_err(format!("parameter {k} given twice")));
        }
    }
    match gw.run(activity, map, inputs, agent) {
        Ok(o) => {
            println!("activity {}", o.activity_id);
            for id in o.outputs {
                println!("output {id}");
            }
            Ok(())
        }
        Err(e @ GatewayError::Processing(ProcessingError::UnknownActivity(_)))
        | Err(e @ GatewayError::Processing(ProcessingError::Prov(ProvError::ParamType { .. }))) => Err(usage_err(e)),
        Err(e) => Err(data_err(e)),
    }
}

fn ancestry_of(gw: &Gateway, entity: &str, depth: &Depth) -> Result<ProvGraph, Failure> {
    let depth = depth.depth.map(|d| d as usize);
    gw.with_store(|g| g.ancestry(entity, depth)).map_err(data_err)
}

fn print_ancestry(g: &ProvGraph) {
    for (id, e) in &g.entities {
        let stub = if e.is_stub() { " (stub)" } else { "" };
        match g.generation_of(id) {
            Some(wgb) => println!("entity {id}{stub} <- {}", wgb.activity),
            None => println!("entity {id}{stub}"),
        }
    }
    for (id, a) in &g.activities {
        let used = g.used_by(id).join(", ");
        let agent = g.agent_of(id).unwrap_or("-");
        println!("activity {id} {} used [{used}] by {agent}", a.name);
    }
}

fn prov_reconstruct(files: &[PathBuf]) -> Outcome {
    let mut steps = Vec::new();
    for f in files {
        let bytes = std::fs::read(f).map_err(|e| data_err(format!("{}: {e}", f.display())))?;
        let cards = read_provenance_cards(&bytes).map_err(|e| data_err(format!("{}: {e}", f.display())))?;
        match decode_cards(&cards).map_err(|e| data_err(format!("{}: {e}", f.display())))? {
            Some(step) => steps.push(step),
            None => eprintln!("note: {} carries no provenance cards", f.display()),
        }
    }
    let g = reconstruct(&steps).map_err(data_err)?;
    write_stdout(&serialize_provjson(&g))
}

fn serve(gw: Gateway) -> Outcome {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(data_err)?;
    let gw = Arc::new(gw);
    rt.block_on(async move {
        let addr = format!("{}:{}", gw.config().host, gw.config().port);
        let listener = match tokio::net::TcpListener::bind(&addr).await {
            Ok(l) => l,
            Err(e) if e.kind() == std::io::ErrorKind::AddrInUse => {
                return Err(data_err(format!("PortInUse: {addr} is already in use")));
            }
            Err(e) => return Err(data_err(format!("cannot bind {addr}: {e}"))),
        };
        log::info!(
            "listening on {addr} ({} records), base URL {}",
            gw.catalog().len(),
            gw.config().base_url
        );
        spawn_reload_on_hangup(gw.clone());
        gammagate_tap::serve(listener, gw, shutdown_signal()).await.map_err(data_err)?;
        log::info!("shut down");
        Ok(())
    })
}

#[cfg(unix)]
fn spawn_reload_on_hangup(gw: Arc<Gateway>) {
    use tokio::signal::unix::{signal, SignalKind};
    tokio::spawn(async move {
        let Ok(mut hup) = signal(SignalKind::hangup()) else { return };
        while hup.recv().await.is_some() {
            match gw.reload() {
                Ok(n) => log::info!("catalog reloaded: {n} records"),
                Err(e) => log::error!("catalog reload failed, keeping the current snapshot: {e}"),
            }
        }
    });
}

#[cfg(not(unix))]
fn spawn_reload_on_hangup(_gw: Arc<Gateway>) {}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

fn dispatch(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Validate { file } => validate(file),
        Command::Prov {
            command: ProvCommand::Reconstruct { files },
        } => prov_reconstruct(files),
        Command::Ingest { files } => ingest(&open(cli)?, files),
        Command::Query { adql, format, maxrec } => query(&open(cli)?, adql, *format, *maxrec),
        Command::Serve => serve(open(cli)?),
        Command::Run {
            activity,
            params,
            inputs,
            agent,
        } => run(&open(cli)?, activity, params, inputs, agent.as_deref()),
        Command::Prov { command } => {
            let gw = open(cli)?;
            match command {
                ProvCommand::Export {
                    entity,
                    format,
                    depth,
                    output,
                } => {
                    let g = ancestry_of(&gw, entity, depth)?;
                    let bytes = match format {
                        ProvFormat::Provn => {
                            let mut s = serialize_provn(&g);
                            s.push('\n');
                            s.into_bytes()
                        }
                        ProvFormat::Provjson => serialize_provjson(&g),
                    };
                    match output {
                        Some(path) => gammagate_core::obscore::write_atomic(path, &bytes)
                            .map_err(|e| data_err(format!("{}: {e}", path.display()))),
                        None => write_stdout(&bytes),
                    }
                }
                ProvCommand::Ancestry { entity, depth } => {
                    print_ancestry(&ancestry_of(&gw, entity, depth)?);
                    Ok(())
                }
                ProvCommand::Reconstruct { .. } => unreachable!("handled above"),
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_target(false)
        .init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::from(OK),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
