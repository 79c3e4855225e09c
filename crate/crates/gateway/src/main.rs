use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use ets_client::{Client, CommandReply, ContactRegistry};
use ets_core::channel::TcpChannel;
use ets_core::notify::{run_controller_emulator, ControllerEmulator, NetworkConnector};
use ets_core::protocol::Deframer;
use ets_core::sim::{generate_trace, read_trace, write_trace, EpisodeSpec};
use ets_gateway::{ClockMode, ServiceConfig, StartupError};
use serde_json::json;
use tokio::net::TcpListener;

const DEFAULT_SERVER: &str = "http://127.0.0.1:8080";

#[derive(Parser)]
#[command(name = "ets", version, about = "Emergency tracking gateway")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum TraceKind {
    HrEpisode,
    Crash,
    Nominal,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the gateway service.
    Serve {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configured port.
        #[arg(long)]
        port: Option<u16>,
    },
    /// Feed a recorded trace through the engine.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        /// Playback speed multiplier, or "inf".
        #[arg(long, default_value = "inf")]
        speed: f64,
        /// Run in-process with this service config (clock forced to replay).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Send the trace to a running gateway instead.
        #[arg(long, conflicts_with_all = ["config", "log"])]
        server: Option<String>,
        /// Event log for an in-process run without a config.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Generate a synthetic sensor trace.
    GenTrace {
        #[arg(long, value_enum)]
        kind: TraceKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 60)]
        duration_s: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 130)]
        peak_bpm: u8,
        #[arg(long, default_value_t = 10)]
        onset_s: u64,
        /// Length of the heart-rate episode.
        #[arg(long, default_value_t = 30)]
        episode_s: u64,
    },
    /// Decode a captured wearable byte stream. Hex text is detected
    /// automatically; --raw forces binary.
    Decode {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        raw: bool,
    },
    Status {
        #[arg(long, default_value = DEFAULT_SERVER)]
        server: String,
    },
    Panic {
        #[arg(long, default_value = DEFAULT_SERVER)]
        server: String,
    },
    Cancel {
        #[arg(long, default_value = DEFAULT_SERVER)]
        server: String,
    },
    Send {
        #[arg(long, default_value = DEFAULT_SERVER)]
        server: String,
    },
    Reset {
        #[arg(long, default_value = DEFAULT_SERVER)]
        server: String,
    },
    /// Store emergency contacts on the gateway.
    Contacts {
        #[arg(long, default_value = DEFAULT_SERVER)]
        server: String,
        #[arg(long)]
        phone: String,
        #[arg(long)]
        email: String,
        #[arg(long)]
        social_webhook: String,
    },
    /// Pretend to be the LED controller board on a TCP port.
    EmulateController {
        #[arg(long, default_value = "127.0.0.1:7070")]
        listen: String,
    },
}

fn print_json(v: &impl serde::Serialize) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn print_reply(r: CommandReply) -> anyhow::Result<()> {
    print_json(&r)
}

fn load_trace(path: &Path) -> anyhow::Result<Vec<ets_core::sim::TraceRecord>> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_trace(BufReader::new(f))?)
}

async fn replay(
    trace: PathBuf,
    speed: f64,
    config: Option<PathBuf>,
    server: Option<String>,
    log: Option<PathBuf>,
) -> anyhow::Result<()> {
    let records = load_trace(&trace)?;
    if let Some(server) = server {
        let report = Client::new(server).replay(records, Some(speed)).await?;
        return print_json(&report);
    }
    let mut cfg = match (config, log) {
        (Some(path), log) => {
            let mut cfg = ServiceConfig::load(&path)?;
            if let Some(l) = log {
                cfg.log_path = l.to_string_lossy().into_owned();
            }
            cfg
        }
        (None, Some(log)) => ServiceConfig::new(8080, log.to_string_lossy()),
        (None, None) => bail!("in-process replay needs --config or --log"),
    };
    cfg.clock = ClockMode::Replay;
    let handle = ets_gateway::start_runtime(&cfg, Arc::new(NetworkConnector::default())).await?;
    let report = handle.replay(&records, speed).await?;
    let status = handle.status().await?;
    print_json(&json!({ "report": report, "status": status }))
}

fn gen_trace(
    kind: TraceKind,
    seed: u64,
    duration_s: u64,
    out: &Path,
    peak_bpm: u8,
    onset_s: u64,
    episode_s: u64,
) -> anyhow::Result<()> {
    let spec = match kind {
        TraceKind::Nominal => EpisodeSpec::nominal(),
        TraceKind::Crash => EpisodeSpec::crash(onset_s),
        TraceKind::HrEpisode if peak_bpm >= 75 => EpisodeSpec::tachy(onset_s, peak_bpm, episode_s),
        TraceKind::HrEpisode => EpisodeSpec::brady(onset_s, peak_bpm, episode_s),
    };
    let records = generate_trace(&spec, seed, duration_s)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(out).with_context(|| format!("creating {}", out.display()))?);
    write_trace(&mut f, &records)?;
    f.flush()?;
    eprintln!("wrote {} records to {}", records.len(), out.display());
    Ok(())
}

fn looks_like_hex(data: &[u8]) -> bool {
    data.iter().any(u8::is_ascii_hexdigit) && data.iter().all(|b| b.is_ascii_hexdigit() || b.is_ascii_whitespace())
}

fn decode(input: &Path, force_raw: bool) -> anyhow::Result<()> {
    let raw = std::fs::read(input).with_context(|| format!("reading {}", input.display()))?;
    let bytes = if !force_raw && looks_like_hex(&raw) {
        let text: String = raw.iter().filter(|b| !b.is_ascii_whitespace()).map(|&b| b as char).collect();
        hex::decode(text).context("input is not valid hex")?
    } else {
        raw
    };
    let mut deframer = Deframer::new();
    let mut out = std::io::stdout().lock();
    for p in deframer.feed(&bytes) {
        writeln!(out, "{}", serde_json::to_string(&p)?)?;
    }
    writeln!(out, "{}", json!({ "stats": deframer.stats(), "buffered": deframer.buffered() }))?;
    Ok(())
}

async fn emulate_controller(listen: &str) -> anyhow::Result<()> {
    let listener = TcpListener::bind(listen).await.with_context(|| format!("binding {listen}"))?;
    eprintln!("controller emulator on {}", listener.local_addr()?);
    let board = Arc::new(Mutex::new(ControllerEmulator::new()));
    let start = Instant::now();
    loop {
        let (stream, peer) = listener.accept().await?;
        let board = board.clone();
        tokio::spawn(async move {
            let clock = move || start.elapsed().as_millis() as u64;
            if let Err(e) = run_controller_emulator(TcpChannel::from_stream(stream), board.clone(), clock).await {
                tracing::warn!(error = %e, %peer, "controller session failed");
            }
            let b = board.lock().expect("board lock poisoned").clone();
            eprintln!("{}", json!({ "peer": peer.to_string(), "alerts": b.alerts, "bad_bytes": b.bad_bytes, "blink_until_ms": b.blink_until_ms }));
        });
    }
}

async fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.cmd {
        Cmd::Serve { config, port } => {
            let mut cfg = ServiceConfig::load(&config)?;
            if let Some(p) = port {
                cfg.port = p;
            }
            ets_gateway::serve(&cfg).await
        }
        Cmd::Replay {
            trace,
            speed,
            config,
            server,
            log,
        } => replay(trace, speed, config, server, log).await,
        Cmd::GenTrace {
            kind,
            seed,
            duration_s,
            out,
            peak_bpm,
            onset_s,
            episode_s,
        } => gen_trace(kind, seed, duration_s, &out, peak_bpm, onset_s, episode_s),
        Cmd::Decode { input, raw } => decode(&input, raw),
        Cmd::Status { server } => print_json(&Client::new(server).status().await?),
        Cmd::Panic { server } => print_reply(Client::new(server).panic().await?),
        Cmd::Cancel { server } => print_reply(Client::new(server).cancel().await?),
        Cmd::Send { server } => print_reply(Client::new(server).send().await?),
        Cmd::Reset { server } => print_reply(Client::new(server).reset().await?),
        Cmd::Contacts {
            server,
            phone,
            email,
            social_webhook,
        } => {
            let c = ContactRegistry {
                phone,
                email,
                social_webhook,
            };
            print_json(&Client::new(server).put_contacts(&c).await?)
        }
        Cmd::EmulateController { listen } => emulate_controller(&listen).await,
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<StartupError>() {
                Some(se) => ExitCode::from(se.exit_code() as u8),
                None => ExitCode::FAILURE,
            }
        }
    }
}
