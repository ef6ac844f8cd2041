//! `ropuf`: fabricate and measure simulated ring-oscillator devices, run the
//! device daemon and the vault service, enroll and check users, and report
//! population statistics.
//!
//! Exit codes: 0 success, 1 authentication failed, 2 usage error,
//! 3 device or service unreachable, 4 invalid input, 5 storage error.

mod api;

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ropuf_core::counter::{measure_all, MeasurementConfig, DEFAULT_WINDOW};
use ropuf_core::device_service::{DeviceClient, DeviceDaemon, DEFAULT_DEVICE_PORT};
use ropuf_core::metrics::{evaluate_population, PopulationConfig, DEFAULT_REPEATS};
use ropuf_core::ro_model::{
    fabricate_device, DeviceInstance, DeviceSpec, Environment, FrequencyBackend, RingSpec,
};
use ropuf_core::vault::{AuthOutcome, Vault, VaultError, DEFAULT_THRESHOLD};
use ropuf_core::vault_service::{self, VaultService, DEFAULT_VAULT_PORT, PREVIEW_PAIRS};
use serde::Serialize;
use tokio::net::TcpListener;

use crate::api::ApiClient;

#[derive(Parser)]
#[command(name = "ropuf", version, about = "Ring-oscillator PUF emulator")]
struct Cli {
    /// Log daemon activity at debug level on stderr.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fabricate a device and write it as JSON.
    Fabricate(FabricateArgs),
    /// Count every ring once and print the frequency estimates.
    Measure(MeasureArgs),
    /// Run the device daemon.
    ServeDevice(ServeDeviceArgs),
    /// Run the vault HTTP service.
    ServeVault(ServeVaultArgs),
    /// Enroll a user.
    Register(UserArgs),
    /// Check a user's credentials.
    Auth(UserArgs),
    /// Print the occupancy of the vault table.
    ShowTable(TableArgs),
    /// Fabricate a population and report uniqueness, reliability and uniformity.
    Metrics(MetricsArgs),
}

#[derive(Args)]
struct FabricateArgs {
    #[arg(long)]
    seed: u64,
    /// Relative standard deviation of the per-ring fabrication offset.
    #[arg(long, default_value_t = 0.05)]
    sigma: f64,
    #[arg(long, default_value_t = 8)]
    rings: usize,
    /// Per-stage resistance in ohms.
    #[arg(long, default_value_t = 1000.0)]
    resistance: f64,
    /// Per-stage capacitance in farads.
    #[arg(long, default_value_t = 1e-6)]
    capacitance: f64,
    #[arg(long, default_value_t = 3)]
    stages: u32,
    /// Output file; the device JSON goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

/// Where ring frequencies come from.
#[derive(Args)]
struct BackendArgs {
    /// Device file written by `fabricate`.
    #[arg(
        long = "device-file",
        alias = "device",
        conflicts_with = "replay",
        required_unless_present = "replay"
    )]
    device_file: Option<PathBuf>,
    /// Fixed frequencies in hertz, e.g. "136,46,26,14,204,66,394,56".
    #[arg(long)]
    replay: Option<String>,
    /// Counting window in seconds.
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: f64,
    /// Relative per-measurement jitter of simulated devices.
    #[arg(long, default_value_t = 0.005)]
    noise: f64,
    /// Operating temperature in °C.
    #[arg(long, default_value_t = 25.0)]
    temp: f64,
    /// Relative frequency change per °C.
    #[arg(long = "temp-coeff", default_value_t = -0.001, allow_negative_numbers = true)]
    temp_coeff: f64,
    /// Pin the counter start phase (cycles, in [0, 1)) instead of drawing it.
    #[arg(long)]
    phase: Option<f64>,
    /// Seed of the measurement random stream.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct MeasureArgs {
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ServeDeviceArgs {
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long, default_value = "127.0.0.1")]
    bind: String,
    #[arg(long, default_value_t = DEFAULT_DEVICE_PORT)]
    port: u16,
}

#[derive(Args)]
struct ServeVaultArgs {
    #[arg(long, default_value = "127.0.0.1")]
    bind: String,
    #[arg(long, default_value_t = DEFAULT_VAULT_PORT)]
    port: u16,
    #[arg(long = "device-addr", default_value_t = format!("127.0.0.1:{DEFAULT_DEVICE_PORT}"))]
    device_addr: String,
    #[arg(long = "vault-file", default_value = "vault.json")]
    vault_file: PathBuf,
    /// Matching bits (of 16) needed to approve a login.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: u8,
    /// Device reply timeout in seconds.
    #[arg(long, default_value_t = 5.0)]
    timeout: f64,
}

#[derive(Args)]
struct UserArgs {
    #[arg(long)]
    username: String,
    #[arg(long)]
    password: String,
    /// Vault service base URL; when given, the local vault flags are ignored.
    #[arg(long)]
    api: Option<String>,
    #[arg(long = "vault-file", default_value = "vault.json")]
    vault_file: PathBuf,
    #[arg(long = "device-addr", default_value_t = format!("127.0.0.1:{DEFAULT_DEVICE_PORT}"))]
    device_addr: String,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: u8,
    #[arg(long, default_value_t = 5.0)]
    timeout: f64,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct TableArgs {
    #[arg(long)]
    api: Option<String>,
    #[arg(long = "vault-file", default_value = "vault.json")]
    vault_file: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long, default_value_t = 200)]
    devices: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    sigma: f64,
    #[arg(long, default_value_t = 0.005)]
    noise: f64,
    #[arg(long, default_value_t = 25.0)]
    temp: f64,
    #[arg(long, default_value_t = DEFAULT_REPEATS)]
    repeats: usize,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: f64,
    #[arg(long)]
    json: bool,
}

/// Error paired with the process exit code it maps to.
#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

const EXIT_AUTH_FAILED: u8 = 1;
const EXIT_UNREACHABLE: u8 = 3;
const EXIT_INVALID: u8 = 4;
const EXIT_STORAGE: u8 = 5;

impl Failure {
    fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code,
            error: error.into(),
        }
    }

    fn invalid(error: impl Into<anyhow::Error>) -> Self {
        Self::new(EXIT_INVALID, error)
    }
}

impl From<VaultError> for Failure {
    fn from(e: VaultError) -> Self {
        let code = match e {
            VaultError::RegistrationFailed(_) | VaultError::AuthenticationError(_) => EXIT_UNREACHABLE,
            VaultError::InvalidThreshold(_) => EXIT_INVALID,
            VaultError::Storage(_) | VaultError::Format(_) => EXIT_STORAGE,
        };
        Failure::new(code, e)
    }
}

type CmdResult = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose {
        tracing_subscriber::filter::LevelFilter::DEBUG
    } else {
        tracing_subscriber::filter::LevelFilter::INFO
    };
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .init();

    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return ExitCode::from(EXIT_INVALID);
        }
    };
    let result = runtime.block_on(run(cli.command));
    match result {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.code)
        }
    }
}

async fn run(command: Command) -> CmdResult {
    match command {
        Command::Fabricate(args) => fabricate(args),
        Command::Measure(args) => measure(args),
        Command::ServeDevice(args) => serve_device(args).await,
        Command::ServeVault(args) => serve_vault(args).await,
        Command::Register(args) => register(args).await,
        Command::Auth(args) => auth(args).await,
        Command::ShowTable(args) => show_table(args).await,
        Command::Metrics(args) => metrics(args),
    }
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string(value).expect("output serializes"));
}

fn fabricate(args: FabricateArgs) -> CmdResult {
    let spec = DeviceSpec {
        ring_count: args.rings,
        nominal: RingSpec {
            resistance: args.resistance,
            capacitance: args.capacitance,
            stages: args.stages,
        },
        process_sigma: args.sigma,
    };
    let device = fabricate_device(&spec, args.seed).map_err(Failure::invalid)?;
    let doc = device.to_json();
    let Some(out) = args.out else {
        print!("{doc}");
        return Ok(0);
    };
    fs::write(&out, &doc)
        .with_context(|| format!("writing {}", out.display()))
        .map_err(|e| Failure::new(EXIT_STORAGE, e))?;
    if args.json {
        print_json(&serde_json::json!({
            "device_id": device.device_id,
            "rings": device.ring_count(),
            "out": out.display().to_string(),
        }));
    } else {
        println!(
            "fabricated {} with {} rings -> {}",
            device.device_id,
            device.ring_count(),
            out.display()
        );
    }
    Ok(0)
}

fn parse_replay(list: &str) -> anyhow::Result<Vec<f64>> {
    list.split(',')
        .map(|item| {
            let item = item.trim();
            item.parse::<f64>()
                .map_err(|e| anyhow!("bad replay frequency {item:?}: {e}"))
        })
        .collect()
}

impl BackendArgs {
    fn backend(&self) -> Result<FrequencyBackend, Failure> {
        match (&self.device_file, &self.replay) {
            (_, Some(list)) => {
                let freqs = parse_replay(list).map_err(Failure::invalid)?;
                FrequencyBackend::replay(freqs).map_err(Failure::invalid)
            }
            (Some(path), None) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))
                    .map_err(Failure::invalid)?;
                let device = DeviceInstance::from_json(&text).map_err(Failure::invalid)?;
                let environment = Environment {
                    temperature: self.temp,
                    noise_sigma: self.noise,
                    temp_coefficient: self.temp_coeff,
                };
                FrequencyBackend::simulated(device, environment).map_err(Failure::invalid)
            }
            (None, None) => unreachable!("clap requires a frequency source"),
        }
    }

    fn measurement(&self) -> Result<MeasurementConfig, Failure> {
        let cfg = MeasurementConfig {
            window: self.window,
            pinned_phase: self.phase,
        };
        cfg.validate().map_err(Failure::invalid)?;
        Ok(cfg)
    }
}

fn measure(args: MeasureArgs) -> CmdResult {
    let backend = args.backend.backend()?;
    let cfg = args.backend.measurement()?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.backend.seed);
    let readings = measure_all(&backend, &cfg, &mut rng).map_err(Failure::invalid)?;
    if args.json {
        #[derive(Serialize)]
        struct Reading {
            ring_index: usize,
            edge_count: u64,
            estimate: f64,
            window: f64,
        }
        let out: Vec<Reading> = readings
            .iter()
            .map(|m| Reading {
                ring_index: m.ring_index,
                edge_count: m.edge_count,
                estimate: m.estimate,
                window: m.window,
            })
            .collect();
        print_json(&out);
    } else {
        let line: Vec<String> = readings.iter().map(|m| m.estimate.to_string()).collect();
        println!("{}", line.join(","));
    }
    Ok(0)
}

async fn shutdown_signal() {
    // an error here means no signal handler; run until killed instead
    if tokio::signal::ctrl_c().await.is_err() {
        std::future::pending::<()>().await;
    }
}

async fn bind(host: &str, port: u16) -> Result<TcpListener, Failure> {
    TcpListener::bind((host, port))
        .await
        .with_context(|| format!("binding {host}:{port}"))
        .map_err(|e| Failure::new(EXIT_UNREACHABLE, e))
}

async fn serve_device(args: ServeDeviceArgs) -> CmdResult {
    let backend = args.backend.backend()?;
    let cfg = args.backend.measurement()?;
    let daemon = DeviceDaemon::new(backend, cfg, args.backend.seed).map_err(Failure::invalid)?;
    let listener = bind(&args.bind, args.port).await?;
    let addr = listener.local_addr().map_err(Failure::invalid)?;
    println!("device daemon listening on {addr}");
    daemon
        .serve_until(listener, shutdown_signal())
        .await
        .map_err(|e| Failure::new(EXIT_UNREACHABLE, e))?;
    Ok(0)
}

fn timeout(seconds: f64) -> Result<Duration, Failure> {
    Duration::try_from_secs_f64(seconds)
        .ok()
        .filter(|d| !d.is_zero())
        .ok_or_else(|| Failure::invalid(anyhow!("timeout must be a positive number of seconds")))
}

fn open_vault(path: &PathBuf, threshold: u8) -> Result<Vault, Failure> {
    Ok(Vault::open(path)?.with_threshold(threshold)?)
}

async fn serve_vault(args: ServeVaultArgs) -> CmdResult {
    let vault = open_vault(&args.vault_file, args.threshold)?;
    let device = DeviceClient::new(args.device_addr, timeout(args.timeout)?);
    let listener = bind(&args.bind, args.port).await?;
    let addr = listener.local_addr().map_err(Failure::invalid)?;
    println!("vault service listening on {addr}");
    vault_service::serve_until(listener, VaultService::new(vault, device), shutdown_signal())
        .await
        .map_err(|e| Failure::new(EXIT_UNREACHABLE, e))?;
    Ok(0)
}

fn preview_text(preview: &[[u8; 2]]) -> String {
    let mut out = String::new();
    for (i, [a, b]) in preview.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{a}{b}");
    }
    out
}

async fn register(args: UserArgs) -> CmdResult {
    let reply = match &args.api {
        Some(url) => ApiClient::new(url).register(&args.username, &args.password).await?,
        None => {
            let mut vault = open_vault(&args.vault_file, args.threshold)?;
            let device = DeviceClient::new(&args.device_addr, timeout(args.timeout)?);
            let reg = vault.register(&args.username, &args.password, &device).await?;
            vault_service::RegisterReply {
                status: "registered".into(),
                row: reg.cell.row,
                col: reg.cell.col,
                challenge_preview: reg
                    .record
                    .challenge
                    .pairs()
                    .iter()
                    .take(PREVIEW_PAIRS)
                    .map(|p| [p.first, p.second])
                    .collect(),
            }
        }
    };
    if args.json {
        print_json(&reply);
    } else {
        println!(
            "registered row={} col={} challenge={}",
            reply.row,
            reply.col,
            preview_text(&reply.challenge_preview)
        );
    }
    Ok(0)
}

async fn auth(args: UserArgs) -> CmdResult {
    let reply = match &args.api {
        Some(url) => ApiClient::new(url).authenticate(&args.username, &args.password).await?,
        None => {
            let vault = open_vault(&args.vault_file, args.threshold)?;
            let device = DeviceClient::new(&args.device_addr, timeout(args.timeout)?);
            let result = vault.authenticate(&args.username, &args.password, &device).await?;
            vault_service::AuthenticateReply {
                status: result.outcome,
                matched_bits: result.matched_bits,
            }
        }
    };
    if args.json {
        print_json(&reply);
    } else {
        let word = match reply.status {
            AuthOutcome::Approved => "approved",
            AuthOutcome::Failed => "failed",
        };
        println!("{word} matched_bits={}/16", reply.matched_bits);
    }
    Ok(match reply.status {
        AuthOutcome::Approved => 0,
        AuthOutcome::Failed => EXIT_AUTH_FAILED,
    })
}

async fn show_table(args: TableArgs) -> CmdResult {
    let view = match &args.api {
        Some(url) => ApiClient::new(url).table().await?,
        None => open_vault(&args.vault_file, DEFAULT_THRESHOLD)?.render_table(),
    };
    if args.json {
        print_json(&view);
    } else {
        print!("{view}");
    }
    Ok(0)
}

fn metrics(args: MetricsArgs) -> CmdResult {
    let cfg = PopulationConfig {
        devices: args.devices,
        seed: args.seed,
        spec: DeviceSpec {
            process_sigma: args.sigma,
            ..DeviceSpec::default()
        },
        environment: Environment {
            temperature: args.temp,
            noise_sigma: args.noise,
            ..Environment::default()
        },
        measurement: MeasurementConfig::with_window(args.window),
        repeats: args.repeats,
    };
    let report = evaluate_population(&cfg).map_err(Failure::invalid)?;
    if args.json {
        print_json(&report);
    } else {
        print!("{report}");
    }
    Ok(0)
}
