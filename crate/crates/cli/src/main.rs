mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use hybridkex::bench::{BenchError, DEFAULT_ITERATIONS, DEFAULT_MTU, DEFAULT_WARMUP};
use hybridkex::handshake::{HandshakeError, KeyfileError};
use hybridkex::qkd::QkdError;

#[derive(Debug, Parser)]
#[command(
    name = "hybridkex",
    version,
    about = "Hybrid ECDH + post-quantum KEM + QKD key establishment"
)]
struct Cli {
    /// Log verbosity (written to stderr).
    #[arg(long, global = true, value_enum, env = "HYBRIDKEX_LOG", default_value_t = LogLevel::Warn)]
    log_level: LogLevel,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
}

impl From<LogLevel> for log::LevelFilter {
    fn from(l: LogLevel) -> Self {
        match l {
            LogLevel::Error => log::LevelFilter::Error,
            LogLevel::Warn => log::LevelFilter::Warn,
            LogLevel::Info => log::LevelFilter::Info,
            LogLevel::Debug => log::LevelFilter::Debug,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

impl From<Format> for hybridkex::bench::ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Table => Self::Table,
            Format::Csv => Self::Csv,
            Format::Json => Self::Json,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// List the registered hybrid suites with their transfer accounting.
    Suites {
        /// Emit JSON instead of a table.
        #[arg(long)]
        json: bool,
        /// Packet payload size used for the packet column.
        #[arg(long, default_value_t = DEFAULT_MTU as u64, value_parser = clap::value_parser!(u64).range(1..))]
        mtu: u64,
    },
    /// Generate an Ed25519 + ML-DSA-65 signing keypair.
    Keygen {
        /// Output path prefix; writes PREFIX.key (private) and PREFIX.pub.
        #[arg(long)]
        out: PathBuf,
        /// Also print the public key file as hex.
        #[arg(long)]
        hex: bool,
        /// Overwrite existing files.
        #[arg(long)]
        force: bool,
    },
    /// Accept handshakes and echo every sealed message back.
    Serve {
        /// Node configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Listen address, overriding the configuration.
        #[arg(long)]
        address: Option<String>,
        /// Exit after this many connections have been handled.
        #[arg(long)]
        max_sessions: Option<usize>,
    },
    /// Run a handshake against a server and exchange one sealed message.
    Connect {
        /// Node configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Server address, overriding the configuration.
        #[arg(long)]
        address: Option<String>,
        /// Message to send through the record layer.
        #[arg(long, default_value = "hello")]
        message: String,
    },
    /// Run a mock ETSI GS QKD 014 key management entity.
    QkdSim {
        /// KME configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Listen address, overriding the configuration.
        #[arg(long)]
        listen: Option<String>,
    },
    /// Time the key exchange of each suite and report the evaluation columns.
    Bench {
        /// Timed iterations per suite.
        #[arg(long, default_value_t = DEFAULT_ITERATIONS as u64, value_parser = clap::value_parser!(u64).range(2..))]
        iters: u64,
        /// Untimed iterations run first.
        #[arg(long, default_value_t = DEFAULT_WARMUP as u64)]
        warmup: u64,
        /// Packet payload size used for the packet column.
        #[arg(long, default_value_t = DEFAULT_MTU as u64, value_parser = clap::value_parser!(u64).range(1..))]
        mtu: u64,
        /// Restrict to these suites (repeatable).
        #[arg(long = "suite", value_name = "LABEL")]
        suites: Vec<String>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        /// Write the report to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Only verify transfer accounting and strengths against the
        /// reference figures (MTU 1500); exit 2 on any mismatch.
        #[arg(long)]
        check: bool,
    },
    /// Re-render a saved JSON bench report in another format.
    Report {
        /// JSON produced by `bench --format json`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        /// Write the report to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    CheckFailed(String),
    #[error(transparent)]
    Handshake(#[from] HandshakeError),
    #[error(transparent)]
    Qkd(#[from] QkdError),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error(transparent)]
    Keyfile(#[from] KeyfileError),
    #[error("{0}")]
    Runtime(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 64,
            CliError::CheckFailed(_) => 2,
            _ => 1,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Suites { json, mtu } => commands::suites(json, mtu as usize),
        Command::Keygen { out, hex, force } => commands::keygen(&out, hex, force),
        Command::Serve {
            config,
            address,
            max_sessions,
        } => commands::serve(&config, address, max_sessions),
        Command::Connect {
            config,
            address,
            message,
        } => commands::connect(&config, address, &message),
        Command::QkdSim { config, listen } => commands::qkd_sim(&config, listen),
        Command::Bench {
            iters,
            warmup,
            mtu,
            suites,
            format,
            out,
            check,
        } => {
            let cfg = hybridkex::bench::BenchConfig {
                iterations: iters as usize,
                warmup: warmup as usize,
                mtu: mtu as usize,
                suites,
            };
            if check {
                commands::bench_check(&cfg)
            } else {
                commands::bench(&cfg, format.into(), out.as_deref())
            }
        }
        Command::Report { input, format, out } => {
            commands::report(&input, format.into(), out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 64 } else { 0 });
        }
    };
    env_logger::Builder::new()
        .filter_level(cli.log_level.into())
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
