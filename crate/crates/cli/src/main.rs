//! `gensync bench` runs a benchmark script and writes CSV results.
//! `gensync sync` performs one TCP sync against a peer.
//!
//! Every error is reported as one stderr line starting with
//! `error[E_<CODE>]:`.

use std::collections::BTreeSet;
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use gensync::bench::{self, BenchConfig};
use gensync::{Builder, GenSync, Observation, ProtocolId, SyncFailure, SyncRole};

const EXIT_OK: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_CONFIG: u8 = 1;
const EXIT_PARTIAL: u8 = 2;
const EXIT_SYNC: u8 = 3;
const EXIT_TRANSPORT: u8 = 4;
const EXIT_INPUT: u8 = 5;

#[derive(Parser)]
#[command(name = "gensync", version, about = "Set reconciliation benchmarks and TCP sync")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a benchmark script and write per-run CSV.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synchronise a file of decimal identifiers with a peer over TCP.
    Sync(SyncArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Role {
    Server,
    Client,
}

#[derive(Clone, Copy, ValueEnum)]
enum Proto {
    Cpi,
    Iblt,
    Cuckoo,
}

impl From<Proto> for ProtocolId {
    fn from(p: Proto) -> Self {
        match p {
            Proto::Cpi => ProtocolId::Cpi,
            Proto::Iblt => ProtocolId::Iblt,
            Proto::Cuckoo => ProtocolId::Cuckoo,
        }
    }
}

#[derive(clap::Args)]
struct SyncArgs {
    #[arg(long, value_enum)]
    role: Role,
    /// Listen address for the server, peer address for the client.
    #[arg(long)]
    addr: String,
    #[arg(long, value_enum)]
    protocol: Proto,
    #[arg(long)]
    mbar: Option<u32>,
    #[arg(long)]
    expected_diffs: Option<u32>,
    #[arg(long)]
    fingerprint_bits: Option<u8>,
    /// Any other protocol parameter, as name=value.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    params: Vec<String>,
    /// File of newline-delimited decimal identifiers.
    #[arg(long)]
    input: PathBuf,
    /// Append the elements learned from the peer to the input file.
    #[arg(long)]
    apply: bool,
    #[arg(long, default_value_t = 5000)]
    connect_timeout_ms: u64,
}

struct Failure {
    code: &'static str,
    message: String,
    exit: u8,
}

impl Failure {
    fn new(code: &'static str, exit: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
            exit,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[E_USAGE]: {}", first.trim_start_matches("error: "));
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let result = match cli.command {
        Command::Bench { config, out } => cmd_bench(&config, out.as_deref()),
        Command::Sync(args) => cmd_sync(&args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error[{}]: {}", f.code, f.message.replace('\n', " "));
            ExitCode::from(f.exit)
        }
    }
}

fn seed_override() -> Result<Option<u64>, Failure> {
    match std::env::var("GENSYNC_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::new("E_USAGE", EXIT_USAGE, format!("GENSYNC_SEED={v:?} is not a 64-bit integer"))),
        Err(_) => Ok(None),
    }
}

fn load_config(path: &Path) -> Result<BenchConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| {
        Failure::new("E_CONFIG", EXIT_CONFIG, format!("cannot read {}: {e}", path.display()))
    })?;
    let cfg = bench::parse_config(&text)
        .map_err(|e| Failure::new("E_CONFIG", EXIT_CONFIG, format!("{}: {e}", path.display())))?;
    Ok(match seed_override()? {
        Some(seed) => cfg.with_seed(seed),
        None => cfg,
    })
}

fn cmd_bench(config: &Path, out: Option<&Path>) -> Result<u8, Failure> {
    let cfg = load_config(config)?;
    let report = bench::run_benchmark(&cfg)
        .map_err(|e| Failure::new("E_CONFIG", EXIT_CONFIG, e.to_string()))?;
    let io_err = |e: io::Error| Failure::new("E_IO", EXIT_CONFIG, format!("cannot write results: {e}"));
    match out {
        Some(path) => {
            let file = fs::File::create(path).map_err(io_err)?;
            bench::emit_csv(&report.runs, cfg.set_size, cfg.diff_count, &report.stats, io::BufWriter::new(file))
                .map_err(io_err)?
        }
        None => bench::emit_csv(&report.runs, cfg.set_size, cfg.diff_count, &report.stats, io::stdout().lock())
            .map_err(io_err)?,
    }
    let failed = report.stats.runs - report.stats.success_count;
    if failed > 0 {
        return Err(Failure::new(
            "E_PARTIAL",
            EXIT_PARTIAL,
            format!("{failed} of {} repeats failed", report.stats.runs),
        ));
    }
    Ok(EXIT_OK)
}

fn read_elements(path: &Path) -> Result<Vec<u64>, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::new("E_INPUT", EXIT_INPUT, format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v = t.parse().map_err(|_| {
            Failure::new(
                "E_INPUT",
                EXIT_INPUT,
                format!("{}:{}: {t:?} is not a decimal 64-bit identifier", path.display(), i + 1),
            )
        })?;
        out.push(v);
    }
    Ok(out)
}

fn split_addr(addr: &str) -> Result<(String, u16), Failure> {
    let bad = || Failure::new("E_USAGE", EXIT_USAGE, format!("--addr {addr:?} is not host:port"));
    let (host, port) = addr.rsplit_once(':').ok_or_else(bad)?;
    let host = host.trim_start_matches('[').trim_end_matches(']');
    if host.is_empty() {
        return Err(bad());
    }
    Ok((host.to_string(), port.parse().map_err(|_| bad())?))
}

fn build_sync(args: &SyncArgs) -> Result<GenSync, Failure> {
    let usage = |e: gensync::ConfigError| Failure::new("E_USAGE", EXIT_USAGE, e.to_string());
    let (host, port) = split_addr(&args.addr)?;
    let mut pairs: Vec<String> = Vec::new();
    if let Some(v) = args.mbar {
        pairs.push(format!("mbar={v}"));
    }
    if let Some(v) = args.expected_diffs {
        pairs.push(format!("expected_diffs={v}"));
    }
    if let Some(v) = args.fingerprint_bits {
        pairs.push(format!("fingerprint_bits={v}"));
    }
    pairs.extend(args.params.iter().cloned());
    if let Some(seed) = seed_override()? {
        pairs.push(format!("seed={seed}"));
    }
    let role = match args.role {
        Role::Server => SyncRole::Server,
        Role::Client => SyncRole::Client,
    };
    Builder::new()
        .protocol(args.protocol.into())
        .socket()
        .host(host)
        .port(port)
        .role(role)
        .connect_timeout(Duration::from_millis(args.connect_timeout_ms))
        .set("protocol-params", &pairs.join(","))
        .map_err(usage)?
        .build()
        .map_err(usage)
}

fn summary_json(ob: &Observation) -> serde_json::Value {
    serde_json::json!({
        "role": match ob.role { SyncRole::Server => "server", SyncRole::Client => "client" },
        "protocol": ob.protocol.as_str(),
        "success": ob.success,
        "bytes_transmitted": ob.bytes_transmitted,
        "communication_time_s": ob.communication_time,
        "computation_time_s": ob.computation_time,
        "total_time_s": ob.total_time(),
        "set_size": ob.local_set_size,
        "differences_recovered": ob.differences_recovered,
        "failure": ob.failure.as_ref().map(SyncFailure::code),
    })
}

fn apply_new(path: &Path, before: &BTreeSet<u64>, gs: &GenSync) -> Result<(), Failure> {
    let io_err = |e: io::Error| Failure::new("E_IO", EXIT_INPUT, format!("cannot update {}: {e}", path.display()));
    let fresh: Vec<u64> = gs.elements().difference(before).copied().collect();
    if fresh.is_empty() {
        return Ok(());
    }
    let existing = fs::read(path).map_err(io_err)?;
    let mut f = OpenOptions::new().append(true).open(path).map_err(io_err)?;
    let mut text = String::new();
    if existing.last().is_some_and(|b| *b != b'\n') {
        text.push('\n');
    }
    for e in fresh {
        text.push_str(&e.to_string());
        text.push('\n');
    }
    f.write_all(text.as_bytes()).map_err(io_err)
}

fn cmd_sync(args: &SyncArgs) -> Result<u8, Failure> {
    let elements = read_elements(&args.input)?;
    let mut gs = build_sync(args)?;
    for e in elements {
        gs.add_element(e);
    }
    let before = gs.elements().clone();
    let ok = gs.sync_begin();
    let ob = gs.observation().expect("sync ran");
    println!("{}", summary_json(ob));
    if ok {
        if args.apply {
            apply_new(&args.input, &before, &gs)?;
        }
        return Ok(EXIT_OK);
    }
    Err(match ob.failure.as_ref().expect("failed sync records a reason") {
        SyncFailure::Transport(m) => Failure::new("E_TRANSPORT", EXIT_TRANSPORT, m.clone()),
        SyncFailure::HandshakeMismatch => Failure::new(
            "E_HANDSHAKE",
            EXIT_SYNC,
            "peer rejected the handshake: protocol or parameters differ",
        ),
        other => Failure::new("E_SYNC", EXIT_SYNC, format!("sync failed: {other}")),
    })
}
