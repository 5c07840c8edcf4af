//! `xrpipe`: validate, run and benchmark pipelines.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use log::error;
use xrpipe_core::bench::{
    bench_local, bench_remote, parse_kind, render_table, BenchTable, RemoteBenchOptions,
    TableFormat, WARMUP_FRAMES,
};
use xrpipe_core::kernels::Fill;
use xrpipe_core::pipeline::{prepare, ConfigError, RuntimeOptions};
use xrpipe_core::{
    validate_config, CodecId, KernelRegistry, PipelineConfig, Resolution, Role, RunLimit,
    TransferMode,
};

#[derive(Parser)]
#[command(name = "xrpipe", version, about = "Split-rendering stream pipelines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a deployment config; prints OK or one `CODE: message` per problem.
    Validate { config: PathBuf },
    /// Run the kernels a role hosts.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "all")]
        role: Role,
        /// Stop sources after this many seconds (fractions allowed).
        #[arg(long)]
        duration: Option<f64>,
        /// Stop each source after this many frames.
        #[arg(long)]
        frames: Option<u64>,
        /// Write the full run report, including per-frame records, as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Seconds a server waits for its peer.
        #[arg(long, default_value_t = 60.0)]
        accept_timeout: f64,
    },
    /// Local transfer latency, zero-copy against copy.
    BenchLocal {
        #[arg(long, value_delimiter = ',', default_value = "720p,1080p,1440p,2160p")]
        resolutions: Vec<Resolution>,
        #[arg(long, default_value_t = 1000)]
        frames: u64,
        /// zerocopy, copy, or both as a list.
        #[arg(long, value_delimiter = ',', default_value = "zerocopy", value_parser = parse_kind)]
        kind: Vec<TransferMode>,
        #[arg(long, default_value = "markdown")]
        format: TableFormat,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write every cell, with self-checks, as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Latency and bytes on the wire over a loopback link.
    BenchRemote {
        #[arg(long, value_delimiter = ',', default_value = "720p,1080p,1440p,2160p")]
        resolutions: Vec<Resolution>,
        #[arg(long, default_value_t = 1000)]
        frames: u64,
        #[arg(long, default_value = "raw")]
        codec: CodecId,
        #[arg(long, default_value = "127.0.0.1:0")]
        addr: String,
        /// constant:<byte>, gradient, or random:<seed>.
        #[arg(long, default_value = "constant:90")]
        fill: Fill,
        #[arg(long, default_value = "markdown")]
        format: TableFormat,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("XRPIPE_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { config } => validate(&config),
        Command::Run {
            config,
            role,
            duration,
            frames,
            report,
            accept_timeout,
        } => run(
            &config,
            role,
            duration,
            frames,
            report.as_deref(),
            accept_timeout,
        ),
        Command::BenchLocal {
            resolutions,
            frames,
            kind,
            format,
            out,
            json,
        } => bench_local_cmd(
            &resolutions,
            frames,
            &kind,
            format,
            out.as_deref(),
            json.as_deref(),
        ),
        Command::BenchRemote {
            resolutions,
            frames,
            codec,
            addr,
            fill,
            format,
            out,
            json,
        } => {
            let opts = RemoteBenchOptions {
                codec,
                addr,
                fill,
                warmup: WARMUP_FRAMES,
            };
            bench_remote(&resolutions, frames, &opts)
                .map_err(|e| e.to_string())
                .and_then(|cells| {
                    let mut table = BenchTable::new();
                    table.extend(cells);
                    emit_table(&table, format, out.as_deref(), json.as_deref())
                })
                .map(|()| ExitCode::SUCCESS)
        }
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn load(path: &Path) -> Result<PipelineConfig, String> {
    PipelineConfig::from_file(path).map_err(|e| match e {
        ConfigError::Io { .. } => e.to_string(),
        _ => format!("{}: {e}", path.display()),
    })
}

fn validate(path: &Path) -> Result<ExitCode, String> {
    let cfg = load(path)?;
    match validate_config(&cfg, &KernelRegistry::with_builtins()) {
        Ok(()) => {
            println!("OK");
            Ok(ExitCode::SUCCESS)
        }
        Err(errs) => {
            for e in errs {
                println!("{e}");
            }
            Ok(ExitCode::FAILURE)
        }
    }
}

fn run(
    path: &Path,
    role: Role,
    duration: Option<f64>,
    frames: Option<u64>,
    report_path: Option<&Path>,
    accept_timeout: f64,
) -> Result<ExitCode, String> {
    let secs = |s: f64, what: &str| {
        Duration::try_from_secs_f64(s)
            .map_err(|_| format!("{what} must be a non-negative number of seconds"))
    };
    let limit = RunLimit {
        duration: duration.map(|d| secs(d, "--duration")).transpose()?,
        frames,
    };
    let opts = RuntimeOptions {
        accept_timeout: secs(accept_timeout, "--accept-timeout")?,
        ..RuntimeOptions::default()
    };
    let cfg = load(path)?;
    let prepared =
        prepare(&cfg, &KernelRegistry::with_builtins(), role, opts).map_err(|e| e.to_string())?;
    for (edge, addr) in prepared.listen_addrs() {
        println!("listening on {addr} for {edge}");
    }
    let _ = std::io::stdout().flush();
    let running = prepared.connect().map_err(|e| e.to_string())?;
    println!("running {} kernels as {role}", running.kernel_names().len());
    let _ = std::io::stdout().flush();

    let report = running.run_for(limit);
    print!("{}", report.render_text());
    if let Some(p) = report_path {
        let json = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
        fs::write(p, json).map_err(|e| format!("cannot write {}: {e}", p.display()))?;
    }
    if report.has_errors() {
        error!("run finished with errors");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn bench_local_cmd(
    resolutions: &[Resolution],
    frames: u64,
    modes: &[TransferMode],
    format: TableFormat,
    out: Option<&Path>,
    json: Option<&Path>,
) -> Result<ExitCode, String> {
    let mut table = BenchTable::new();
    for &mode in modes {
        table.extend(bench_local(resolutions, frames, mode).map_err(|e| e.to_string())?);
    }
    emit_table(&table, format, out, json)?;
    Ok(ExitCode::SUCCESS)
}

fn emit_table(
    table: &BenchTable,
    format: TableFormat,
    out: Option<&Path>,
    json: Option<&Path>,
) -> Result<(), String> {
    let text = render_table(table, format);
    match out {
        Some(p) => fs::write(p, &text).map_err(|e| format!("cannot write {}: {e}", p.display()))?,
        None => print!("{text}"),
    }
    if let Some(p) = json {
        let body = serde_json::to_string_pretty(table).map_err(|e| e.to_string())?;
        fs::write(p, body).map_err(|e| format!("cannot write {}: {e}", p.display()))?;
    }
    Ok(())
}
