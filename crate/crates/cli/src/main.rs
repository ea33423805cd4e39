//! `objk`: operator command line for kernel stores, fixtures and
//! compositions.
//!
//! Without `--server` every invocation starts an embedded service on a
//! loopback port and drives it through the HTTP client, so the command line
//! and remote operation share one code path.
//!
//! Exit codes: 0 success, 1 divergence / mismatch / corruption, 2 usage or
//! parse error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use objkernel::wire::{ComposeRequest, ErrorKind};
use objkernel::{Allocator, KernelConfig, DEFAULT_BUDGET};
use objkernel_client::{Client, ClientError};
use objkernel_service::ServiceConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AllocatorKind {
    Seq,
    Hash,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    /// Aligned human-readable table.
    Table,
    /// One whitespace-separated record per line.
    Lines,
}

#[derive(Debug, Parser)]
#[command(name = "objk", version, about = "Deterministic object-coordination kernel")]
struct Cli {
    /// Store file. Allocator, salt and budget are only honored when the
    /// store is created; afterwards its header governs.
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "seq")]
    allocator: AllocatorKind,
    /// Hash-allocator salt (UTF-8 bytes).
    #[arg(long, global = true, default_value = "")]
    salt: String,
    #[arg(long, global = true, default_value_t = DEFAULT_BUDGET)]
    budget: u64,
    /// Scheduler workers; 1 submits strictly sequentially.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[arg(long, global = true, value_enum, default_value = "table")]
    format: Format,
    /// Talk to a running service instead of an embedded one.
    #[arg(long, global = true)]
    server: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Submit every transaction in FILE, one `[program,input]` per line.
    Exec { file: PathBuf },
    /// Re-execute the store from empty state and compare every record.
    Verify,
    /// Truncate a torn tail and report the recovered state.
    Recover,
    /// Print one object's log, or the transaction summary.
    Dump { object: Option<String> },
    /// Run a built-in fixture on a fresh instance.
    Demo { name: String },
    /// Run a scenario over a multi-instance topology.
    Compose {
        #[arg(long)]
        topology: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
    },
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Failure {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    fn mismatch(message: impl Into<String>) -> Failure {
        Failure {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Failure {
        let code = match e.kind() {
            Some(ErrorKind::Parse | ErrorKind::Usage) => 2,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    match runtime.block_on(run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("objk: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn kernel_config(cli: &Cli) -> KernelConfig {
    let allocator = match cli.allocator {
        AllocatorKind::Seq => Allocator::Sequential,
        AllocatorKind::Hash => Allocator::Hash {
            salt: cli.salt.clone().into_bytes(),
        },
    };
    KernelConfig::new(allocator, cli.budget)
}

async fn connect(cli: &Cli) -> Result<Client, Failure> {
    if let Some(url) = &cli.server {
        return Ok(Client::new(url.clone()));
    }
    let config = ServiceConfig {
        store: cli.store.clone(),
        kernel: kernel_config(cli),
        workers: cli.workers,
    };
    let addr = objkernel_service::spawn(config, "127.0.0.1:0")
        .await
        .map_err(|e| Failure::mismatch(format!("cannot start embedded service: {e}")))?;
    Ok(Client::new(format!("http://{addr}")))
}

/// Commands that audit an existing store need one, unless a remote server
/// owns it.
fn require_store(cli: &Cli) -> Outcome {
    if cli.server.is_some() {
        return Ok(());
    }
    match &cli.store {
        None => Err(Failure::usage("this command needs --store")),
        Some(p) if !p.exists() => Err(Failure::usage(format!("store {} does not exist", p.display()))),
        Some(_) => Ok(()),
    }
}

async fn run(cli: Cli) -> Outcome {
    match &cli.command {
        Command::Exec { file } => exec(&cli, file).await,
        Command::Verify => {
            require_store(&cli)?;
            let v = connect(&cli).await?.verify().await?;
            match v.problem {
                None if v.ok => {
                    println!("verified {} transactions", v.transactions);
                    Ok(())
                }
                problem => Err(Failure::mismatch(format!(
                    "verification failed: {}",
                    problem.unwrap_or_else(|| "unknown problem".to_owned())
                ))),
            }
        }
        Command::Recover => {
            require_store(&cli)?;
            let r = connect(&cli).await?.recover().await?;
            println!(
                "recovered {} transactions, {} log entries; discarded {} torn bytes",
                r.transactions, r.k_len, r.torn_bytes
            );
            Ok(())
        }
        Command::Dump { object } => {
            require_store(&cli)?;
            dump(&cli, object.as_deref()).await
        }
        Command::Demo { name } => {
            let d = connect(&cli).await?.demo(name, Some(cli.workers)).await?;
            match cli.format {
                Format::Table => print!("{}", d.table),
                Format::Lines => d.lines.iter().for_each(|l| println!("{l}")),
            }
            if d.passed {
                Ok(())
            } else {
                Err(Failure::mismatch(format!("fixture {} did not match its golden trace", d.name)))
            }
        }
        Command::Compose { topology, scenario } => compose(&cli, topology, scenario).await,
    }
}

/// Transaction lines of a file with their 1-based line numbers; blank lines
/// and `#` comments are skipped.
fn transaction_lines(text: &str) -> Vec<(usize, String)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(n, l)| (n, l.to_owned()))
        .collect()
}

async fn exec(cli: &Cli, file: &Path) -> Outcome {
    let text = fs::read_to_string(file).map_err(|e| Failure::usage(format!("{}: {e}", file.display())))?;
    let lines = transaction_lines(&text);
    let client = connect(cli).await?;
    let texts = lines.iter().map(|(_, l)| l.clone()).collect();
    let resp = match client.submit(texts, Some(cli.workers)).await {
        Err(ClientError::Api { error, .. }) if error.kind == ErrorKind::Parse => {
            let at = error
                .index
                .and_then(|i| lines.get(i))
                .map(|(n, _)| format!("{}:{n}: ", file.display()))
                .unwrap_or_default();
            return Err(Failure::usage(format!(
                "{at}{}; nothing was submitted",
                error.message
            )));
        }
        r => r?,
    };
    match cli.format {
        Format::Lines => {
            for o in &resp.outcomes {
                println!("{} {} {}", o.seq, status(o.committed), o.result);
            }
        }
        Format::Table => {
            let w = resp.outcomes.iter().map(|o| o.result.len()).max().unwrap_or(6).max(6);
            println!("{:>4}  {:6}  {:w$}  {:>6}  Externals", "Tx", "Status", "Result", "Steps");
            for o in &resp.outcomes {
                println!(
                    "{:>4}  {:6}  {:w$}  {:>6}  {}",
                    o.seq,
                    status(o.committed),
                    o.result,
                    o.steps,
                    o.externals
                );
                if let Some(reason) = &o.abort_reason {
                    println!("      abort: {reason}");
                }
            }
        }
    }
    Ok(())
}

fn status(committed: bool) -> &'static str {
    if committed {
        "COMMIT"
    } else {
        "ABORT"
    }
}

async fn dump(cli: &Cli, object: Option<&str>) -> Outcome {
    let client = connect(cli).await?;
    match object {
        Some(id) => {
            let log = client.object_log(id).await?;
            match cli.format {
                Format::Lines => {
                    for e in &log.entries {
                        println!("{} {}", e.caller, e.message);
                    }
                }
                Format::Table => {
                    let w = log.entries.iter().map(|e| e.caller.len()).max().unwrap_or(6).max(6);
                    println!("object {}", log.object);
                    println!("{:>4}  {:w$}  Message", "#", "Caller");
                    for (i, e) in log.entries.iter().enumerate() {
                        println!("{i:>4}  {:w$}  {}", e.caller, e.message);
                    }
                }
            }
        }
        None => {
            let info = client.info().await?;
            let records = client.transactions().await?;
            match cli.format {
                Format::Lines => {
                    for r in &records {
                        println!("{} {} {} {}", r.seq, r.tx, r.result, r.externals.len());
                    }
                }
                Format::Table => {
                    println!(
                        "allocator {}{}  budget {}  transactions {}  log entries {}  objects {}",
                        info.allocator,
                        if info.salt.is_empty() { String::new() } else { format!(" (salt {})", info.salt) },
                        info.budget,
                        info.transactions,
                        info.k_len,
                        info.objects
                    );
                    let w = records.iter().map(|r| r.result.len()).max().unwrap_or(6).max(6);
                    println!("{:>4}  {:w$}  {:>9}  Transaction", "Tx", "Result", "Externals");
                    for r in &records {
                        println!("{:>4}  {:w$}  {:>9}  {}", r.seq, r.result, r.externals.len(), r.tx);
                    }
                }
            }
        }
    }
    Ok(())
}

async fn compose(cli: &Cli, topology: &Path, scenario: &Path) -> Outcome {
    let read = |p: &Path| fs::read_to_string(p).map_err(|e| Failure::usage(format!("{}: {e}", p.display())));
    let base = topology
        .parent()
        .map(|p| if p.as_os_str().is_empty() { Path::new(".") } else { p })
        .unwrap_or(Path::new("."));
    let request = ComposeRequest {
        topology: read(topology)?,
        scenario: read(scenario)?,
        base_dir: Some(base.display().to_string()),
    };
    let report = connect(cli).await?.compose(&request).await?;
    for l in &report.lines {
        println!("{l}");
    }
    if cli.format == Format::Table {
        println!(
            "{} mismatches, {} dead letters",
            report.mismatches, report.dead_letters
        );
    }
    if report.mismatches > 0 {
        return Err(Failure::mismatch(format!(
            "{} scenario steps did not match their expectation",
            report.mismatches
        )));
    }
    Ok(())
}
