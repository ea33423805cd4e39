use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use objkernel::{Allocator, KernelConfig, DEFAULT_BUDGET};
use objkernel_service::{router, AppState, ServiceConfig};
use tokio::net::TcpListener;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AllocatorKind {
    Seq,
    Hash,
}

/// Serve one kernel instance over HTTP.
#[derive(Debug, Parser)]
struct Args {
    #[arg(long, default_value = "127.0.0.1:7878")]
    addr: String,
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "seq")]
    allocator: AllocatorKind,
    #[arg(long, default_value = "")]
    salt: String,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    let args = Args::parse();
    let allocator = match args.allocator {
        AllocatorKind::Seq => Allocator::Sequential,
        AllocatorKind::Hash => Allocator::Hash {
            salt: args.salt.into_bytes(),
        },
    };
    let config = ServiceConfig {
        store: args.store,
        kernel: KernelConfig::new(allocator, args.budget),
        workers: args.workers,
    };
    let listener = TcpListener::bind(&args.addr).await?;
    println!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(config))).await
}
