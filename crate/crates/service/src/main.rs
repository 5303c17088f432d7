use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use clap::Parser;
use greenhouse_service::store::RunStore;
use greenhouse_service::{router, AppState, Settings};

#[derive(Parser)]
#[command(
    name = "greenhouse-service",
    version,
    about = "HTTP API for greenhouse simulation runs"
)]
struct Args {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Directory holding the run store.
    #[arg(long, default_value = "runs")]
    store: PathBuf,
    #[arg(long, default_value = "fixtures")]
    fixtures: PathBuf,
    /// Base for relative fixture paths in scenario documents.
    #[arg(long, default_value = ".")]
    data_root: PathBuf,
    /// Replay fixtures only.
    #[arg(long)]
    offline: bool,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    tracing_subscriber::fmt::init();
    let args = Args::parse();
    let store = RunStore::open(&args.store).map_err(std::io::Error::other)?;
    let offline = args.offline || greenhouse_core::external_data::is_offline();
    let state = Arc::new(AppState {
        store,
        settings: Settings {
            fixtures: args.fixtures,
            data_root: args.data_root,
            offline,
        },
    });
    let listener = tokio::net::TcpListener::bind(args.addr).await?;
    tracing::info!(addr = %args.addr, offline, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
