//! Command line and HTTP front ends for LAGO trial analysis.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod api;
pub mod commands;
pub mod config;
pub mod csvio;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

/// Serves the trial API until the process is stopped.
pub async fn serve(addr: SocketAddr, store_dir: PathBuf) -> anyhow::Result<()> {
    let store = store::Store::open(&store_dir)?;
    let app = api::router(Arc::new(store));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app).await?;
    Ok(())
}
