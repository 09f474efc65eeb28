//! HTTP service hosting patch annotation studies: accounts, dataset upload,
//! per-participant swipe sessions, CSV export and agreement reports.
//!
//! Everything is persisted in one SQLite file plus a content-addressed
//! image directory. Annotation events are append-only; each participant's
//! session is rebuilt from them on first use and then kept in memory.

pub mod api;
pub mod auth;
pub mod blobs;
pub mod config;
pub mod error;
pub mod state;
pub mod store;

use std::sync::Arc;

pub use api::router;
pub use config::Config;
pub use state::AppState;

/// Binds `config.listen_addr` and serves until ctrl-c.
pub async fn serve(config: Config) -> anyhow::Result<()> {
    let addr = config.listen_addr;
    let state = Arc::new(AppState::open(config)?);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on http://{}", listener.local_addr()?);
    serve_on(listener, state, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}

/// Serves on an already bound listener until `shutdown` resolves.
pub async fn serve_on(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> anyhow::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await?;
    Ok(())
}
