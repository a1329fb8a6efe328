//! REST service and command-line tool over `graphrule-core`.

pub mod api;
pub mod cli;
pub mod config;
pub mod session;

pub use api::{router, AppState};
pub use config::{Mode, ServiceConfig};
pub use session::Session;

use anyhow::Context;

/// Loads the session and serves the API until Ctrl-C.
pub async fn serve(config: ServiceConfig, host: &str) -> anyhow::Result<()> {
    let port = config.port;
    let session = tokio::task::spawn_blocking(move || Session::open(config))
        .await?
        .context("loading the session")?;
    if let Some(report) = &session.load_report {
        for e in &report.errors {
            tracing::warn!("skipped {e}");
        }
        tracing::info!(rows = report.loaded, "dataset loaded");
    }
    tracing::info!(mode = session.mode().as_str(), "starting service");
    let app = router(AppState::new(session));
    let listener = tokio::net::TcpListener::bind((host, port))
        .await
        .with_context(|| format!("binding {host}:{port}"))?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
