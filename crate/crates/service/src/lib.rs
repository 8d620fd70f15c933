//! Network-facing ingestion and query service for the contact-tracing platform.
//!
//! State lives in a [`proxtrace_core::Platform`]; every change is first appended to a JSON
//! Lines event log in the data directory and replayed from it on restart.

pub mod client;
pub mod clock;
pub mod config;
pub mod eventlog;
pub mod http;
pub mod node;

use std::io;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use proxtrace_core::platform::PlatformError;
use thiserror::Error;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;
use tracing::{info, warn};

pub use client::{run_remote, RemoteError, ServiceClient};
pub use clock::{Clock, ManualClock, SystemClock};
pub use config::ServiceConfig;
pub use eventlog::{EventLog, EventLogEntry, LogError};
pub use http::{router, AppState};
pub use node::Node;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("data directory {0}")]
    DataDir(String),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("replaying log entry {sequence}: {reason}")]
    Replay { sequence: u64, reason: String },
    #[error(transparent)]
    Platform(#[from] PlatformError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A running service.
pub struct ServiceHandle {
    addr: SocketAddr,
    state: AppState,
    shutdown: oneshot::Sender<()>,
    server: JoinHandle<io::Result<()>>,
    ticker: Option<JoinHandle<()>>,
}

impl ServiceHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn state(&self) -> &AppState {
        &self.state
    }

    /// Stops accepting connections and waits for in-flight requests.
    pub async fn shutdown(self) -> io::Result<()> {
        if let Some(t) = self.ticker {
            t.abort();
        }
        let _ = self.shutdown.send(());
        self.server.await.map_err(io::Error::other)?
    }

    /// Resolves when the server stops on its own.
    pub async fn wait(self) -> io::Result<()> {
        self.server.await.map_err(io::Error::other)?
    }
}

pub async fn serve(config: ServiceConfig) -> Result<ServiceHandle, ServiceError> {
    serve_with_clock(config, Arc::new(SystemClock)).await
}

/// Recovers state from the data directory, binds, and starts serving plus the periodic
/// assessment task. Must be called within a multi-threaded Tokio runtime.
pub async fn serve_with_clock(config: ServiceConfig, clock: Arc<dyn Clock>) -> Result<ServiceHandle, ServiceError> {
    let node = {
        let config = config.clone();
        tokio::task::spawn_blocking(move || Node::open(&config, clock))
            .await
            .map_err(io::Error::other)??
    };
    if node.recovery().truncated_bytes > 0 {
        warn!(bytes = node.recovery().truncated_bytes, "recovered from a torn log tail");
    }
    info!(entries = node.log_sequence(), "state recovered from event log");

    let listener = tokio::net::TcpListener::bind(config.bind)
        .await
        .map_err(|source| ServiceError::Bind { addr: config.bind, source })?;
    let addr = listener.local_addr()?;

    let interval = Duration::from_secs(config.assessment_interval_secs);
    let state = AppState::new(node, interval);
    let app = router(state.clone());
    let (tx, rx) = oneshot::channel::<()>();
    let server = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });

    let ticker = (!interval.is_zero()).then(|| {
        let state = state.clone();
        tokio::spawn(async move {
            let mut timer = tokio::time::interval_at(tokio::time::Instant::now() + interval, interval);
            loop {
                timer.tick().await;
                let ids: Vec<String> = state.read(|n| n.platform().regions().map(|r| r.region_id.clone()).collect());
                for id in ids {
                    if let Err(e) = state.reassess(&id).await {
                        warn!(region = %id, error = %e, "periodic assessment failed");
                    }
                }
            }
        })
    });

    info!(%addr, "listening");
    Ok(ServiceHandle {
        addr,
        state,
        shutdown: tx,
        server,
        ticker,
    })
}
