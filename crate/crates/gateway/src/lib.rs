//! The base-station gateway: snapshot publication, bounded history and the
//! client-facing TCP line protocol and HTTP+JSON services.

pub mod http;
pub mod request;
pub mod series;
pub mod snapshot;
pub mod state;
pub mod tcp;

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

pub use request::{handle_line, handle_request, ClientRequest, ClientResponse, ErrorCode, ErrorResponse};
pub use series::{SeriesPoint, SeriesStore};
pub use snapshot::{build_snapshot, parse_snapshot, render_snapshot, Entry, Snapshot, SnapshotError};
pub use state::{Gateway, GatewayOptions, Publication, PublishError, Published};

#[derive(Debug, Error)]
#[error("cannot bind {addr}: {source}")]
pub struct BindError {
    pub addr: String,
    pub source: std::io::Error,
}

pub async fn bind(addr: &str) -> Result<TcpListener, BindError> {
    TcpListener::bind(addr).await.map_err(|source| BindError { addr: addr.to_string(), source })
}

/// Running TCP and/or HTTP services over one gateway.
pub struct Server {
    gateway: Arc<Gateway>,
    pub tcp_addr: Option<SocketAddr>,
    pub http_addr: Option<SocketAddr>,
    tasks: Vec<JoinHandle<()>>,
}

/// Starts serving on already-bound listeners.
pub fn serve(gateway: Arc<Gateway>, tcp: Option<TcpListener>, http: Option<TcpListener>) -> Server {
    let mut tasks = Vec::new();
    let tcp_addr = tcp.as_ref().and_then(|l| l.local_addr().ok());
    let http_addr = http.as_ref().and_then(|l| l.local_addr().ok());
    if let Some(listener) = tcp {
        tasks.push(tokio::spawn(tcp::serve_tcp(listener, gateway.clone())));
    }
    if let Some(listener) = http {
        let router = http::router(gateway.clone());
        tasks.push(tokio::spawn(async move {
            if let Err(e) = axum::serve(listener, router).await {
                log::error!("http server stopped: {e}");
            }
        }));
    }
    Server { gateway, tcp_addr, http_addr, tasks }
}

impl Server {
    pub fn gateway(&self) -> &Arc<Gateway> {
        &self.gateway
    }

    /// Closes the feed, waits up to `grace` for streaming clients to drain,
    /// then stops accepting connections.
    pub async fn shutdown(self, grace: Duration) {
        self.gateway.close();
        let deadline = tokio::time::Instant::now() + grace;
        while self.gateway.active_streams() > 0 && tokio::time::Instant::now() < deadline {
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
        for t in self.tasks {
            t.abort();
        }
    }
}
