//! Gateway service: one event-queue consumer behind an axum HTTP/WebSocket API.

pub mod config;
pub mod error;
pub mod eventlog;
pub mod http;
pub mod recover;
pub mod runtime;
pub mod telemetry;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ets_core::geo::CityTable;
use ets_core::notify::{Connector, NetworkConnector, RetryPolicy};
use tokio::net::TcpListener;

pub use config::{ClockMode, ServiceConfig};
pub use error::StartupError;
pub use runtime::{GatewayHandle, RuntimeConfig};

fn city_table(cfg: &ServiceConfig) -> Result<CityTable, StartupError> {
    if cfg.city_table_path.is_empty() {
        return Ok(CityTable::builtin());
    }
    let path = Path::new(&cfg.city_table_path);
    CityTable::load(path).map_err(|e| StartupError::CityTable {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Validates the config and starts the event-queue consumer.
pub async fn start_runtime(cfg: &ServiceConfig, connector: Arc<dyn Connector>) -> Result<GatewayHandle, StartupError> {
    cfg.validate()?;
    let table = city_table(cfg)?;
    let rc = RuntimeConfig {
        thresholds: cfg.thresholds.clone(),
        sinks: cfg.sinks.clone(),
        clock: cfg.clock,
        log_path: PathBuf::from(&cfg.log_path),
        geocoder: Arc::new(table),
        connector,
        retry: RetryPolicy::default(),
    };
    runtime::start(rc).await.map_err(|source| StartupError::Log {
        path: PathBuf::from(&cfg.log_path),
        source,
    })
}

/// A started gateway whose HTTP server is not yet running.
pub struct Gateway {
    pub handle: GatewayHandle,
    pub addr: SocketAddr,
    listener: TcpListener,
}

impl Gateway {
    pub async fn serve(self) -> std::io::Result<()> {
        axum::serve(self.listener, http::router(self.handle)).await
    }
}

/// Starts everything except the HTTP accept loop. `listener` overrides the
/// configured port (tests pass one bound to port 0).
pub async fn prepare(
    cfg: &ServiceConfig,
    listener: Option<TcpListener>,
    connector: Arc<dyn Connector>,
) -> Result<Gateway, StartupError> {
    let handle = start_runtime(cfg, connector).await?;
    let listener = match listener {
        Some(l) => l,
        None => bind(&format!("127.0.0.1:{}", cfg.port)).await?,
    };
    if let Some(port) = cfg.telemetry_port {
        let tl = bind(&format!("127.0.0.1:{port}")).await?;
        tokio::spawn(telemetry::serve_telemetry(tl, handle.clone()));
    }
    let addr = listener.local_addr().map_err(|source| StartupError::Bind {
        addr: format!("port {}", cfg.port),
        source,
    })?;
    Ok(Gateway { handle, addr, listener })
}

async fn bind(addr: &str) -> Result<TcpListener, StartupError> {
    TcpListener::bind(addr).await.map_err(|source| StartupError::Bind {
        addr: addr.to_string(),
        source,
    })
}

/// Runs the service with real network sinks until the server stops.
pub async fn serve(cfg: &ServiceConfig) -> anyhow::Result<()> {
    let gw = prepare(cfg, None, Arc::new(NetworkConnector::default())).await?;
    tracing::info!(addr = %gw.addr, "gateway listening");
    gw.serve().await?;
    Ok(())
}
