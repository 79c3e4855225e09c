//! Optional TCP listener for framed wearable telemetry.

use ets_core::channel::{ByteChannel, TcpChannel};
use ets_core::protocol::Deframer;
use tokio::net::TcpListener;

use crate::runtime::GatewayHandle;

/// Accepts connections forever; each one gets its own deframer.
pub async fn serve_telemetry(listener: TcpListener, handle: GatewayHandle) {
    loop {
        let (stream, peer) = match listener.accept().await {
            Ok(c) => c,
            Err(e) => {
                tracing::warn!(error = %e, "telemetry accept failed");
                continue;
            }
        };
        let h = handle.clone();
        tokio::spawn(async move {
            let mut ch = TcpChannel::from_stream(stream);
            let mut deframer = Deframer::new();
            loop {
                let chunk = match ch.read_chunk().await {
                    Ok(c) if c.is_empty() => break,
                    Ok(c) => c,
                    Err(e) => {
                        tracing::debug!(error = %e, %peer, "telemetry read failed");
                        break;
                    }
                };
                for p in deframer.feed(&chunk) {
                    if h.packet(p).await.is_err() {
                        return;
                    }
                }
            }
            let s = deframer.stats();
            tracing::info!(%peer, ok = s.packets_ok, crc_failures = s.crc_failures, resyncs = s.resyncs, "telemetry link closed");
        });
    }
}
