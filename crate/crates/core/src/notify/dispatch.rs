use std::collections::HashMap;
use std::sync::Arc;

use futures::future::join_all;

use super::sinks::{Connector, DeliveryError, Sink};
use super::{AlertMessage, DeliveryRecord, DeliveryStatus, SinkConfig};

/// Bounded retry schedule measured on the logical clock.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Wait before attempt `i + 2`.
    pub backoff_ms: Vec<u64>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            backoff_ms: vec![1000, 2000],
        }
    }
}

impl RetryPolicy {
    fn delay_before(&self, attempt: u32) -> u64 {
        let idx = attempt.saturating_sub(2) as usize;
        self.backoff_ms
            .get(idx)
            .or(self.backoff_ms.last())
            .copied()
            .unwrap_or(0)
    }
}

/// Fans one alert out to every enabled sink, once per event id.
pub struct Dispatcher {
    connector: Arc<dyn Connector>,
    policy: RetryPolicy,
    settled: HashMap<u64, Vec<DeliveryRecord>>,
}

impl Dispatcher {
    pub fn new(connector: Arc<dyn Connector>, policy: RetryPolicy) -> Self {
        Self {
            connector,
            policy,
            settled: HashMap::new(),
        }
    }

    pub fn records(&self, event_id: u64) -> Option<&[DeliveryRecord]> {
        self.settled.get(&event_id).map(Vec::as_slice)
    }

    /// Seeds records recovered from persistent storage.
    pub fn restore(&mut self, event_id: u64, records: Vec<DeliveryRecord>) {
        self.settled.insert(event_id, records);
    }

    /// Delivers `msg` to every enabled sink concurrently. Records come back in
    /// sink order. A repeated call for the same event returns the stored
    /// records without sending again.
    pub async fn dispatch(
        &mut self,
        event_id: u64,
        msg: &AlertMessage,
        sinks: &[SinkConfig],
        now_ms: u64,
    ) -> Vec<DeliveryRecord> {
        if let Some(done) = self.settled.get(&event_id) {
            return done.clone();
        }
        let jobs = sinks.iter().filter(|s| s.enabled).map(|cfg| {
            let policy = &self.policy;
            let connector = &self.connector;
            async move {
                if let Err(e) = cfg.validate() {
                    return DeliveryRecord {
                        event_id,
                        sink_kind: cfg.kind,
                        attempts: 1,
                        status: DeliveryStatus::Failed,
                        first_at: now_ms,
                        last_at: now_ms,
                        last_error: format!("invalid sink config: {e}"),
                    };
                }
                let sink = connector.connect(cfg);
                deliver_with_retry(event_id, sink.as_ref(), msg, policy, now_ms).await
            }
        });
        let records = join_all(jobs).await;
        self.settled.insert(event_id, records.clone());
        records
    }
}

async fn deliver_with_retry(
    event_id: u64,
    sink: &dyn Sink,
    msg: &AlertMessage,
    policy: &RetryPolicy,
    now_ms: u64,
) -> DeliveryRecord {
    let mut at = now_ms;
    let mut attempts = 0;
    let mut last_error = String::new();
    let max = policy.max_attempts.max(1);
    let status = loop {
        attempts += 1;
        if attempts > 1 {
            at += policy.delay_before(attempts);
        }
        match sink.deliver(msg).await {
            Ok(()) => {
                last_error.clear();
                break DeliveryStatus::Delivered;
            }
            Err(DeliveryError::Permanent(e)) => {
                last_error = e;
                break DeliveryStatus::Failed;
            }
            Err(DeliveryError::Transient(e)) => {
                tracing::debug!(sink = %sink.kind(), attempts, error = %e, "delivery attempt failed");
                last_error = e;
                if attempts >= max {
                    break DeliveryStatus::Exhausted;
                }
            }
        }
    };
    DeliveryRecord {
        event_id,
        sink_kind: sink.kind(),
        attempts,
        status,
        first_at: now_ms,
        last_at: at,
        last_error,
    }
}
