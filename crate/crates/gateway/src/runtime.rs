//! The single event-queue consumer that owns the engine and the log.
//!
//! HTTP handlers, the trace replayer, the telemetry listener and the wall
//! ticker are producers; they talk to the consumer only through [`Input`]
//! messages. WebSocket clients read a broadcast fan-out of logged events.

use std::io;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use async_trait::async_trait;
use chrono::{DateTime, TimeZone, Utc};
use ets_client::wire::{Command, ContactRegistry, EntryBody, EventLogEntry, StatusBody};
use ets_core::engine::{Engine, EngineError, EngineState, MotionSample, PanicOutcome, Thresholds, Transition, VitalSample};
use ets_core::geo::{parse_gga, GeoFix, Geocoder};
use ets_core::notify::{
    compose_message, compose_without_location, Connector, DeliveryRecord, Dispatcher, RetryPolicy, SinkConfig,
    SinkKind,
};
use ets_core::protocol::GeneralPacket;
use ets_core::sim::{self, ReplayReport, ReplaySink, SimError, TraceEvent, TraceRecord};
use serde_json::{json, Value};
use tokio::sync::{broadcast, mpsc, oneshot, Mutex};

use crate::config::ClockMode;
use crate::eventlog::EventLog;
use crate::recover::{replay_log, TriggeredEpisode};

/// Backlog after which a live subscriber is dropped.
pub const LIVE_BACKLOG: usize = 1024;
const QUEUE_DEPTH: usize = 256;
const WALL_TICK: Duration = Duration::from_millis(100);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Panic,
    Cancel,
    Send,
    Reset,
}

#[derive(Debug)]
pub enum CommandOutcome {
    /// A countdown was started.
    Started(EngineState),
    Done(EngineState),
    /// Accepted but had no effect.
    Ignored(EngineState, String),
    Rejected(EngineError),
    Failed(String),
}

pub struct LiveSubscription {
    pub snapshot: String,
    pub rx: broadcast::Receiver<Arc<str>>,
}

enum Input {
    Record(TraceRecord),
    Packet(GeneralPacket),
    Command(CommandKind, oneshot::Sender<CommandOutcome>),
    Contacts(ContactRegistry, oneshot::Sender<io::Result<()>>),
    Tick,
    Now(oneshot::Sender<u64>),
    Status(oneshot::Sender<StatusBody>),
    Events(u64, oneshot::Sender<Vec<EventLogEntry>>),
    Subscribe(oneshot::Sender<LiveSubscription>),
    Barrier(oneshot::Sender<()>),
}

pub struct RuntimeConfig {
    pub thresholds: Thresholds,
    pub sinks: Vec<SinkConfig>,
    pub clock: ClockMode,
    pub log_path: PathBuf,
    pub geocoder: Arc<dyn Geocoder>,
    pub connector: Arc<dyn Connector>,
    pub retry: RetryPolicy,
}

#[derive(Debug, thiserror::Error)]
#[error("gateway event queue has shut down")]
pub struct QueueClosed;

/// Cloneable producer side of the event queue.
#[derive(Clone)]
pub struct GatewayHandle {
    tx: mpsc::Sender<Input>,
    replay_lock: Arc<Mutex<()>>,
}

impl GatewayHandle {
    async fn ask<T>(&self, make: impl FnOnce(oneshot::Sender<T>) -> Input) -> Result<T, QueueClosed> {
        let (tx, rx) = oneshot::channel();
        self.tx.send(make(tx)).await.map_err(|_| QueueClosed)?;
        rx.await.map_err(|_| QueueClosed)
    }

    pub async fn command(&self, kind: CommandKind) -> Result<CommandOutcome, QueueClosed> {
        self.ask(|tx| Input::Command(kind, tx)).await
    }

    pub async fn put_contacts(&self, c: ContactRegistry) -> Result<io::Result<()>, QueueClosed> {
        self.ask(|tx| Input::Contacts(c, tx)).await
    }

    pub async fn status(&self) -> Result<StatusBody, QueueClosed> {
        self.ask(Input::Status).await
    }

    pub async fn now(&self) -> Result<u64, QueueClosed> {
        self.ask(Input::Now).await
    }

    pub async fn events(&self, since: u64) -> Result<Vec<EventLogEntry>, QueueClosed> {
        self.ask(|tx| Input::Events(since, tx)).await
    }

    pub async fn subscribe(&self) -> Result<LiveSubscription, QueueClosed> {
        self.ask(Input::Subscribe).await
    }

    /// Resolves once every input queued before it has been processed.
    pub async fn barrier(&self) -> Result<(), QueueClosed> {
        self.ask(Input::Barrier).await
    }

    pub async fn packet(&self, p: GeneralPacket) -> Result<(), QueueClosed> {
        self.tx.send(Input::Packet(p)).await.map_err(|_| QueueClosed)
    }

    /// Replays a trace offset to the current logical time. One replay runs
    /// at a time.
    pub async fn replay(&self, records: &[TraceRecord], speed: f64) -> Result<ReplayReport, SimError> {
        let _guard = self.replay_lock.lock().await;
        let closed = |_| SimError::Sink("gateway event queue has shut down".into());
        let base = self.now().await.map_err(closed)?;
        let mut sink = QueueSink {
            tx: self.tx.clone(),
            base,
        };
        let report = sim::replay(records, speed, &mut sink).await?;
        self.barrier().await.map_err(closed)?;
        Ok(report)
    }
}

struct QueueSink {
    tx: mpsc::Sender<Input>,
    base: u64,
}

#[async_trait]
impl ReplaySink for QueueSink {
    async fn deliver(&mut self, record: &TraceRecord) -> Result<(), String> {
        let mut rec = record.clone();
        rec.t_ms += self.base;
        self.tx
            .send(Input::Record(rec))
            .await
            .map_err(|_| "gateway event queue has shut down".to_string())
    }
}

fn wall_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Logical milliseconds map onto UTC from the Unix epoch.
pub fn logical_to_utc(t_ms: u64) -> DateTime<Utc> {
    Utc.timestamp_millis_opt(t_ms as i64).single().unwrap_or_default()
}

struct Runtime {
    engine: Engine,
    log: EventLog,
    entries: Vec<EventLogEntry>,
    dispatcher: Dispatcher,
    sinks: Vec<SinkConfig>,
    contacts: Option<ContactRegistry>,
    last_fix: Option<GeoFix>,
    geocoder: Arc<dyn Geocoder>,
    clock: ClockMode,
    logical_now: u64,
    live: broadcast::Sender<Arc<str>>,
}

/// Opens the log, rebuilds state from it and starts the consumer task.
pub async fn start(cfg: RuntimeConfig) -> io::Result<GatewayHandle> {
    let (log, entries) = EventLog::open(&cfg.log_path)?;
    let recovered = replay_log(&entries, &cfg.thresholds).map_err(|e| io::Error::other(e.to_string()))?;
    for m in &recovered.mismatches {
        tracing::warn!(%m, "event log replay mismatch");
    }
    let mut dispatcher = Dispatcher::new(cfg.connector.clone(), cfg.retry.clone());
    // The open episode (if any) stays unsettled so its missing sinks can still be sent.
    let open_id = recovered.episode.as_ref().map(|e| e.event_id);
    for (id, recs) in &recovered.deliveries {
        if Some(*id) != open_id {
            dispatcher.restore(*id, recs.clone());
        }
    }
    let (live, _) = broadcast::channel(LIVE_BACKLOG);
    let mut rt = Runtime {
        engine: recovered.engine,
        log,
        entries,
        dispatcher,
        sinks: cfg.sinks,
        contacts: recovered.contacts,
        last_fix: recovered.last_fix,
        geocoder: cfg.geocoder,
        clock: cfg.clock,
        logical_now: recovered.last_t_ms,
        live,
    };
    if !rt.entries.is_empty() {
        tracing::info!(
            entries = rt.entries.len(),
            state = rt.engine.state().name(),
            "recovered state from event log"
        );
    }
    // At-least-once: an episode that triggered but never finished its fan-out is resent.
    if let Some(ep) = recovered.episode {
        if matches!(rt.engine.state(), EngineState::Triggered { .. }) {
            let done = recovered.deliveries.get(&ep.event_id).cloned().unwrap_or_default();
            rt.finish_dispatch(&ep, &done).await;
        }
    }

    let (tx, mut rx) = mpsc::channel(QUEUE_DEPTH);
    let handle = GatewayHandle {
        tx,
        replay_lock: Arc::new(Mutex::new(())),
    };
    if rt.clock == ClockMode::Wall {
        let ticker = handle.tx.clone();
        tokio::spawn(async move {
            let mut iv = tokio::time::interval(WALL_TICK);
            loop {
                iv.tick().await;
                if ticker.send(Input::Tick).await.is_err() {
                    break;
                }
            }
        });
    }
    tokio::spawn(async move {
        while let Some(input) = rx.recv().await {
            if let Err(e) = rt.handle(input).await {
                tracing::error!(error = %e, "event log write failed");
            }
        }
        if let Err(e) = rt.log.sync() {
            tracing::error!(error = %e, "final log sync failed");
        }
    });
    Ok(handle)
}

fn live_message(entry: &EventLogEntry) -> Option<Arc<str>> {
    let payload = match &entry.body {
        EntryBody::Vital { .. } | EntryBody::Motion { .. } | EntryBody::Transition(_) | EntryBody::Delivery(_) => {
            serde_json::to_value(&entry.body).ok()?.get_mut("payload")?.take()
        }
        _ => return None,
    };
    let mut obj = match payload {
        Value::Object(m) => m,
        _ => return None,
    };
    obj.insert("type".into(), json!(entry.body.kind()));
    obj.insert("seq".into(), json!(entry.seq));
    obj.insert("t_ms".into(), json!(entry.t_ms));
    Some(Value::Object(obj).to_string().into())
}

impl Runtime {
    fn now(&self) -> u64 {
        match self.clock {
            ClockMode::Replay => self.logical_now,
            ClockMode::Wall => self.logical_now.max(wall_ms()),
        }
    }

    fn append(&mut self, t_ms: u64, body: EntryBody) -> io::Result<u64> {
        let entry = self.log.append(t_ms, body)?;
        if let Some(msg) = live_message(&entry) {
            let _ = self.live.send(msg);
        }
        let seq = entry.seq;
        self.entries.push(entry);
        Ok(seq)
    }

    /// Logs transitions; returns the episode if one of them triggered.
    fn log_transitions(&mut self, ts: Vec<Transition>) -> io::Result<Option<TriggeredEpisode>> {
        let mut episode = None;
        for t in ts {
            let to = t.to;
            let seq = self.append(t.t_ms, EntryBody::Transition(t))?;
            if let EngineState::Triggered { cause, at_ms } = to {
                episode = Some(TriggeredEpisode {
                    event_id: seq,
                    cause,
                    at_ms,
                });
            }
        }
        Ok(episode)
    }

    /// Moves the clock forward and fires an expired countdown.
    fn advance(&mut self, t_ms: u64) -> io::Result<Option<TriggeredEpisode>> {
        self.logical_now = self.logical_now.max(t_ms);
        let now = self.now();
        let ts = self.engine.tick(now);
        if ts.is_empty() {
            return Ok(None);
        }
        self.append(now, EntryBody::Command(Command::Tick))?;
        self.log_transitions(ts)
    }

    fn effective_sinks(&self) -> Vec<SinkConfig> {
        let mut sinks = self.sinks.clone();
        if let Some(c) = &self.contacts {
            for s in &mut sinks {
                match s.kind {
                    SinkKind::Sms => s.target = c.phone.clone(),
                    SinkKind::Email => s.target = c.email.clone(),
                    SinkKind::Social => s.endpoint = c.social_webhook.clone(),
                    SinkKind::Controller => {}
                }
            }
        }
        sinks
    }

    /// Sends the alert to every enabled sink that has no record yet.
    async fn finish_dispatch(&mut self, ep: &TriggeredEpisode, done: &[DeliveryRecord]) {
        let mut sinks = self.effective_sinks();
        sinks.retain(|s| s.enabled && !done.iter().any(|r| r.sink_kind == s.kind));
        if sinks.is_empty() {
            self.dispatcher.restore(ep.event_id, done.to_vec());
            return;
        }
        let at = logical_to_utc(ep.at_ms);
        let msg = match (&self.last_fix, &self.last_fix.as_ref().map(|f| self.geocoder.reverse(f))) {
            (Some(fix), Some(Ok(place))) => compose_message(ep.cause, fix, place, at),
            _ => compose_without_location(ep.cause, at),
        };
        let records = self.dispatcher.dispatch(ep.event_id, &msg, &sinks, ep.at_ms).await;
        let mut all = done.to_vec();
        for r in records {
            tracing::info!(sink = %r.sink_kind, status = ?r.status, attempts = r.attempts, "alert delivery settled");
            all.push(r.clone());
            if let Err(e) = self.append(ep.at_ms, EntryBody::Delivery(r)) {
                tracing::error!(error = %e, "failed to log delivery");
            }
        }
        self.dispatcher.restore(ep.event_id, all);
        if let Err(e) = self.log.sync() {
            tracing::error!(error = %e, "log sync failed");
        }
    }

    fn snapshot(&self) -> String {
        let now = self.now();
        let state = self.engine.state();
        json!({
            "type": "snapshot",
            "seq": self.log.last_seq(),
            "t_ms": now,
            "engine": state,
            "state": state.name(),
            "bpm": self.engine.last_bpm(),
            "countdown_remaining_ms": self.engine.countdown_remaining(now),
        })
        .to_string()
    }

    fn status(&self) -> StatusBody {
        let state = self.engine.state();
        StatusBody {
            state: state.name().to_string(),
            cause: state.cause().map(|c| c.to_string()),
            bpm: self.engine.last_bpm(),
            countdown_remaining_ms: self.engine.countdown_remaining(self.now()),
        }
    }

    fn ingest_record(&mut self, rec: TraceRecord) -> io::Result<Option<TriggeredEpisode>> {
        let mut episode = self.advance(rec.t_ms)?;
        let t = rec.t_ms;
        let result = match rec.event {
            TraceEvent::Hr { bpm } => self
                .engine
                .ingest_vital(VitalSample { t_ms: t, bpm })
                .map(|ts| (EntryBody::Vital { bpm }, ts)),
            TraceEvent::Motion { ax, ay, az } => {
                let s = MotionSample { t_ms: t, ax, ay, az };
                self.engine.ingest_motion(s).map(|ts| (EntryBody::motion(&s), ts))
            }
            TraceEvent::Nmea { sentence } => match parse_gga(&sentence) {
                Ok(fix) => {
                    self.last_fix = Some(fix);
                    Ok((EntryBody::Fix(fix), Vec::new()))
                }
                Err(e) => {
                    tracing::warn!(error = %e, "dropping GPS sentence");
                    return Ok(episode);
                }
            },
        };
        match result {
            Ok((body, ts)) => {
                self.append(t, body)?;
                if let Some(ep) = self.log_transitions(ts)? {
                    episode = Some(ep);
                }
            }
            Err(e) => tracing::warn!(error = %e, "rejected sample"),
        }
        Ok(episode)
    }

    fn apply_command(&mut self, kind: CommandKind, now: u64) -> io::Result<(CommandOutcome, Option<TriggeredEpisode>)> {
        let (cmd, result) = match kind {
            CommandKind::Panic => match self.engine.press_panic(now) {
                PanicOutcome::Started(t) => (Command::Panic, Ok(t)),
                PanicOutcome::Ignored(why) => {
                    return Ok((CommandOutcome::Ignored(self.engine.state(), why), None));
                }
            },
            CommandKind::Cancel => (Command::Cancel, self.engine.cancel(now)),
            CommandKind::Send => (Command::Send, self.engine.send_now(now)),
            CommandKind::Reset => (Command::Reset, self.engine.reset(now)),
        };
        match result {
            Ok(t) => {
                self.append(now, EntryBody::Command(cmd))?;
                let ep = self.log_transitions(vec![t])?;
                let state = self.engine.state();
                let outcome = if kind == CommandKind::Panic {
                    CommandOutcome::Started(state)
                } else {
                    CommandOutcome::Done(state)
                };
                Ok((outcome, ep))
            }
            Err(e) => Ok((CommandOutcome::Rejected(e), None)),
        }
    }

    async fn handle(&mut self, input: Input) -> io::Result<()> {
        let episode = match input {
            Input::Record(rec) => self.ingest_record(rec)?,
            Input::Packet(p) => {
                let now = self.now();
                self.ingest_record(TraceRecord {
                    t_ms: now,
                    event: TraceEvent::Hr { bpm: p.heart_rate_bpm },
                })?
            }
            Input::Tick => {
                let now = self.now();
                self.advance(now)?
            }
            Input::Command(kind, reply) => {
                let now = self.now();
                let expired = match self.advance(now) {
                    Ok(ep) => ep,
                    Err(e) => {
                        let _ = reply.send(CommandOutcome::Failed(e.to_string()));
                        return Err(e);
                    }
                };
                let (outcome, ep) = match self.apply_command(kind, now) {
                    Ok(r) => r,
                    Err(e) => (CommandOutcome::Failed(e.to_string()), None),
                };
                let _ = reply.send(outcome);
                ep.or(expired)
            }
            Input::Contacts(c, reply) => {
                let now = self.now();
                let res = self.append(now, EntryBody::Command(Command::Contacts(c.clone())));
                if res.is_ok() {
                    self.contacts = Some(c);
                }
                let _ = reply.send(res.map(|_| ()));
                None
            }
            Input::Now(reply) => {
                let _ = reply.send(self.now());
                None
            }
            Input::Status(reply) => {
                let _ = reply.send(self.status());
                None
            }
            Input::Events(since, reply) => {
                let start = self.entries.partition_point(|e| e.seq <= since);
                let _ = reply.send(self.entries[start..].to_vec());
                None
            }
            Input::Subscribe(reply) => {
                let _ = reply.send(LiveSubscription {
                    snapshot: self.snapshot(),
                    rx: self.live.subscribe(),
                });
                None
            }
            Input::Barrier(reply) => {
                let _ = reply.send(());
                None
            }
        };
        if let Some(ep) = episode {
            let done: Vec<DeliveryRecord> = self.dispatcher.records(ep.event_id).map(<[_]>::to_vec).unwrap_or_default();
            self.finish_dispatch(&ep, &done).await;
        }
        Ok(())
    }
}
