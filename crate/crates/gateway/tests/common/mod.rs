#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU16, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use ets_core::channel::TcpChannel;
use ets_core::notify::{run_controller_emulator, ControllerEmulator, NetworkConnector, SinkConfig, SinkKind};
use ets_gateway::{GatewayHandle, ServiceConfig};
use serde_json::Value;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::TcpListener;

pub type Inbox<T> = Arc<Mutex<Vec<T>>>;

/// Fake SMS gateway (`POST /send`) and social wall (`POST /wall`).
pub struct FakeHttp {
    pub base: String,
    pub sms: Inbox<Value>,
    pub wall: Inbox<Value>,
    /// Status code returned to every request.
    pub status: Arc<AtomicU16>,
}

#[derive(Clone)]
struct HttpState {
    sms: Inbox<Value>,
    wall: Inbox<Value>,
    status: Arc<AtomicU16>,
}

async fn record(inbox: &Inbox<Value>, status: &AtomicU16, body: Value) -> StatusCode {
    let code = StatusCode::from_u16(status.load(Ordering::SeqCst)).unwrap();
    if code.is_success() {
        inbox.lock().unwrap().push(body);
    }
    code
}

pub async fn fake_http() -> FakeHttp {
    let st = HttpState {
        sms: Default::default(),
        wall: Default::default(),
        status: Arc::new(AtomicU16::new(200)),
    };
    let app = Router::new()
        .route(
            "/send",
            post(|State(s): State<HttpState>, Json(b): Json<Value>| async move { record(&s.sms, &s.status, b).await }),
        )
        .route(
            "/wall",
            post(|State(s): State<HttpState>, Json(b): Json<Value>| async move { record(&s.wall, &s.status, b).await }),
        )
        .with_state(st.clone());
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    FakeHttp {
        base: format!("http://{addr}"),
        sms: st.sms,
        wall: st.wall,
        status: st.status,
    }
}

/// Minimal SMTP server that stores each message's DATA section.
pub struct FakeSmtp {
    pub addr: SocketAddr,
    pub messages: Inbox<String>,
}

pub async fn fake_smtp() -> FakeSmtp {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let messages: Inbox<String> = Default::default();
    let inbox = messages.clone();
    tokio::spawn(async move {
        loop {
            let (stream, _) = listener.accept().await.unwrap();
            let inbox = inbox.clone();
            tokio::spawn(async move {
                let (r, mut w) = stream.into_split();
                let mut lines = BufReader::new(r).lines();
                w.write_all(b"220 fake ESMTP\r\n").await.unwrap();
                while let Ok(Some(line)) = lines.next_line().await {
                    let verb = line.split_whitespace().next().unwrap_or("").to_ascii_uppercase();
                    match verb.as_str() {
                        "DATA" => {
                            w.write_all(b"354 go ahead\r\n").await.unwrap();
                            let mut data = String::new();
                            while let Ok(Some(l)) = lines.next_line().await {
                                if l == "." {
                                    break;
                                }
                                data.push_str(&l);
                                data.push('\n');
                            }
                            inbox.lock().unwrap().push(data);
                            w.write_all(b"250 queued\r\n").await.unwrap();
                        }
                        "QUIT" => {
                            let _ = w.write_all(b"221 bye\r\n").await;
                            break;
                        }
                        _ => w.write_all(b"250 ok\r\n").await.unwrap(),
                    }
                }
            });
        }
    });
    FakeSmtp { addr, messages }
}

pub struct FakeController {
    pub addr: SocketAddr,
    pub board: Arc<Mutex<ControllerEmulator>>,
}

pub async fn fake_controller() -> FakeController {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let board = Arc::new(Mutex::new(ControllerEmulator::new()));
    let b = board.clone();
    let start = Instant::now();
    tokio::spawn(async move {
        loop {
            let (stream, _) = listener.accept().await.unwrap();
            let b = b.clone();
            tokio::spawn(async move {
                let _ = run_controller_emulator(TcpChannel::from_stream(stream), b, move || {
                    start.elapsed().as_millis() as u64
                })
                .await;
            });
        }
    });
    FakeController { addr, board }
}

pub struct Fakes {
    pub http: FakeHttp,
    pub smtp: FakeSmtp,
    pub controller: FakeController,
}

pub async fn fakes() -> Fakes {
    Fakes {
        http: fake_http().await,
        smtp: fake_smtp().await,
        controller: fake_controller().await,
    }
}

impl Fakes {
    pub fn sinks(&self) -> Vec<SinkConfig> {
        let sink = |kind, endpoint: String, target: &str| SinkConfig {
            kind,
            endpoint,
            target: target.into(),
            enabled: true,
        };
        vec![
            sink(SinkKind::Sms, self.http.base.clone(), "+46700000000"),
            sink(SinkKind::Email, self.smtp.addr.to_string(), "a@b.se"),
            sink(SinkKind::Social, format!("{}/wall", self.http.base), "family"),
            sink(SinkKind::Controller, self.controller.addr.to_string(), ""),
        ]
    }

    /// Every alert body received by the three message sinks.
    pub fn bodies(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        out.extend(self.http.sms.lock().unwrap().iter().map(|v| v["body"].as_str().unwrap().to_string()));
        out.extend(self.http.wall.lock().unwrap().iter().map(|v| v["message"].as_str().unwrap().to_string()));
        for m in self.smtp.messages.lock().unwrap().iter() {
            let body = m.split_once("\n\n").map(|(_, b)| b).unwrap_or("");
            out.push(body.trim_end().to_string());
        }
        out
    }
}

pub struct RunningGateway {
    pub base: String,
    pub handle: GatewayHandle,
}

/// Starts a gateway on an ephemeral port with real network sinks.
pub async fn start_gateway(cfg: &ServiceConfig) -> RunningGateway {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let gw = ets_gateway::prepare(cfg, Some(listener), Arc::new(NetworkConnector::default()))
        .await
        .unwrap();
    let base = format!("http://{}", gw.addr);
    let handle = gw.handle.clone();
    tokio::spawn(gw.serve());
    RunningGateway { base, handle }
}

pub fn replay_config(dir: &std::path::Path, sinks: Vec<SinkConfig>) -> ServiceConfig {
    let mut cfg = ServiceConfig::new(8080, dir.join("events.jsonl").to_string_lossy());
    cfg.clock = ets_gateway::ClockMode::Replay;
    cfg.sinks = sinks;
    cfg
}
