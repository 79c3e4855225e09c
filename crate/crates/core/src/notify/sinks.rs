use std::time::Duration;

use async_trait::async_trait;
use serde_json::json;
use thiserror::Error;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::TcpStream;

use super::controller::send_controller_alert;
use super::{AlertMessage, SinkConfig, SinkKind, EMAIL_SUBJECT};
use crate::channel::TcpChannel;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DeliveryError {
    /// Worth retrying: refused connections, timeouts, 5xx, SMTP 4xx.
    #[error("{0}")]
    Transient(String),
    /// The far end rejected the message outright.
    #[error("{0}")]
    Permanent(String),
}

#[async_trait]
pub trait Sink: Send + Sync {
    fn kind(&self) -> SinkKind;
    async fn deliver(&self, msg: &AlertMessage) -> Result<(), DeliveryError>;
}

/// Builds transports for configured sinks.
pub trait Connector: Send + Sync {
    fn connect(&self, cfg: &SinkConfig) -> Box<dyn Sink>;
}

/// Real transports: HTTP for SMS and social, SMTP for email, raw TCP for the controller.
#[derive(Clone)]
pub struct NetworkConnector {
    http: reqwest::Client,
    timeout: Duration,
}

impl NetworkConnector {
    pub fn new(timeout: Duration) -> Self {
        let http = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .expect("http client builds with static settings");
        Self { http, timeout }
    }
}

impl Default for NetworkConnector {
    fn default() -> Self {
        Self::new(Duration::from_secs(5))
    }
}

impl Connector for NetworkConnector {
    fn connect(&self, cfg: &SinkConfig) -> Box<dyn Sink> {
        match cfg.kind {
            SinkKind::Sms => Box::new(SmsSink {
                http: self.http.clone(),
                url: format!("{}/send", cfg.endpoint.trim_end_matches('/')),
                to: cfg.target.clone(),
            }),
            SinkKind::Social => Box::new(SocialSink {
                http: self.http.clone(),
                url: cfg.endpoint.clone(),
                wall: cfg.target.clone(),
            }),
            SinkKind::Email => Box::new(SmtpSink {
                addr: cfg.endpoint.clone(),
                rcpt: cfg.target.clone(),
                timeout: self.timeout,
            }),
            SinkKind::Controller => Box::new(ControllerSink {
                addr: cfg.endpoint.clone(),
                timeout: self.timeout,
            }),
        }
    }
}

fn classify_http(status: reqwest::StatusCode, accept: impl Fn(reqwest::StatusCode) -> bool) -> Result<(), DeliveryError> {
    if accept(status) {
        Ok(())
    } else if status.is_client_error() {
        Err(DeliveryError::Permanent(format!("gateway answered {status}")))
    } else {
        Err(DeliveryError::Transient(format!("gateway answered {status}")))
    }
}

fn transport_error(e: reqwest::Error) -> DeliveryError {
    DeliveryError::Transient(format!("transport: {e}"))
}

struct SmsSink {
    http: reqwest::Client,
    url: String,
    to: String,
}

#[async_trait]
impl Sink for SmsSink {
    fn kind(&self) -> SinkKind {
        SinkKind::Sms
    }

    async fn deliver(&self, msg: &AlertMessage) -> Result<(), DeliveryError> {
        let resp = self
            .http
            .post(&self.url)
            .json(&json!({ "to": self.to, "body": msg.body }))
            .send()
            .await
            .map_err(transport_error)?;
        classify_http(resp.status(), |s| s == reqwest::StatusCode::OK)
    }
}

struct SocialSink {
    http: reqwest::Client,
    url: String,
    wall: String,
}

#[async_trait]
impl Sink for SocialSink {
    fn kind(&self) -> SinkKind {
        SinkKind::Social
    }

    async fn deliver(&self, msg: &AlertMessage) -> Result<(), DeliveryError> {
        let resp = self
            .http
            .post(&self.url)
            .json(&json!({ "wall": self.wall, "message": msg.body }))
            .send()
            .await
            .map_err(transport_error)?;
        classify_http(resp.status(), |s| s.is_success())
    }
}

struct SmtpSink {
    addr: String,
    rcpt: String,
    timeout: Duration,
}

pub(crate) const SMTP_SENDER: &str = "ets-gateway@localhost";

struct SmtpSession {
    reader: BufReader<tokio::net::tcp::OwnedReadHalf>,
    writer: tokio::net::tcp::OwnedWriteHalf,
}

impl SmtpSession {
    /// Reads a (possibly multi-line) reply and checks its code class.
    async fn expect(&mut self, want: &[u16]) -> Result<(), DeliveryError> {
        loop {
            let mut line = String::new();
            let n = self
                .reader
                .read_line(&mut line)
                .await
                .map_err(|e| DeliveryError::Transient(format!("smtp read: {e}")))?;
            if n == 0 {
                return Err(DeliveryError::Transient("smtp server closed the connection".into()));
            }
            let code: u16 = line
                .get(..3)
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| DeliveryError::Transient(format!("smtp garbage reply {:?}", line.trim_end())))?;
            if line.as_bytes().get(3) == Some(&b'-') {
                continue;
            }
            return if want.contains(&code) {
                Ok(())
            } else if code >= 500 {
                Err(DeliveryError::Permanent(format!("smtp {}", line.trim_end())))
            } else {
                Err(DeliveryError::Transient(format!("smtp {}", line.trim_end())))
            };
        }
    }

    async fn send(&mut self, line: &str) -> Result<(), DeliveryError> {
        self.writer
            .write_all(format!("{line}\r\n").as_bytes())
            .await
            .map_err(|e| DeliveryError::Transient(format!("smtp write: {e}")))
    }
}

impl SmtpSink {
    async fn exchange(&self, msg: &AlertMessage) -> Result<(), DeliveryError> {
        let stream = TcpStream::connect(&self.addr)
            .await
            .map_err(|e| DeliveryError::Transient(format!("smtp connect {}: {e}", self.addr)))?;
        let (r, w) = stream.into_split();
        let mut s = SmtpSession {
            reader: BufReader::new(r),
            writer: w,
        };
        s.expect(&[220]).await?;
        s.send("HELO ets-gateway").await?;
        s.expect(&[250]).await?;
        s.send(&format!("MAIL FROM:<{SMTP_SENDER}>")).await?;
        s.expect(&[250]).await?;
        s.send(&format!("RCPT TO:<{}>", self.rcpt)).await?;
        s.expect(&[250, 251]).await?;
        s.send("DATA").await?;
        s.expect(&[354]).await?;
        let mut data = format!(
            "From: <{SMTP_SENDER}>\r\nTo: <{}>\r\nSubject: {EMAIL_SUBJECT}\r\nDate: {}\r\n\r\n",
            self.rcpt,
            msg.at.to_rfc2822()
        );
        for line in msg.body.lines() {
            // Dot-stuffing.
            if line.starts_with('.') {
                data.push('.');
            }
            data.push_str(line);
            data.push_str("\r\n");
        }
        data.push('.');
        s.send(&data).await?;
        s.expect(&[250]).await?;
        s.send("QUIT").await?;
        // Delivery is already accepted; a sloppy QUIT reply does not matter.
        let _ = s.expect(&[221]).await;
        Ok(())
    }
}

#[async_trait]
impl Sink for SmtpSink {
    fn kind(&self) -> SinkKind {
        SinkKind::Email
    }

    async fn deliver(&self, msg: &AlertMessage) -> Result<(), DeliveryError> {
        tokio::time::timeout(self.timeout, self.exchange(msg))
            .await
            .map_err(|_| DeliveryError::Transient("smtp timed out".into()))?
    }
}

struct ControllerSink {
    addr: String,
    timeout: Duration,
}

#[async_trait]
impl Sink for ControllerSink {
    fn kind(&self) -> SinkKind {
        SinkKind::Controller
    }

    async fn deliver(&self, _msg: &AlertMessage) -> Result<(), DeliveryError> {
        let attempt = async {
            let mut ch = TcpChannel::connect(&self.addr)
                .await
                .map_err(|e| DeliveryError::Transient(format!("controller connect {}: {e}", self.addr)))?;
            send_controller_alert(&mut ch)
                .await
                .map(|_ack| ())
                .map_err(|e| DeliveryError::Transient(format!("controller: {e}")))
        };
        tokio::time::timeout(self.timeout, attempt)
            .await
            .map_err(|_| DeliveryError::Transient("controller timed out".into()))?
    }
}
