//! Thin HTTP client for the gateway's `/api/v1` surface.

pub mod wire;

use ets_core::sim::{ReplayReport, TraceRecord};
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use thiserror::Error;

pub use wire::{
    Command, CommandReply, ContactRegistry, EntryBody, ErrorBody, EventLogEntry, FieldMessage, ReplayRequest,
    Snapshot, StatusBody,
};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("gateway answered {status}: {body}")]
    Api { status: StatusCode, body: String },
}

impl ClientError {
    pub fn status(&self) -> Option<StatusCode> {
        match self {
            Self::Api { status, .. } => Some(*status),
            Self::Transport(e) => e.status(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the server root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}/api/v1/{path}", self.base)
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T, ClientError> {
        let status = resp.status();
        if status.is_success() {
            Ok(resp.json().await?)
        } else {
            Err(ClientError::Api {
                status,
                body: resp.text().await.unwrap_or_default(),
            })
        }
    }

    pub async fn status(&self) -> Result<StatusBody, ClientError> {
        Self::decode(self.http.get(self.url("status")).send().await?).await
    }

    async fn command(&self, name: &str) -> Result<CommandReply, ClientError> {
        Self::decode(self.http.post(self.url(name)).send().await?).await
    }

    pub async fn panic(&self) -> Result<CommandReply, ClientError> {
        self.command("panic").await
    }

    pub async fn cancel(&self) -> Result<CommandReply, ClientError> {
        self.command("cancel").await
    }

    pub async fn send(&self) -> Result<CommandReply, ClientError> {
        self.command("send").await
    }

    pub async fn reset(&self) -> Result<CommandReply, ClientError> {
        self.command("reset").await
    }

    pub async fn put_contacts(&self, contacts: &ContactRegistry) -> Result<ContactRegistry, ClientError> {
        Self::decode(self.http.put(self.url("contacts")).json(contacts).send().await?).await
    }

    pub async fn events(&self, since: u64) -> Result<Vec<EventLogEntry>, ClientError> {
        Self::decode(
            self.http
                .get(self.url("events"))
                .query(&[("since", since)])
                .send()
                .await?,
        )
        .await
    }

    /// Replays a trace on the server and waits for it to finish.
    /// `speed` of `None` (or infinity) means as fast as possible.
    pub async fn replay(&self, records: Vec<TraceRecord>, speed: Option<f64>) -> Result<ReplayReport, ClientError> {
        let req = ReplayRequest {
            speed: speed.filter(|s| s.is_finite()),
            records,
            wait: true,
        };
        Self::decode(self.http.post(self.url("replay")).json(&req).send().await?).await
    }
}
