//! JSON bodies exchanged with the gateway and stored in its event log.

use ets_core::engine::{EngineState, MotionSample, Transition};
use ets_core::geo::GeoFix;
use ets_core::notify::{is_e164, is_email, is_http_url, DeliveryRecord};
use ets_core::sim::TraceRecord;
use serde::{Deserialize, Serialize};

/// `GET /api/v1/status`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusBody {
    pub state: String,
    pub cause: Option<String>,
    pub bpm: Option<u8>,
    pub countdown_remaining_ms: Option<u64>,
}

/// Emergency contacts entered by the user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContactRegistry {
    pub phone: String,
    pub email: String,
    pub social_webhook: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldMessage {
    pub field: String,
    pub message: String,
}

impl ContactRegistry {
    /// Every failing field, in declaration order.
    pub fn validate(&self) -> Vec<FieldMessage> {
        let mut errs = Vec::new();
        let mut check = |ok: bool, field: &str, message: &str| {
            if !ok {
                errs.push(FieldMessage {
                    field: field.into(),
                    message: message.into(),
                });
            }
        };
        check(is_e164(&self.phone), "phone", "must be + followed by 7 to 15 digits");
        check(is_email(&self.email), "email", "must contain exactly one @ with text on both sides");
        check(
            is_http_url(&self.social_webhook),
            "social_webhook",
            "must be an http:// or https:// URL",
        );
        errs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    Panic,
    Cancel,
    Send,
    Reset,
    /// Clock advance that expired a countdown.
    Tick,
    Contacts(ContactRegistry),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "lowercase")]
pub enum EntryBody {
    Vital { bpm: u8 },
    Motion { ax: f64, ay: f64, az: f64 },
    Fix(GeoFix),
    Transition(Transition),
    Delivery(DeliveryRecord),
    Command(Command),
}

impl EntryBody {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Vital { .. } => "vital",
            Self::Motion { .. } => "motion",
            Self::Fix(_) => "fix",
            Self::Transition(_) => "transition",
            Self::Delivery(_) => "delivery",
            Self::Command(_) => "command",
        }
    }

    pub fn motion(s: &MotionSample) -> Self {
        Self::Motion {
            ax: s.ax,
            ay: s.ay,
            az: s.az,
        }
    }
}

/// One line of the append-only event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLogEntry {
    pub seq: u64,
    pub t_ms: u64,
    #[serde(flatten)]
    pub body: EntryBody,
}

/// `POST /api/v1/replay`. A missing speed replays as fast as possible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRequest {
    #[serde(default)]
    pub speed: Option<f64>,
    pub records: Vec<TraceRecord>,
    #[serde(default = "wait_default")]
    pub wait: bool,
}

fn wait_default() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandReply {
    pub state: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<FieldMessage>,
}

/// First message on every live connection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    #[serde(rename = "type")]
    pub kind: String,
    pub seq: u64,
    pub t_ms: u64,
    pub engine: EngineState,
    pub state: String,
    pub bpm: Option<u8>,
    pub countdown_remaining_ms: Option<u64>,
}
