//! Alert composition and fan-out delivery.

mod controller;
mod dispatch;
mod sinks;

pub use controller::{
    run_controller_emulator, send_controller_alert, ControllerEmulator, ALERT_ACK, ALERT_BYTE, BLINK_DURATION_MS,
    BLINK_TOGGLE_MS, LED_PIN,
};
pub use dispatch::{Dispatcher, RetryPolicy};
pub use sinks::{Connector, DeliveryError, NetworkConnector, Sink};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::EmergencyCause;
use crate::geo::{GeoFix, Place};

/// Fixed opening sentence of every alert.
pub const ALERT_PREAMBLE: &str = "This person is under emergency take necessary action.";
pub const EMAIL_SUBJECT: &str = "EMERGENCY ALERT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertMessage {
    pub cause: EmergencyCause,
    pub body: String,
    pub latitude_deg: Option<f64>,
    pub longitude_deg: Option<f64>,
    pub place: Option<Place>,
    pub at: DateTime<Utc>,
}

fn iso_utc(at: &DateTime<Utc>) -> String {
    at.to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn compose_message(cause: EmergencyCause, fix: &GeoFix, place: &Place, at: DateTime<Utc>) -> AlertMessage {
    if fix.fix_quality == 0 {
        return compose_without_location(cause, at);
    }
    let body = format!(
        "{ALERT_PREAMBLE} Cause: {cause}. Location: {}, {} ({:+.5}, {:+.5}) at {}.",
        place.city,
        place.country,
        fix.latitude_deg,
        fix.longitude_deg,
        iso_utc(&at)
    );
    AlertMessage {
        cause,
        body,
        latitude_deg: Some(fix.latitude_deg),
        longitude_deg: Some(fix.longitude_deg),
        place: Some(place.clone()),
        at,
    }
}

/// Used when no valid fix has been received yet.
pub fn compose_without_location(cause: EmergencyCause, at: DateTime<Utc>) -> AlertMessage {
    AlertMessage {
        cause,
        body: format!("{ALERT_PREAMBLE} Cause: {cause}. Location: unknown at {}.", iso_utc(&at)),
        latitude_deg: None,
        longitude_deg: None,
        place: None,
        at,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SinkKind {
    Sms,
    Email,
    Social,
    Controller,
}

impl std::fmt::Display for SinkKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Sms => "sms",
            Self::Email => "email",
            Self::Social => "social",
            Self::Controller => "controller",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SinkConfig {
    pub kind: SinkKind,
    pub endpoint: String,
    #[serde(default)]
    pub target: String,
    #[serde(default = "enabled_default")]
    pub enabled: bool,
}

fn enabled_default() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{field}: {message}")]
pub struct FieldError {
    pub field: &'static str,
    pub message: String,
}

/// `+` followed by 7 to 15 digits.
pub fn is_e164(s: &str) -> bool {
    s.strip_prefix('+')
        .is_some_and(|d| (7..=15).contains(&d.len()) && d.bytes().all(|b| b.is_ascii_digit()))
}

/// Exactly one `@` with something on both sides.
pub fn is_email(s: &str) -> bool {
    let mut parts = s.split('@');
    matches!((parts.next(), parts.next(), parts.next()), (Some(l), Some(r), None) if !l.is_empty() && !r.is_empty())
}

pub fn is_http_url(s: &str) -> bool {
    ["http://", "https://"]
        .iter()
        .any(|p| s.strip_prefix(p).is_some_and(|rest| !rest.is_empty()))
}

impl SinkConfig {
    pub fn validate(&self) -> Result<(), FieldError> {
        if !self.enabled {
            return Ok(());
        }
        if self.endpoint.trim().is_empty() {
            return Err(FieldError {
                field: "endpoint",
                message: format!("{} sink is enabled but has no endpoint", self.kind),
            });
        }
        let target_ok = match self.kind {
            SinkKind::Sms => is_e164(&self.target),
            SinkKind::Email => is_email(&self.target),
            SinkKind::Social | SinkKind::Controller => true,
        };
        if !target_ok {
            return Err(FieldError {
                field: "target",
                message: format!("{:?} is not a valid {} target", self.target, self.kind),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeliveryStatus {
    Delivered,
    /// Permanent rejection; not retried.
    Failed,
    /// Every attempt failed transiently.
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub event_id: u64,
    pub sink_kind: SinkKind,
    pub attempts: u32,
    pub status: DeliveryStatus,
    /// Logical milliseconds.
    pub first_at: u64,
    pub last_at: u64,
    pub last_error: String,
}
