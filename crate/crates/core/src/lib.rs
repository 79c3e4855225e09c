//! Emergency tracking core: wearable telemetry framing, GPS fixes and
//! reverse geocoding, the detection state machine, alert fan-out, and the
//! trace simulator that stands in for real sensors.

pub mod channel;
pub mod engine;
pub mod geo;
pub mod notify;
pub mod protocol;
pub mod sim;

pub use engine::{EmergencyCause, Engine, EngineError, EngineState, Thresholds, Transition};
pub use geo::{CityTable, GeoFix, Place};
pub use notify::{AlertMessage, DeliveryRecord, DeliveryStatus, SinkConfig, SinkKind};
pub use protocol::{Deframer, GeneralPacket};
pub use sim::{EpisodeSpec, TraceRecord};
