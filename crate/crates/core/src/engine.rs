//! Emergency detection state machine.
//!
//! ```text
//!              abnormal bpm            N-th consecutive abnormal
//!  Monitoring ─────────────► Suspected ─────────────────────────► Triggered
//!     │  ▲                      │  │                                  ▲
//!     │  └──── normal bpm ──────┘  │ panic                            │ send / deadline
//!     │                            ▼                                  │
//!     └──── crash / panic ────► Countdown ────────────────────────────┘
//!                                  │ cancel
//!                                  ▼
//!                              Cancelled
//! ```
//!
//! Heart-rate emergencies go straight to `Triggered`; crash and panic wait
//! out a cancelable countdown. `Triggered` and `Cancelled` hold until
//! [`Engine::reset`]. Every input carries its own logical timestamp, so the
//! engine never reads wall time.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EmergencyCause {
    Bradycardia,
    Tachycardia,
    Crash,
    Panic,
}

impl fmt::Display for EmergencyCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Bradycardia => "Bradycardia",
            Self::Tachycardia => "Tachycardia",
            Self::Crash => "Crash",
            Self::Panic => "Panic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state")]
pub enum EngineState {
    Monitoring,
    Suspected {
        cause: EmergencyCause,
        count: u32,
        since_ms: u64,
    },
    Countdown {
        cause: EmergencyCause,
        deadline_ms: u64,
    },
    Triggered {
        cause: EmergencyCause,
        at_ms: u64,
    },
    Cancelled {
        at_ms: u64,
    },
}

impl EngineState {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Monitoring => "Monitoring",
            Self::Suspected { .. } => "Suspected",
            Self::Countdown { .. } => "Countdown",
            Self::Triggered { .. } => "Triggered",
            Self::Cancelled { .. } => "Cancelled",
        }
    }

    pub fn cause(&self) -> Option<EmergencyCause> {
        match *self {
            Self::Suspected { cause, .. } | Self::Countdown { cause, .. } | Self::Triggered { cause, .. } => {
                Some(cause)
            }
            Self::Monitoring | Self::Cancelled { .. } => None,
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, Self::Triggered { .. } | Self::Cancelled { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub hr_low: u32,
    pub hr_high: u32,
    pub consecutive_abnormal: u32,
    pub freefall_g: f64,
    pub freefall_min_ms: u64,
    pub impact_g: f64,
    pub tilt_deg: f64,
    pub tilt_window_ms: u64,
    pub countdown_ms: u64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            hr_low: 60,
            hr_high: 120,
            consecutive_abnormal: 5,
            freefall_g: 0.35,
            freefall_min_ms: 200,
            impact_g: 2.5,
            tilt_deg: 60.0,
            tilt_window_ms: 1000,
            countdown_ms: 14_000,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::InvalidThresholds(m.to_string()));
        if self.hr_low == 0 || self.hr_low >= self.hr_high {
            return bad("need 0 < hr_low < hr_high");
        }
        if self.consecutive_abnormal == 0 {
            return bad("consecutive_abnormal must be at least 1");
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.freefall_g) || !positive(self.impact_g) || !positive(self.tilt_deg) {
            return bad("motion thresholds must be positive and finite");
        }
        if self.freefall_g >= self.impact_g {
            return bad("freefall_g must be below impact_g");
        }
        if self.freefall_min_ms == 0 || self.tilt_window_ms == 0 || self.countdown_ms == 0 {
            return bad("durations must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BpmClass {
    Normal,
    Low,
    High,
}

/// Values equal to either threshold are normal.
pub fn classify_bpm(bpm: u32, th: &Thresholds) -> BpmClass {
    if bpm < th.hr_low {
        BpmClass::Low
    } else if bpm > th.hr_high {
        BpmClass::High
    } else {
        BpmClass::Normal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VitalSample {
    pub t_ms: u64,
    pub bpm: u8,
}

/// Accelerometer reading in units of g.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionSample {
    pub t_ms: u64,
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
}

pub const MAX_AXIS_G: f64 = 16.0;

impl MotionSample {
    pub fn magnitude(&self) -> f64 {
        (self.ax * self.ax + self.ay * self.ay + self.az * self.az).sqrt()
    }

    fn vector(&self) -> [f64; 3] {
        [self.ax, self.ay, self.az]
    }

    fn validate(&self) -> Result<(), EngineError> {
        for v in self.vector() {
            if !v.is_finite() || v.abs() > MAX_AXIS_G {
                return Err(EngineError::InvalidSample(format!(
                    "axis value {v} outside ±{MAX_AXIS_G} g"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub t_ms: u64,
    pub from: EngineState,
    pub to: EngineState,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("{stream} sample at {got_ms} ms precedes previous sample at {last_ms} ms")]
    Ordering {
        stream: &'static str,
        last_ms: u64,
        got_ms: u64,
    },
    #[error("cannot {op} while {state}")]
    State { op: &'static str, state: &'static str },
    #[error("countdown already expired at {deadline_ms} ms (now {t_ms} ms)")]
    Expired { deadline_ms: u64, t_ms: u64 },
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),
}

/// Result of a panic press. Repeated presses are idempotent.
#[derive(Debug, Clone, PartialEq)]
pub enum PanicOutcome {
    Started(Transition),
    Ignored(String),
}

/// Trailing-window crash heuristics over the accelerometer stream.
#[derive(Debug, Clone, Default)]
struct MotionDetector {
    freefall_since: Option<u64>,
    window: VecDeque<(u64, [f64; 3])>,
}

fn angle_deg(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let na = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    let nb = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0).acos().to_degrees()
}

impl MotionDetector {
    fn observe(&mut self, s: &MotionSample, th: &Thresholds) -> Option<String> {
        let m = s.magnitude();
        let mut hit = None;

        if m < th.freefall_g {
            let since = *self.freefall_since.get_or_insert(s.t_ms);
            if s.t_ms - since >= th.freefall_min_ms {
                hit = Some(format!("free fall below {} g for {} ms", th.freefall_g, s.t_ms - since));
                self.freefall_since = None;
            }
        } else {
            self.freefall_since = None;
        }

        if hit.is_none() && m > th.impact_g {
            hit = Some(format!("impact of {m:.2} g exceeds {} g", th.impact_g));
        }

        let horizon = s.t_ms.saturating_sub(th.tilt_window_ms);
        while self.window.front().is_some_and(|&(t, _)| t < horizon) {
            self.window.pop_front();
        }
        // Orientation is meaningless for near-weightless vectors.
        if hit.is_none() && m >= th.freefall_g && !self.window.is_empty() {
            let n = self.window.len() as f64;
            let mut mean = [0.0; 3];
            for (_, v) in &self.window {
                for k in 0..3 {
                    mean[k] += v[k] / n;
                }
            }
            let mean_norm = (mean[0] * mean[0] + mean[1] * mean[1] + mean[2] * mean[2]).sqrt();
            if mean_norm >= th.freefall_g {
                let angle = angle_deg(s.vector(), mean);
                if angle > th.tilt_deg {
                    hit = Some(format!("tilt of {angle:.1} deg within {} ms", th.tilt_window_ms));
                }
            }
        }
        self.window.push_back((s.t_ms, s.vector()));
        hit
    }
}

#[derive(Debug, Clone)]
pub struct Engine {
    th: Thresholds,
    state: EngineState,
    last_vital_ms: Option<u64>,
    last_motion_ms: Option<u64>,
    last_bpm: Option<u8>,
    motion: MotionDetector,
}

impl Engine {
    pub fn new(th: Thresholds) -> Result<Self, EngineError> {
        th.validate()?;
        Ok(Self {
            th,
            state: EngineState::Monitoring,
            last_vital_ms: None,
            last_motion_ms: None,
            last_bpm: None,
            motion: MotionDetector::default(),
        })
    }

    pub fn state(&self) -> EngineState {
        self.state
    }

    pub fn thresholds(&self) -> &Thresholds {
        &self.th
    }

    pub fn last_bpm(&self) -> Option<u8> {
        self.last_bpm
    }

    /// Milliseconds left before the countdown fires, if one is running.
    pub fn countdown_remaining(&self, now_ms: u64) -> Option<u64> {
        match self.state {
            EngineState::Countdown { deadline_ms, .. } => Some(deadline_ms.saturating_sub(now_ms)),
            _ => None,
        }
    }

    fn go(&mut self, t_ms: u64, to: EngineState, reason: impl Into<String>) -> Transition {
        let from = std::mem::replace(&mut self.state, to);
        debug_assert_ne!(from, to);
        Transition {
            t_ms,
            from,
            to,
            reason: reason.into(),
        }
    }

    fn check_order(last: &mut Option<u64>, stream: &'static str, t_ms: u64) -> Result<(), EngineError> {
        if let Some(last_ms) = *last {
            if t_ms < last_ms {
                return Err(EngineError::Ordering {
                    stream,
                    last_ms,
                    got_ms: t_ms,
                });
            }
        }
        *last = Some(t_ms);
        Ok(())
    }

    /// Feeds one heart-rate reading.
    ///
    /// Readings taken during a countdown or after an episode ended are
    /// recorded as the latest BPM but do not move the state.
    pub fn ingest_vital(&mut self, s: VitalSample) -> Result<Vec<Transition>, EngineError> {
        Self::check_order(&mut self.last_vital_ms, "vital", s.t_ms)?;
        self.last_bpm = Some(s.bpm);

        let class = classify_bpm(u32::from(s.bpm), &self.th);
        let (prev_cause, prev_count, prev_since) = match self.state {
            EngineState::Monitoring => (None, 0, s.t_ms),
            EngineState::Suspected { cause, count, since_ms } => (Some(cause), count, since_ms),
            _ => return Ok(Vec::new()),
        };
        let cause = match class {
            BpmClass::Normal => {
                if prev_cause.is_none() {
                    return Ok(Vec::new());
                }
                let t = self.go(s.t_ms, EngineState::Monitoring, format!("heart rate {} bpm back to normal", s.bpm));
                return Ok(vec![t]);
            }
            BpmClass::Low => EmergencyCause::Bradycardia,
            BpmClass::High => EmergencyCause::Tachycardia,
        };
        let (count, since_ms) = if prev_cause == Some(cause) {
            (prev_count + 1, prev_since)
        } else {
            (1, s.t_ms)
        };
        let next = if count >= self.th.consecutive_abnormal {
            EngineState::Triggered { cause, at_ms: s.t_ms }
        } else {
            EngineState::Suspected { cause, count, since_ms }
        };
        let reason = format!("heart rate {} bpm abnormal ({count} consecutive)", s.bpm);
        Ok(vec![self.go(s.t_ms, next, reason)])
    }

    /// Feeds one accelerometer reading. A suspected crash opens the countdown.
    pub fn ingest_motion(&mut self, s: MotionSample) -> Result<Vec<Transition>, EngineError> {
        s.validate()?;
        Self::check_order(&mut self.last_motion_ms, "motion", s.t_ms)?;
        let hit = self.motion.observe(&s, &self.th);
        match (hit, self.state) {
            (Some(reason), EngineState::Monitoring | EngineState::Suspected { .. }) => {
                let next = EngineState::Countdown {
                    cause: EmergencyCause::Crash,
                    deadline_ms: s.t_ms + self.th.countdown_ms,
                };
                Ok(vec![self.go(s.t_ms, next, reason)])
            }
            _ => Ok(Vec::new()),
        }
    }

    pub fn press_panic(&mut self, t_ms: u64) -> PanicOutcome {
        match self.state {
            EngineState::Monitoring | EngineState::Suspected { .. } => {
                let next = EngineState::Countdown {
                    cause: EmergencyCause::Panic,
                    deadline_ms: t_ms + self.th.countdown_ms,
                };
                PanicOutcome::Started(self.go(t_ms, next, "panic pressed"))
            }
            other => PanicOutcome::Ignored(format!("panic ignored while {}", other.name())),
        }
    }

    pub fn cancel(&mut self, t_ms: u64) -> Result<Transition, EngineError> {
        match self.state {
            EngineState::Countdown { deadline_ms, .. } if t_ms >= deadline_ms => {
                Err(EngineError::Expired { deadline_ms, t_ms })
            }
            EngineState::Countdown { .. } => Ok(self.go(t_ms, EngineState::Cancelled { at_ms: t_ms }, "cancelled by user")),
            other => Err(EngineError::State {
                op: "cancel",
                state: other.name(),
            }),
        }
    }

    pub fn send_now(&mut self, t_ms: u64) -> Result<Transition, EngineError> {
        match self.state {
            EngineState::Countdown { deadline_ms, .. } if t_ms >= deadline_ms => {
                Err(EngineError::Expired { deadline_ms, t_ms })
            }
            EngineState::Countdown { cause, .. } => {
                Ok(self.go(t_ms, EngineState::Triggered { cause, at_ms: t_ms }, "sent by user"))
            }
            other => Err(EngineError::State {
                op: "send",
                state: other.name(),
            }),
        }
    }

    /// Advances the clock; an expired countdown triggers at its deadline.
    pub fn tick(&mut self, now_ms: u64) -> Vec<Transition> {
        match self.state {
            EngineState::Countdown { cause, deadline_ms } if now_ms >= deadline_ms => {
                let next = EngineState::Triggered {
                    cause,
                    at_ms: deadline_ms,
                };
                vec![self.go(deadline_ms, next, "countdown expired")]
            }
            _ => Vec::new(),
        }
    }

    /// Starts a new episode after `Triggered` or `Cancelled`.
    pub fn reset(&mut self, t_ms: u64) -> Result<Transition, EngineError> {
        if !self.state.is_terminal() {
            return Err(EngineError::State {
                op: "reset",
                state: self.state.name(),
            });
        }
        self.motion = MotionDetector::default();
        Ok(self.go(t_ms, EngineState::Monitoring, "reset"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn engine() -> Engine {
        Engine::new(Thresholds::default()).unwrap()
    }

    fn vitals(e: &mut Engine, bpms: &[u8]) -> Vec<Transition> {
        bpms.iter()
            .enumerate()
            .flat_map(|(i, &bpm)| {
                e.ingest_vital(VitalSample {
                    t_ms: i as u64 * 1000,
                    bpm,
                })
                .unwrap()
            })
            .collect()
    }

    fn motion(t_ms: u64, ax: f64, ay: f64, az: f64) -> MotionSample {
        MotionSample { t_ms, ax, ay, az }
    }

    #[test]
    fn classify_examples() {
        let th = Thresholds::default();
        assert_eq!(classify_bpm(74, &th), BpmClass::Normal);
        assert_eq!(classify_bpm(125, &th), BpmClass::High);
        assert_eq!(classify_bpm(60, &th), BpmClass::Normal);
        assert_eq!(classify_bpm(59, &th), BpmClass::Low);
        assert_eq!(classify_bpm(120, &th), BpmClass::Normal);
        assert_eq!(classify_bpm(121, &th), BpmClass::High);
    }

    #[test]
    fn classify_partitions_byte_range() {
        let th = Thresholds::default();
        let mut counts = [0usize; 3];
        for bpm in 0..=255u32 {
            let c = classify_bpm(bpm, &th);
            let low = bpm < 60;
            let high = bpm > 120;
            assert_eq!(c == BpmClass::Low, low);
            assert_eq!(c == BpmClass::High, high);
            assert_eq!(c == BpmClass::Normal, !low && !high);
            counts[c as usize] += 1;
        }
        assert_eq!(counts, [61, 60, 135]);
    }

    #[test]
    fn tachycardia_triggers_on_fifth() {
        let mut e = engine();
        let ts = vitals(&mut e, &[125; 5]);
        assert_eq!(ts.len(), 5);
        assert_eq!(
            e.state(),
            EngineState::Triggered {
                cause: EmergencyCause::Tachycardia,
                at_ms: 4000
            }
        );
        assert!(matches!(ts[3].to, EngineState::Suspected { count: 4, since_ms: 0, .. }));
    }

    #[test]
    fn debounce_resets_on_normal() {
        let mut e = engine();
        let ts = vitals(&mut e, &[125, 125, 74]);
        assert_eq!(e.state(), EngineState::Monitoring);
        assert_eq!(ts.last().unwrap().to, EngineState::Monitoring);
    }

    #[test]
    fn bradycardia_triggers() {
        let mut e = engine();
        vitals(&mut e, &[55; 5]);
        assert_eq!(e.state().cause(), Some(EmergencyCause::Bradycardia));
        assert!(e.state().is_terminal());
    }

    #[test]
    fn cause_switch_restarts_count() {
        let mut e = engine();
        vitals(&mut e, &[125, 125, 125, 125, 55]);
        assert!(matches!(
            e.state(),
            EngineState::Suspected {
                cause: EmergencyCause::Bradycardia,
                count: 1,
                since_ms: 4000
            }
        ));
    }

    #[test]
    fn vital_ordering_error() {
        let mut e = engine();
        e.ingest_vital(VitalSample { t_ms: 10, bpm: 70 }).unwrap();
        assert!(matches!(
            e.ingest_vital(VitalSample { t_ms: 9, bpm: 70 }),
            Err(EngineError::Ordering { stream: "vital", .. })
        ));
        // Motion has its own stream clock.
        e.ingest_motion(motion(5, 0.0, 0.0, 1.0)).unwrap();
    }

    #[test]
    fn resting_gravity_stays_monitoring() {
        let mut e = engine();
        for i in 0..500 {
            assert!(e.ingest_motion(motion(i * 20, 0.0, 0.0, 1.0)).unwrap().is_empty());
        }
        assert_eq!(e.state(), EngineState::Monitoring);
    }

    #[test]
    fn sustained_free_fall_opens_countdown() {
        let mut e = engine();
        let mut entered = None;
        for i in 0..=15u64 {
            let ts = e.ingest_motion(motion(i * 20, 0.0, 0.0, 0.1)).unwrap();
            if let Some(t) = ts.first() {
                entered.get_or_insert(t.t_ms);
            }
        }
        // First sample at 0 ms; 200 ms of continuous free fall is reached at 200 ms.
        assert_eq!(entered, Some(200));
        assert_eq!(
            e.state(),
            EngineState::Countdown {
                cause: EmergencyCause::Crash,
                deadline_ms: 14_200
            }
        );
    }

    #[test]
    fn brief_free_fall_ignored() {
        let mut e = engine();
        for i in 0..9u64 {
            e.ingest_motion(motion(i * 20, 0.0, 0.0, 0.1)).unwrap();
        }
        e.ingest_motion(motion(180, 0.0, 0.0, 1.0)).unwrap();
        assert_eq!(e.state(), EngineState::Monitoring);
    }

    #[test]
    fn impact_opens_countdown() {
        let mut e = engine();
        let ts = e.ingest_motion(motion(0, 0.0, 0.0, 3.0)).unwrap();
        assert_eq!(ts.len(), 1);
        assert_eq!(
            e.state(),
            EngineState::Countdown {
                cause: EmergencyCause::Crash,
                deadline_ms: 14_000
            }
        );
    }

    #[test]
    fn sharp_tilt_opens_countdown_slow_tilt_does_not() {
        let mut e = engine();
        for i in 0..50u64 {
            e.ingest_motion(motion(i * 20, 0.0, 0.0, 1.0)).unwrap();
        }
        // 90 degree roll within one sample.
        let ts = e.ingest_motion(motion(1000, 1.0, 0.0, 0.0)).unwrap();
        assert_eq!(ts.len(), 1, "{ts:?}");

        let mut e = engine();
        // 90 degrees over 10 s: the trailing mean never lags by 60.
        for i in 0..=500u64 {
            let a = (i as f64 / 500.0) * std::f64::consts::FRAC_PI_2;
            assert!(e.ingest_motion(motion(i * 20, a.sin(), 0.0, a.cos())).unwrap().is_empty());
        }
    }

    #[test]
    fn motion_sample_bounds() {
        let mut e = engine();
        assert!(matches!(
            e.ingest_motion(motion(0, 17.0, 0.0, 0.0)),
            Err(EngineError::InvalidSample(_))
        ));
        assert!(matches!(
            e.ingest_motion(motion(0, f64::NAN, 0.0, 0.0)),
            Err(EngineError::InvalidSample(_))
        ));
    }

    #[test]
    fn panic_examples() {
        let mut e = engine();
        assert!(matches!(e.press_panic(0), PanicOutcome::Started(_)));
        assert_eq!(
            e.state(),
            EngineState::Countdown {
                cause: EmergencyCause::Panic,
                deadline_ms: 14_000
            }
        );

        let mut e = engine();
        e.ingest_motion(motion(0, 0.0, 0.0, 3.0)).unwrap();
        let before = e.state();
        assert!(matches!(e.press_panic(100), PanicOutcome::Ignored(_)));
        assert_eq!(e.state(), before);

        let mut e = engine();
        vitals(&mut e, &[125, 125]);
        assert!(matches!(e.press_panic(2000), PanicOutcome::Started(_)));
        assert_eq!(e.state().cause(), Some(EmergencyCause::Panic));
    }

    #[test]
    fn cancel_examples() {
        let mut e = engine();
        e.press_panic(0);
        let t = e.cancel(5000).unwrap();
        assert_eq!(t.to, EngineState::Cancelled { at_ms: 5000 });

        let mut e = engine();
        assert!(matches!(e.cancel(0), Err(EngineError::State { op: "cancel", state: "Monitoring" })));

        let mut e = engine();
        e.press_panic(0);
        assert!(e.cancel(13_999).is_ok());

        let mut e = engine();
        e.press_panic(0);
        assert!(matches!(e.cancel(14_000), Err(EngineError::Expired { .. })));
        assert!(matches!(e.state(), EngineState::Countdown { .. }));
    }

    #[test]
    fn send_examples() {
        let mut e = engine();
        e.press_panic(0);
        e.send_now(3000).unwrap();
        assert_eq!(
            e.state(),
            EngineState::Triggered {
                cause: EmergencyCause::Panic,
                at_ms: 3000
            }
        );
        assert!(matches!(e.send_now(3001), Err(EngineError::State { op: "send", .. })));

        let mut e = engine();
        e.ingest_motion(motion(0, 0.0, 0.0, 3.0)).unwrap();
        e.send_now(10).unwrap();
        assert_eq!(e.state().cause(), Some(EmergencyCause::Crash));
    }

    #[test]
    fn tick_examples() {
        let mut e = engine();
        assert!(e.tick(1_000_000).is_empty());
        e.press_panic(0);
        assert!(e.tick(13_999).is_empty());
        let ts = e.tick(14_000);
        assert_eq!(ts[0].t_ms, 14_000);
        assert_eq!(
            e.state(),
            EngineState::Triggered {
                cause: EmergencyCause::Panic,
                at_ms: 14_000
            }
        );

        // A late tick still stamps the deadline.
        let mut e = engine();
        e.press_panic(0);
        e.tick(20_000);
        assert_eq!(e.state(), EngineState::Triggered { cause: EmergencyCause::Panic, at_ms: 14_000 });
    }

    #[test]
    fn reset_examples() {
        let mut e = engine();
        e.press_panic(0);
        assert!(matches!(e.reset(1), Err(EngineError::State { op: "reset", .. })));
        e.cancel(1).unwrap();
        e.reset(2).unwrap();
        assert_eq!(e.state(), EngineState::Monitoring);

        vitals(&mut e, &[]);
        let mut e = engine();
        vitals(&mut e, &[125; 5]);
        e.reset(10_000).unwrap();
        assert_eq!(e.state(), EngineState::Monitoring);
    }

    #[test]
    fn terminal_states_ignore_samples() {
        let mut e = engine();
        e.press_panic(0);
        e.cancel(1).unwrap();
        assert!(e.ingest_vital(VitalSample { t_ms: 5, bpm: 200 }).unwrap().is_empty());
        assert!(e.ingest_motion(motion(5, 0.0, 0.0, 5.0)).unwrap().is_empty());
        assert_eq!(e.last_bpm(), Some(200));
        assert!(e.state().is_terminal());
    }

    #[test]
    fn threshold_validation() {
        assert!(Thresholds { hr_low: 120, ..Default::default() }.validate().is_err());
        assert!(Thresholds { consecutive_abnormal: 0, ..Default::default() }.validate().is_err());
        assert!(Thresholds { countdown_ms: 0, ..Default::default() }.validate().is_err());
        assert!(Thresholds { freefall_g: -1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn state_serializes_tagged() {
        let s = EngineState::Countdown {
            cause: EmergencyCause::Panic,
            deadline_ms: 14_000,
        };
        assert_eq!(
            serde_json::to_string(&s).unwrap(),
            r#"{"state":"Countdown","cause":"Panic","deadline_ms":14000}"#
        );
    }
}
