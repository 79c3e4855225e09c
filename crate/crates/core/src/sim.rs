//! Synthetic sensor traces and timed replay.
//!
//! Traces are generated from a `ChaCha8Rng` (rand_chacha 0.9) seeded with
//! `seed_from_u64`, with Gaussian noise from `rand_distr::StandardNormal`.
//! Changing either crate's major version may change golden traces.

use std::io::{BufRead, Write};
use std::time::Duration;

use async_trait::async_trait;
use chrono::NaiveTime;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Engine, EngineError, MotionSample, Transition, VitalSample};
use crate::geo::{parse_gga, render_gga, GeoFix};

pub const HR_PERIOD_MS: u64 = 1000;
pub const MOTION_PERIOD_MS: u64 = 20;
pub const GPS_PERIOD_MS: u64 = 5000;
pub const BASELINE_BPM: f64 = 75.0;
pub const BASELINE_SIGMA: f64 = 3.0;
pub const RAMP_MS: u64 = 10_000;
const MOTION_SIGMA_G: f64 = 0.02;
const ROUTE_START: (f64, f64) = (48.1173, 11.516_67);
const ROUTE_STEP: (f64, f64) = (0.0002, 0.0003);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TraceEvent {
    Hr { bpm: u8 },
    Motion { ax: f64, ay: f64, az: f64 },
    Nmea { sentence: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t_ms: u64,
    #[serde(flatten)]
    pub event: TraceEvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpisodeKind {
    Tachy,
    Brady,
    Crash,
    Nominal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrashProfile {
    pub freefall_ms: u64,
    pub freefall_g: f64,
    pub spike_g: f64,
}

impl Default for CrashProfile {
    fn default() -> Self {
        Self {
            freefall_ms: 300,
            freefall_g: 0.1,
            spike_g: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub kind: EpisodeKind,
    pub onset_s: u64,
    pub peak_bpm: u8,
    pub duration_s: u64,
    #[serde(default)]
    pub crash: CrashProfile,
}

impl EpisodeSpec {
    pub fn nominal() -> Self {
        Self {
            kind: EpisodeKind::Nominal,
            onset_s: 0,
            peak_bpm: BASELINE_BPM as u8,
            duration_s: 0,
            crash: CrashProfile::default(),
        }
    }

    pub fn tachy(onset_s: u64, peak_bpm: u8, duration_s: u64) -> Self {
        Self {
            kind: EpisodeKind::Tachy,
            onset_s,
            peak_bpm,
            duration_s,
            crash: CrashProfile::default(),
        }
    }

    pub fn brady(onset_s: u64, peak_bpm: u8, duration_s: u64) -> Self {
        Self {
            kind: EpisodeKind::Brady,
            ..Self::tachy(onset_s, peak_bpm, duration_s)
        }
    }

    pub fn crash(onset_s: u64) -> Self {
        Self {
            kind: EpisodeKind::Crash,
            onset_s,
            peak_bpm: BASELINE_BPM as u8,
            duration_s: 1,
            crash: CrashProfile::default(),
        }
    }

    pub fn validate(&self, trace_duration_s: u64) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidSpec(m));
        if trace_duration_s == 0 {
            return bad("trace duration must be positive".into());
        }
        if self.kind == EpisodeKind::Nominal {
            return Ok(());
        }
        if self.onset_s + self.duration_s > trace_duration_s {
            return bad(format!(
                "episode {}+{} s does not fit in a {} s trace",
                self.onset_s, self.duration_s, trace_duration_s
            ));
        }
        match self.kind {
            EpisodeKind::Tachy if f64::from(self.peak_bpm) <= BASELINE_BPM => {
                bad(format!("tachy peak {} must exceed the {BASELINE_BPM} baseline", self.peak_bpm))
            }
            EpisodeKind::Brady if f64::from(self.peak_bpm) >= BASELINE_BPM => {
                bad(format!("brady trough {} must be below the {BASELINE_BPM} baseline", self.peak_bpm))
            }
            EpisodeKind::Crash => {
                let c = &self.crash;
                if self.duration_s == 0 || c.freefall_ms + MOTION_PERIOD_MS > self.duration_s * 1000 {
                    return bad("crash profile longer than the episode".into());
                }
                if !(0.0..=16.0).contains(&c.freefall_g) || !(0.0..=16.0).contains(&c.spike_g) {
                    return bad("crash profile accelerations must lie in 0..16 g".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid episode: {0}")]
    InvalidSpec(String),
    #[error("trace not sorted: record {index} at {t_ms} ms follows {prev_ms} ms")]
    Unsorted { index: usize, t_ms: u64, prev_ms: u64 },
    #[error("speed factor must be positive, got {0}")]
    BadSpeed(f64),
    #[error("trace line {line}: {source}")]
    Format { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("replay sink: {0}")]
    Sink(String),
}

fn baseline_bpm(rng: &mut ChaCha8Rng) -> u8 {
    // Re-draw anything beyond 5 sigma or outside the open normal band.
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() >= 5.0 {
            continue;
        }
        let bpm = (BASELINE_BPM + BASELINE_SIGMA * z).round().clamp(40.0, 200.0);
        if bpm > 60.0 && bpm < 120.0 {
            return bpm as u8;
        }
    }
}

fn ramp_bpm(peak: u8, since_onset_ms: u64) -> u8 {
    let frac = (since_onset_ms as f64 / RAMP_MS as f64).min(1.0);
    (BASELINE_BPM + (f64::from(peak) - BASELINE_BPM) * frac).round() as u8
}

fn noise(rng: &mut ChaCha8Rng) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    z * MOTION_SIGMA_G
}

fn round4(v: f64) -> f64 {
    (v * 10_000.0).round() / 10_000.0
}

fn route_fix(t_ms: u64) -> GeoFix {
    let k = (t_ms / GPS_PERIOD_MS) as f64;
    let secs = (12 * 3600 + t_ms / 1000) % 86_400;
    GeoFix {
        latitude_deg: ROUTE_START.0 + ROUTE_STEP.0 * k,
        longitude_deg: ROUTE_START.1 + ROUTE_STEP.1 * k,
        utc_time: NaiveTime::from_num_seconds_from_midnight_opt(secs as u32, 0).expect("seconds < 86400"),
        fix_quality: 1,
        satellites: 8,
    }
}

/// Generates a trace as a pure function of `(spec, seed, duration_s)`.
///
/// Heart rate at 1 Hz, accelerometer at 50 Hz, one GGA fix every 5 s.
pub fn generate_trace(spec: &EpisodeSpec, seed: u64, duration_s: u64) -> Result<Vec<TraceRecord>, SimError> {
    spec.validate(duration_s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let onset = spec.onset_s * 1000;
    let end = onset + spec.duration_s * 1000;
    let in_episode = |t: u64| spec.kind != EpisodeKind::Nominal && t >= onset && t < end;
    let mut out = Vec::new();

    for t in (0..duration_s * 1000).step_by(MOTION_PERIOD_MS as usize) {
        if t % HR_PERIOD_MS == 0 {
            let bpm = match spec.kind {
                EpisodeKind::Tachy | EpisodeKind::Brady if in_episode(t) => ramp_bpm(spec.peak_bpm, t - onset),
                _ => baseline_bpm(&mut rng),
            };
            out.push(TraceRecord {
                t_ms: t,
                event: TraceEvent::Hr { bpm },
            });
        }

        let (nx, ny, nz) = (noise(&mut rng), noise(&mut rng), noise(&mut rng));
        let c = &spec.crash;
        let (ax, ay, az) = if spec.kind == EpisodeKind::Crash && t >= onset && t < onset + c.freefall_ms {
            // Near weightless; noise scaled down with the signal.
            (nx * 0.5, ny * 0.5, c.freefall_g + nz * 0.5)
        } else if spec.kind == EpisodeKind::Crash && t == onset + c.freefall_ms {
            (nx, ny, c.spike_g + nz)
        } else {
            (nx, ny, 1.0 + nz)
        };
        out.push(TraceRecord {
            t_ms: t,
            event: TraceEvent::Motion {
                ax: round4(ax),
                ay: round4(ay),
                az: round4(az),
            },
        });

        if t % GPS_PERIOD_MS == 0 {
            out.push(TraceRecord {
                t_ms: t,
                event: TraceEvent::Nmea {
                    sentence: render_gga(&route_fix(t)),
                },
            });
        }
    }
    Ok(out)
}

pub fn write_trace<W: Write>(mut w: W, records: &[TraceRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_trace<R: BufRead>(r: R) -> Result<Vec<TraceRecord>, SimError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| SimError::Format { line: i + 1, source })?);
    }
    Ok(out)
}

pub fn check_sorted(trace: &[TraceRecord]) -> Result<(), SimError> {
    for (i, pair) in trace.windows(2).enumerate() {
        if pair[1].t_ms < pair[0].t_ms {
            return Err(SimError::Unsorted {
                index: i + 1,
                t_ms: pair[1].t_ms,
                prev_ms: pair[0].t_ms,
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub hr: u64,
    pub motion: u64,
    pub nmea: u64,
    /// Logical time of the last record.
    pub last_t_ms: u64,
}

impl ReplayReport {
    pub fn total(&self) -> u64 {
        self.hr + self.motion + self.nmea
    }
}

#[async_trait]
pub trait ReplaySink: Send {
    async fn deliver(&mut self, record: &TraceRecord) -> Result<(), String>;
}

/// Plays `trace` into `sink`, holding each record until `t_ms / speed` of wall
/// time has elapsed. An infinite speed delivers as fast as the sink accepts.
pub async fn replay<S: ReplaySink + ?Sized>(
    trace: &[TraceRecord],
    speed: f64,
    sink: &mut S,
) -> Result<ReplayReport, SimError> {
    if speed.is_nan() || speed <= 0.0 {
        return Err(SimError::BadSpeed(speed));
    }
    check_sorted(trace)?;
    let start = tokio::time::Instant::now();
    let mut report = ReplayReport::default();
    for rec in trace {
        if speed.is_finite() {
            let due = start + Duration::from_secs_f64(rec.t_ms as f64 / 1000.0 / speed);
            tokio::time::sleep_until(due).await;
        }
        sink.deliver(rec).await.map_err(SimError::Sink)?;
        match rec.event {
            TraceEvent::Hr { .. } => report.hr += 1,
            TraceEvent::Motion { .. } => report.motion += 1,
            TraceEvent::Nmea { .. } => report.nmea += 1,
        }
        report.last_t_ms = rec.t_ms;
    }
    Ok(report)
}

/// Feeds records straight into an [`Engine`], ticking before every input.
pub struct EngineDriver {
    pub engine: Engine,
    pub last_fix: Option<GeoFix>,
    pub transitions: Vec<Transition>,
}

impl EngineDriver {
    pub fn new(engine: Engine) -> Self {
        Self {
            engine,
            last_fix: None,
            transitions: Vec::new(),
        }
    }

    pub fn apply(&mut self, rec: &TraceRecord) -> Result<(), EngineError> {
        self.transitions.extend(self.engine.tick(rec.t_ms));
        let ts = match &rec.event {
            TraceEvent::Hr { bpm } => self.engine.ingest_vital(VitalSample {
                t_ms: rec.t_ms,
                bpm: *bpm,
            })?,
            TraceEvent::Motion { ax, ay, az } => self.engine.ingest_motion(MotionSample {
                t_ms: rec.t_ms,
                ax: *ax,
                ay: *ay,
                az: *az,
            })?,
            TraceEvent::Nmea { sentence } => {
                match parse_gga(sentence) {
                    Ok(fix) => self.last_fix = Some(fix),
                    Err(e) => tracing::debug!(error = %e, "dropping GPS sentence"),
                }
                Vec::new()
            }
        };
        self.transitions.extend(ts);
        Ok(())
    }
}

#[async_trait]
impl ReplaySink for EngineDriver {
    async fn deliver(&mut self, record: &TraceRecord) -> Result<(), String> {
        self.apply(record).map_err(|e| e.to_string())
    }
}
