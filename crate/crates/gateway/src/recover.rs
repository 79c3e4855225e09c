//! Rebuilds engine state by replaying the inputs recorded in an event log.

use std::collections::{BTreeMap, VecDeque};

use ets_client::wire::{Command, ContactRegistry, EntryBody, EventLogEntry};
use ets_core::engine::{EmergencyCause, Engine, EngineError, EngineState, MotionSample, PanicOutcome, Thresholds, Transition, VitalSample};
use ets_core::geo::GeoFix;
use ets_core::notify::DeliveryRecord;

#[derive(Debug, Clone)]
pub struct TriggeredEpisode {
    /// Seq of the transition entry; doubles as the dispatch event id.
    pub event_id: u64,
    pub cause: EmergencyCause,
    pub at_ms: u64,
}

#[derive(Debug)]
pub struct Recovered {
    pub engine: Engine,
    pub contacts: Option<ContactRegistry>,
    pub last_fix: Option<GeoFix>,
    pub last_t_ms: u64,
    pub episode: Option<TriggeredEpisode>,
    pub deliveries: BTreeMap<u64, Vec<DeliveryRecord>>,
    /// Logged transitions the replay did not reproduce.
    pub mismatches: Vec<String>,
}

fn apply_command(engine: &mut Engine, cmd: &Command, t_ms: u64) -> Result<Vec<Transition>, EngineError> {
    Ok(match cmd {
        Command::Panic => match engine.press_panic(t_ms) {
            PanicOutcome::Started(t) => vec![t],
            PanicOutcome::Ignored(_) => Vec::new(),
        },
        Command::Cancel => vec![engine.cancel(t_ms)?],
        Command::Send => vec![engine.send_now(t_ms)?],
        Command::Reset => vec![engine.reset(t_ms)?],
        Command::Tick => engine.tick(t_ms),
        Command::Contacts(_) => Vec::new(),
    })
}

/// Feeds every recorded input to a fresh engine and checks the transitions it
/// produces against the ones that were logged.
pub fn replay_log(entries: &[EventLogEntry], thresholds: &Thresholds) -> Result<Recovered, EngineError> {
    let mut engine = Engine::new(thresholds.clone())?;
    let mut derived: VecDeque<Transition> = VecDeque::new();
    let mut out = Recovered {
        engine: engine.clone(),
        contacts: None,
        last_fix: None,
        last_t_ms: 0,
        episode: None,
        deliveries: BTreeMap::new(),
        mismatches: Vec::new(),
    };

    for e in entries {
        out.last_t_ms = out.last_t_ms.max(e.t_ms);
        let produced = match &e.body {
            EntryBody::Vital { bpm } => engine.ingest_vital(VitalSample { t_ms: e.t_ms, bpm: *bpm }),
            EntryBody::Motion { ax, ay, az } => engine.ingest_motion(MotionSample {
                t_ms: e.t_ms,
                ax: *ax,
                ay: *ay,
                az: *az,
            }),
            EntryBody::Fix(fix) => {
                out.last_fix = Some(*fix);
                Ok(Vec::new())
            }
            EntryBody::Command(cmd) => {
                if let Command::Contacts(c) = cmd {
                    out.contacts = Some(c.clone());
                }
                apply_command(&mut engine, cmd, e.t_ms)
            }
            EntryBody::Transition(logged) => {
                match derived.pop_front() {
                    Some(d) if &d == logged => {}
                    Some(d) => out.mismatches.push(format!("seq {}: logged {logged:?}, replay gave {d:?}", e.seq)),
                    None => out.mismatches.push(format!("seq {}: logged {logged:?} has no cause in the log", e.seq)),
                }
                match logged.to {
                    EngineState::Triggered { cause, at_ms } => {
                        out.episode = Some(TriggeredEpisode {
                            event_id: e.seq,
                            cause,
                            at_ms,
                        })
                    }
                    EngineState::Monitoring if logged.from.is_terminal() => out.episode = None,
                    _ => {}
                }
                Ok(Vec::new())
            }
            EntryBody::Delivery(rec) => {
                out.deliveries.entry(rec.event_id).or_default().push(rec.clone());
                Ok(Vec::new())
            }
        };
        match produced {
            Ok(ts) => derived.extend(ts),
            Err(err) => out.mismatches.push(format!("seq {}: replay rejected input: {err}", e.seq)),
        }
    }
    for d in derived {
        out.mismatches.push(format!("replay produced unlogged transition {d:?}"));
    }
    out.engine = engine;
    Ok(out)
}
