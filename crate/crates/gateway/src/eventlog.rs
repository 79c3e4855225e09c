//! Append-only JSON Lines event log with a single writer.

use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use ets_client::wire::{EntryBody, EventLogEntry};
use ets_core::engine::EngineState;

pub struct EventLog {
    path: PathBuf,
    writer: BufWriter<File>,
    next_seq: u64,
}

fn invalid(msg: String) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg)
}

/// Reads every complete entry. A torn final line (no newline, or not valid
/// JSON) is reported through the returned byte length of the good prefix.
fn scan(path: &Path) -> io::Result<(Vec<EventLogEntry>, u64)> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok((Vec::new(), 0)),
        Err(e) => return Err(e),
    };
    let mut entries = Vec::new();
    let mut good = 0usize;
    let mut start = 0usize;
    while let Some(rel) = bytes[start..].iter().position(|&b| b == b'\n') {
        let line = &bytes[start..start + rel];
        let next = start + rel + 1;
        if !line.iter().all(u8::is_ascii_whitespace) {
            match serde_json::from_slice::<EventLogEntry>(line) {
                Ok(e) => entries.push(e),
                Err(err) if next == bytes.len() => {
                    tracing::warn!(error = %err, "dropping unparsable final log line");
                    break;
                }
                Err(err) => return Err(invalid(format!("{}: corrupt entry at byte {start}: {err}", path.display()))),
            }
        }
        good = next;
        start = next;
    }
    if good < bytes.len() {
        tracing::warn!(bytes = bytes.len() - good, "truncating torn tail of event log");
    }
    for (i, e) in entries.iter().enumerate() {
        if e.seq != i as u64 + 1 {
            return Err(invalid(format!("{}: seq gap, expected {} got {}", path.display(), i + 1, e.seq)));
        }
    }
    Ok((entries, good as u64))
}

/// Reads a log without modifying it.
pub fn read_log(path: &Path) -> io::Result<Vec<EventLogEntry>> {
    scan(path).map(|(entries, _)| entries)
}

impl EventLog {
    /// Opens (or creates) the log, dropping any torn tail, and returns the
    /// entries already on disk.
    pub fn open(path: &Path) -> io::Result<(Self, Vec<EventLogEntry>)> {
        let (entries, good_len) = scan(path)?;
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        if file.metadata()?.len() > good_len {
            file.set_len(good_len)?;
        }
        let log = Self {
            path: path.to_path_buf(),
            writer: BufWriter::new(file),
            next_seq: entries.len() as u64 + 1,
        };
        Ok((log, entries))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn last_seq(&self) -> u64 {
        self.next_seq - 1
    }

    /// Appends one entry. Writes reach the OS immediately; a transition into
    /// `Triggered` is also fsynced.
    pub fn append(&mut self, t_ms: u64, body: EntryBody) -> io::Result<EventLogEntry> {
        let entry = EventLogEntry {
            seq: self.next_seq,
            t_ms,
            body,
        };
        serde_json::to_writer(&mut self.writer, &entry)?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        self.next_seq += 1;
        if matches!(&entry.body, EntryBody::Transition(t) if matches!(t.to, EngineState::Triggered { .. })) {
            self.sync()?;
        }
        Ok(entry)
    }

    pub fn sync(&mut self) -> io::Result<()> {
        self.writer.flush()?;
        self.writer.get_ref().sync_data()
    }
}
