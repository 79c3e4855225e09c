//! Microcontroller alert link and a virtual LED board on the other end.

use std::io;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::channel::ByteChannel;

pub const ALERT_BYTE: u8 = 0x45;
pub const ALERT_ACK: u8 = 0x06;
pub const LED_PIN: u8 = 13;
pub const BLINK_DURATION_MS: u64 = 10_000;
/// Half period of the 2 Hz blink.
pub const BLINK_TOGGLE_MS: u64 = 250;

/// Writes the alert byte and waits for the board's acknowledgment.
pub async fn send_controller_alert(channel: &mut dyn ByteChannel) -> io::Result<u8> {
    channel.write_chunk(&[ALERT_BYTE]).await?;
    let reply = channel.read_chunk().await?;
    match reply.first() {
        Some(&ALERT_ACK) => Ok(ALERT_ACK),
        Some(b) => Err(io::Error::new(io::ErrorKind::InvalidData, format!("unexpected reply byte {b:#04x}"))),
        None => Err(io::Error::new(io::ErrorKind::UnexpectedEof, "controller closed without ack")),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllerEmulator {
    pub led_pin: u8,
    pub led_state: bool,
    pub blink_until_ms: u64,
    blink_start_ms: Option<u64>,
    pub alerts: u64,
    pub bad_bytes: u64,
}

impl Default for ControllerEmulator {
    fn default() -> Self {
        Self {
            led_pin: LED_PIN,
            led_state: false,
            blink_until_ms: 0,
            blink_start_ms: None,
            alerts: 0,
            bad_bytes: 0,
        }
    }
}

impl ControllerEmulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns true when the byte was a valid alert (and should be acked).
    pub fn on_byte(&mut self, byte: u8, now_ms: u64) -> bool {
        if byte != ALERT_BYTE {
            self.bad_bytes += 1;
            return false;
        }
        self.alerts += 1;
        if !self.is_blinking(now_ms) {
            self.blink_start_ms = Some(now_ms);
        }
        self.blink_until_ms = self.blink_until_ms.max(now_ms + BLINK_DURATION_MS);
        self.advance(now_ms);
        true
    }

    pub fn is_blinking(&self, now_ms: u64) -> bool {
        self.blink_start_ms.is_some_and(|s| now_ms >= s) && now_ms < self.blink_until_ms
    }

    /// LED level at `now_ms`: on for the first half of every 500 ms cycle.
    pub fn led_at(&self, now_ms: u64) -> bool {
        match self.blink_start_ms {
            Some(start) if self.is_blinking(now_ms) => ((now_ms - start) / BLINK_TOGGLE_MS).is_multiple_of(2),
            _ => false,
        }
    }

    pub fn advance(&mut self, now_ms: u64) {
        self.led_state = self.led_at(now_ms);
    }

    /// Every instant the LED changes level during the current blink episode.
    pub fn toggle_times(&self) -> Vec<u64> {
        let Some(start) = self.blink_start_ms else {
            return Vec::new();
        };
        (start..self.blink_until_ms).step_by(BLINK_TOGGLE_MS as usize).collect()
    }
}

/// Serves the board protocol on a channel until the peer hangs up.
pub async fn run_controller_emulator<C, F>(
    mut channel: C,
    board: Arc<Mutex<ControllerEmulator>>,
    clock: F,
) -> io::Result<()>
where
    C: ByteChannel,
    F: Fn() -> u64 + Send,
{
    loop {
        let chunk = channel.read_chunk().await?;
        if chunk.is_empty() {
            return Ok(());
        }
        for byte in chunk {
            let acked = board.lock().expect("board lock poisoned").on_byte(byte, clock());
            if acked {
                channel.write_chunk(&[ALERT_ACK]).await?;
            }
        }
    }
}
