//! General Packet framing for the wearable heart-rate strap.
//!
//! Wire layout (12 bytes, multi-byte fields little-endian):
//!
//! ```text
//! +-----+--------+-----+---------------------------------------------+-----+-----+
//! | STX | msg_id | DLC | battery hr beats speed_lo speed_hi dist_lo dist_hi | CRC | ETX |
//! | 02  |   26   | 07  |                 7 bytes                      |     | 03  |
//! +-----+--------+-----+---------------------------------------------+-----+-----+
//! ```
//!
//! The CRC covers the payload only.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const STX: u8 = 0x02;
pub const ETX: u8 = 0x03;
pub const GENERAL_PACKET_ID: u8 = 0x26;
pub const PAYLOAD_LEN: usize = 7;
pub const FRAME_LEN: usize = PAYLOAD_LEN + 5;
/// Upper bound on any frame this link carries.
pub const MAX_FRAME_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    None,
    Even,
    Odd,
}

/// Serial link parameters. Informational only: no serial timing is simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub baud: u32,
    pub data_bits: u8,
    pub stop_bits: u8,
    pub parity: Parity,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            baud: 115_200,
            data_bits: 8,
            stop_bits: 1,
            parity: Parity::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneralPacket {
    pub msg_id: u8,
    pub battery_pct: u8,
    pub heart_rate_bpm: u8,
    /// Wrapping beat counter.
    pub heartbeat_count: u8,
    /// 1/256 m/s.
    pub speed_q8: u16,
    /// 1/16 m.
    pub distance_q4: u16,
}

impl Default for GeneralPacket {
    fn default() -> Self {
        Self {
            msg_id: GENERAL_PACKET_ID,
            battery_pct: 0,
            heart_rate_bpm: 0,
            heartbeat_count: 0,
            speed_q8: 0,
            distance_q4: 0,
        }
    }
}

impl GeneralPacket {
    pub fn speed_mps(&self) -> f64 {
        f64::from(self.speed_q8) / 256.0
    }

    pub fn distance_m(&self) -> f64 {
        f64::from(self.distance_q4) / 16.0
    }

    fn payload(&self) -> [u8; PAYLOAD_LEN] {
        let speed = self.speed_q8.to_le_bytes();
        let dist = self.distance_q4.to_le_bytes();
        [
            self.battery_pct,
            self.heart_rate_bpm,
            self.heartbeat_count,
            speed[0],
            speed[1],
            dist[0],
            dist[1],
        ]
    }

    fn from_payload(msg_id: u8, p: &[u8]) -> Self {
        Self {
            msg_id,
            battery_pct: p[0],
            heart_rate_bpm: p[1],
            heartbeat_count: p[2],
            speed_q8: u16::from_le_bytes([p[3], p[4]]),
            distance_q4: u16::from_le_bytes([p[5], p[6]]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PacketError {
    #[error("invalid field {field}: {reason}")]
    InvalidField { field: &'static str, reason: String },
}

/// CRC-8, reflected polynomial 0x8C (Dallas/Maxim 1-Wire), init 0x00, LSB first.
pub fn crc8(data: &[u8]) -> u8 {
    data.iter().fold(0u8, |crc, &b| CRC8_TABLE[(crc ^ b) as usize])
}

const CRC8_TABLE: [u8; 256] = build_crc8_table();

const fn build_crc8_table() -> [u8; 256] {
    let mut table = [0u8; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = i as u8;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 1 != 0 { (crc >> 1) ^ 0x8C } else { crc >> 1 };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
}

pub fn encode_packet(p: &GeneralPacket) -> Result<Vec<u8>, PacketError> {
    if p.battery_pct > 100 {
        return Err(PacketError::InvalidField {
            field: "battery_pct",
            reason: format!("{} exceeds 100", p.battery_pct),
        });
    }
    let payload = p.payload();
    let mut frame = Vec::with_capacity(FRAME_LEN);
    frame.push(STX);
    frame.push(p.msg_id);
    frame.push(PAYLOAD_LEN as u8);
    frame.extend_from_slice(&payload);
    frame.push(crc8(&payload));
    frame.push(ETX);
    Ok(frame)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeframerStats {
    pub packets_ok: u64,
    pub crc_failures: u64,
    pub resyncs: u64,
}

/// Reassembles General Packets from an arbitrarily chunked byte stream.
///
/// Garbage and corrupt frames are dropped and counted; the deframer then
/// resynchronizes on the next STX.
#[derive(Debug, Default)]
pub struct Deframer {
    buffer: Vec<u8>,
    stats: DeframerStats,
}

impl Deframer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stats(&self) -> DeframerStats {
        self.stats
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    pub fn feed(&mut self, chunk: &[u8]) -> Vec<GeneralPacket> {
        let mut out = Vec::new();
        // Process in slices so the buffer never grows past 2x MAX_FRAME_LEN.
        for piece in chunk.chunks(MAX_FRAME_LEN) {
            self.buffer.extend_from_slice(piece);
            self.drain(&mut out);
            debug_assert!(self.buffer.len() <= 2 * MAX_FRAME_LEN);
        }
        out
    }

    fn drain(&mut self, out: &mut Vec<GeneralPacket>) {
        loop {
            // Drop everything before the first STX.
            match self.buffer.iter().position(|&b| b == STX) {
                Some(0) => {}
                Some(n) => {
                    self.buffer.drain(..n);
                    self.stats.resyncs += 1;
                }
                None => {
                    if !self.buffer.is_empty() {
                        self.buffer.clear();
                        self.stats.resyncs += 1;
                    }
                    return;
                }
            }
            if self.buffer.len() < 3 {
                return;
            }
            let dlc = self.buffer[2] as usize;
            if dlc != PAYLOAD_LEN {
                self.reject_head();
                continue;
            }
            if self.buffer.len() < FRAME_LEN {
                return;
            }
            let payload = &self.buffer[3..3 + PAYLOAD_LEN];
            let crc_ok = crc8(payload) == self.buffer[3 + PAYLOAD_LEN];
            let etx_ok = self.buffer[FRAME_LEN - 1] == ETX;
            let id_ok = self.buffer[1] == GENERAL_PACKET_ID;
            if crc_ok && etx_ok && id_ok && payload[0] <= 100 {
                out.push(GeneralPacket::from_payload(self.buffer[1], payload));
                self.buffer.drain(..FRAME_LEN);
                self.stats.packets_ok += 1;
            } else {
                if !crc_ok {
                    self.stats.crc_failures += 1;
                }
                self.reject_head();
            }
        }
    }

    /// Discard through the bad STX; the next pass resynchronizes.
    fn reject_head(&mut self) {
        self.buffer.drain(..1);
        self.stats.resyncs += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Bit-serial shift register, kept independent of the table.
    fn crc8_bitwise(data: &[u8]) -> u8 {
        let mut crc = 0u8;
        for &byte in data {
            for i in 0..8 {
                let bit = (byte >> i) & 1;
                let mix = (crc ^ bit) & 1;
                crc >>= 1;
                if mix != 0 {
                    crc ^= 0x8C;
                }
            }
        }
        crc
    }

    fn sample() -> GeneralPacket {
        GeneralPacket {
            battery_pct: 87,
            heart_rate_bpm: 74,
            heartbeat_count: 200,
            speed_q8: 0x0180,
            distance_q4: 0x1234,
            ..Default::default()
        }
    }

    #[test]
    fn channel_defaults() {
        let p = ChannelParams::default();
        assert_eq!((p.baud, p.data_bits, p.stop_bits, p.parity), (115_200, 8, 1, Parity::None));
    }

    #[test]
    fn crc_of_empty_is_init() {
        assert_eq!(crc8(&[]), 0x00);
    }

    #[test]
    fn crc_single_byte_matches_oracle() {
        // Frozen from crc8_bitwise(&[0x01]).
        assert_eq!(crc8_bitwise(&[0x01]), 0x5E);
        assert_eq!(crc8(&[0x01]), 0x5E);
        // Standard check value for CRC-8/MAXIM.
        assert_eq!(crc8(b"123456789"), 0xA1);
    }

    #[test]
    fn zero_packet_frame() {
        let frame = encode_packet(&GeneralPacket::default()).unwrap();
        assert_eq!(frame, vec![0x02, 0x26, 0x07, 0, 0, 0, 0, 0, 0, 0, 0x00, 0x03]);
    }

    #[test]
    fn heart_rate_lands_in_byte_four() {
        let frame = encode_packet(&GeneralPacket {
            heart_rate_bpm: 74,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(frame[4], 0x4A);
        assert_eq!(frame.len(), FRAME_LEN);
    }

    #[test]
    fn speed_is_little_endian() {
        let frame = encode_packet(&sample()).unwrap();
        let payload = &frame[3..10];
        assert_eq!((payload[3], payload[4]), (0x80, 0x01));
        assert_eq!(sample().speed_mps(), 1.5);
    }

    #[test]
    fn battery_over_100_rejected() {
        let err = encode_packet(&GeneralPacket {
            battery_pct: 101,
            ..Default::default()
        })
        .unwrap_err();
        assert!(matches!(err, PacketError::InvalidField { field: "battery_pct", .. }));
    }

    #[test]
    fn round_trip_and_split() {
        let frame = encode_packet(&sample()).unwrap();
        let mut d = Deframer::new();
        assert_eq!(d.feed(&frame), vec![sample()]);

        let mut d = Deframer::new();
        assert!(d.feed(&frame[..5]).is_empty());
        assert_eq!(d.feed(&frame[5..]), vec![sample()]);
        assert_eq!(d.stats().packets_ok, 1);
        assert_eq!(d.buffered(), 0);
    }

    #[test]
    fn flipped_payload_counts_crc_failure() {
        let mut frame = encode_packet(&sample()).unwrap();
        frame[3] ^= 0x01;
        let mut d = Deframer::new();
        assert!(d.feed(&frame).is_empty());
        assert_eq!(d.stats().crc_failures, 1);
        assert_eq!(d.stats().packets_ok, 0);
    }

    #[test]
    fn empty_chunk_is_noop() {
        let mut d = Deframer::new();
        assert!(d.feed(&[]).is_empty());
        assert_eq!(d.stats(), DeframerStats::default());
    }

    #[test]
    fn multiple_frames_in_one_chunk() {
        let a = sample();
        let b = GeneralPacket {
            heart_rate_bpm: 125,
            ..sample()
        };
        let mut bytes = encode_packet(&a).unwrap();
        bytes.extend(encode_packet(&b).unwrap());
        let mut d = Deframer::new();
        assert_eq!(d.feed(&bytes), vec![a, b]);
    }

    #[test]
    fn buffer_stays_bounded_under_garbage() {
        let mut d = Deframer::new();
        let garbage: Vec<u8> = (0..10_000u32).map(|i| if i % 7 == 0 { STX } else { 0x07 }).collect();
        d.feed(&garbage);
        assert!(d.buffered() <= 2 * MAX_FRAME_LEN);
    }
}
