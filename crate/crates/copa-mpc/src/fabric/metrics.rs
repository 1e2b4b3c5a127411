//! Byte and message accounting, split by directed link.
//!
//! Payload bytes and total bytes (headers included) are tracked separately
//! so traffic-shape checks stay independent of the framing overhead.

use serde::Serialize;

use crate::fabric::wire::{MessageType, WireMessage, HEADER_LEN};
use crate::ring::NUM_PARTIES;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LinkCounters {
    pub messages: u64,
    pub payload_bytes: u64,
    pub total_bytes: u64,
}

/// Snapshot of all fabric counters at one instant.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MetricsSnapshot {
    /// Capture time: virtual µs in simulation, wall µs over sockets.
    pub time_us: f64,
    /// Outbound counters indexed [src][dst].
    pub links: [[LinkCounters; NUM_PARTIES]; NUM_PARTIES],
    /// Outbound message counts per party indexed by message type 1..=6.
    pub messages_by_type: [[u64; 6]; NUM_PARTIES],
    /// Completed accelerator jobs per party.
    pub ops_completed: [u64; NUM_PARTIES],
}

impl MetricsSnapshot {
    pub fn record_send(&mut self, msg: &WireMessage) {
        let c = &mut self.links[msg.src_party as usize][msg.dst_party as usize];
        c.messages += 1;
        c.payload_bytes += msg.payload.len() as u64;
        c.total_bytes += (HEADER_LEN + msg.payload.len()) as u64;
        self.messages_by_type[msg.src_party as usize][msg.msg_type as usize - 1] += 1;
    }

    pub fn link(&self, src: u8, dst: u8) -> &LinkCounters {
        &self.links[src as usize][dst as usize]
    }

    /// Payload bytes party `p` has sent across all links.
    pub fn party_payload_out(&self, p: u8) -> u64 {
        self.links[p as usize].iter().map(|c| c.payload_bytes).sum()
    }

    /// Payload bytes party `p` has received across all links.
    pub fn party_payload_in(&self, p: u8) -> u64 {
        self.links
            .iter()
            .map(|row| row[p as usize].payload_bytes)
            .sum()
    }

    pub fn total_payload(&self) -> u64 {
        self.links
            .iter()
            .flatten()
            .map(|c| c.payload_bytes)
            .sum()
    }

    /// Outbound messages of one type, summed over parties.
    pub fn messages_of_type(&self, t: MessageType) -> u64 {
        self.messages_by_type
            .iter()
            .map(|row| row[t as usize - 1])
            .sum()
    }

    /// Counter difference `self - earlier`, with time_us as the elapsed
    /// span. Panics if counters moved backwards; they are monotone.
    pub fn delta(&self, earlier: &MetricsSnapshot) -> MetricsSnapshot {
        let mut out = MetricsSnapshot {
            time_us: self.time_us - earlier.time_us,
            ..Default::default()
        };
        for s in 0..NUM_PARTIES {
            for d in 0..NUM_PARTIES {
                let a = &self.links[s][d];
                let b = &earlier.links[s][d];
                out.links[s][d] = LinkCounters {
                    messages: a.messages - b.messages,
                    payload_bytes: a.payload_bytes - b.payload_bytes,
                    total_bytes: a.total_bytes - b.total_bytes,
                };
            }
            for t in 0..6 {
                out.messages_by_type[s][t] =
                    self.messages_by_type[s][t] - earlier.messages_by_type[s][t];
            }
            out.ops_completed[s] = self.ops_completed[s] - earlier.ops_completed[s];
        }
        out
    }
}

/// Payload rate in Gb/s for `payload_bytes` moved over `elapsed_us`.
pub fn effective_gbps(payload_bytes: u64, elapsed_us: f64) -> f64 {
    if elapsed_us <= 0.0 {
        return 0.0;
    }
    payload_bytes as f64 * 8.0 / (elapsed_us * 1e3)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn send_accounting() {
        let mut m = MetricsSnapshot::default();
        let msg = WireMessage::put(0, 2, 1, 0, vec![0u8; 100]);
        m.record_send(&msg);
        m.record_send(&msg);
        let c = m.link(0, 2);
        assert_eq!(c.messages, 2);
        assert_eq!(c.payload_bytes, 200);
        assert_eq!(c.total_bytes, 200 + 2 * HEADER_LEN as u64);
        assert!(c.payload_bytes <= c.total_bytes);
        assert_eq!(m.party_payload_out(0), 200);
        assert_eq!(m.party_payload_in(2), 200);
        assert_eq!(m.messages_of_type(MessageType::Put), 2);
    }

    #[test]
    fn effective_rate() {
        // 12.5 MB in 1000 us = 100 Gb/s.
        let gbps = effective_gbps(12_500_000, 1000.0);
        assert!((gbps - 100.0).abs() < 1e-9);
    }
}
