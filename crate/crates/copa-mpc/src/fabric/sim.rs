//! Deterministic in-process fabric on a virtual clock.
//!
//! All events live in one priority queue ordered by (time, sequence), so a
//! run is a pure function of its inputs: identical submissions produce an
//! identical event timeline and identical counters. Per directed link,
//! messages are serialized in emission order over a bandwidth/latency
//! model; delivery order always equals send order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;

use crate::fabric::link::{LinkModel, LinkState};
use crate::fabric::metrics::MetricsSnapshot;
use crate::fabric::wire::WireMessage;
use crate::ring::{PartyId, NUM_PARTIES};

/// What happens when an event fires.
#[derive(Clone, Debug)]
pub enum SimEventKind {
    /// A fabric message reaches its destination party.
    Deliver(WireMessage),
    /// An accelerator instance finishes its modeled compute phase.
    ComputeDone { party: PartyId, ticket: u64 },
}

#[derive(Debug)]
struct SimEvent {
    at_us: f64,
    seq: u64,
    kind: SimEventKind,
}

impl PartialEq for SimEvent {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}
impl Eq for SimEvent {}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// BinaryHeap is a max-heap; invert so the earliest (time, seq) pops first.
impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .at_us
            .total_cmp(&self.at_us)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Compact record of one processed event, kept for determinism checks and
/// wire-content comparisons.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EventRecord {
    /// Bit pattern of the f64 timestamp, so equality is exact.
    pub time_bits: u64,
    pub party: PartyId,
    pub kind: &'static str,
    pub msg_type: Option<u8>,
    pub src: Option<PartyId>,
    pub ticket: Option<u64>,
    pub payload_len: u32,
    /// FNV-1a over the payload; lets tests compare wire contents between
    /// runs without storing them.
    pub payload_digest: u64,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Mutates messages in flight; installed by fault-injection tests.
pub type TamperFn = Box<dyn FnMut(&mut WireMessage)>;

pub struct SimNet {
    links: [[LinkState; NUM_PARTIES]; NUM_PARTIES],
    heap: BinaryHeap<SimEvent>,
    clock_us: f64,
    seq: u64,
    pub metrics: MetricsSnapshot,
    pub log: Vec<EventRecord>,
    tamper: Option<TamperFn>,
}

impl SimNet {
    pub fn new(model: LinkModel) -> Self {
        SimNet {
            links: [[LinkState::new(model); NUM_PARTIES]; NUM_PARTIES],
            heap: BinaryHeap::new(),
            clock_us: 0.0,
            seq: 0,
            metrics: MetricsSnapshot::default(),
            log: Vec::new(),
            tamper: None,
        }
    }

    pub fn now_us(&self) -> f64 {
        self.clock_us
    }

    pub fn set_tamper(&mut self, f: TamperFn) {
        self.tamper = Some(f);
    }

    /// Queues a message; its arrival time follows the link model with
    /// per-link FIFO serialization. Loopback delivery is immediate.
    pub fn send(&mut self, msg: WireMessage) {
        self.metrics.record_send(&msg);
        let arrival = if msg.src_party == msg.dst_party {
            self.clock_us
        } else {
            self.links[msg.src_party as usize][msg.dst_party as usize]
                .schedule(self.clock_us, msg.payload.len() as u64)
        };
        self.push(arrival, SimEventKind::Deliver(msg));
    }

    /// Schedules an engine event `delay_us` from now.
    pub fn schedule(&mut self, delay_us: f64, kind: SimEventKind) {
        self.push(self.clock_us + delay_us, kind);
    }

    fn push(&mut self, at_us: f64, kind: SimEventKind) {
        let seq = self.seq;
        self.seq += 1;
        self.heap.push(SimEvent { at_us, seq, kind });
    }

    /// Pops the next event, advancing the clock and applying any installed
    /// tampering to delivered messages.
    pub fn pop(&mut self) -> Option<SimEventKind> {
        let ev = self.heap.pop()?;
        self.clock_us = ev.at_us;
        let kind = match ev.kind {
            SimEventKind::Deliver(mut msg) => {
                if let Some(t) = &mut self.tamper {
                    t(&mut msg);
                }
                SimEventKind::Deliver(msg)
            }
            other => other,
        };
        self.log.push(match &kind {
            SimEventKind::Deliver(msg) => EventRecord {
                time_bits: ev.at_us.to_bits(),
                party: msg.dst_party,
                kind: "deliver",
                msg_type: Some(msg.msg_type as u8),
                src: Some(msg.src_party),
                ticket: None,
                payload_len: msg.payload.len() as u32,
                payload_digest: fnv1a(&msg.payload),
            },
            SimEventKind::ComputeDone { party, ticket } => EventRecord {
                time_bits: ev.at_us.to_bits(),
                party: *party,
                kind: "compute_done",
                msg_type: None,
                src: None,
                ticket: Some(*ticket),
                payload_len: 0,
                payload_digest: 0,
            },
        });
        Some(kind)
    }

    pub fn is_idle(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn link_busy_us(&self, src: PartyId, dst: PartyId) -> f64 {
        self.links[src as usize][dst as usize].busy_us
    }

    pub fn snapshot(&self) -> MetricsSnapshot {
        let mut m = self.metrics.clone();
        m.time_us = self.clock_us;
        m
    }
}
