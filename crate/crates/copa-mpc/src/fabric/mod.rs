//! The network layer: bit-exact wire framing, one-sided PUT/GET semantics,
//! remote accelerator triggering, and two interchangeable transports (a
//! deterministic simulation and real stream sockets).

pub mod link;
pub mod metrics;
pub mod sim;
pub mod socket;
pub mod wire;

pub use link::LinkModel;
pub use metrics::{effective_gbps, LinkCounters, MetricsSnapshot};
pub use sim::{EventRecord, SimEventKind, SimNet};
pub use wire::{
    decode_header, decode_message, AbortReason, Header, MessageType, WireMessage, HEADER_LEN,
};

/// Minimum number of parallel accelerators whose combined per-link rate
/// saturates a link: ceil(link / per_accel), with a small tolerance so
/// exact multiples do not round up.
pub fn min_accels(link_gbps: f64, per_accel_gbps: f64) -> u32 {
    assert!(
        link_gbps > 0.0 && per_accel_gbps > 0.0,
        "rates must be positive"
    );
    let q = link_gbps / per_accel_gbps;
    let nearest = q.round();
    let q = if (q - nearest).abs() < 1e-9 { nearest } else { q.ceil() };
    (q as u32).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_accels_examples() {
        assert_eq!(min_accels(100.0, 17.6), 6);
        assert_eq!(min_accels(100.0, 26.4), 4);
        assert_eq!(min_accels(100.0, 100.0), 1);
        assert_eq!(min_accels(10.0, 17.6), 1);
        assert_eq!(min_accels(100.0, 25.0), 4);
        assert_eq!(min_accels(100.0, 24.9), 5);
    }
}
