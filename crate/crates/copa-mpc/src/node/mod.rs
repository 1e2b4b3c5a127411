//! The per-party node: configuration, memory layout, ingress tracking,
//! the transport-independent core, and the two drivers (simulated cluster
//! and socket daemon).

pub mod config;
pub mod core;
pub mod sim_cluster;
pub mod socket_node;
mod tracker;

pub use config::{PartyConfig, Transport, DEFAULT_MEMORY_SIZE};
pub use core::{InputBatch, NodeCore, GET_ID_FLAG};
pub use sim_cluster::SimCluster;
pub use socket_node::SocketNode;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::JobStatus;
    use crate::ring::RingElement;
    use rand::Rng;

    #[test]
    fn simulated_multiply_round_trip() {
        let mut cluster = SimCluster::with_defaults(1 << 20, 1, 42).unwrap();
        let (x, xs) = cluster.deal_random_batch(0, 8).unwrap();
        let (y, ys) = cluster.deal_random_batch(0, 8).unwrap();
        let (_batch, dst, cmds) = cluster.multiply_commands(x, y, None).unwrap();
        cluster.submit_all(&cmds).unwrap();
        cluster.run_until_idle().unwrap();
        for p in 0..4u8 {
            assert_eq!(cluster.completions(p).len(), 1);
            assert_eq!(cluster.completions(p)[0].status, JobStatus::Ok);
        }
        let outputs = cluster.reconstruct_outputs(dst, 8).unwrap();
        for i in 0..8 {
            assert_eq!(outputs[i], xs[i] * ys[i]);
        }
    }

    #[test]
    fn simulated_add_is_local() {
        let mut cluster = SimCluster::with_defaults(1 << 20, 1, 7).unwrap();
        let (x, xs) = cluster.deal_random_batch(0, 4).unwrap();
        let (y, ys) = cluster.deal_random_batch(0, 4).unwrap();
        let before = cluster.metrics();
        let (dst, cmds) = cluster.add_commands(x, y).unwrap();
        cluster.submit_all(&cmds).unwrap();
        cluster.run_until_idle().unwrap();
        let delta = cluster.metrics().delta(&before);
        assert_eq!(delta.total_payload(), 0);
        let outputs = cluster.reconstruct_outputs(dst, 4).unwrap();
        for i in 0..4 {
            assert_eq!(outputs[i], xs[i] + ys[i]);
        }
    }

    #[test]
    fn duplicate_party_id_is_rejected() {
        let mut cfgs = [
            PartyConfig::simulated(0),
            PartyConfig::simulated(1),
            PartyConfig::simulated(2),
            PartyConfig::simulated(2),
        ];
        cfgs[0].memory_size = 1 << 20;
        let err = SimCluster::new(cfgs, 1).unwrap_err();
        assert!(matches!(err, crate::Error::Config(_)));
    }

    #[test]
    fn host_put_and_get_round_trip() {
        let mut cluster = SimCluster::with_defaults(1 << 20, 1, 9).unwrap();
        let mut payload = vec![0u8; 1024];
        cluster.rng().fill(&mut payload[..]);
        let offset = cluster.node(1).regions.input_base() + 4096;
        cluster.host_put(0, 1, offset, payload.clone());
        cluster.run_until_idle().unwrap();
        assert_eq!(cluster.node(1).mem.read(offset, 1024).unwrap(), &payload[..]);

        // Fetch it back over the fabric into a different local offset.
        let local = offset + 65536;
        let bytes = cluster.host_get(0, 1, offset, 1024, local).unwrap();
        assert_eq!(bytes, payload);
    }

    #[test]
    fn deal_traffic_is_three_puts_of_48n() {
        let mut cluster = SimCluster::with_defaults(1 << 20, 1, 11).unwrap();
        let before = cluster.metrics();
        let secrets: Vec<RingElement> = (0..10).map(|i| RingElement(i as u128)).collect();
        cluster.deal_batch(0, &secrets).unwrap();
        let delta = cluster.metrics().delta(&before);
        let mut messages = 0;
        for q in 1..4u8 {
            let link = delta.link(0, q);
            assert_eq!(link.payload_bytes, 480);
            messages += link.messages;
        }
        assert_eq!(messages, 3);
        assert_eq!(delta.party_payload_out(0), 3 * 480);

        // Dealing zero secrets moves nothing.
        let before = cluster.metrics();
        cluster.deal_batch(0, &[]).unwrap();
        let delta = cluster.metrics().delta(&before);
        assert_eq!(delta.total_payload(), 0);
    }
}
