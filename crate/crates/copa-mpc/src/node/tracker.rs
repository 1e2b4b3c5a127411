//! Ingress readiness tracking.
//!
//! Stage 2 may start once every peer's contribution for a batch has
//! landed. Arrival is tracked as byte counts per (batch, source link):
//! 16*count data bytes per peer, plus 8*count tag bytes (or one 32-byte
//! link hash) in malicious mode. A tag mismatch poisons the batch; later
//! commands against it fail fast.

use std::collections::BTreeMap;

use crate::engine::AbortInfo;
use crate::protocol::ModeFlags;
use crate::ring::{PartyId, NUM_PARTIES};

#[derive(Clone, Copy, Debug, Default)]
struct PerLink {
    data_bytes: u64,
    tag_bytes: u64,
}

#[derive(Clone, Debug, Default)]
struct BatchState {
    links: [PerLink; NUM_PARTIES],
    poisoned: Option<AbortInfo>,
}

#[derive(Default)]
pub struct BatchTracker {
    batches: BTreeMap<u64, BatchState>,
}

impl BatchTracker {
    pub fn on_data(&mut self, batch_id: u64, src: PartyId, bytes: u64) {
        self.batches.entry(batch_id).or_default().links[src as usize].data_bytes += bytes;
    }

    pub fn on_tags(&mut self, batch_id: u64, src: PartyId, bytes: u64) {
        self.batches.entry(batch_id).or_default().links[src as usize].tag_bytes += bytes;
    }

    /// True once all three peers of `me` have delivered their expected
    /// byte counts for the batch.
    pub fn ready(&self, batch_id: u64, me: PartyId, count: u32, flags: ModeFlags) -> bool {
        let Some(state) = self.batches.get(&batch_id) else {
            return false;
        };
        let need_data = 16 * count as u64;
        let need_tags = if !flags.malicious {
            0
        } else if flags.batched_hash {
            32
        } else {
            8 * count as u64
        };
        (0..NUM_PARTIES as u8).filter(|&q| q != me).all(|q| {
            let link = &state.links[q as usize];
            link.data_bytes >= need_data && link.tag_bytes >= need_tags
        })
    }

    pub fn poison(&mut self, info: AbortInfo) {
        self.batches
            .entry(info.batch_id)
            .or_default()
            .poisoned
            .get_or_insert(info);
    }

    pub fn poisoned(&self, batch_id: u64) -> Option<&AbortInfo> {
        self.batches.get(&batch_id).and_then(|s| s.poisoned.as_ref())
    }

    /// Drops accounting for a completed batch slot.
    pub fn clear(&mut self, batch_id: u64) {
        self.batches.remove(&batch_id);
    }
}
