//! Fixed memory region map.
//!
//! Every node carves its host memory the same way, so remote PUTs need no
//! runtime negotiation: a sender can compute the exact destination offset
//! of any ingress value from (batch_id, element, term) alone.
//!
//! ```text
//! [0,            mem/4)   input        dealt share records, host managed
//! [mem/4,      3*mem/8)   intermediate stage-1 records for split multiplies
//! [3*mem/8,     mem/2)    output       finished share records
//! [mem/2,       mem  )    ingress      4 batch slots of mem/8 each
//! ```
//!
//! Within a batch slot, element `e` owns 48 bytes of ingress data at
//! `e*48` (its three wire values in ascending-`a` order), followed by the
//! tag area: three per-term tag streams of `8*count` bytes, or three
//! 32-byte link hashes in batched mode, indexed the same way.

use crate::engine::command::{LookasideCommand, Opcode};
use crate::error::{Error, Result};
use crate::protocol::ModeFlags;
use crate::ring::RingElement;

pub const SHARE_RECORD_LEN: u64 = 48;
pub const INGRESS_SLOTS: u64 = 4;
pub const MIN_MEMORY_SIZE: u64 = 64 * 1024;

#[derive(Clone, Copy, Debug)]
pub struct RegionMap {
    memory_size: u64,
}

impl RegionMap {
    pub fn new(memory_size: u64) -> Result<Self> {
        if memory_size < MIN_MEMORY_SIZE || memory_size % 4096 != 0 {
            return Err(Error::Config(format!(
                "memory_size must be a multiple of 4096 and at least {MIN_MEMORY_SIZE}, got {memory_size}"
            )));
        }
        Ok(RegionMap { memory_size })
    }

    pub fn memory_size(&self) -> u64 {
        self.memory_size
    }

    pub fn input_base(&self) -> u64 {
        0
    }

    pub fn input_size(&self) -> u64 {
        self.memory_size / 4
    }

    pub fn intermediate_base(&self) -> u64 {
        self.memory_size / 4
    }

    pub fn intermediate_size(&self) -> u64 {
        self.memory_size / 8
    }

    pub fn output_base(&self) -> u64 {
        3 * self.memory_size / 8
    }

    pub fn output_size(&self) -> u64 {
        self.memory_size / 8
    }

    pub fn ingress_base(&self) -> u64 {
        self.memory_size / 2
    }

    pub fn ingress_slot_size(&self) -> u64 {
        (self.memory_size / 2) / INGRESS_SLOTS
    }

    /// Base offset of the ingress slot serving `batch_id`.
    pub fn ingress_slot(&self, batch_id: u64) -> u64 {
        self.ingress_base() + (batch_id % INGRESS_SLOTS) * self.ingress_slot_size()
    }

    /// Offset of ingress value `pos` (0..3 in canonical order) of element
    /// `element` for `batch_id`.
    pub fn ingress_data(&self, batch_id: u64, element: u64, pos: usize) -> u64 {
        self.ingress_slot(batch_id) + element * SHARE_RECORD_LEN + 16 * pos as u64
    }

    /// Offset of the tag stream for ingress position `pos`.
    pub fn ingress_tags(&self, batch_id: u64, count: u32, pos: usize, batched: bool) -> u64 {
        let tags_base = self.ingress_slot(batch_id) + count as u64 * SHARE_RECORD_LEN;
        let stride = if batched { 32 } else { 8 * count as u64 };
        tags_base + stride * pos as u64
    }

    /// Total slot bytes a batch occupies: data area plus tag area.
    pub fn ingress_extent(&self, count: u32, flags: ModeFlags) -> u64 {
        let data = count as u64 * SHARE_RECORD_LEN;
        let tags = if !flags.malicious {
            0
        } else if flags.batched_hash {
            3 * 32
        } else {
            3 * 8 * count as u64
        };
        data + tags
    }

    /// Expected ingress byte counts per source link for readiness tracking:
    /// (data bytes, tag bytes).
    pub fn expected_per_link(&self, count: u32, flags: ModeFlags) -> (u64, u64) {
        let data = 16 * count as u64;
        let tags = if !flags.malicious {
            0
        } else if flags.batched_hash {
            32
        } else {
            8 * count as u64
        };
        (data, tags)
    }

    /// Local memory ranges a command reads or writes, used both for bounds
    /// validation and for range-conflict serialization.
    pub fn command_ranges(&self, cmd: &LookasideCommand) -> Vec<std::ops::Range<u64>> {
        let len = cmd.count as u64 * SHARE_RECORD_LEN;
        let mut ranges = Vec::with_capacity(4);
        match cmd.opcode {
            Opcode::Add => {
                ranges.push(cmd.src_a..cmd.src_a + len);
                ranges.push(cmd.src_b..cmd.src_b + len);
                ranges.push(cmd.dst..cmd.dst + len);
            }
            Opcode::MulStage1 => {
                ranges.push(cmd.src_a..cmd.src_a + len);
                ranges.push(cmd.src_b..cmd.src_b + len);
                ranges.push(cmd.dst..cmd.dst + len);
            }
            Opcode::MulStage2 => {
                ranges.push(cmd.src_a..cmd.src_a + len);
                ranges.push(cmd.dst..cmd.dst + len);
                let slot = self.ingress_slot(cmd.batch_id);
                ranges.push(slot..slot + self.ingress_extent(cmd.count, cmd.flags));
            }
            Opcode::MulFused => {
                ranges.push(cmd.src_a..cmd.src_a + len);
                ranges.push(cmd.src_b..cmd.src_b + len);
                ranges.push(cmd.dst..cmd.dst + len);
                let slot = self.ingress_slot(cmd.batch_id);
                ranges.push(slot..slot + self.ingress_extent(cmd.count, cmd.flags));
            }
        }
        ranges
    }

    /// Validates a command against region bounds and slot capacity.
    pub fn validate_command(&self, cmd: &LookasideCommand) -> Result<()> {
        if cmd.count == 0 {
            return Err(Error::ZeroCount);
        }
        if cmd.src_party as usize >= crate::ring::NUM_PARTIES {
            return Err(Error::InvalidParty(cmd.src_party));
        }
        if cmd.dst_party as usize >= crate::ring::NUM_PARTIES {
            return Err(Error::InvalidParty(cmd.dst_party));
        }
        for r in self.command_ranges(cmd) {
            let len = r.end.checked_sub(r.start).ok_or(Error::OutOfBounds {
                offset: r.start,
                len: 0,
                size: self.memory_size,
            })?;
            if r.end > self.memory_size || r.start > r.end {
                return Err(Error::OutOfBounds {
                    offset: r.start,
                    len,
                    size: self.memory_size,
                });
            }
        }
        match cmd.opcode {
            Opcode::MulStage1 | Opcode::MulStage2 | Opcode::MulFused => {
                if self.ingress_extent(cmd.count, cmd.flags) > self.ingress_slot_size() {
                    return Err(Error::Config(format!(
                        "batch of {} elements does not fit an ingress slot of {} bytes",
                        cmd.count,
                        self.ingress_slot_size()
                    )));
                }
                // Counter space for the whole batch must exist.
                crate::protocol::mask_counter(cmd.ctr_base, cmd.count as u64 - 1, 3, 3)?;
            }
            Opcode::Add => {}
        }
        Ok(())
    }

    /// Ranges every node registers for remote access at startup.
    pub fn registered_ranges(&self) -> [std::ops::Range<u64>; 3] {
        [
            self.input_base()..self.input_base() + self.input_size(),
            self.output_base()..self.output_base() + self.output_size(),
            self.ingress_base()..self.memory_size,
        ]
    }
}

/// Reads one 48-byte share record as three ring elements.
pub fn read_record(bytes: &[u8]) -> [RingElement; 3] {
    [
        RingElement::read_le(&bytes[0..16]),
        RingElement::read_le(&bytes[16..32]),
        RingElement::read_le(&bytes[32..48]),
    ]
}

/// Writes three ring elements as one 48-byte record.
pub fn write_record(values: &[RingElement; 3], out: &mut [u8]) {
    for (i, v) in values.iter().enumerate() {
        out[16 * i..16 * (i + 1)].copy_from_slice(&v.to_le_bytes());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segments_tile_the_region() {
        let m = RegionMap::new(64 * 1024 * 1024).unwrap();
        assert_eq!(m.input_base(), 0);
        assert_eq!(m.intermediate_base(), m.input_base() + m.input_size());
        assert_eq!(m.output_base(), m.intermediate_base() + m.intermediate_size());
        assert_eq!(m.ingress_base(), m.output_base() + m.output_size());
        assert_eq!(
            m.ingress_base() + INGRESS_SLOTS * m.ingress_slot_size(),
            m.memory_size()
        );
    }

    #[test]
    fn ingress_offsets() {
        let m = RegionMap::new(1024 * 1024).unwrap();
        let b = 5u64; // slot 1
        assert_eq!(m.ingress_slot(b), m.ingress_base() + m.ingress_slot_size());
        assert_eq!(m.ingress_data(b, 0, 0), m.ingress_slot(b));
        assert_eq!(m.ingress_data(b, 2, 1), m.ingress_slot(b) + 96 + 16);
        let count = 10;
        assert_eq!(
            m.ingress_tags(b, count, 2, false),
            m.ingress_slot(b) + 480 + 160
        );
        assert_eq!(m.ingress_tags(b, count, 2, true), m.ingress_slot(b) + 480 + 64);
    }

    #[test]
    fn extent_matches_mode() {
        let m = RegionMap::new(1024 * 1024).unwrap();
        let base = ModeFlags::default();
        let per_term = ModeFlags {
            malicious: true,
            ..Default::default()
        };
        let batched = ModeFlags {
            malicious: true,
            batched_hash: true,
            ..Default::default()
        };
        assert_eq!(m.ingress_extent(10, base), 480);
        assert_eq!(m.ingress_extent(10, per_term), 480 + 240);
        assert_eq!(m.ingress_extent(10, batched), 480 + 96);
        assert_eq!(m.expected_per_link(10, per_term), (160, 80));
        assert_eq!(m.expected_per_link(10, batched), (160, 32));
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(RegionMap::new(1000).is_err());
        assert!(RegionMap::new(4096).is_err());
        assert!(RegionMap::new(64 * 1024).is_ok());
    }
}
