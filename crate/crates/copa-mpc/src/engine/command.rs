//! The 48-byte lookaside command record, bit-exact little-endian. The same
//! layout is used in the local queue and inside TRIGGER fabric messages.
//!
//! ```text
//! 0      opcode u8      (0x01 ADD, 0x02 MUL_STAGE1, 0x03 MUL_STAGE2, 0x04 MUL_FUSED)
//! 1      flags u8       (bit0 malicious, bit1 masking, bit2 batched-hash)
//! 2      src_party u8
//! 3      dst_party u8
//! 4..8   count u32      (elements)
//! 8..16  batch_id u64
//! 16..24 src_a u64      (byte offset)
//! 24..32 src_b u64      (byte offset)
//! 32..40 dst u64        (byte offset)
//! 40..48 ctr_base u64
//! ```

use crate::error::{Error, Result};
use crate::protocol::ModeFlags;
use crate::ring::PartyId;

pub const COMMAND_LEN: usize = 48;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Opcode {
    Add = 0x01,
    MulStage1 = 0x02,
    MulStage2 = 0x03,
    MulFused = 0x04,
}

impl Opcode {
    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0x01 => Ok(Opcode::Add),
            0x02 => Ok(Opcode::MulStage1),
            0x03 => Ok(Opcode::MulStage2),
            0x04 => Ok(Opcode::MulFused),
            other => Err(Error::UnknownOpcode(other)),
        }
    }
}

/// Queue/trigger record describing one batched accelerator job.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LookasideCommand {
    pub opcode: Opcode,
    pub flags: ModeFlags,
    /// Party holding the source data; a remote value makes the engine fetch
    /// the source ranges over the fabric first.
    pub src_party: PartyId,
    /// Party receiving the results; a remote value makes the engine PUT the
    /// finished records to that node.
    pub dst_party: PartyId,
    pub count: u32,
    pub batch_id: u64,
    pub src_a: u64,
    pub src_b: u64,
    pub dst: u64,
    pub ctr_base: u64,
}

impl LookasideCommand {
    pub fn encode(&self) -> [u8; COMMAND_LEN] {
        let mut out = [0u8; COMMAND_LEN];
        out[0] = self.opcode as u8;
        out[1] = self.flags.to_bits();
        out[2] = self.src_party;
        out[3] = self.dst_party;
        out[4..8].copy_from_slice(&self.count.to_le_bytes());
        out[8..16].copy_from_slice(&self.batch_id.to_le_bytes());
        out[16..24].copy_from_slice(&self.src_a.to_le_bytes());
        out[24..32].copy_from_slice(&self.src_b.to_le_bytes());
        out[32..40].copy_from_slice(&self.dst.to_le_bytes());
        out[40..48].copy_from_slice(&self.ctr_base.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != COMMAND_LEN {
            return Err(Error::Frame(format!(
                "command record needs {COMMAND_LEN} bytes, got {}",
                bytes.len()
            )));
        }
        let u32le = |r: std::ops::Range<usize>| u32::from_le_bytes(bytes[r].try_into().unwrap());
        let u64le = |r: std::ops::Range<usize>| u64::from_le_bytes(bytes[r].try_into().unwrap());
        Ok(LookasideCommand {
            opcode: Opcode::from_u8(bytes[0])?,
            flags: ModeFlags::from_bits(bytes[1])?,
            src_party: bytes[2],
            dst_party: bytes[3],
            count: u32le(4..8),
            batch_id: u64le(8..16),
            src_a: u64le(16..24),
            src_b: u64le(24..32),
            dst: u64le(32..40),
            ctr_base: u64le(40..48),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> LookasideCommand {
        LookasideCommand {
            opcode: Opcode::MulFused,
            flags: ModeFlags {
                malicious: true,
                masking: false,
                batched_hash: true,
            },
            src_party: 2,
            dst_party: 3,
            count: 0x0102_0304,
            batch_id: 0x1112_1314_1516_1718,
            src_a: 0x2122_2324_2526_2728,
            src_b: 0x3132_3334_3536_3738,
            dst: 0x4142_4344_4546_4748,
            ctr_base: 0x5152_5354_5556_5758,
        }
    }

    #[test]
    fn golden_layout() {
        let bytes = sample().encode();
        assert_eq!(bytes.len(), 48);
        assert_eq!(bytes[0], 0x04);
        assert_eq!(bytes[1], 0b101);
        assert_eq!(bytes[2], 2);
        assert_eq!(bytes[3], 3);
        assert_eq!(&bytes[4..8], &[0x04, 0x03, 0x02, 0x01]);
        assert_eq!(&bytes[8..16], &[0x18, 0x17, 0x16, 0x15, 0x14, 0x13, 0x12, 0x11]);
        assert_eq!(bytes[16], 0x28);
        assert_eq!(bytes[47], 0x51);
    }

    #[test]
    fn round_trip() {
        let cmd = sample();
        assert_eq!(LookasideCommand::decode(&cmd.encode()).unwrap(), cmd);
    }

    #[test]
    fn rejects_bad_records() {
        let mut bytes = sample().encode();
        bytes[0] = 0x09;
        assert!(matches!(
            LookasideCommand::decode(&bytes),
            Err(Error::UnknownOpcode(0x09))
        ));
        let mut bytes = sample().encode();
        bytes[1] = 0xf0;
        assert!(LookasideCommand::decode(&bytes).is_err());
        assert!(LookasideCommand::decode(&bytes[..40]).is_err());
    }
}
