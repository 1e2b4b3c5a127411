//! Bit-exact framed wire protocol.
//!
//! Every message is a 32-byte little-endian header followed by
//! `payload_len` payload bytes:
//!
//! ```text
//! 0..4   magic u32      = 0x434F5041
//! 4      version u8     = 1
//! 5      type u8        (1 PUT, 2 TRIGGER, 3 TAGS, 4 COMPLETION, 5 ABORT, 6 GET)
//! 6      src_party u8
//! 7      dst_party u8
//! 8..16  batch_id u64
//! 16..24 offset u64
//! 24..28 payload_len u32
//! 28..32 reserved u32   = 0
//! ```
//!
//! Payload shapes: PUT carries raw bytes for `offset`; TRIGGER exactly one
//! 48-byte command; TAGS a multiple of 8 bytes of verification material for
//! `offset`; COMPLETION a 32-byte job completion record; ABORT 12 bytes of
//! (reason u32, element u64); GET is empty with the requested length in
//! `payload_len` and is answered by a PUT tagged with the request's
//! batch_id.

use crate::error::{Error, Result};
use crate::ring::PartyId;

pub const MAGIC: u32 = 0x434F_5041;
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MessageType {
    Put = 1,
    Trigger = 2,
    Tags = 3,
    Completion = 4,
    Abort = 5,
    Get = 6,
}

impl MessageType {
    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            1 => Ok(MessageType::Put),
            2 => Ok(MessageType::Trigger),
            3 => Ok(MessageType::Tags),
            4 => Ok(MessageType::Completion),
            5 => Ok(MessageType::Abort),
            6 => Ok(MessageType::Get),
            other => Err(Error::Frame(format!("unknown message type {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WireMessage {
    pub msg_type: MessageType,
    pub src_party: PartyId,
    pub dst_party: PartyId,
    pub batch_id: u64,
    pub offset: u64,
    pub payload: Vec<u8>,
    /// Requested byte count for GET messages, carried in the header's
    /// payload_len field; zero for every other type.
    pub get_len: u32,
}

impl WireMessage {
    pub fn put(src: PartyId, dst: PartyId, batch_id: u64, offset: u64, payload: Vec<u8>) -> Self {
        WireMessage {
            msg_type: MessageType::Put,
            src_party: src,
            dst_party: dst,
            batch_id,
            offset,
            payload,
            get_len: 0,
        }
    }

    pub fn tags(src: PartyId, dst: PartyId, batch_id: u64, offset: u64, payload: Vec<u8>) -> Self {
        WireMessage {
            msg_type: MessageType::Tags,
            src_party: src,
            dst_party: dst,
            batch_id,
            offset,
            payload,
            get_len: 0,
        }
    }

    pub fn get(src: PartyId, dst: PartyId, request_id: u64, offset: u64, len: u32) -> Self {
        WireMessage {
            msg_type: MessageType::Get,
            src_party: src,
            dst_party: dst,
            batch_id: request_id,
            offset,
            payload: Vec::new(),
            get_len: len,
        }
    }

    /// Total encoded size, header included.
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&MAGIC.to_le_bytes());
        out.push(VERSION);
        out.push(self.msg_type as u8);
        out.push(self.src_party);
        out.push(self.dst_party);
        out.extend_from_slice(&self.batch_id.to_le_bytes());
        out.extend_from_slice(&self.offset.to_le_bytes());
        let len = if self.msg_type == MessageType::Get {
            self.get_len
        } else {
            self.payload.len() as u32
        };
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Header {
    pub msg_type: MessageType,
    pub src_party: PartyId,
    pub dst_party: PartyId,
    pub batch_id: u64,
    pub offset: u64,
    pub payload_len: u32,
}

/// Parses and validates a 32-byte header.
pub fn decode_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Frame(format!(
            "header needs {HEADER_LEN} bytes, got {}",
            bytes.len()
        )));
    }
    let magic = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
    if magic != MAGIC {
        return Err(Error::Frame(format!("bad magic {magic:#010x}")));
    }
    if bytes[4] != VERSION {
        return Err(Error::Frame(format!("unsupported version {}", bytes[4])));
    }
    let msg_type = MessageType::from_u8(bytes[5])?;
    let reserved = u32::from_le_bytes(bytes[28..32].try_into().unwrap());
    if reserved != 0 {
        return Err(Error::Frame(format!("reserved field is {reserved:#x}")));
    }
    let header = Header {
        msg_type,
        src_party: bytes[6],
        dst_party: bytes[7],
        batch_id: u64::from_le_bytes(bytes[8..16].try_into().unwrap()),
        offset: u64::from_le_bytes(bytes[16..24].try_into().unwrap()),
        payload_len: u32::from_le_bytes(bytes[24..28].try_into().unwrap()),
    };
    validate_shape(&header)?;
    Ok(header)
}

/// Bytes of payload that follow the header on the wire. GET encodes its
/// requested length in payload_len but carries none.
pub fn wire_payload_len(header: &Header) -> usize {
    if header.msg_type == MessageType::Get {
        0
    } else {
        header.payload_len as usize
    }
}

fn validate_shape(h: &Header) -> Result<()> {
    let ok = match h.msg_type {
        MessageType::Put => true,
        MessageType::Trigger => h.payload_len == crate::engine::COMMAND_LEN as u32,
        MessageType::Tags => h.payload_len > 0 && h.payload_len % 8 == 0,
        MessageType::Completion => h.payload_len == COMPLETION_PAYLOAD_LEN as u32,
        MessageType::Abort => h.payload_len == ABORT_PAYLOAD_LEN as u32,
        MessageType::Get => true,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Frame(format!(
            "{:?} message with payload_len {}",
            h.msg_type, h.payload_len
        )))
    }
}

/// Decodes one full message from `bytes`, returning it and the number of
/// bytes consumed.
pub fn decode_message(bytes: &[u8]) -> Result<(WireMessage, usize)> {
    let header = decode_header(bytes)?;
    let body_len = wire_payload_len(&header);
    let total = HEADER_LEN + body_len;
    if bytes.len() < total {
        return Err(Error::Frame(format!(
            "truncated message: need {total} bytes, got {}",
            bytes.len()
        )));
    }
    let mut msg = WireMessage {
        msg_type: header.msg_type,
        src_party: header.src_party,
        dst_party: header.dst_party,
        batch_id: header.batch_id,
        offset: header.offset,
        payload: bytes[HEADER_LEN..total].to_vec(),
        get_len: 0,
    };
    if header.msg_type == MessageType::Get {
        msg.get_len = header.payload_len;
    }
    Ok((msg, total))
}

pub const ABORT_PAYLOAD_LEN: usize = 12;
pub const COMPLETION_PAYLOAD_LEN: usize = 32;

/// Abort reason codes carried in the low byte of the ABORT reason word;
/// the next two bytes carry the failing term (a, b) when known.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum AbortReason {
    TagMismatch = 1,
    BatchedHashMismatch = 2,
    Poisoned = 3,
    Timeout = 4,
    Validation = 5,
    UnregisteredRange = 6,
}

impl AbortReason {
    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            1 => Ok(AbortReason::TagMismatch),
            2 => Ok(AbortReason::BatchedHashMismatch),
            3 => Ok(AbortReason::Poisoned),
            4 => Ok(AbortReason::Timeout),
            5 => Ok(AbortReason::Validation),
            6 => Ok(AbortReason::UnregisteredRange),
            other => Err(Error::Frame(format!("unknown abort reason {other}"))),
        }
    }
}

pub fn encode_abort_payload(reason: AbortReason, a: u8, b: u8, element: u64) -> Vec<u8> {
    let word = reason as u32 | (a as u32) << 8 | (b as u32) << 16;
    let mut out = Vec::with_capacity(ABORT_PAYLOAD_LEN);
    out.extend_from_slice(&word.to_le_bytes());
    out.extend_from_slice(&element.to_le_bytes());
    out
}

pub fn decode_abort_payload(payload: &[u8]) -> Result<(AbortReason, u8, u8, u64)> {
    if payload.len() != ABORT_PAYLOAD_LEN {
        return Err(Error::Frame("abort payload must be 12 bytes".into()));
    }
    let word = u32::from_le_bytes(payload[0..4].try_into().unwrap());
    let reason = AbortReason::from_u8((word & 0xff) as u8)?;
    let a = ((word >> 8) & 0xff) as u8;
    let b = ((word >> 16) & 0xff) as u8;
    let element = u64::from_le_bytes(payload[4..12].try_into().unwrap());
    Ok((reason, a, b, element))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn golden_header_bytes() {
        let msg = WireMessage::put(1, 2, 0x0807_0605_0403_0201, 0x10, vec![0xaa, 0xbb]);
        let bytes = msg.encode();
        assert_eq!(&bytes[0..4], &[0x41, 0x50, 0x4f, 0x43]);
        assert_eq!(bytes[4], 1); // version
        assert_eq!(bytes[5], 1); // PUT
        assert_eq!(bytes[6], 1);
        assert_eq!(bytes[7], 2);
        assert_eq!(&bytes[8..16], &[1, 2, 3, 4, 5, 6, 7, 8]);
        assert_eq!(bytes[16], 0x10);
        assert_eq!(&bytes[24..28], &[2, 0, 0, 0]);
        assert_eq!(&bytes[28..32], &[0, 0, 0, 0]);
        assert_eq!(&bytes[32..], &[0xaa, 0xbb]);
    }

    #[test]
    fn round_trip_fuzz() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..2000 {
            let msg_type = match rng.gen_range(0..6) {
                0 => MessageType::Put,
                1 => MessageType::Trigger,
                2 => MessageType::Tags,
                3 => MessageType::Completion,
                4 => MessageType::Abort,
                _ => MessageType::Get,
            };
            let payload_len = match msg_type {
                MessageType::Put => rng.gen_range(0..200),
                MessageType::Trigger => 48,
                MessageType::Tags => 8 * rng.gen_range(1..20),
                MessageType::Completion => COMPLETION_PAYLOAD_LEN,
                MessageType::Abort => ABORT_PAYLOAD_LEN,
                MessageType::Get => 0,
            };
            let mut payload = vec![0u8; payload_len];
            rng.fill(&mut payload[..]);
            let mut msg = WireMessage {
                msg_type,
                src_party: rng.gen_range(0..4),
                dst_party: rng.gen_range(0..4),
                batch_id: rng.gen(),
                offset: rng.gen(),
                payload,
                get_len: 0,
            };
            if msg_type == MessageType::Get {
                msg.get_len = rng.gen();
            }
            let encoded = msg.encode();
            let (decoded, used) = decode_message(&encoded).unwrap();
            assert_eq!(used, encoded.len());
            assert_eq!(decoded, msg);
        }
    }

    #[test]
    fn rejects_malformed_frames() {
        let msg = WireMessage::put(0, 1, 1, 0, vec![1, 2, 3]);
        let good = msg.encode();

        let mut bad = good.clone();
        bad[0] ^= 0xff;
        assert!(decode_header(&bad).is_err());

        let mut bad = good.clone();
        bad[4] = 9;
        assert!(decode_header(&bad).is_err());

        let mut bad = good.clone();
        bad[5] = 0;
        assert!(decode_header(&bad).is_err());

        let mut bad = good.clone();
        bad[28] = 1;
        assert!(decode_header(&bad).is_err());

        // TAGS payload must be a positive multiple of 8.
        let tags = WireMessage::tags(0, 1, 1, 0, vec![0u8; 12]);
        assert!(decode_header(&tags.encode()).is_err());

        assert!(decode_message(&good[..good.len() - 1]).is_err());
    }

    #[test]
    fn abort_payload_round_trip() {
        let p = encode_abort_payload(AbortReason::TagMismatch, 2, 3, 77);
        assert_eq!(p.len(), ABORT_PAYLOAD_LEN);
        assert_eq!(
            decode_abort_payload(&p).unwrap(),
            (AbortReason::TagMismatch, 2, 3, 77)
        );
    }

    #[test]
    fn get_encodes_length_in_payload_len() {
        let g = WireMessage::get(0, 3, 99, 0x100, 4096);
        let bytes = g.encode();
        assert_eq!(bytes.len(), HEADER_LEN);
        let h = decode_header(&bytes).unwrap();
        assert_eq!(h.payload_len, 4096);
        let (decoded, used) = decode_message(&bytes).unwrap();
        assert_eq!(used, HEADER_LEN);
        assert_eq!(decoded.get_len, 4096);
        assert!(decoded.payload.is_empty());
    }
}
