//! Verification hashing for malicious-secure multiplication.
//!
//! Per-term mode sends an 8-byte truncated SHA-256 tag per wire value;
//! batched mode sends one 32-byte hash per directed link per batch.

use sha2::{Digest, Sha256};

use crate::ring::Slot;

/// 8-byte tag over a wire payload and its context: the first 8 bytes of
/// SHA-256(payload 16B LE || batch_id u64 LE || element u64 LE || a || b).
pub fn compute_tag(payload: &[u8; 16], batch_id: u64, element_index: u64, a: Slot, b: Slot) -> [u8; 8] {
    let mut h = Sha256::new();
    h.update(payload);
    h.update(batch_id.to_le_bytes());
    h.update(element_index.to_le_bytes());
    h.update([a, b]);
    let digest = h.finalize();
    digest[..8].try_into().unwrap()
}

/// Whole-link hash for batched verification: SHA-256 over
/// (batch_id u64 LE || a || b || count u64 LE || payloads in element order).
pub struct LinkHasher {
    inner: Sha256,
}

impl LinkHasher {
    pub fn new(batch_id: u64, a: Slot, b: Slot, count: u64) -> Self {
        let mut inner = Sha256::new();
        inner.update(batch_id.to_le_bytes());
        inner.update([a, b]);
        inner.update(count.to_le_bytes());
        LinkHasher { inner }
    }

    pub fn absorb(&mut self, payload: &[u8; 16]) {
        self.inner.update(payload);
    }

    pub fn finish(self) -> [u8; 32] {
        self.inner.finalize().into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sha2::{Digest, Sha256};

    fn hex(s: &str) -> Vec<u8> {
        (0..s.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&s[i..i + 2], 16).unwrap())
            .collect()
    }

    // FIPS 180-4 test vectors for the underlying hash, checked before any
    // truncation is trusted.
    #[test]
    fn sha256_standard_vectors() {
        let abc = Sha256::digest(b"abc");
        assert_eq!(
            abc.to_vec(),
            hex("ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad")
        );
        let empty = Sha256::digest(b"");
        assert_eq!(
            empty.to_vec(),
            hex("e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855")
        );
    }

    #[test]
    fn tag_is_deterministic() {
        let payload = [0xabu8; 16];
        assert_eq!(
            compute_tag(&payload, 7, 9, 0, 1),
            compute_tag(&payload, 7, 9, 0, 1)
        );
    }

    #[test]
    fn tag_depends_on_element_index() {
        let payload = [3u8; 16];
        for e in [0u64, 1, 100, u64::MAX - 1] {
            assert_ne!(
                compute_tag(&payload, 1, e, 2, 3),
                compute_tag(&payload, 1, e + 1, 2, 3)
            );
        }
    }

    #[test]
    fn tag_changes_on_sampled_bit_flips() {
        let payload = [0x5au8; 16];
        let base = compute_tag(&payload, 42, 17, 1, 2);
        // Every payload bit.
        for bit in 0..128 {
            let mut p = payload;
            p[bit / 8] ^= 1 << (bit % 8);
            assert_ne!(base, compute_tag(&p, 42, 17, 1, 2), "payload bit {bit}");
        }
        // Sampled context perturbations.
        assert_ne!(base, compute_tag(&payload, 43, 17, 1, 2));
        assert_ne!(base, compute_tag(&payload, 42, 16, 1, 2));
        assert_ne!(base, compute_tag(&payload, 42, 17, 0, 2));
        assert_ne!(base, compute_tag(&payload, 42, 17, 1, 3));
    }

    #[test]
    fn link_hash_covers_order_and_content() {
        let mk = |payloads: &[[u8; 16]]| {
            let mut h = LinkHasher::new(5, 0, 1, payloads.len() as u64);
            for p in payloads {
                h.absorb(p);
            }
            h.finish()
        };
        let a = [1u8; 16];
        let b = [2u8; 16];
        assert_eq!(mk(&[a, b]), mk(&[a, b]));
        assert_ne!(mk(&[a, b]), mk(&[b, a]));
        let mut c = b;
        c[15] ^= 0x80;
        assert_ne!(mk(&[a, b]), mk(&[a, c]));
    }
}
