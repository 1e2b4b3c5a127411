//! Key material and the keyed pseudorandom function.
//!
//! Four 128-bit keys exist in a deployment, indexed by slot. Key `K_g` is
//! held by exactly the three parties other than `g`, so any value derived
//! from `K_g` can be produced independently by every party entitled to
//! slot `g` and by nobody else.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;

use super::chacha;
use super::{PartyId, RingElement, Slot, NUM_PARTIES};
use crate::error::{Error, Result};

pub const KEY_LEN: usize = 16;

/// A 128-bit PRF key.
pub type Key128 = [u8; KEY_LEN];

/// Monotone PRF counter. A (key, counter) pair must never be reused within
/// a deployment; callers enforce monotonicity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PrfCounter(pub u64);

/// Deterministic keyed PRF: the first 16 bytes of the ChaCha20 keystream
/// with block counter 0 and the 96-bit nonce set to the counter in
/// little-endian, zero padded. The 128-bit key is expanded to the 256-bit
/// cipher key by doubling.
pub fn prf(key: &Key128, ctr: PrfCounter) -> RingElement {
    let mut key32 = [0u8; 32];
    key32[..KEY_LEN].copy_from_slice(key);
    key32[KEY_LEN..].copy_from_slice(key);
    let mut nonce = [0u8; 12];
    nonce[..8].copy_from_slice(&ctr.0.to_le_bytes());
    let block = chacha::block(&key32, 0, &nonce);
    let mut out = [0u8; 16];
    out.copy_from_slice(&block[..16]);
    RingElement::from_le_bytes(out)
}

/// The full set of four slot keys, as known to the key dealer.
#[derive(Clone)]
pub struct KeySet {
    keys: [Key128; NUM_PARTIES],
}

impl KeySet {
    pub fn generate<R: Rng>(rng: &mut R) -> Self {
        let mut keys = [[0u8; KEY_LEN]; NUM_PARTIES];
        for key in keys.iter_mut() {
            rng.fill(&mut key[..]);
        }
        KeySet { keys }
    }

    pub fn key(&self, slot: Slot) -> &Key128 {
        &self.keys[slot as usize]
    }

    /// The three keys party `party` is entitled to hold.
    pub fn material_for(&self, party: PartyId) -> Result<KeyMaterial> {
        if party as usize >= NUM_PARTIES {
            return Err(Error::InvalidParty(party));
        }
        let mut keys = [None; NUM_PARTIES];
        for g in 0..NUM_PARTIES as u8 {
            if g != party {
                keys[g as usize] = Some(self.keys[g as usize]);
            }
        }
        Ok(KeyMaterial {
            owner: party,
            keys,
        })
    }

    /// Writes `party0.keys` .. `party3.keys` into `dir`, each holding that
    /// party's three (slot, key) records.
    pub fn write_party_files(&self, dir: &Path) -> Result<[PathBuf; NUM_PARTIES]> {
        fs::create_dir_all(dir)?;
        let mut paths = Vec::with_capacity(NUM_PARTIES);
        for p in 0..NUM_PARTIES as u8 {
            let path = dir.join(format!("party{p}.keys"));
            self.material_for(p)?.save(&path)?;
            paths.push(path);
        }
        Ok(paths.try_into().unwrap())
    }
}

/// One party's holding of the slot keys: every key except its own index.
#[derive(Clone)]
pub struct KeyMaterial {
    owner: PartyId,
    keys: [Option<Key128>; NUM_PARTIES],
}

impl KeyMaterial {
    pub fn owner(&self) -> PartyId {
        self.owner
    }

    /// The key for slot `slot`; errors for the owner's own slot, which this
    /// party must never hold.
    pub fn key_for(&self, slot: Slot) -> Result<&Key128> {
        if slot as usize >= NUM_PARTIES {
            return Err(Error::InvalidSlot(slot));
        }
        self.keys[slot as usize]
            .as_ref()
            .ok_or(Error::Protocol(format!(
                "party {} holds no key for slot {slot}",
                self.owner
            )))
    }

    /// Binary key file: three records of (slot u8, key 16 bytes), slot
    /// ascending.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(3 * (1 + KEY_LEN));
        for g in 0..NUM_PARTIES as u8 {
            if let Some(key) = &self.keys[g as usize] {
                buf.push(g);
                buf.extend_from_slice(key);
            }
        }
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path, expected_owner: PartyId) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::from_bytes(&bytes, expected_owner)
            .map_err(|e| Error::KeyFile(format!("{}: {e}", path.display())))
    }

    pub fn from_bytes(bytes: &[u8], expected_owner: PartyId) -> Result<Self> {
        const REC: usize = 1 + KEY_LEN;
        if expected_owner as usize >= NUM_PARTIES {
            return Err(Error::InvalidParty(expected_owner));
        }
        if bytes.len() != 3 * REC {
            return Err(Error::KeyFile(format!(
                "expected {} bytes (3 records), found {}",
                3 * REC,
                bytes.len()
            )));
        }
        let mut keys = [None; NUM_PARTIES];
        for rec in bytes.chunks_exact(REC) {
            let slot = rec[0];
            if slot as usize >= NUM_PARTIES {
                return Err(Error::KeyFile(format!("invalid slot index {slot}")));
            }
            if slot == expected_owner {
                return Err(Error::KeyFile(format!(
                    "file contains key for the owner's slot {slot}"
                )));
            }
            if keys[slot as usize].is_some() {
                return Err(Error::KeyFile(format!("duplicate record for slot {slot}")));
            }
            let mut key = [0u8; KEY_LEN];
            key.copy_from_slice(&rec[1..]);
            keys[slot as usize] = Some(key);
        }
        Ok(KeyMaterial {
            owner: expected_owner,
            keys,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;
    use std::collections::HashSet;

    #[test]
    fn prf_is_deterministic() {
        let key = [7u8; KEY_LEN];
        assert_eq!(prf(&key, PrfCounter(42)), prf(&key, PrfCounter(42)));
    }

    #[test]
    fn prf_distinct_counters_distinct_outputs() {
        let mut rng = StdRng::seed_from_u64(1);
        let mut key = [0u8; KEY_LEN];
        rng.fill(&mut key[..]);
        let mut seen = HashSet::new();
        for c in 0..10_000u64 {
            assert!(seen.insert(prf(&key, PrfCounter(c))), "duplicate at {c}");
        }
    }

    #[test]
    fn prf_adjacent_counters_differ() {
        let mut rng = StdRng::seed_from_u64(2);
        for _ in 0..10_000 {
            let mut key = [0u8; KEY_LEN];
            rng.fill(&mut key[..]);
            let c: u64 = rng.gen_range(0..u64::MAX - 1);
            assert_ne!(prf(&key, PrfCounter(c)), prf(&key, PrfCounter(c + 1)));
        }
    }

    #[test]
    fn material_never_holds_own_key() {
        let mut rng = StdRng::seed_from_u64(3);
        let set = KeySet::generate(&mut rng);
        for p in 0..4u8 {
            let m = set.material_for(p).unwrap();
            assert!(m.key_for(p).is_err());
            for g in 0..4u8 {
                if g != p {
                    assert_eq!(m.key_for(g).unwrap(), set.key(g));
                }
            }
        }
    }

    #[test]
    fn key_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = StdRng::seed_from_u64(4);
        let set = KeySet::generate(&mut rng);
        let paths = set.write_party_files(dir.path()).unwrap();

        // Each file: 3 records, lacks the owner's key, and across all files
        // every key appears exactly 3 times.
        let mut holders = [0usize; 4];
        for (p, path) in paths.iter().enumerate() {
            let bytes = std::fs::read(path).unwrap();
            assert_eq!(bytes.len(), 51);
            let m = KeyMaterial::load(path, p as u8).unwrap();
            assert!(m.key_for(p as u8).is_err());
            for g in 0..4u8 {
                if g != p as u8 {
                    assert_eq!(m.key_for(g).unwrap(), set.key(g));
                    holders[g as usize] += 1;
                }
            }
        }
        assert_eq!(holders, [3, 3, 3, 3]);
    }

    #[test]
    fn key_file_rejects_owner_slot() {
        let mut rng = StdRng::seed_from_u64(5);
        let set = KeySet::generate(&mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k");
        set.material_for(1).unwrap().save(&path).unwrap();
        // Loading party 1's file as party 0 fails: it contains K_0.
        assert!(KeyMaterial::load(&path, 0).is_err());
    }
}
