//! Ring arithmetic mod 2^128 and 3-of-4 replicated secret sharing.
//!
//! A secret is the sum of four additive slots; party `p` holds every slot
//! except slot `p`. Two distinct parties jointly cover all four slots, so
//! any two views reconstruct the secret, while one view is consistent with
//! every candidate secret.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use rand::distributions::{Distribution, Standard};
use rand::Rng;

mod chacha;
mod keys;

pub use keys::{prf, Key128, KeyMaterial, KeySet, PrfCounter, KEY_LEN};

pub const NUM_PARTIES: usize = 4;

/// Party index, 0..=3.
pub type PartyId = u8;
/// Additive slot index, 0..=3. Slot `g` is the one party `g` never holds.
pub type Slot = u8;

/// 128-bit unsigned residue. All arithmetic wraps mod 2^128, so no overflow
/// condition exists. Serialized as 16 bytes little-endian everywhere.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RingElement(pub u128);

impl RingElement {
    pub const ZERO: RingElement = RingElement(0);
    pub const ONE: RingElement = RingElement(1);
    pub const BYTES: usize = 16;

    pub fn to_le_bytes(self) -> [u8; 16] {
        self.0.to_le_bytes()
    }

    pub fn from_le_bytes(bytes: [u8; 16]) -> Self {
        RingElement(u128::from_le_bytes(bytes))
    }

    /// Reads a ring element from the first 16 bytes of `bytes`.
    pub fn read_le(bytes: &[u8]) -> Self {
        let mut buf = [0u8; 16];
        buf.copy_from_slice(&bytes[..16]);
        RingElement(u128::from_le_bytes(buf))
    }
}

impl Add for RingElement {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        RingElement(self.0.wrapping_add(rhs.0))
    }
}

impl Sub for RingElement {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        RingElement(self.0.wrapping_sub(rhs.0))
    }
}

impl Mul for RingElement {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        RingElement(self.0.wrapping_mul(rhs.0))
    }
}

impl Neg for RingElement {
    type Output = Self;
    fn neg(self) -> Self {
        RingElement(self.0.wrapping_neg())
    }
}

impl AddAssign for RingElement {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl SubAssign for RingElement {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl MulAssign for RingElement {
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl Sum for RingElement {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(RingElement::ZERO, |acc, x| acc + x)
    }
}

impl From<u128> for RingElement {
    fn from(v: u128) -> Self {
        RingElement(v)
    }
}

impl Distribution<RingElement> for Standard {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> RingElement {
        RingElement(rng.gen())
    }
}

impl fmt::Debug for RingElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RingElement({:#034x})", self.0)
    }
}

impl fmt::Display for RingElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The three slot indices party `party` holds, ascending.
pub fn held_slots(party: PartyId) -> [Slot; 3] {
    let mut out = [0u8; 3];
    let mut i = 0;
    for g in 0..NUM_PARTIES as u8 {
        if g != party {
            out[i] = g;
            i += 1;
        }
    }
    out
}

/// Position of `slot` within party `party`'s ascending held-slot order.
pub fn held_pos(party: PartyId, slot: Slot) -> Option<usize> {
    if slot == party || slot as usize >= NUM_PARTIES {
        return None;
    }
    Some(held_slots(party).iter().position(|&g| g == slot).unwrap())
}

/// A freshly dealt secret: four additive slots summing to the secret.
/// Only the dealing host ever sees all four slots at once.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DealtSecret {
    pub slots: [RingElement; NUM_PARTIES],
}

impl DealtSecret {
    pub fn secret(&self) -> RingElement {
        self.slots.iter().copied().sum()
    }

    /// The three slots party `party` is entitled to hold.
    pub fn view_of(&self, party: PartyId) -> crate::Result<ShareView> {
        if party as usize >= NUM_PARTIES {
            return Err(crate::Error::InvalidParty(party));
        }
        let held = held_slots(party);
        let slots = [
            self.slots[held[0] as usize],
            self.slots[held[1] as usize],
            self.slots[held[2] as usize],
        ];
        ShareView::new(party, slots)
    }
}

/// Deals `secret` into four slots: slots 1..=3 are drawn uniformly and
/// slot 0 absorbs the difference, so the slots always sum to the secret.
pub fn deal<R: Rng>(secret: RingElement, rng: &mut R) -> DealtSecret {
    let r1: RingElement = rng.gen();
    let r2: RingElement = rng.gen();
    let r3: RingElement = rng.gen();
    let slot0 = secret - r1 - r2 - r3;
    DealtSecret {
        slots: [slot0, r1, r2, r3],
    }
}

/// One party's replicated 3-of-4 view of a dealt secret: the three slot
/// values other than the party's own index, kept in ascending slot order.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct ShareView {
    party: PartyId,
    slots: [RingElement; 3],
}

impl ShareView {
    /// `slots` are the values for `held_slots(party)` in ascending order.
    pub fn new(party: PartyId, slots: [RingElement; 3]) -> crate::Result<Self> {
        if party as usize >= NUM_PARTIES {
            return Err(crate::Error::InvalidParty(party));
        }
        Ok(ShareView { party, slots })
    }

    pub fn party(&self) -> PartyId {
        self.party
    }

    /// The value of slot `slot`, if this party holds it.
    pub fn get(&self, slot: Slot) -> Option<RingElement> {
        held_pos(self.party, slot).map(|i| self.slots[i])
    }

    /// Held slot values in ascending slot order.
    pub fn slot_values(&self) -> [RingElement; 3] {
        self.slots
    }

    pub fn held(&self) -> [Slot; 3] {
        held_slots(self.party)
    }

    /// 48-byte record: the three held slot values, ascending, 16 bytes LE
    /// each. The party index is carried out of band.
    pub fn to_bytes(&self) -> [u8; 48] {
        let mut out = [0u8; 48];
        for (i, v) in self.slots.iter().enumerate() {
            out[16 * i..16 * (i + 1)].copy_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(party: PartyId, bytes: &[u8]) -> crate::Result<Self> {
        if bytes.len() < 48 {
            return Err(crate::Error::Protocol(format!(
                "share record needs 48 bytes, got {}",
                bytes.len()
            )));
        }
        let slots = [
            RingElement::read_le(&bytes[0..16]),
            RingElement::read_le(&bytes[16..32]),
            RingElement::read_le(&bytes[32..48]),
        ];
        ShareView::new(party, slots)
    }
}

impl fmt::Debug for ShareView {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let held = self.held();
        write!(
            f,
            "ShareView(party {}, {{{}: {}, {}: {}, {}: {}}})",
            self.party,
            held[0],
            self.slots[0].0,
            held[1],
            self.slots[1].0,
            held[2],
            self.slots[2].0
        )
    }
}

/// Recovers the secret from two distinct parties' views of the same
/// dealing. The two overlapping slots must agree; a disagreement signals
/// corrupted shares.
pub fn reconstruct(a: &ShareView, b: &ShareView) -> crate::Result<RingElement> {
    if a.party == b.party {
        return Err(crate::Error::SameParty(a.party));
    }
    for g in 0..NUM_PARTIES as u8 {
        if let (Some(va), Some(vb)) = (a.get(g), b.get(g)) {
            if va != vb {
                return Err(crate::Error::InconsistentShares { slot: g });
            }
        }
    }
    let mut sum = RingElement::ZERO;
    for g in 0..NUM_PARTIES as u8 {
        sum += a.get(g).or_else(|| b.get(g)).expect("two views cover all slots");
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{RngCore, SeedableRng};

    struct ZeroRng;
    impl RngCore for ZeroRng {
        fn next_u32(&mut self) -> u32 {
            0
        }
        fn next_u64(&mut self) -> u64 {
            0
        }
        fn fill_bytes(&mut self, dest: &mut [u8]) {
            dest.fill(0);
        }
        fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
            dest.fill(0);
            Ok(())
        }
    }

    #[test]
    fn add_examples() {
        assert_eq!(RingElement(2) + RingElement(3), RingElement(5));
        assert_eq!(RingElement(u128::MAX) + RingElement(1), RingElement(0));
        let mut rng = StdRng::seed_from_u64(0);
        for _ in 0..100 {
            let a: RingElement = rng.gen();
            assert_eq!(a + RingElement::ZERO, a);
        }
    }

    #[test]
    fn mul_examples() {
        assert_eq!(RingElement(2) * RingElement(3), RingElement(6));
        assert_eq!(RingElement(1 << 127) * RingElement(2), RingElement(0));
        // (2^64+1)(2^64-1) = 2^128 - 1
        assert_eq!(
            RingElement((1u128 << 64) + 1) * RingElement((1u128 << 64) - 1),
            RingElement(u128::MAX)
        );
    }

    #[test]
    fn le_serialization_round_trips() {
        let v = RingElement(0x0123_4567_89ab_cdef_0011_2233_4455_6677);
        assert_eq!(v.to_le_bytes()[0], 0x77);
        assert_eq!(RingElement::from_le_bytes(v.to_le_bytes()), v);
    }

    #[test]
    fn deal_round_trips() {
        let mut rng = StdRng::seed_from_u64(1);
        let d = deal(RingElement(10), &mut rng);
        assert_eq!(d.secret(), RingElement(10));
    }

    #[test]
    fn deal_with_zero_randomness() {
        let d = deal(RingElement::ZERO, &mut ZeroRng);
        assert_eq!(d.slots, [RingElement::ZERO; 4]);
    }

    #[test]
    fn deal_reconstruct_property() {
        let mut rng = StdRng::seed_from_u64(2);
        for _ in 0..10_000 {
            let s: RingElement = rng.gen();
            let d = deal(s, &mut rng);
            let v0 = d.view_of(0).unwrap();
            let v1 = d.view_of(1).unwrap();
            assert_eq!(reconstruct(&v0, &v1).unwrap(), s);
        }
    }

    #[test]
    fn all_party_pairs_reconstruct_identically() {
        let mut rng = StdRng::seed_from_u64(3);
        let s: RingElement = rng.gen();
        let d = deal(s, &mut rng);
        let views: Vec<_> = (0..4).map(|p| d.view_of(p).unwrap()).collect();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_eq!(reconstruct(&views[i], &views[j]).unwrap(), s);
                }
            }
        }
    }

    #[test]
    fn view_of_examples() {
        let d = DealtSecret {
            slots: [1, 2, 3, 4].map(RingElement),
        };
        let v0 = d.view_of(0).unwrap();
        assert_eq!(v0.get(1), Some(RingElement(2)));
        assert_eq!(v0.get(2), Some(RingElement(3)));
        assert_eq!(v0.get(3), Some(RingElement(4)));
        assert_eq!(v0.get(0), None);

        let v3 = d.view_of(3).unwrap();
        assert_eq!(v3.get(0), Some(RingElement(1)));
        assert_eq!(v3.get(1), Some(RingElement(2)));
        assert_eq!(v3.get(2), Some(RingElement(3)));

        // Union of two views covers all four slots.
        let v1 = d.view_of(1).unwrap();
        for g in 0..4u8 {
            assert!(v0.get(g).or_else(|| v1.get(g)).is_some());
        }

        assert!(d.view_of(4).is_err());
    }

    #[test]
    fn reconstruct_examples() {
        let d = DealtSecret {
            slots: [1, 2, 3, 4].map(RingElement),
        };
        let r = reconstruct(&d.view_of(0).unwrap(), &d.view_of(1).unwrap()).unwrap();
        assert_eq!(r, RingElement(10));

        let wrap = DealtSecret {
            slots: [
                RingElement(u128::MAX),
                RingElement(1),
                RingElement::ZERO,
                RingElement::ZERO,
            ],
        };
        let r = reconstruct(&wrap.view_of(2).unwrap(), &wrap.view_of(3).unwrap()).unwrap();
        assert_eq!(r, RingElement::ZERO);
    }

    #[test]
    fn reconstruct_rejects_tampered_overlap() {
        let d = DealtSecret {
            slots: [1, 2, 3, 4].map(RingElement),
        };
        let v0 = d.view_of(0).unwrap();
        // Slot 2 is common to parties 0 and 1; alter party 1's copy.
        let mut slots = d.view_of(1).unwrap().slot_values();
        let pos = held_pos(1, 2).unwrap();
        slots[pos] += RingElement::ONE;
        let v1 = ShareView::new(1, slots).unwrap();
        match reconstruct(&v0, &v1) {
            Err(crate::Error::InconsistentShares { slot: 2 }) => {}
            other => panic!("expected inconsistency on slot 2, got {other:?}"),
        }
    }

    #[test]
    fn reconstruct_rejects_same_party() {
        let d = DealtSecret {
            slots: [1, 2, 3, 4].map(RingElement),
        };
        let v = d.view_of(0).unwrap();
        assert!(matches!(reconstruct(&v, &v), Err(crate::Error::SameParty(0))));
    }

    // Three slots say nothing about the secret: for any view and any
    // candidate secret there is a value of the missing slot consistent
    // with that candidate.
    #[test]
    fn three_slots_are_insufficient() {
        let mut rng = StdRng::seed_from_u64(4);
        for _ in 0..1000 {
            let s: RingElement = rng.gen();
            let d = deal(s, &mut rng);
            let p: PartyId = rng.gen_range(0..4);
            let view = d.view_of(p).unwrap();
            let candidate: RingElement = rng.gen();
            let held_sum: RingElement = view.slot_values().iter().copied().sum();
            let missing = candidate - held_sum;
            let mut slots = [RingElement::ZERO; 4];
            for g in 0..4u8 {
                slots[g as usize] = view.get(g).unwrap_or(missing);
            }
            let completed = DealtSecret { slots };
            assert_eq!(completed.secret(), candidate);
        }
    }

    #[test]
    fn share_record_round_trips() {
        let mut rng = StdRng::seed_from_u64(5);
        let d = deal(rng.gen(), &mut rng);
        for p in 0..4u8 {
            let v = d.view_of(p).unwrap();
            let bytes = v.to_bytes();
            assert_eq!(ShareView::from_bytes(p, &bytes).unwrap(), v);
        }
    }
}
