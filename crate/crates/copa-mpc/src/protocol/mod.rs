//! The 4-party arithmetic protocol.
//!
//! Multiplication decomposes x*y into the 16 cross terms x_a*y_b. Term
//! (a,b) lands in output slot `a`. Diagonal terms and every cross term
//! whose two inputs a party already holds are accumulated locally; the one
//! missing term per held slot arrives over the fabric, so each multiply
//! costs every party exactly three 128-bit values sent and three received
//! in a single communication round. Addition is entirely local.
//!
//! Role assignment per off-diagonal term (a,b):
//!   slot     = a
//!   receiver = b
//!   sender   = a+1 mod 4, skipping over the receiver to a+2
//!   verifier = the remaining party
//!
//! Over the 12 off-diagonal terms every directed pair of parties occurs
//! exactly once as (sender -> receiver) and exactly once as
//! (verifier -> receiver), which keeps per-link traffic uniform.

use crate::error::{Error, Result};
use crate::ring::{
    held_pos, held_slots, prf, KeyMaterial, PartyId, PrfCounter, RingElement, ShareView, Slot,
    NUM_PARTIES,
};

mod tags;

pub use tags::{compute_tag, LinkHasher};

/// Execution mode bits carried in every command and honored per element.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ModeFlags {
    /// Verify every ingress value against a hash sent by a third party;
    /// mismatch aborts the batch.
    pub malicious: bool,
    /// Mask wire payloads with a shared-key PRF value the receiver can
    /// remove exactly.
    pub masking: bool,
    /// In malicious mode, replace per-term tags with one hash per link per
    /// batch.
    pub batched_hash: bool,
}

impl ModeFlags {
    pub const BIT_MALICIOUS: u8 = 1 << 0;
    pub const BIT_MASKING: u8 = 1 << 1;
    pub const BIT_BATCHED_HASH: u8 = 1 << 2;

    pub fn to_bits(self) -> u8 {
        let mut bits = 0;
        if self.malicious {
            bits |= Self::BIT_MALICIOUS;
        }
        if self.masking {
            bits |= Self::BIT_MASKING;
        }
        if self.batched_hash {
            bits |= Self::BIT_BATCHED_HASH;
        }
        bits
    }

    pub fn from_bits(bits: u8) -> Result<Self> {
        if bits & !(Self::BIT_MALICIOUS | Self::BIT_MASKING | Self::BIT_BATCHED_HASH) != 0 {
            return Err(Error::Frame(format!("unknown flag bits {bits:#04x}")));
        }
        Ok(ModeFlags {
            malicious: bits & Self::BIT_MALICIOUS != 0,
            masking: bits & Self::BIT_MASKING != 0,
            batched_hash: bits & Self::BIT_BATCHED_HASH != 0,
        })
    }
}

/// Communication roles of one off-diagonal cross term.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TermRole {
    pub a: Slot,
    pub b: Slot,
    /// Output slot the term accumulates into (= a).
    pub slot: Slot,
    pub sender: PartyId,
    pub receiver: PartyId,
    pub verifier: PartyId,
}

/// Role assignment for term (a,b). Diagonal terms are computed locally by
/// all three holders and have no roles.
pub fn term_roles(a: Slot, b: Slot) -> Result<TermRole> {
    if a as usize >= NUM_PARTIES {
        return Err(Error::InvalidSlot(a));
    }
    if b as usize >= NUM_PARTIES {
        return Err(Error::InvalidSlot(b));
    }
    if a == b {
        return Err(Error::DiagonalTerm(a));
    }
    let receiver = b;
    let mut sender = (a + 1) % NUM_PARTIES as u8;
    if sender == b {
        sender = (a + 2) % NUM_PARTIES as u8;
    }
    let verifier = (0..NUM_PARTIES as u8)
        .find(|&p| p != a && p != b && p != sender)
        .expect("one party remains");
    Ok(TermRole {
        a,
        b,
        slot: a,
        sender,
        receiver,
        verifier,
    })
}

/// All 12 off-diagonal terms in canonical (a,b) ascending order.
pub fn all_terms() -> Vec<TermRole> {
    let mut out = Vec::with_capacity(12);
    for a in 0..NUM_PARTIES as u8 {
        for b in 0..NUM_PARTIES as u8 {
            if a != b {
                out.push(term_roles(a, b).unwrap());
            }
        }
    }
    out
}

/// The three terms party `p` transmits, in (a,b) ascending order.
pub fn sender_terms(p: PartyId) -> Vec<TermRole> {
    all_terms().into_iter().filter(|t| t.sender == p).collect()
}

/// The three terms party `p` verifies, in (a,b) ascending order.
pub fn verifier_terms(p: PartyId) -> Vec<TermRole> {
    all_terms().into_iter().filter(|t| t.verifier == p).collect()
}

/// The three terms party `p` receives: (a, p) for a != p, ascending by a.
pub fn ingress_terms(p: PartyId) -> Vec<TermRole> {
    all_terms().into_iter().filter(|t| t.receiver == p).collect()
}

/// Position of ingress term (a, receiver) within the receiver's canonical
/// ingress order (ascending a among the three slots != receiver).
pub fn ingress_pos(a: Slot, receiver: PartyId) -> Result<usize> {
    held_pos(receiver, a).ok_or(Error::Protocol(format!(
        "term ({a},{receiver}) has no ingress position"
    )))
}

/// PRF counter for the mask of term (a,b) of one element:
/// ctr_base + 16*element + 4a + b. Hosts advance ctr_base by 16*count per
/// job so counters are never reused under a key.
pub fn mask_counter(ctr_base: u64, element_index: u64, a: Slot, b: Slot) -> Result<PrfCounter> {
    let term = 4 * a as u64 + b as u64;
    element_index
        .checked_mul(16)
        .and_then(|x| x.checked_add(ctr_base))
        .and_then(|x| x.checked_add(term))
        .map(PrfCounter)
        .ok_or(Error::CounterOverflow)
}

/// A cross-term value as it appears on the wire (masked when masking is
/// enabled).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WireValue {
    pub term: (Slot, Slot),
    pub payload: RingElement,
}

/// Per-term verification tag together with the term it covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VerificationTag {
    pub term: (Slot, Slot),
    pub tag: [u8; 8],
}

/// Output of the local computation stage for one element.
#[derive(Clone, Debug)]
pub struct StageOneOutput {
    /// Partial sums for the three held slots, ascending slot order.
    pub local_acc: [RingElement; 3],
    /// The three wire values this party sends, (a,b) ascending.
    pub egress: [WireValue; 3],
    /// Wire images of the three terms this party verifies (malicious mode
    /// only); inputs for per-term tags or the batched link hash.
    pub verify_payloads: Option<[WireValue; 3]>,
    /// Per-term tags over `verify_payloads` (malicious, per-term mode).
    pub tags: Option<[VerificationTag; 3]>,
}

fn check_same_party(x: &ShareView, y: &ShareView, keys: &KeyMaterial) -> Result<PartyId> {
    let p = x.party();
    if y.party() != p {
        return Err(Error::PartyMismatch {
            expected: p,
            got: y.party(),
        });
    }
    if keys.owner() != p {
        return Err(Error::PartyMismatch {
            expected: p,
            got: keys.owner(),
        });
    }
    Ok(p)
}

fn wire_payload(
    x: &ShareView,
    y: &ShareView,
    keys: &KeyMaterial,
    role: &TermRole,
    ctr_base: u64,
    element_index: u64,
    flags: ModeFlags,
) -> Result<RingElement> {
    let mut payload = x.get(role.a).expect("sender holds x_a")
        * y.get(role.b).expect("sender holds y_b");
    if flags.masking {
        let ctr = mask_counter(ctr_base, element_index, role.a, role.b)?;
        payload += prf(keys.key_for(role.a)?, ctr);
    }
    Ok(payload)
}

/// Local computation stage of one multiplication element: partial slot
/// sums, the three egress wire values, and (in malicious mode) the
/// verification material for the three observed terms.
pub fn mul_stage1(
    x: &ShareView,
    y: &ShareView,
    keys: &KeyMaterial,
    ctr_base: u64,
    element_index: u64,
    batch_id: u64,
    flags: ModeFlags,
) -> Result<StageOneOutput> {
    let p = check_same_party(x, y, keys)?;

    // local_acc[g] = x_g*y_g + sum over held b != g of x_g*y_b,
    // i.e. everything slot g needs except the term carried by the wire.
    let held = held_slots(p);
    let mut local_acc = [RingElement::ZERO; 3];
    for (i, &g) in held.iter().enumerate() {
        let xg = x.get(g).unwrap();
        let mut acc = RingElement::ZERO;
        for &b in held.iter() {
            acc += xg * y.get(b).unwrap();
        }
        local_acc[i] = acc;
    }

    let mut egress = [WireValue {
        term: (0, 0),
        payload: RingElement::ZERO,
    }; 3];
    for (i, role) in sender_terms(p).iter().enumerate() {
        egress[i] = WireValue {
            term: (role.a, role.b),
            payload: wire_payload(x, y, keys, role, ctr_base, element_index, flags)?,
        };
    }

    let (verify_payloads, tags) = if flags.malicious {
        let mut payloads = [WireValue {
            term: (0, 0),
            payload: RingElement::ZERO,
        }; 3];
        for (i, role) in verifier_terms(p).iter().enumerate() {
            payloads[i] = WireValue {
                term: (role.a, role.b),
                payload: wire_payload(x, y, keys, role, ctr_base, element_index, flags)?,
            };
        }
        let tags = if flags.batched_hash {
            None
        } else {
            let mut out = [VerificationTag {
                term: (0, 0),
                tag: [0; 8],
            }; 3];
            for (i, w) in payloads.iter().enumerate() {
                out[i] = VerificationTag {
                    term: w.term,
                    tag: compute_tag(
                        &w.payload.to_le_bytes(),
                        batch_id,
                        element_index,
                        w.term.0,
                        w.term.1,
                    ),
                };
            }
            Some(out)
        };
        (Some(payloads), tags)
    } else {
        (None, None)
    };

    Ok(StageOneOutput {
        local_acc,
        egress,
        verify_payloads,
        tags,
    })
}

/// Post-communication accumulation stage of one element. `ingress` holds
/// the three raw wire payloads for terms (a, party), ascending by a;
/// `ingress_tags` the matching tags in per-term malicious mode. Verifies
/// first, then unmasks and accumulates into the party's output view.
#[allow(clippy::too_many_arguments)]
pub fn mul_stage2(
    party: PartyId,
    local_acc: &[RingElement; 3],
    ingress: &[RingElement; 3],
    ingress_tags: Option<&[[u8; 8]; 3]>,
    keys: &KeyMaterial,
    ctr_base: u64,
    element_index: u64,
    batch_id: u64,
    flags: ModeFlags,
) -> Result<ShareView> {
    if keys.owner() != party {
        return Err(Error::PartyMismatch {
            expected: party,
            got: keys.owner(),
        });
    }
    let terms = ingress_terms(party);

    if flags.malicious && !flags.batched_hash {
        let tags = ingress_tags.ok_or(Error::Protocol(
            "malicious mode requires ingress tags".into(),
        ))?;
        for (i, role) in terms.iter().enumerate() {
            let expect = compute_tag(
                &ingress[i].to_le_bytes(),
                batch_id,
                element_index,
                role.a,
                role.b,
            );
            if expect != tags[i] {
                return Err(Error::TagMismatch {
                    batch_id,
                    element: element_index,
                    a: role.a,
                    b: role.b,
                });
            }
        }
    }

    let mut out = [RingElement::ZERO; 3];
    for (i, role) in terms.iter().enumerate() {
        let mut value = ingress[i];
        if flags.masking {
            let ctr = mask_counter(ctr_base, element_index, role.a, role.b)?;
            value -= prf(keys.key_for(role.a)?, ctr);
        }
        let pos = held_pos(party, role.slot).expect("receiver holds the term's slot");
        out[pos] = local_acc[pos] + value;
    }
    ShareView::new(party, out)
}

/// Slotwise local addition; no communication occurs.
pub fn add_local(x: &ShareView, y: &ShareView) -> Result<ShareView> {
    let p = x.party();
    if y.party() != p {
        return Err(Error::PartyMismatch {
            expected: p,
            got: y.party(),
        });
    }
    let xs = x.slot_values();
    let ys = y.slot_values();
    ShareView::new(p, [xs[0] + ys[0], xs[1] + ys[1], xs[2] + ys[2]])
}

/// Runs a full multiplication for all four parties in memory: stage 1
/// everywhere, one exchange of wire values (and tags), stage 2 everywhere.
/// The reference evaluation path for the engine and the tests; also the
/// witness that multiplication needs exactly one round.
pub fn multiply_once(
    xs: &[ShareView; 4],
    ys: &[ShareView; 4],
    keys: &[KeyMaterial; 4],
    ctr_base: u64,
    element_index: u64,
    batch_id: u64,
    flags: ModeFlags,
) -> Result<[ShareView; 4]> {
    let mut stage1 = Vec::with_capacity(4);
    for p in 0..4usize {
        stage1.push(mul_stage1(
            &xs[p],
            &ys[p],
            &keys[p],
            ctr_base,
            element_index,
            batch_id,
            flags,
        )?);
    }

    // The single communication round: route egress values and tags to
    // their receivers in canonical ingress order.
    let mut ingress = [[RingElement::ZERO; 3]; 4];
    let mut tags = [[[0u8; 8]; 3]; 4];
    for p in 0..4usize {
        for w in &stage1[p].egress {
            let pos = ingress_pos(w.term.0, w.term.1)?;
            ingress[w.term.1 as usize][pos] = w.payload;
        }
        if let Some(ts) = &stage1[p].tags {
            for t in ts {
                let pos = ingress_pos(t.term.0, t.term.1)?;
                tags[t.term.1 as usize][pos] = t.tag;
            }
        }
    }

    let mut out = Vec::with_capacity(4);
    for p in 0..4usize {
        let t = (flags.malicious && !flags.batched_hash).then_some(&tags[p]);
        out.push(mul_stage2(
            p as PartyId,
            &stage1[p].local_acc,
            &ingress[p],
            t,
            &keys[p],
            ctr_base,
            element_index,
            batch_id,
            flags,
        )?);
    }
    Ok(out.try_into().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::{deal, reconstruct, DealtSecret, KeySet};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn keys4(seed: u64) -> [KeyMaterial; 4] {
        let set = KeySet::generate(&mut StdRng::seed_from_u64(seed));
        [0, 1, 2, 3].map(|p| set.material_for(p).unwrap())
    }

    fn views4(d: &DealtSecret) -> [ShareView; 4] {
        [0, 1, 2, 3].map(|p| d.view_of(p).unwrap())
    }

    #[test]
    fn role_examples() {
        let t = term_roles(0, 1).unwrap();
        assert_eq!((t.slot, t.receiver, t.sender, t.verifier), (0, 1, 2, 3));
        let t = term_roles(1, 2).unwrap();
        assert_eq!((t.slot, t.receiver, t.sender, t.verifier), (1, 2, 3, 0));
        assert!(matches!(term_roles(2, 2), Err(Error::DiagonalTerm(2))));
        assert!(term_roles(4, 0).is_err());
    }

    // Brute-force check of the whole role table: parties are balanced and
    // every directed link carries exactly one data value and one tag per
    // multiply.
    #[test]
    fn role_table_is_balanced() {
        let terms = all_terms();
        assert_eq!(terms.len(), 12);
        let mut sender_count = [0; 4];
        let mut receiver_count = [0; 4];
        let mut verifier_count = [0; 4];
        let mut data_links = std::collections::HashSet::new();
        let mut tag_links = std::collections::HashSet::new();
        for t in &terms {
            // {sender, verifier} is the complement of {a, b}.
            let mut members = [t.a, t.b, t.sender, t.verifier];
            members.sort_unstable();
            assert_eq!(members, [0, 1, 2, 3]);
            assert_ne!(t.sender, t.receiver);
            sender_count[t.sender as usize] += 1;
            receiver_count[t.receiver as usize] += 1;
            verifier_count[t.verifier as usize] += 1;
            assert!(data_links.insert((t.sender, t.receiver)));
            assert!(tag_links.insert((t.verifier, t.receiver)));
        }
        assert_eq!(sender_count, [3; 4]);
        assert_eq!(receiver_count, [3; 4]);
        assert_eq!(verifier_count, [3; 4]);
        assert_eq!(data_links.len(), 12);
        assert_eq!(tag_links.len(), 12);
    }

    #[test]
    fn stage1_worked_example() {
        // x = (5,0,0,0), y = (0,3,0,0): only term (0,1) is nonzero. Party 2
        // sends 15 toward party 1 and the final shares are (15,0,0,0).
        let x = DealtSecret {
            slots: [5, 0, 0, 0].map(RingElement),
        };
        let y = DealtSecret {
            slots: [0, 3, 0, 0].map(RingElement),
        };
        let keys = keys4(10);
        let flags = ModeFlags::default();

        let out2 = mul_stage1(
            &x.view_of(2).unwrap(),
            &y.view_of(2).unwrap(),
            &keys[2],
            0,
            0,
            0,
            flags,
        )
        .unwrap();
        let w = out2
            .egress
            .iter()
            .find(|w| w.term == (0, 1))
            .expect("party 2 sends term (0,1)");
        assert_eq!(w.payload, RingElement(15));
        for w in &out2.egress {
            if w.term != (0, 1) {
                assert_eq!(w.payload, RingElement::ZERO);
            }
        }

        let zs = multiply_once(&views4(&x), &views4(&y), &keys, 0, 0, 0, flags).unwrap();
        assert_eq!(zs[1].get(0), Some(RingElement(15)));
        assert_eq!(zs[1].get(2), Some(RingElement::ZERO));
        assert_eq!(zs[1].get(3), Some(RingElement::ZERO));
        assert_eq!(reconstruct(&zs[0], &zs[1]).unwrap(), RingElement(15));
    }

    #[test]
    fn stage1_all_zero_inputs() {
        let zero = DealtSecret {
            slots: [RingElement::ZERO; 4],
        };
        let keys = keys4(11);
        for p in 0..4u8 {
            let out = mul_stage1(
                &zero.view_of(p).unwrap(),
                &zero.view_of(p).unwrap(),
                &keys[p as usize],
                0,
                0,
                0,
                ModeFlags::default(),
            )
            .unwrap();
            assert_eq!(out.local_acc, [RingElement::ZERO; 3]);
            for w in &out.egress {
                assert_eq!(w.payload, RingElement::ZERO);
            }
        }
    }

    #[test]
    fn masking_covers_wires_and_cancels() {
        let zero = DealtSecret {
            slots: [RingElement::ZERO; 4],
        };
        let keys = keys4(12);
        let masked = ModeFlags {
            masking: true,
            ..Default::default()
        };
        // With all-zero inputs every egress payload equals the mask itself.
        for p in 0..4u8 {
            let out = mul_stage1(
                &zero.view_of(p).unwrap(),
                &zero.view_of(p).unwrap(),
                &keys[p as usize],
                0,
                0,
                0,
                masked,
            )
            .unwrap();
            for w in &out.egress {
                let ctr = mask_counter(0, 0, w.term.0, w.term.1).unwrap();
                let mask = prf(keys[p as usize].key_for(w.term.0).unwrap(), ctr);
                assert_eq!(w.payload, mask);
                assert_ne!(w.payload, RingElement::ZERO);
            }
        }
        // Stage 2 still yields all-zero shares.
        let zs = multiply_once(
            &views4(&zero),
            &views4(&zero),
            &keys,
            0,
            0,
            0,
            masked,
        )
        .unwrap();
        for z in &zs {
            assert_eq!(z.slot_values(), [RingElement::ZERO; 3]);
        }
    }

    #[test]
    fn mask_on_off_same_result() {
        let mut rng = StdRng::seed_from_u64(13);
        let keys = keys4(13);
        for _ in 0..100 {
            let x = deal(rng.gen(), &mut rng);
            let y = deal(rng.gen(), &mut rng);
            let plain = multiply_once(
                &views4(&x),
                &views4(&y),
                &keys,
                0,
                0,
                0,
                ModeFlags::default(),
            )
            .unwrap();
            let masked = multiply_once(
                &views4(&x),
                &views4(&y),
                &keys,
                0,
                0,
                0,
                ModeFlags {
                    masking: true,
                    ..Default::default()
                },
            )
            .unwrap();
            for p in 0..4 {
                assert_eq!(plain[p].slot_values(), masked[p].slot_values());
            }
        }
    }

    // Correctness of the multiply pipeline against the plaintext oracle:
    // z_g = x_g*y for every slot, hence the sum is x*y mod 2^128.
    #[test]
    fn multiply_matches_plaintext_oracle() {
        let mut rng = StdRng::seed_from_u64(14);
        let keys = keys4(14);
        let flags = ModeFlags {
            malicious: true,
            masking: true,
            batched_hash: false,
        };
        for i in 0..10_000u64 {
            let sx: RingElement = rng.gen();
            let sy: RingElement = rng.gen();
            let x = deal(sx, &mut rng);
            let y = deal(sy, &mut rng);
            let zs = multiply_once(&views4(&x), &views4(&y), &keys, i * 16, 0, 7, flags).unwrap();
            let expected = sx * sy;
            // Slot identity: z_g = x_g * y.
            for g in 0..4u8 {
                let holder = ((g + 1) % 4) as usize;
                assert_eq!(zs[holder].get(g).unwrap(), x.slots[g as usize] * sy);
            }
            assert_eq!(reconstruct(&zs[0], &zs[1]).unwrap(), expected);
            assert_eq!(reconstruct(&zs[2], &zs[3]).unwrap(), expected);
        }
    }

    #[test]
    fn stage2_detects_any_payload_bit_flip() {
        let mut rng = StdRng::seed_from_u64(15);
        let keys = keys4(15);
        let flags = ModeFlags {
            malicious: true,
            masking: true,
            batched_hash: false,
        };
        let x = deal(rng.gen(), &mut rng);
        let y = deal(rng.gen(), &mut rng);

        // Build party 1's honest ingress, then flip each payload bit.
        let mut stage1 = Vec::new();
        for p in 0..4usize {
            stage1.push(
                mul_stage1(
                    &x.view_of(p as u8).unwrap(),
                    &y.view_of(p as u8).unwrap(),
                    &keys[p],
                    0,
                    0,
                    3,
                    flags,
                )
                .unwrap(),
            );
        }
        let receiver: PartyId = 1;
        let mut ingress = [RingElement::ZERO; 3];
        let mut tags = [[0u8; 8]; 3];
        for p in 0..4usize {
            for w in &stage1[p].egress {
                if w.term.1 == receiver {
                    ingress[ingress_pos(w.term.0, receiver).unwrap()] = w.payload;
                }
            }
            if let Some(ts) = &stage1[p].tags {
                for t in ts {
                    if t.term.1 == receiver {
                        tags[ingress_pos(t.term.0, receiver).unwrap()] = t.tag;
                    }
                }
            }
        }
        let local = &stage1[receiver as usize].local_acc;

        // Honest run passes.
        mul_stage2(receiver, local, &ingress, Some(&tags), &keys[1], 0, 0, 3, flags).unwrap();

        for slot_idx in 0..3 {
            for bit in 0..128 {
                let mut tampered = ingress;
                tampered[slot_idx] = RingElement(tampered[slot_idx].0 ^ (1u128 << bit));
                let res = mul_stage2(
                    receiver, local, &tampered, Some(&tags), &keys[1], 0, 0, 3, flags,
                );
                assert!(
                    matches!(res, Err(Error::TagMismatch { .. })),
                    "flip of ingress {slot_idx} bit {bit} went undetected"
                );
            }
        }
        // Tag flips are detected too.
        for tag_idx in 0..3 {
            let mut tampered = tags;
            tampered[tag_idx][0] ^= 1;
            let res = mul_stage2(
                receiver, local, &ingress, Some(&tampered), &keys[1], 0, 0, 3, flags,
            );
            assert!(matches!(res, Err(Error::TagMismatch { .. })));
        }
    }

    #[test]
    fn add_local_examples() {
        let x = ShareView::new(0, [1, 1, 1].map(RingElement)).unwrap();
        let y = ShareView::new(0, [2, 2, 2].map(RingElement)).unwrap();
        let z = add_local(&x, &y).unwrap();
        assert_eq!(z.slot_values(), [3, 3, 3].map(RingElement));

        let other = ShareView::new(1, [0, 0, 0].map(RingElement)).unwrap();
        assert!(add_local(&x, &other).is_err());
    }

    #[test]
    fn add_matches_plaintext_oracle() {
        let mut rng = StdRng::seed_from_u64(16);
        for _ in 0..10_000 {
            let sx: RingElement = rng.gen();
            let sy: RingElement = rng.gen();
            let x = deal(sx, &mut rng);
            let y = deal(sy, &mut rng);
            let z0 = add_local(&x.view_of(0).unwrap(), &y.view_of(0).unwrap()).unwrap();
            let z1 = add_local(&x.view_of(1).unwrap(), &y.view_of(1).unwrap()).unwrap();
            assert_eq!(reconstruct(&z0, &z1).unwrap(), sx + sy);
        }
    }

    #[test]
    fn add_identity_with_zero_dealing() {
        let mut rng = StdRng::seed_from_u64(17);
        let s: RingElement = rng.gen();
        let x = deal(s, &mut rng);
        let zero = deal(RingElement::ZERO, &mut rng);
        let z0 = add_local(&x.view_of(0).unwrap(), &zero.view_of(0).unwrap()).unwrap();
        let z2 = add_local(&x.view_of(2).unwrap(), &zero.view_of(2).unwrap()).unwrap();
        assert_eq!(reconstruct(&z0, &z2).unwrap(), s);
    }

    #[test]
    fn counter_layout_and_overflow() {
        assert_eq!(mask_counter(100, 2, 1, 3).unwrap(), PrfCounter(100 + 32 + 7));
        assert!(matches!(
            mask_counter(u64::MAX - 10, 1, 0, 0),
            Err(Error::CounterOverflow)
        ));
    }

    #[test]
    fn batched_hash_mode_multiplies_correctly() {
        let mut rng = StdRng::seed_from_u64(18);
        let keys = keys4(18);
        let flags = ModeFlags {
            malicious: true,
            masking: true,
            batched_hash: true,
        };
        let sx: RingElement = rng.gen();
        let sy: RingElement = rng.gen();
        let x = deal(sx, &mut rng);
        let y = deal(sy, &mut rng);
        let zs = multiply_once(&views4(&x), &views4(&y), &keys, 0, 0, 0, flags).unwrap();
        assert_eq!(reconstruct(&zs[1], &zs[3]).unwrap(), sx * sy);
    }
}
