//! Batched execution of lookaside commands over host memory.
//!
//! Inputs are staged into working copies (the Data A image), intermediates
//! accumulate in a second buffer (Data B), and everything destined for
//! other parties leaves as wire messages addressed by the fixed region map.

use crate::engine::command::LookasideCommand;
use crate::engine::layout::{read_record, write_record, RegionMap, SHARE_RECORD_LEN};
use crate::engine::memory::HostMemoryRegion;
use crate::error::{Error, Result};
use crate::fabric::wire::WireMessage;
use crate::protocol::{
    ingress_pos, ingress_terms, mul_stage1, mul_stage2, verifier_terms, LinkHasher,
};
use crate::ring::{KeyMaterial, PartyId, RingElement, ShareView};

/// Stage-1 products: outbound wire traffic plus the intermediate records
/// that stage 2 will consume.
pub struct Stage1Run {
    pub outbound: Vec<WireMessage>,
    /// One 48-byte local-accumulator record per element.
    pub intermediates: Vec<u8>,
}

/// Stage-2 products: the finished share records, or the first failing
/// element on verification failure.
pub struct Stage2Run {
    pub records: Vec<u8>,
}

/// Runs the local computation stage over the whole batch: reads the two
/// input vectors, produces per-element egress values toward each peer's
/// ingress slot, and per-link tag streams in malicious mode.
pub fn run_stage1_batch(
    party: PartyId,
    mem: &HostMemoryRegion,
    cmd: &LookasideCommand,
    keys: &KeyMaterial,
    regions: &RegionMap,
) -> Result<Stage1Run> {
    let n = cmd.count as usize;
    let len = n as u64 * SHARE_RECORD_LEN;
    // Data A staging: one copy of each input vector.
    let xs = mem.read(cmd.src_a, len)?.to_vec();
    let ys = mem.read(cmd.src_b, len)?.to_vec();
    let mut intermediates = vec![0u8; len as usize];

    let mut outbound = Vec::with_capacity(3 * n + 3);
    let verify = verifier_terms(party);
    let mut tag_streams: [Vec<u8>; 3] = if cmd.flags.malicious && !cmd.flags.batched_hash {
        [0, 1, 2].map(|_| Vec::with_capacity(8 * n))
    } else {
        [0, 1, 2].map(|_| Vec::new())
    };
    let mut link_hashers: Option<[LinkHasher; 3]> =
        (cmd.flags.malicious && cmd.flags.batched_hash).then(|| {
            [0, 1, 2].map(|i| {
                let t = &verify[i];
                LinkHasher::new(cmd.batch_id, t.a, t.b, cmd.count as u64)
            })
        });

    for e in 0..n {
        let x = ShareView::from_bytes(party, &xs[e * 48..])?;
        let y = ShareView::from_bytes(party, &ys[e * 48..])?;
        let out = mul_stage1(
            &x,
            &y,
            keys,
            cmd.ctr_base,
            e as u64,
            cmd.batch_id,
            cmd.flags,
        )?;
        write_record(&out.local_acc, &mut intermediates[e * 48..e * 48 + 48]);

        for w in &out.egress {
            let (a, b) = w.term;
            let pos = ingress_pos(a, b)?;
            let offset = regions.ingress_data(cmd.batch_id, e as u64, pos);
            outbound.push(WireMessage::put(
                party,
                b,
                cmd.batch_id,
                offset,
                w.payload.to_le_bytes().to_vec(),
            ));
        }

        if let Some(tags) = &out.tags {
            for (i, t) in tags.iter().enumerate() {
                tag_streams[i].extend_from_slice(&t.tag);
            }
        }
        if let (Some(hashers), Some(payloads)) = (&mut link_hashers, &out.verify_payloads) {
            for (h, w) in hashers.iter_mut().zip(payloads.iter()) {
                h.absorb(&w.payload.to_le_bytes());
            }
        }
    }

    // One TAGS message per verified link per batch, stream in element order.
    if cmd.flags.malicious {
        let hashes = link_hashers.map(|hs| hs.map(|h| h.finish()));
        for (i, role) in verify.iter().enumerate() {
            let pos = ingress_pos(role.a, role.b)?;
            let offset =
                regions.ingress_tags(cmd.batch_id, cmd.count, pos, cmd.flags.batched_hash);
            let payload = match &hashes {
                Some(hs) => hs[i].to_vec(),
                None => std::mem::take(&mut tag_streams[i]),
            };
            outbound.push(WireMessage::tags(
                party,
                role.b,
                cmd.batch_id,
                offset,
                payload,
            ));
        }
    }

    Ok(Stage1Run {
        outbound,
        intermediates,
    })
}

/// Runs the post-communication accumulation stage: verifies the received
/// tag material, unmasks the ingress values, and combines them with the
/// intermediates into finished share records.
pub fn run_stage2_batch(
    party: PartyId,
    mem: &HostMemoryRegion,
    intermediates: &[u8],
    cmd: &LookasideCommand,
    keys: &KeyMaterial,
    regions: &RegionMap,
) -> Result<Stage2Run> {
    let n = cmd.count as usize;
    if intermediates.len() != n * 48 {
        return Err(Error::Protocol(format!(
            "stage 2 needs {} intermediate bytes, got {}",
            n * 48,
            intermediates.len()
        )));
    }
    let slot = regions.ingress_slot(cmd.batch_id);
    let data = mem.read(slot, n as u64 * SHARE_RECORD_LEN)?.to_vec();

    // Batched mode verifies whole link streams before any accumulation.
    if cmd.flags.malicious && cmd.flags.batched_hash {
        for role in ingress_terms(party) {
            let pos = ingress_pos(role.a, role.b)?;
            let mut hasher = LinkHasher::new(cmd.batch_id, role.a, role.b, cmd.count as u64);
            for e in 0..n {
                let mut payload = [0u8; 16];
                payload.copy_from_slice(&data[e * 48 + 16 * pos..e * 48 + 16 * pos + 16]);
                hasher.absorb(&payload);
            }
            let expect = hasher.finish();
            let offset = regions.ingress_tags(cmd.batch_id, cmd.count, pos, true);
            let got = mem.read(offset, 32)?;
            if expect != got {
                return Err(Error::TagMismatch {
                    batch_id: cmd.batch_id,
                    element: 0,
                    a: role.a,
                    b: role.b,
                });
            }
        }
    }

    let per_term = cmd.flags.malicious && !cmd.flags.batched_hash;
    let mut tag_data: [Vec<u8>; 3] = [0, 1, 2].map(|_| Vec::new());
    if per_term {
        for pos in 0..3 {
            let offset = regions.ingress_tags(cmd.batch_id, cmd.count, pos, false);
            tag_data[pos] = mem.read(offset, 8 * n as u64)?.to_vec();
        }
    }

    let mut records = vec![0u8; n * 48];
    for e in 0..n {
        let local = read_record(&intermediates[e * 48..e * 48 + 48]);
        let mut ingress = [RingElement::ZERO; 3];
        for (pos, v) in ingress.iter_mut().enumerate() {
            *v = RingElement::read_le(&data[e * 48 + 16 * pos..]);
        }
        let tags: Option<[[u8; 8]; 3]> = per_term.then(|| {
            let mut out = [[0u8; 8]; 3];
            for pos in 0..3 {
                out[pos].copy_from_slice(&tag_data[pos][e * 8..e * 8 + 8]);
            }
            out
        });
        let view = mul_stage2(
            party,
            &local,
            &ingress,
            tags.as_ref(),
            keys,
            cmd.ctr_base,
            e as u64,
            cmd.batch_id,
            cmd.flags,
        )?;
        records[e * 48..e * 48 + 48].copy_from_slice(&view.to_bytes());
    }
    Ok(Stage2Run { records })
}

/// Slotwise addition over the batch; purely local by construction.
pub fn run_add_batch(
    mem: &HostMemoryRegion,
    cmd: &LookasideCommand,
) -> Result<Vec<u8>> {
    let n = cmd.count as usize;
    let len = n as u64 * SHARE_RECORD_LEN;
    let xs = mem.read(cmd.src_a, len)?.to_vec();
    let ys = mem.read(cmd.src_b, len)?.to_vec();
    let mut out = vec![0u8; len as usize];
    for e in 0..n {
        let a = read_record(&xs[e * 48..e * 48 + 48]);
        let b = read_record(&ys[e * 48..e * 48 + 48]);
        let sum = [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
        write_record(&sum, &mut out[e * 48..e * 48 + 48]);
    }
    Ok(out)
}
