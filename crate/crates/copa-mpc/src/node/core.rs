//! Transport-independent node state machine.
//!
//! One `NodeCore` binds a party's memory region, key material, engine
//! queue and ingress tracker. All methods are synchronous and
//! non-blocking; the simulated cluster drives them on a virtual clock and
//! the socket node drives them from reader/worker threads. Timing policy
//! (when compute finishes, when to retry dispatch) lives entirely in the
//! drivers.
//!
//! Batch discipline: batches occupy their ingress slot (batch_id mod 4)
//! until every party completed them, so initiators keep at most four
//! batches in flight, submit them to all parties in one order, and only
//! reuse a slot after the previous batch on it has fully drained. The
//! host-facing helpers here follow that rule.

use std::collections::BTreeMap;

use rand::Rng;

use crate::engine::{
    run_add_batch, run_stage1_batch, run_stage2_batch, AbortInfo, CompletionEvent, CounterDelta,
    EngineState, HostMemoryRegion, JobStatus, JobTrace, LookasideCommand, Opcode, RegionMap,
    SHARE_RECORD_LEN,
};
use crate::error::{Error, Result};
use crate::fabric::wire::{
    decode_abort_payload, encode_abort_payload, AbortReason, MessageType, WireMessage,
};
use crate::node::config::PartyConfig;
use crate::node::tracker::BatchTracker;
use crate::protocol::ModeFlags;
use crate::ring::{deal, KeyMaterial, PartyId, RingElement, ShareView, NUM_PARTIES};

/// Batch ids with this bit set are GET request ids, never job batches.
pub const GET_ID_FLAG: u64 = 1 << 63;

/// Handle to a dealt input vector: `count` share records at `offset` in
/// every party's input segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InputBatch {
    pub offset: u64,
    pub count: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum JobPhase {
    /// Waiting for GET responses carrying remote source data.
    Fetching { remaining: usize },
    /// Compute pass scheduled or running.
    Computing,
    /// Stage-1 products emitted; waiting for peer ingress.
    AwaitIngress,
}

struct ActiveJob {
    ticket: u64,
    instance: usize,
    cmd: LookasideCommand,
    origin: Option<PartyId>,
    phase: JobPhase,
    staged: Option<Vec<u8>>,
    started_us: f64,
    delta: CounterDelta,
}

/// What a driver must do after dispatching a job.
pub enum StartAction {
    /// Run the compute pass after the modeled occupancy.
    Compute { occupancy_us: f64 },
    /// Send these GET requests and wait for the responses.
    Fetch { requests: Vec<WireMessage> },
    /// Ingress must arrive before the compute pass (MUL_STAGE2).
    AwaitIngress,
    /// The batch is poisoned; the job completed immediately as an abort.
    Finished(Completion),
}

pub struct StartedJob {
    pub ticket: u64,
    pub action: StartAction,
}

/// A finished job: its event plus any messages the driver must send
/// (result PUT, COMPLETION to the trigger origin, ABORT broadcasts).
pub struct Completion {
    pub event: CompletionEvent,
    pub outbound: Vec<WireMessage>,
}

/// Outcome of a compute pass.
pub struct ComputeOutcome {
    pub outbound: Vec<WireMessage>,
    pub completion: Option<Completion>,
    pub await_ingress: bool,
}

/// What to do when a waiting job's dependencies are satisfied.
pub enum ReadyAction {
    Compute { occupancy_us: f64 },
    Finished(Completion),
    /// Still waiting on something else (fetched stage-2 job whose ingress
    /// has not arrived yet).
    Wait,
}

/// Effects of one received message.
#[derive(Default)]
pub struct HandleResult {
    pub outbound: Vec<WireMessage>,
    /// Jobs whose fetch or ingress became satisfied.
    pub ready_tickets: Vec<u64>,
    /// Jobs that must be failed because their batch was poisoned remotely.
    pub poisoned_tickets: Vec<u64>,
    /// Host-level GET requests that completed.
    pub got_responses: Vec<u64>,
    /// A TRIGGER enqueued a command.
    pub enqueued: bool,
}

struct PendingGet {
    local_dst: u64,
    ticket: Option<u64>,
}

pub struct NodeCore {
    party: PartyId,
    flags: ModeFlags,
    timeout_ms: u64,
    pub mem: HostMemoryRegion,
    keys: KeyMaterial,
    pub regions: RegionMap,
    cost: crate::engine::AccelCostModel,
    pub engine: EngineState,
    tracker: BatchTracker,
    active: BTreeMap<u64, ActiveJob>,
    pending_gets: BTreeMap<u64, PendingGet>,
    next_get_id: u64,
    pub completions: Vec<CompletionEvent>,
    pub remote_completions: Vec<CompletionEvent>,
    pub remote_aborts: Vec<AbortInfo>,
    input_cursor: u64,
    intermediate_cursor: u64,
    output_cursor: u64,
    next_batch_id: u64,
    next_ctr_base: u64,
}

impl NodeCore {
    pub fn new(cfg: &PartyConfig, keys: KeyMaterial) -> Result<Self> {
        cfg.validate()?;
        if keys.owner() != cfg.party_id {
            return Err(Error::PartyMismatch {
                expected: cfg.party_id,
                got: keys.owner(),
            });
        }
        let regions = RegionMap::new(cfg.memory_size)?;
        let mut mem = HostMemoryRegion::new(cfg.memory_size);
        for r in regions.registered_ranges() {
            mem.register(r);
        }
        Ok(NodeCore {
            party: cfg.party_id,
            flags: cfg.mode_flags(),
            timeout_ms: cfg.timeout_ms,
            mem,
            keys,
            regions,
            cost: cfg.cost_model(),
            engine: EngineState::new(cfg.num_accels),
            tracker: BatchTracker::default(),
            active: BTreeMap::new(),
            pending_gets: BTreeMap::new(),
            next_get_id: 0,
            completions: Vec::new(),
            remote_completions: Vec::new(),
            remote_aborts: Vec::new(),
            input_cursor: 0,
            intermediate_cursor: 0,
            output_cursor: 0,
            next_batch_id: 0,
            next_ctr_base: 0,
        })
    }

    pub fn party(&self) -> PartyId {
        self.party
    }

    pub fn flags(&self) -> ModeFlags {
        self.flags
    }

    pub fn timeout_ms(&self) -> u64 {
        self.timeout_ms
    }

    pub fn cost_model(&self) -> &crate::engine::AccelCostModel {
        &self.cost
    }

    /// True when nothing is queued, running or waiting.
    pub fn is_idle(&self) -> bool {
        self.active.is_empty() && self.engine.queue_len() == 0 && self.pending_gets.is_empty()
    }

    pub fn waiting_summary(&self) -> String {
        let jobs: Vec<String> = self
            .active
            .values()
            .map(|j| format!("ticket {} batch {} {:?}", j.ticket, j.cmd.batch_id, j.phase))
            .collect();
        format!(
            "party {}: {} queued, active [{}], {} pending gets",
            self.party,
            self.engine.queue_len(),
            jobs.join(", "),
            self.pending_gets.len()
        )
    }

    // ----- host-side allocation helpers ---------------------------------

    fn bump(cursor: &mut u64, base: u64, size: u64, bytes: u64) -> Result<u64> {
        if *cursor + bytes > size {
            return Err(Error::OutOfBounds {
                offset: base + *cursor,
                len: bytes,
                size: base + size,
            });
        }
        let at = base + *cursor;
        *cursor += bytes;
        Ok(at)
    }

    pub fn alloc_input(&mut self, bytes: u64) -> Result<u64> {
        Self::bump(
            &mut self.input_cursor,
            self.regions.input_base(),
            self.regions.input_size(),
            bytes,
        )
    }

    pub fn alloc_intermediate(&mut self, bytes: u64) -> Result<u64> {
        Self::bump(
            &mut self.intermediate_cursor,
            self.regions.intermediate_base(),
            self.regions.intermediate_size(),
            bytes,
        )
    }

    pub fn alloc_output(&mut self, bytes: u64) -> Result<u64> {
        Self::bump(
            &mut self.output_cursor,
            self.regions.output_base(),
            self.regions.output_size(),
            bytes,
        )
    }

    pub fn alloc_batch_id(&mut self) -> u64 {
        let id = self.next_batch_id;
        self.next_batch_id += 1;
        id
    }

    pub fn alloc_ctr_base(&mut self, count: u32) -> Result<u64> {
        let base = self.next_ctr_base;
        self.next_ctr_base = base
            .checked_add(16 * count as u64)
            .ok_or(Error::CounterOverflow)?;
        Ok(base)
    }

    /// Resets the host-side cursors; in-flight jobs must have drained.
    pub fn reset_allocators(&mut self) {
        self.input_cursor = 0;
        self.intermediate_cursor = 0;
        self.output_cursor = 0;
    }

    // ----- input dealing -------------------------------------------------

    /// Deals `secrets` locally and returns the PUTs that distribute each
    /// peer's three-slot views into its input region (one message per
    /// peer). The owner's own views are written directly; the plaintext
    /// never leaves this node and every wire byte is a share.
    pub fn deal_inputs<R: Rng>(
        &mut self,
        secrets: &[RingElement],
        rng: &mut R,
    ) -> Result<(InputBatch, Vec<WireMessage>)> {
        let count = secrets.len() as u32;
        if count == 0 {
            return Ok((
                InputBatch {
                    offset: self.regions.input_base() + self.input_cursor,
                    count: 0,
                },
                Vec::new(),
            ));
        }
        let bytes = count as u64 * SHARE_RECORD_LEN;
        let offset = self.alloc_input(bytes)?;

        let mut own = vec![0u8; bytes as usize];
        let mut per_peer: [Vec<u8>; NUM_PARTIES] =
            [0, 1, 2, 3].map(|_| vec![0u8; bytes as usize]);
        for (i, &secret) in secrets.iter().enumerate() {
            let dealt = deal(secret, rng);
            for q in 0..NUM_PARTIES as u8 {
                let view = dealt.view_of(q)?;
                let rec = view.to_bytes();
                if q == self.party {
                    own[i * 48..i * 48 + 48].copy_from_slice(&rec);
                } else {
                    per_peer[q as usize][i * 48..i * 48 + 48].copy_from_slice(&rec);
                }
            }
        }
        self.mem.write(offset, &own)?;

        let mut outbound = Vec::with_capacity(3);
        for q in 0..NUM_PARTIES as u8 {
            if q != self.party {
                outbound.push(WireMessage::put(
                    self.party,
                    q,
                    0,
                    offset,
                    std::mem::take(&mut per_peer[q as usize]),
                ));
            }
        }
        Ok((InputBatch { offset, count }, outbound))
    }

    // ----- command lifecycle ----------------------------------------------

    /// Validates and enqueues a command. `origin` names the triggering
    /// party for remote submissions.
    pub fn submit(&mut self, cmd: LookasideCommand, origin: Option<PartyId>) -> Result<u64> {
        self.regions.validate_command(&cmd)?;
        // Concurrent batches must not share an ingress slot.
        if matches!(
            cmd.opcode,
            Opcode::MulStage1 | Opcode::MulStage2 | Opcode::MulFused
        ) {
            let slot = self.regions.ingress_slot(cmd.batch_id);
            for other in self.active.values().map(|j| &j.cmd) {
                if matches!(
                    other.opcode,
                    Opcode::MulStage1 | Opcode::MulStage2 | Opcode::MulFused
                ) && other.batch_id != cmd.batch_id
                    && self.regions.ingress_slot(other.batch_id) == slot
                {
                    return Err(Error::Config(format!(
                        "batch {} shares ingress slot with in-flight batch {}",
                        cmd.batch_id, other.batch_id
                    )));
                }
            }
        }
        Ok(self.engine.enqueue(cmd, origin))
    }

    /// Control-unit step. Dispatches at most one job; drivers loop until
    /// it returns None.
    pub fn try_start(&mut self, now_us: f64) -> Option<StartedJob> {
        let (job, instance) = self.engine.try_dispatch(&self.regions)?;
        let ticket = job.ticket;
        let cmd = job.cmd;
        let mut active = ActiveJob {
            ticket,
            instance,
            cmd,
            origin: job.origin,
            phase: JobPhase::Computing,
            staged: None,
            started_us: now_us,
            delta: CounterDelta {
                elements: cmd.count as u64,
                ..Default::default()
            },
        };

        // Fail fast on poisoned batches.
        let poison = self
            .engine
            .poisoned(cmd.batch_id)
            .or_else(|| self.tracker.poisoned(cmd.batch_id))
            .copied();
        if let Some(info) = poison {
            self.active.insert(ticket, active);
            let completion = self.finish(ticket, now_us, JobStatus::Abort, Some(info), 0.0);
            return Some(StartedJob {
                ticket,
                action: StartAction::Finished(completion),
            });
        }

        let action = if cmd.src_party != self.party {
            // Source data lives on a remote node: fetch it into the local
            // mirror offsets before computing.
            let mut requests = Vec::new();
            let len = cmd.count as u64 * SHARE_RECORD_LEN;
            let mut want = vec![(cmd.src_a, len)];
            if matches!(cmd.opcode, Opcode::Add | Opcode::MulStage1 | Opcode::MulFused) {
                want.push((cmd.src_b, len));
            }
            for (offset, len) in want {
                let id = GET_ID_FLAG | self.next_get_id;
                self.next_get_id += 1;
                self.pending_gets.insert(
                    id,
                    PendingGet {
                        local_dst: offset,
                        ticket: Some(ticket),
                    },
                );
                requests.push(WireMessage::get(
                    self.party,
                    cmd.src_party,
                    id,
                    offset,
                    len as u32,
                ));
            }
            active.phase = JobPhase::Fetching {
                remaining: requests.len(),
            };
            StartAction::Fetch { requests }
        } else if cmd.opcode == Opcode::MulStage2 {
            if self.tracker.ready(cmd.batch_id, self.party, cmd.count, cmd.flags) {
                StartAction::Compute {
                    occupancy_us: self.cost.job_time_us(cmd.count),
                }
            } else {
                active.phase = JobPhase::AwaitIngress;
                StartAction::AwaitIngress
            }
        } else {
            StartAction::Compute {
                occupancy_us: self.cost.job_time_us(cmd.count),
            }
        };
        self.active.insert(ticket, active);
        Some(StartedJob { ticket, action })
    }

    /// Runs the compute pass of a dispatched job. For fused multiplies
    /// this is stage 1; the job then either finishes immediately (ingress
    /// already arrived) or parks until it does.
    pub fn compute_done(&mut self, ticket: u64, now_us: f64) -> Result<ComputeOutcome> {
        let job = self
            .active
            .get(&ticket)
            .ok_or_else(|| Error::Protocol(format!("no active job {ticket}")))?;
        let cmd = job.cmd;

        if let Some(info) = self
            .engine
            .poisoned(cmd.batch_id)
            .or_else(|| self.tracker.poisoned(cmd.batch_id))
            .copied()
        {
            let completion = self.finish(ticket, now_us, JobStatus::Abort, Some(info), 0.0);
            return Ok(ComputeOutcome {
                outbound: Vec::new(),
                completion: Some(completion),
                await_ingress: false,
            });
        }

        match cmd.opcode {
            Opcode::Add => {
                let records = run_add_batch(&self.mem, &cmd)?;
                let outbound = self.store_results(ticket, records)?;
                let completion = self.finish_ok(ticket, now_us);
                Ok(ComputeOutcome {
                    outbound,
                    completion: Some(completion),
                    await_ingress: false,
                })
            }
            Opcode::MulStage1 => {
                let run = run_stage1_batch(self.party, &self.mem, &cmd, &self.keys, &self.regions)?;
                let mut outbound = run.outbound;
                self.count_traffic(ticket, &outbound);
                outbound.extend(self.store_results(ticket, run.intermediates)?);
                let completion = self.finish_ok(ticket, now_us);
                Ok(ComputeOutcome {
                    outbound,
                    completion: Some(completion),
                    await_ingress: false,
                })
            }
            Opcode::MulFused => {
                let run = run_stage1_batch(self.party, &self.mem, &cmd, &self.keys, &self.regions)?;
                let outbound = run.outbound;
                self.count_traffic(ticket, &outbound);
                let job = self.active.get_mut(&ticket).unwrap();
                job.staged = Some(run.intermediates);
                if self.tracker.ready(cmd.batch_id, self.party, cmd.count, cmd.flags) {
                    let (completion, extra) = self.finish_multiply(ticket, now_us)?;
                    let mut outbound = outbound;
                    outbound.extend(extra);
                    Ok(ComputeOutcome {
                        outbound,
                        completion: Some(completion),
                        await_ingress: false,
                    })
                } else {
                    self.active.get_mut(&ticket).unwrap().phase = JobPhase::AwaitIngress;
                    Ok(ComputeOutcome {
                        outbound,
                        completion: None,
                        await_ingress: true,
                    })
                }
            }
            Opcode::MulStage2 => {
                let (completion, outbound) = self.finish_multiply(ticket, now_us)?;
                Ok(ComputeOutcome {
                    outbound,
                    completion: Some(completion),
                    await_ingress: false,
                })
            }
        }
    }

    /// Stage 2 plus result delivery for fused and split multiplies;
    /// returns the completion (abort on verification failure) and any
    /// outbound messages.
    fn finish_multiply(&mut self, ticket: u64, now_us: f64) -> Result<(Completion, Vec<WireMessage>)> {
        let job = self.active.get(&ticket).unwrap();
        let cmd = job.cmd;
        let intermediates = match &job.staged {
            Some(buf) => buf.clone(),
            None => self
                .mem
                .read(cmd.src_a, cmd.count as u64 * SHARE_RECORD_LEN)?
                .to_vec(),
        };
        match run_stage2_batch(
            self.party,
            &self.mem,
            &intermediates,
            &cmd,
            &self.keys,
            &self.regions,
        ) {
            Ok(run) => {
                let outbound = self.store_results(ticket, run.records)?;
                let completion = self.finish_ok(ticket, now_us);
                Ok((completion, outbound))
            }
            Err(Error::TagMismatch {
                batch_id,
                element,
                a,
                b,
            }) => {
                let reason = if cmd.flags.batched_hash {
                    AbortReason::BatchedHashMismatch
                } else {
                    AbortReason::TagMismatch
                };
                let info = AbortInfo {
                    batch_id,
                    element,
                    a,
                    b,
                    reason,
                };
                let completion = self.finish(ticket, now_us, JobStatus::Abort, Some(info), 0.0);
                Ok((completion, Vec::new()))
            }
            Err(e) => Err(e),
        }
    }

    /// Writes result records locally or returns the PUT that delivers them
    /// to a remote destination node.
    fn store_results(&mut self, ticket: u64, records: Vec<u8>) -> Result<Vec<WireMessage>> {
        let job = self.active.get_mut(&ticket).unwrap();
        let cmd = job.cmd;
        if cmd.dst_party == self.party {
            self.mem.write(cmd.dst, &records)?;
            Ok(Vec::new())
        } else {
            let msg = WireMessage::put(self.party, cmd.dst_party, cmd.batch_id, cmd.dst, records);
            self.count_traffic(ticket, std::slice::from_ref(&msg));
            Ok(vec![msg])
        }
    }

    fn count_traffic(&mut self, ticket: u64, msgs: &[WireMessage]) {
        let job = self.active.get_mut(&ticket).unwrap();
        for m in msgs {
            job.delta.messages_out += 1;
            job.delta.payload_bytes_out += m.payload.len() as u64;
        }
    }

    fn finish_ok(&mut self, ticket: u64, now_us: f64) -> Completion {
        let count = self.active.get(&ticket).map(|j| j.cmd.count).unwrap_or(0);
        let occupancy = self.cost.job_time_us(count);
        self.finish(ticket, now_us, JobStatus::Ok, None, occupancy)
    }

    /// Retires a job: releases its instance and ranges, records the trace
    /// and completion, and builds origin/abort notifications.
    fn finish(
        &mut self,
        ticket: u64,
        now_us: f64,
        status: JobStatus,
        abort: Option<AbortInfo>,
        occupancy_us: f64,
    ) -> Completion {
        let job = self.active.remove(&ticket).expect("finishing unknown job");
        self.engine.release(ticket);
        self.engine.trace.push(JobTrace {
            ticket,
            instance: job.instance,
            started_us: job.started_us,
            finished_us: now_us,
        });
        if status == JobStatus::Abort {
            if let Some(info) = abort {
                self.engine.poison(info);
                self.tracker.poison(info);
            }
        }
        if status == JobStatus::Ok {
            self.tracker.clear(job.cmd.batch_id);
        }

        let event = CompletionEvent {
            ticket,
            batch_id: job.cmd.batch_id,
            opcode: job.cmd.opcode,
            status,
            simulated_time_us: occupancy_us,
            finished_at_us: now_us,
            instance: job.instance,
            abort,
            delta: job.delta,
        };
        self.completions.push(event);

        let mut outbound = Vec::new();
        if status == JobStatus::Abort {
            if let Some(info) = abort {
                // Tell the peers so they stop computing on this batch.
                for q in 0..NUM_PARTIES as u8 {
                    if q != self.party {
                        outbound.push(WireMessage {
                            msg_type: MessageType::Abort,
                            src_party: self.party,
                            dst_party: q,
                            batch_id: info.batch_id,
                            offset: 0,
                            payload: encode_abort_payload(info.reason, info.a, info.b, info.element),
                            get_len: 0,
                        });
                    }
                }
            }
        }
        if let Some(origin) = job.origin {
            if origin != self.party {
                outbound.push(WireMessage {
                    msg_type: MessageType::Completion,
                    src_party: self.party,
                    dst_party: origin,
                    batch_id: job.cmd.batch_id,
                    offset: 0,
                    payload: encode_completion_payload(&event),
                    get_len: 0,
                });
            }
        }
        Completion { event, outbound }
    }

    /// Resolves a job whose dependencies are now satisfied.
    pub fn on_ready(&mut self, ticket: u64, now_us: f64) -> Result<ReadyAction> {
        let (phase, opcode, count, batch_id, flags) = {
            let job = self
                .active
                .get(&ticket)
                .ok_or_else(|| Error::Protocol(format!("no active job {ticket}")))?;
            (
                job.phase,
                job.cmd.opcode,
                job.cmd.count,
                job.cmd.batch_id,
                job.cmd.flags,
            )
        };
        match (phase, opcode) {
            // Source data fetched; a stage-2 job may still need ingress.
            (JobPhase::Fetching { .. }, Opcode::MulStage2) => {
                if self.tracker.ready(batch_id, self.party, count, flags) {
                    self.active.get_mut(&ticket).unwrap().phase = JobPhase::Computing;
                    Ok(ReadyAction::Compute {
                        occupancy_us: self.cost.job_time_us(count),
                    })
                } else {
                    self.active.get_mut(&ticket).unwrap().phase = JobPhase::AwaitIngress;
                    Ok(ReadyAction::Wait)
                }
            }
            (JobPhase::Fetching { .. }, _) | (JobPhase::AwaitIngress, Opcode::MulStage2) => {
                self.active.get_mut(&ticket).unwrap().phase = JobPhase::Computing;
                Ok(ReadyAction::Compute {
                    occupancy_us: self.cost.job_time_us(count),
                })
            }
            (JobPhase::AwaitIngress, Opcode::MulFused) => {
                let (mut completion, results) = self.finish_multiply(ticket, now_us)?;
                // Result delivery precedes the completion notice so an
                // origin sharing the destination link sees them in order.
                let mut ordered = results;
                ordered.append(&mut completion.outbound);
                completion.outbound = ordered;
                Ok(ReadyAction::Finished(completion))
            }
            _ => Err(Error::Protocol(format!(
                "job {ticket} is not waiting on anything"
            ))),
        }
    }

    /// Fails a waiting job after its batch was poisoned remotely.
    pub fn fail_poisoned(&mut self, ticket: u64, now_us: f64) -> Completion {
        let info = self
            .active
            .get(&ticket)
            .and_then(|j| self.tracker.poisoned(j.cmd.batch_id).copied())
            .unwrap_or(AbortInfo {
                batch_id: 0,
                element: 0,
                a: 0,
                b: 0,
                reason: AbortReason::Poisoned,
            });
        self.finish(ticket, now_us, JobStatus::Abort, Some(info), 0.0)
    }

    /// Fails a waiting job that exceeded the fabric timeout.
    pub fn fail_timeout(&mut self, ticket: u64, now_us: f64) -> Completion {
        let batch_id = self.active.get(&ticket).map(|j| j.cmd.batch_id).unwrap_or(0);
        let info = AbortInfo {
            batch_id,
            element: 0,
            a: 0,
            b: 0,
            reason: AbortReason::Timeout,
        };
        self.finish(ticket, now_us, JobStatus::Error, Some(info), 0.0)
    }

    /// True if the given waiting job's ingress is complete.
    pub fn ingress_ready_for(&self, ticket: u64) -> bool {
        self.active
            .get(&ticket)
            .map(|j| {
                self.tracker
                    .ready(j.cmd.batch_id, self.party, j.cmd.count, j.cmd.flags)
            })
            .unwrap_or(false)
    }

    pub fn is_waiting(&self, ticket: u64) -> bool {
        matches!(
            self.active.get(&ticket).map(|j| j.phase),
            Some(JobPhase::AwaitIngress) | Some(JobPhase::Fetching { .. })
        )
    }

    /// True once every GET response for a fetching job has landed.
    pub fn fetch_done(&self, ticket: u64) -> bool {
        matches!(
            self.active.get(&ticket).map(|j| j.phase),
            Some(JobPhase::Fetching { remaining: 0 })
        )
    }

    /// True if the job's batch has been poisoned locally or remotely.
    pub fn batch_poisoned_for(&self, ticket: u64) -> bool {
        self.active
            .get(&ticket)
            .map(|j| {
                self.tracker.poisoned(j.cmd.batch_id).is_some()
                    || self.engine.poisoned(j.cmd.batch_id).is_some()
            })
            .unwrap_or(false)
    }

    pub fn find_completion(&self, ticket: u64) -> Option<CompletionEvent> {
        self.completions.iter().find(|c| c.ticket == ticket).copied()
    }

    pub fn remote_completions_for(&self, batch_id: u64) -> Vec<CompletionEvent> {
        self.remote_completions
            .iter()
            .filter(|c| c.batch_id == batch_id)
            .copied()
            .collect()
    }

    // ----- message handling ------------------------------------------------

    /// Applies one received fabric message.
    pub fn handle_message(&mut self, msg: WireMessage, _now_us: f64) -> Result<HandleResult> {
        let mut res = HandleResult::default();
        match msg.msg_type {
            MessageType::Put => {
                // GET responses bypass registration: we asked for them.
                if msg.batch_id & GET_ID_FLAG != 0 {
                    if let Some(pending) = self.pending_gets.remove(&msg.batch_id) {
                        self.mem.write(pending.local_dst, &msg.payload)?;
                        match pending.ticket {
                            Some(ticket) => {
                                if let Some(job) = self.active.get_mut(&ticket) {
                                    if let JobPhase::Fetching { remaining } = &mut job.phase {
                                        *remaining -= 1;
                                        if *remaining == 0 {
                                            res.ready_tickets.push(ticket);
                                        }
                                    }
                                }
                            }
                            None => res.got_responses.push(msg.batch_id),
                        }
                        return Ok(res);
                    }
                }
                if self
                    .mem
                    .check_registered(msg.offset, msg.payload.len() as u64)
                    .is_err()
                {
                    res.outbound.push(WireMessage {
                        msg_type: MessageType::Abort,
                        src_party: self.party,
                        dst_party: msg.src_party,
                        batch_id: msg.batch_id,
                        offset: msg.offset,
                        payload: encode_abort_payload(AbortReason::UnregisteredRange, 0, 0, 0),
                        get_len: 0,
                    });
                    return Ok(res);
                }
                self.mem.write(msg.offset, &msg.payload)?;
                let ingress = self.regions.ingress_base();
                if msg.offset >= ingress {
                    self.tracker
                        .on_data(msg.batch_id, msg.src_party, msg.payload.len() as u64);
                    self.collect_ready(msg.batch_id, &mut res);
                }
            }
            MessageType::Tags => {
                if self
                    .mem
                    .check_registered(msg.offset, msg.payload.len() as u64)
                    .is_err()
                {
                    res.outbound.push(WireMessage {
                        msg_type: MessageType::Abort,
                        src_party: self.party,
                        dst_party: msg.src_party,
                        batch_id: msg.batch_id,
                        offset: msg.offset,
                        payload: encode_abort_payload(AbortReason::UnregisteredRange, 0, 0, 0),
                        get_len: 0,
                    });
                    return Ok(res);
                }
                self.mem.write(msg.offset, &msg.payload)?;
                self.tracker
                    .on_tags(msg.batch_id, msg.src_party, msg.payload.len() as u64);
                self.collect_ready(msg.batch_id, &mut res);
            }
            MessageType::Trigger => {
                let cmd = LookasideCommand::decode(&msg.payload)?;
                match self.submit(cmd, Some(msg.src_party)) {
                    Ok(_) => res.enqueued = true,
                    Err(_) => {
                        // Remote validation failure flows back as an error
                        // completion.
                        let event = CompletionEvent {
                            ticket: u64::MAX,
                            batch_id: cmd.batch_id,
                            opcode: cmd.opcode,
                            status: JobStatus::Error,
                            simulated_time_us: 0.0,
                            finished_at_us: 0.0,
                            instance: 0,
                            abort: Some(AbortInfo {
                                batch_id: cmd.batch_id,
                                element: 0,
                                a: 0,
                                b: 0,
                                reason: AbortReason::Validation,
                            }),
                            delta: CounterDelta::default(),
                        };
                        res.outbound.push(WireMessage {
                            msg_type: MessageType::Completion,
                            src_party: self.party,
                            dst_party: msg.src_party,
                            batch_id: cmd.batch_id,
                            offset: 0,
                            payload: encode_completion_payload(&event),
                            get_len: 0,
                        });
                    }
                }
            }
            MessageType::Get => {
                match self.mem.check_registered(msg.offset, msg.get_len as u64) {
                    Ok(()) => {
                        let payload = self.mem.read(msg.offset, msg.get_len as u64)?.to_vec();
                        res.outbound.push(WireMessage::put(
                            self.party,
                            msg.src_party,
                            msg.batch_id,
                            msg.offset,
                            payload,
                        ));
                    }
                    Err(_) => {
                        res.outbound.push(WireMessage {
                            msg_type: MessageType::Abort,
                            src_party: self.party,
                            dst_party: msg.src_party,
                            batch_id: msg.batch_id,
                            offset: msg.offset,
                            payload: encode_abort_payload(AbortReason::UnregisteredRange, 0, 0, 0),
                            get_len: 0,
                        });
                    }
                }
            }
            MessageType::Completion => {
                let event = decode_completion_payload(msg.batch_id, &msg.payload)?;
                self.remote_completions.push(event);
            }
            MessageType::Abort => {
                let (reason, a, b, element) = decode_abort_payload(&msg.payload)?;
                let info = AbortInfo {
                    batch_id: msg.batch_id,
                    element,
                    a,
                    b,
                    reason,
                };
                self.remote_aborts.push(info);
                self.tracker.poison(info);
                self.engine.poison(info);
                for (t, job) in self.active.iter() {
                    if job.cmd.batch_id == msg.batch_id
                        && matches!(job.phase, JobPhase::AwaitIngress | JobPhase::Fetching { .. })
                    {
                        res.poisoned_tickets.push(*t);
                    }
                }
            }
        }
        Ok(res)
    }

    fn collect_ready(&self, batch_id: u64, res: &mut HandleResult) {
        for (t, job) in self.active.iter() {
            if job.cmd.batch_id == batch_id
                && job.phase == JobPhase::AwaitIngress
                && self
                    .tracker
                    .ready(batch_id, self.party, job.cmd.count, job.cmd.flags)
            {
                res.ready_tickets.push(*t);
            }
        }
    }

    // ----- host-level fabric helpers ---------------------------------------

    /// Builds a host PUT toward a peer's registered memory.
    pub fn make_put(&self, dst: PartyId, offset: u64, bytes: Vec<u8>) -> WireMessage {
        WireMessage::put(self.party, dst, 0, offset, bytes)
    }

    /// Builds a TRIGGER carrying `cmd` to a remote engine.
    pub fn make_trigger(&self, dst: PartyId, cmd: &LookasideCommand) -> WireMessage {
        WireMessage {
            msg_type: MessageType::Trigger,
            src_party: self.party,
            dst_party: dst,
            batch_id: cmd.batch_id,
            offset: 0,
            payload: cmd.encode().to_vec(),
            get_len: 0,
        }
    }

    /// Starts a host-level GET of remote bytes into `local_dst`; the
    /// response is matched by the returned request id.
    pub fn begin_get(
        &mut self,
        src: PartyId,
        remote_offset: u64,
        len: u32,
        local_dst: u64,
    ) -> (u64, WireMessage) {
        let id = GET_ID_FLAG | self.next_get_id;
        self.next_get_id += 1;
        self.pending_gets.insert(
            id,
            PendingGet {
                local_dst,
                ticket: None,
            },
        );
        (id, WireMessage::get(self.party, src, id, remote_offset, len))
    }

    pub fn get_pending(&self, id: u64) -> bool {
        self.pending_gets.contains_key(&id)
    }

    /// Reads a share record vector element as this party's view.
    pub fn read_view(&self, offset: u64, index: u32) -> Result<ShareView> {
        let bytes = self
            .mem
            .read(offset + index as u64 * SHARE_RECORD_LEN, SHARE_RECORD_LEN)?;
        ShareView::from_bytes(self.party, bytes)
    }
}

/// 32-byte COMPLETION payload: ticket u64, opcode u8, status u8, reason
/// u8, term u8 (a<<2|b), elements u32, failing element u64, modeled job
/// time f64. All little-endian.
pub fn encode_completion_payload(ev: &CompletionEvent) -> Vec<u8> {
    let mut out = Vec::with_capacity(32);
    out.extend_from_slice(&ev.ticket.to_le_bytes());
    out.push(ev.opcode as u8);
    out.push(match ev.status {
        JobStatus::Ok => 0,
        JobStatus::Abort => 1,
        JobStatus::Error => 2,
    });
    let (reason, term, element) = match &ev.abort {
        Some(info) => (info.reason as u8, (info.a << 2) | info.b, info.element),
        None => (0, 0, 0),
    };
    out.push(reason);
    out.push(term);
    out.extend_from_slice(&(ev.delta.elements as u32).to_le_bytes());
    out.extend_from_slice(&element.to_le_bytes());
    out.extend_from_slice(&ev.simulated_time_us.to_le_bytes());
    out
}

pub fn decode_completion_payload(batch_id: u64, payload: &[u8]) -> Result<CompletionEvent> {
    if payload.len() != 32 {
        return Err(Error::Frame("completion payload must be 32 bytes".into()));
    }
    let ticket = u64::from_le_bytes(payload[0..8].try_into().unwrap());
    let opcode = Opcode::from_u8(payload[8])?;
    let status = match payload[9] {
        0 => JobStatus::Ok,
        1 => JobStatus::Abort,
        2 => JobStatus::Error,
        other => return Err(Error::Frame(format!("unknown status {other}"))),
    };
    let elements = u32::from_le_bytes(payload[12..16].try_into().unwrap());
    let element = u64::from_le_bytes(payload[16..24].try_into().unwrap());
    let simulated_time_us = f64::from_le_bytes(payload[24..32].try_into().unwrap());
    let abort = if status == JobStatus::Ok {
        None
    } else {
        Some(AbortInfo {
            batch_id,
            element,
            a: (payload[11] >> 2) & 0x3,
            b: payload[11] & 0x3,
            reason: AbortReason::from_u8(payload[10]).unwrap_or(AbortReason::Validation),
        })
    };
    Ok(CompletionEvent {
        ticket,
        batch_id,
        opcode,
        status,
        simulated_time_us,
        finished_at_us: 0.0,
        instance: 0,
        abort,
        delta: CounterDelta {
            elements: elements as u64,
            ..Default::default()
        },
    })
}
