//! Behavioral model of the lookaside accelerator path: command queue,
//! control unit, accelerator instances, staging memory, and the cost model.
//!
//! Hosts (or remote triggers) enqueue 48-byte commands; a global control
//! unit assigns the head of the queue to the first idle instance, never
//! letting two commands with overlapping memory ranges run concurrently.
//! Every accepted command produces exactly one completion event with a
//! strictly monotone per-party ticket.

use std::collections::{BTreeMap, VecDeque};
use std::ops::Range;

use serde::Serialize;

mod command;
mod cost;
mod exec;
mod layout;
mod memory;

pub use command::{LookasideCommand, Opcode, COMMAND_LEN};
pub use cost::{per_link_rate, AccelCostModel};
pub use exec::{run_add_batch, run_stage1_batch, run_stage2_batch, Stage1Run, Stage2Run};
pub use layout::{read_record, write_record, RegionMap, INGRESS_SLOTS, SHARE_RECORD_LEN};
pub use memory::HostMemoryRegion;

use crate::fabric::wire::AbortReason;
use crate::ring::PartyId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum JobStatus {
    Ok,
    Abort,
    Error,
}

/// Details of a verification failure or batch poisoning.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AbortInfo {
    pub batch_id: u64,
    pub element: u64,
    pub a: u8,
    pub b: u8,
    pub reason: AbortReason,
}

/// Fabric traffic attributable to one job.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CounterDelta {
    pub payload_bytes_out: u64,
    pub messages_out: u64,
    pub elements: u64,
}

/// One event per accepted command.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompletionEvent {
    pub ticket: u64,
    pub batch_id: u64,
    pub opcode: Opcode,
    pub status: JobStatus,
    /// Modeled accelerator occupancy of the job (the cost-model time), µs.
    pub simulated_time_us: f64,
    /// Timestamp of completion: virtual µs in simulation, wall µs over
    /// sockets.
    pub finished_at_us: f64,
    pub instance: usize,
    pub abort: Option<AbortInfo>,
    pub delta: CounterDelta,
}

/// Scheduler trace entry, one per dispatched job.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JobTrace {
    pub ticket: u64,
    pub instance: usize,
    pub started_us: f64,
    pub finished_us: f64,
}

#[derive(Clone, Debug)]
pub struct QueuedCommand {
    pub ticket: u64,
    pub cmd: LookasideCommand,
    /// Party that triggered the command remotely, if any.
    pub origin: Option<PartyId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum InstanceState {
    Idle,
    Busy { ticket: u64 },
}

/// Queue, instances and conflict bookkeeping. Execution itself is driven
/// from outside so the same state machine serves the virtual-clock
/// simulation and the threaded socket node.
pub struct EngineState {
    queue: VecDeque<QueuedCommand>,
    instances: Vec<InstanceState>,
    inflight_ranges: BTreeMap<u64, Vec<Range<u64>>>,
    next_ticket: u64,
    poisoned: BTreeMap<u64, AbortInfo>,
    pub trace: Vec<JobTrace>,
}

impl EngineState {
    pub fn new(num_instances: usize) -> Self {
        EngineState {
            queue: VecDeque::new(),
            instances: vec![InstanceState::Idle; num_instances.max(1)],
            inflight_ranges: BTreeMap::new(),
            next_ticket: 0,
            poisoned: BTreeMap::new(),
            trace: Vec::new(),
        }
    }

    pub fn num_instances(&self) -> usize {
        self.instances.len()
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn busy_instances(&self) -> usize {
        self.instances
            .iter()
            .filter(|i| matches!(i, InstanceState::Busy { .. }))
            .count()
    }

    /// Accepts a validated command, returning its ticket.
    pub fn enqueue(&mut self, cmd: LookasideCommand, origin: Option<PartyId>) -> u64 {
        let ticket = self.next_ticket;
        self.next_ticket += 1;
        self.queue.push_back(QueuedCommand {
            ticket,
            cmd,
            origin,
        });
        ticket
    }

    /// Control-unit step: if the head of the queue can run (an instance is
    /// idle and no in-flight command touches an overlapping range), binds
    /// it to the first idle instance. FIFO order is never violated.
    pub fn try_dispatch(&mut self, regions: &RegionMap) -> Option<(QueuedCommand, usize)> {
        let head = self.queue.front()?;
        let ranges = regions.command_ranges(&head.cmd);
        let conflict = self
            .inflight_ranges
            .values()
            .flatten()
            .any(|r| ranges.iter().any(|c| c.start < r.end && r.start < c.end));
        if conflict {
            return None;
        }
        let instance = self
            .instances
            .iter()
            .position(|i| *i == InstanceState::Idle)?;
        let job = self.queue.pop_front().unwrap();
        self.instances[instance] = InstanceState::Busy { ticket: job.ticket };
        self.inflight_ranges.insert(job.ticket, ranges);
        Some((job, instance))
    }

    /// Releases the instance and conflict ranges of a finished job.
    pub fn release(&mut self, ticket: u64) {
        self.inflight_ranges.remove(&ticket);
        for i in self.instances.iter_mut() {
            if *i == (InstanceState::Busy { ticket }) {
                *i = InstanceState::Idle;
            }
        }
    }

    pub fn poison(&mut self, info: AbortInfo) {
        self.poisoned.entry(info.batch_id).or_insert(info);
    }

    pub fn poisoned(&self, batch_id: u64) -> Option<&AbortInfo> {
        self.poisoned.get(&batch_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::ModeFlags;

    fn cmd(src_a: u64, src_b: u64, dst: u64, count: u32) -> LookasideCommand {
        LookasideCommand {
            opcode: Opcode::Add,
            flags: ModeFlags::default(),
            src_party: 0,
            dst_party: 0,
            count,
            batch_id: 1,
            src_a,
            src_b,
            dst,
            ctr_base: 0,
        }
    }

    #[test]
    fn tickets_are_monotone() {
        let mut eng = EngineState::new(1);
        let t0 = eng.enqueue(cmd(0, 48, 96, 1), None);
        let t1 = eng.enqueue(cmd(0, 48, 144, 1), None);
        assert_eq!(t1, t0 + 1);
    }

    #[test]
    fn single_instance_runs_serially_in_order() {
        let regions = RegionMap::new(1 << 20).unwrap();
        let mut eng = EngineState::new(1);
        for i in 0..3 {
            eng.enqueue(cmd(1000 * i, 1000 * i + 200, 1000 * i + 400, 1), None);
        }
        let (j0, i0) = eng.try_dispatch(&regions).unwrap();
        assert_eq!((j0.ticket, i0), (0, 0));
        assert!(eng.try_dispatch(&regions).is_none());
        eng.release(0);
        let (j1, _) = eng.try_dispatch(&regions).unwrap();
        assert_eq!(j1.ticket, 1);
        eng.release(1);
        let (j2, _) = eng.try_dispatch(&regions).unwrap();
        assert_eq!(j2.ticket, 2);
    }

    #[test]
    fn disjoint_commands_fill_all_instances() {
        let regions = RegionMap::new(1 << 20).unwrap();
        let mut eng = EngineState::new(4);
        for i in 0..4u64 {
            eng.enqueue(cmd(4096 * i, 4096 * i + 1024, 4096 * i + 2048, 4), None);
        }
        let mut instances = Vec::new();
        while let Some((_, inst)) = eng.try_dispatch(&regions) {
            instances.push(inst);
        }
        // First idle instance each time, so 0,1,2,3 in order.
        assert_eq!(instances, vec![0, 1, 2, 3]);
        assert_eq!(eng.busy_instances(), 4);
    }

    #[test]
    fn overlapping_ranges_serialize() {
        let regions = RegionMap::new(1 << 20).unwrap();
        let mut eng = EngineState::new(4);
        eng.enqueue(cmd(0, 100, 4096, 2), None);
        eng.enqueue(cmd(200, 300, 4096 + 48, 2), None); // dst overlaps job 0's dst
        let (j0, _) = eng.try_dispatch(&regions).unwrap();
        assert!(eng.try_dispatch(&regions).is_none());
        eng.release(j0.ticket);
        assert!(eng.try_dispatch(&regions).is_some());
    }
}
