//! Four simulated party nodes on one deterministic virtual clock.
//!
//! The cluster is the host harness for all four parties at once: it deals
//! inputs, builds and submits (or remotely triggers) command batches,
//! pumps the event loop, and exposes counters, completions and the event
//! log. Identical seeds and submissions produce bit-identical timelines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::engine::{CompletionEvent, LookasideCommand, Opcode, SHARE_RECORD_LEN};
use crate::error::{Error, Result};
use crate::fabric::sim::{EventRecord, SimEventKind, SimNet, TamperFn};
use crate::fabric::MetricsSnapshot;
use crate::node::config::{PartyConfig, Transport};
use crate::node::core::{Completion, InputBatch, NodeCore, ReadyAction, StartAction};
use crate::protocol::ModeFlags;
use crate::ring::{reconstruct, KeyMaterial, KeySet, PartyId, RingElement, NUM_PARTIES};

pub struct SimCluster {
    nodes: Vec<NodeCore>,
    net: SimNet,
    rng: ChaCha20Rng,
    next_batch_id: u64,
    next_ctr_base: u64,
}

impl SimCluster {
    /// Builds a cluster from four configs (one per party id, any order).
    /// Key files are loaded when configured; otherwise a fresh key set is
    /// derived from `seed`, which also seeds input dealing.
    pub fn new(configs: [PartyConfig; NUM_PARTIES], seed: u64) -> Result<Self> {
        let mut seen = [false; NUM_PARTIES];
        for cfg in &configs {
            cfg.validate()?;
            if cfg.transport != Transport::Simulated {
                return Err(Error::Config(
                    "simulated cluster requires transport = simulated".into(),
                ));
            }
            let id = cfg.party_id as usize;
            if seen[id] {
                return Err(Error::Config(format!("duplicate party_id {id}")));
            }
            seen[id] = true;
        }

        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let key_set = KeySet::generate(&mut rng);
        let mut by_id: Vec<Option<PartyConfig>> = vec![None; NUM_PARTIES];
        for cfg in configs {
            let id = cfg.party_id as usize;
            by_id[id] = Some(cfg);
        }
        // One uniform link model for the mesh, taken from party 0.
        let link_model = by_id[0].as_ref().unwrap().link_model();
        let mut nodes = Vec::with_capacity(NUM_PARTIES);
        for (id, slot) in by_id.into_iter().enumerate() {
            let cfg = slot.unwrap();
            let keys = match &cfg.key_file {
                Some(path) => KeyMaterial::load(path, id as PartyId)?,
                None => key_set.material_for(id as PartyId)?,
            };
            nodes.push(NodeCore::new(&cfg, keys)?);
        }
        Ok(SimCluster {
            nodes,
            net: SimNet::new(link_model),
            rng,
            next_batch_id: 0,
            next_ctr_base: 0,
        })
    }

    /// Four identical parties from one template config.
    pub fn homogeneous(template: &PartyConfig, seed: u64) -> Result<Self> {
        let mk = |p: PartyId| {
            let mut cfg = template.clone();
            cfg.party_id = p;
            cfg.transport = Transport::Simulated;
            cfg
        };
        SimCluster::new([mk(0), mk(1), mk(2), mk(3)], seed)
    }

    /// Default-configured cluster with a given memory size and instance
    /// count; the everyday entry point for tests and examples.
    pub fn with_defaults(memory_size: u64, num_accels: usize, seed: u64) -> Result<Self> {
        let mut cfg = PartyConfig::simulated(0);
        cfg.memory_size = memory_size;
        cfg.num_accels = num_accels;
        SimCluster::homogeneous(&cfg, seed)
    }

    pub fn node(&self, party: PartyId) -> &NodeCore {
        &self.nodes[party as usize]
    }

    pub fn node_mut(&mut self, party: PartyId) -> &mut NodeCore {
        &mut self.nodes[party as usize]
    }

    pub fn now_us(&self) -> f64 {
        self.net.now_us()
    }

    pub fn metrics(&self) -> MetricsSnapshot {
        self.net.snapshot()
    }

    pub fn event_log(&self) -> &[EventRecord] {
        &self.net.log
    }

    /// Installs a fault injector over delivered messages.
    pub fn set_tamper(&mut self, f: TamperFn) {
        self.net.set_tamper(f);
    }

    pub fn completions(&self, party: PartyId) -> &[CompletionEvent] {
        &self.nodes[party as usize].completions
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
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

    // ----- host operations --------------------------------------------------

    /// Deals `secrets` from `owner` and distributes the peer views; pumps
    /// the fabric until the input PUTs have landed everywhere.
    pub fn deal_batch(&mut self, owner: PartyId, secrets: &[RingElement]) -> Result<InputBatch> {
        let (batch, outbound) = self.nodes[owner as usize].deal_inputs(secrets, &mut self.rng)?;
        for msg in outbound {
            self.net.send(msg);
        }
        self.run_until_idle()?;
        Ok(batch)
    }

    /// Deals `count` uniform random secrets, returning the handle and the
    /// plaintexts for oracle checks.
    pub fn deal_random_batch(
        &mut self,
        owner: PartyId,
        count: u32,
    ) -> Result<(InputBatch, Vec<RingElement>)> {
        let secrets: Vec<RingElement> = (0..count).map(|_| self.rng.gen()).collect();
        let batch = self.deal_batch(owner, &secrets)?;
        Ok((batch, secrets))
    }

    /// Builds the four symmetric fused-multiply commands for one batch:
    /// allocates the batch id, counter space and an output vector, keeping
    /// every party's allocators aligned.
    pub fn multiply_commands(
        &mut self,
        x: InputBatch,
        y: InputBatch,
        flags: Option<ModeFlags>,
    ) -> Result<(u64, u64, [LookasideCommand; NUM_PARTIES])> {
        if x.count != y.count {
            return Err(Error::Config(format!(
                "input batches disagree on count: {} vs {}",
                x.count, y.count
            )));
        }
        let batch_id = self.alloc_batch_id();
        let ctr_base = self.alloc_ctr_base(x.count)?;
        let bytes = x.count as u64 * SHARE_RECORD_LEN;
        let mut dst = None;
        for node in self.nodes.iter_mut() {
            let at = node.alloc_output(bytes)?;
            if *dst.get_or_insert(at) != at {
                return Err(Error::Config("output allocators diverged".into()));
            }
        }
        let dst = dst.unwrap();
        let flags = flags.unwrap_or(self.nodes[0].flags());
        let cmds = [0, 1, 2, 3].map(|p| LookasideCommand {
            opcode: Opcode::MulFused,
            flags,
            src_party: p,
            dst_party: p,
            count: x.count,
            batch_id,
            src_a: x.offset,
            src_b: y.offset,
            dst,
            ctr_base,
        });
        Ok((batch_id, dst, cmds))
    }

    /// Same allocation discipline for local additions.
    pub fn add_commands(
        &mut self,
        x: InputBatch,
        y: InputBatch,
    ) -> Result<(u64, [LookasideCommand; NUM_PARTIES])> {
        if x.count != y.count {
            return Err(Error::Config("input batches disagree on count".into()));
        }
        let batch_id = self.alloc_batch_id();
        let bytes = x.count as u64 * SHARE_RECORD_LEN;
        let mut dst = None;
        for node in self.nodes.iter_mut() {
            let at = node.alloc_output(bytes)?;
            dst.get_or_insert(at);
        }
        let dst = dst.unwrap();
        let cmds = [0, 1, 2, 3].map(|p| LookasideCommand {
            opcode: Opcode::Add,
            flags: ModeFlags::default(),
            src_party: p,
            dst_party: p,
            count: x.count,
            batch_id,
            src_a: x.offset,
            src_b: y.offset,
            dst,
            ctr_base: 0,
        });
        Ok((dst, cmds))
    }

    /// Submits one command on every party's local engine.
    pub fn submit_all(&mut self, cmds: &[LookasideCommand; NUM_PARTIES]) -> Result<[u64; 4]> {
        let mut tickets = [0u64; 4];
        for p in 0..NUM_PARTIES {
            tickets[p] = self.nodes[p].submit(cmds[p], None)?;
        }
        self.pump_starts()?;
        Ok(tickets)
    }

    /// Submits locally at `initiator` and TRIGGERs the three peers, the
    /// headless-target flow.
    pub fn trigger_all(
        &mut self,
        initiator: PartyId,
        cmds: &[LookasideCommand; NUM_PARTIES],
    ) -> Result<u64> {
        let local = self.nodes[initiator as usize].submit(cmds[initiator as usize], None)?;
        for q in 0..NUM_PARTIES as u8 {
            if q != initiator {
                let msg = self.nodes[initiator as usize].make_trigger(q, &cmds[q as usize]);
                self.net.send(msg);
            }
        }
        self.pump_starts()?;
        Ok(local)
    }

    /// Sends one TRIGGER without a local submission.
    pub fn trigger(&mut self, initiator: PartyId, dst: PartyId, cmd: &LookasideCommand) -> Result<()> {
        let msg = self.nodes[initiator as usize].make_trigger(dst, cmd);
        self.net.send(msg);
        Ok(())
    }

    /// Host-level one-sided PUT from `src` into `dst`'s registered memory.
    pub fn host_put(&mut self, src: PartyId, dst: PartyId, offset: u64, bytes: Vec<u8>) {
        let msg = self.nodes[src as usize].make_put(dst, offset, bytes);
        self.net.send(msg);
    }

    /// Host-level GET: fetches remote bytes into `local_dst` of the
    /// requester and returns them. Pumps until the response arrives.
    pub fn host_get(
        &mut self,
        requester: PartyId,
        src: PartyId,
        remote_offset: u64,
        len: u32,
        local_dst: u64,
    ) -> Result<Vec<u8>> {
        let (id, msg) = self.nodes[requester as usize].begin_get(src, remote_offset, len, local_dst);
        self.net.send(msg);
        while self.nodes[requester as usize].get_pending(id) {
            if !self.step()? {
                return Err(Error::FabricTimeout(format!(
                    "get {id:#x} never answered"
                )));
            }
        }
        Ok(self.nodes[requester as usize]
            .mem
            .read(local_dst, len as u64)?
            .to_vec())
    }

    // ----- event loop ---------------------------------------------------------

    /// Runs dispatch on every node until no further job can start.
    fn pump_starts(&mut self) -> Result<()> {
        loop {
            let mut any = false;
            for p in 0..NUM_PARTIES {
                let now = self.net.now_us();
                while let Some(started) = self.nodes[p].try_start(now) {
                    any = true;
                    match started.action {
                        StartAction::Compute { occupancy_us } => {
                            self.net.schedule(
                                occupancy_us,
                                SimEventKind::ComputeDone {
                                    party: p as PartyId,
                                    ticket: started.ticket,
                                },
                            );
                        }
                        StartAction::Fetch { requests } => {
                            for m in requests {
                                self.net.send(m);
                            }
                        }
                        StartAction::AwaitIngress => {}
                        StartAction::Finished(completion) => {
                            self.apply_completion(p as PartyId, completion);
                        }
                    }
                }
            }
            if !any {
                return Ok(());
            }
        }
    }

    fn apply_completion(&mut self, party: PartyId, completion: Completion) {
        self.net.metrics.ops_completed[party as usize] += 1;
        for msg in completion.outbound {
            self.net.send(msg);
        }
    }

    /// Processes one event; false when the queue is empty.
    fn step(&mut self) -> Result<bool> {
        let Some(event) = self.net.pop() else {
            return Ok(false);
        };
        let now = self.net.now_us();
        match event {
            SimEventKind::Deliver(msg) => {
                let p = msg.dst_party as usize;
                let res = self.nodes[p].handle_message(msg, now)?;
                for m in res.outbound {
                    self.net.send(m);
                }
                for t in res.ready_tickets {
                    match self.nodes[p].on_ready(t, now)? {
                        ReadyAction::Compute { occupancy_us } => self.net.schedule(
                            occupancy_us,
                            SimEventKind::ComputeDone {
                                party: p as PartyId,
                                ticket: t,
                            },
                        ),
                        ReadyAction::Finished(completion) => {
                            self.apply_completion(p as PartyId, completion)
                        }
                        ReadyAction::Wait => {}
                    }
                }
                for t in res.poisoned_tickets {
                    let completion = self.nodes[p].fail_poisoned(t, now);
                    self.apply_completion(p as PartyId, completion);
                }
            }
            SimEventKind::ComputeDone { party, ticket } => {
                let outcome = self.nodes[party as usize].compute_done(ticket, now)?;
                for m in outcome.outbound {
                    self.net.send(m);
                }
                if let Some(completion) = outcome.completion {
                    self.apply_completion(party, completion);
                }
            }
        }
        self.pump_starts()?;
        Ok(true)
    }

    /// Pumps events to quiescence; errors if any node still has queued or
    /// waiting work once the fabric drains (a deadlocked batch).
    pub fn run_until_idle(&mut self) -> Result<()> {
        while self.step()? {}
        for node in &self.nodes {
            if !node.is_idle() {
                return Err(Error::FabricTimeout(node.waiting_summary()));
            }
        }
        Ok(())
    }

    // ----- verification helpers ------------------------------------------------

    /// Reconstructs `count` output elements from two parties' share
    /// records, enforcing overlap consistency.
    pub fn reconstruct_outputs(&self, dst: u64, count: u32) -> Result<Vec<RingElement>> {
        let mut out = Vec::with_capacity(count as usize);
        for i in 0..count {
            let v0 = self.nodes[0].read_view(dst, i)?;
            let v1 = self.nodes[1].read_view(dst, i)?;
            out.push(reconstruct(&v0, &v1)?);
        }
        Ok(out)
    }

    /// Raw output-region bytes of one party, for bit-exact comparisons.
    pub fn output_bytes(&self, party: PartyId, dst: u64, count: u32) -> Result<Vec<u8>> {
        Ok(self.nodes[party as usize]
            .mem
            .read(dst, count as u64 * SHARE_RECORD_LEN)?
            .to_vec())
    }
}
