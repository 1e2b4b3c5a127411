//! Socket-backed party daemon.
//!
//! One process per party. Reader threads (one per peer stream) apply
//! incoming messages to the shared core and wake waiters; worker threads
//! (one per accelerator instance) drive the job lifecycle, blocking on a
//! condvar for fetch responses and ingress readiness. All socket writes
//! happen outside the core lock so a slow peer can never wedge the mesh.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use rand::Rng;

use crate::engine::{CompletionEvent, LookasideCommand};
use crate::error::{Error, Result};
use crate::fabric::socket::{connect_mesh, read_message, SocketFabric};
use crate::fabric::MetricsSnapshot;
use crate::node::config::{PartyConfig, Transport};
use crate::node::core::{Completion, InputBatch, NodeCore, ReadyAction, StartAction};
use crate::ring::{KeyMaterial, PartyId, RingElement, ShareView};

struct Shared {
    core: Mutex<NodeCore>,
    wake: Condvar,
    fabric: SocketFabric,
    shutdown: AtomicBool,
    peers_alive: AtomicUsize,
    started: Instant,
}

impl Shared {
    fn now_us(&self) -> f64 {
        self.started.elapsed().as_secs_f64() * 1e6
    }
}

pub struct SocketNode {
    shared: Arc<Shared>,
    threads: Vec<JoinHandle<()>>,
}

impl SocketNode {
    /// Binds this party's endpoint, connects the full mesh (dialing
    /// higher-index peers, accepting lower), loads key material, and
    /// spawns the reader and worker threads.
    pub fn start(cfg: PartyConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.transport != Transport::Sockets {
            return Err(Error::Config("socket node requires transport = sockets".into()));
        }
        let key_path = cfg
            .key_file
            .clone()
            .ok_or_else(|| Error::Config("socket mode requires key_file".into()))?;
        let keys = KeyMaterial::load(&key_path, cfg.party_id)?;
        let core = NodeCore::new(&cfg, keys)?;
        let (fabric, readers) = connect_mesh(
            cfg.party_id,
            &cfg.peers,
            Duration::from_millis(cfg.timeout_ms),
        )?;

        let shared = Arc::new(Shared {
            core: Mutex::new(core),
            wake: Condvar::new(),
            fabric,
            shutdown: AtomicBool::new(false),
            peers_alive: AtomicUsize::new(readers.len()),
            started: Instant::now(),
        });

        let mut threads = Vec::new();
        for (peer, stream) in readers {
            let shared = Arc::clone(&shared);
            threads.push(std::thread::spawn(move || reader_loop(shared, peer, stream)));
        }
        for _ in 0..cfg.num_accels {
            let shared = Arc::clone(&shared);
            threads.push(std::thread::spawn(move || worker_loop(shared)));
        }
        Ok(SocketNode { shared, threads })
    }

    pub fn party(&self) -> PartyId {
        self.shared.fabric.party()
    }

    pub fn wall_us(&self) -> f64 {
        self.shared.now_us()
    }

    pub fn metrics(&self) -> MetricsSnapshot {
        self.shared.fabric.counters.snapshot(self.shared.now_us())
    }

    /// Runs `f` against the locked core; the host-facing escape hatch for
    /// allocation and inspection.
    pub fn with_core<T>(&self, f: impl FnOnce(&mut NodeCore) -> T) -> T {
        let mut core = self.shared.core.lock().unwrap();
        let out = f(&mut core);
        drop(core);
        self.shared.wake.notify_all();
        out
    }

    /// Deals secrets and pushes each peer's views over the fabric.
    pub fn deal_inputs<R: Rng>(&self, secrets: &[RingElement], rng: &mut R) -> Result<InputBatch> {
        let (batch, outbound) = {
            let mut core = self.shared.core.lock().unwrap();
            core.deal_inputs(secrets, rng)?
        };
        for msg in &outbound {
            self.shared.fabric.send(msg)?;
        }
        self.shared.fabric.flush_all()?;
        Ok(batch)
    }

    pub fn submit(&self, cmd: LookasideCommand) -> Result<u64> {
        let ticket = {
            let mut core = self.shared.core.lock().unwrap();
            core.submit(cmd, None)?
        };
        self.shared.wake.notify_all();
        Ok(ticket)
    }

    /// Enqueues a command on a remote engine.
    pub fn trigger(&self, dst: PartyId, cmd: &LookasideCommand) -> Result<()> {
        let msg = {
            let core = self.shared.core.lock().unwrap();
            core.make_trigger(dst, cmd)
        };
        self.shared.fabric.send_now(&msg)
    }

    /// One-sided write into a peer's registered memory.
    pub fn put(&self, dst: PartyId, offset: u64, bytes: Vec<u8>) -> Result<()> {
        let msg = {
            let core = self.shared.core.lock().unwrap();
            core.make_put(dst, offset, bytes)
        };
        self.shared.fabric.send_now(&msg)
    }

    /// Blocking one-sided read of a peer's registered memory; the bytes
    /// land at `local_dst` in this node's region and are returned.
    pub fn get(&self, src: PartyId, remote_offset: u64, len: u32, local_dst: u64) -> Result<Vec<u8>> {
        let (id, msg) = {
            let mut core = self.shared.core.lock().unwrap();
            core.begin_get(src, remote_offset, len, local_dst)
        };
        self.shared.fabric.send_now(&msg)?;
        let deadline = Instant::now() + self.timeout();
        let mut core = self.shared.core.lock().unwrap();
        while core.get_pending(id) {
            let (guard, res) = self
                .shared
                .wake
                .wait_timeout(core, Duration::from_millis(20))
                .unwrap();
            core = guard;
            if res.timed_out() && Instant::now() >= deadline {
                return Err(Error::FabricTimeout(format!("get of {len} bytes from party {src}")));
            }
        }
        Ok(core.mem.read(local_dst, len as u64)?.to_vec())
    }

    fn timeout(&self) -> Duration {
        let ms = self.shared.core.lock().unwrap().timeout_ms();
        Duration::from_millis(ms)
    }

    /// Waits for the completion of a locally submitted ticket.
    pub fn wait_completion(&self, ticket: u64) -> Result<CompletionEvent> {
        let deadline = Instant::now() + self.timeout();
        let mut core = self.shared.core.lock().unwrap();
        loop {
            if let Some(ev) = core.find_completion(ticket) {
                return Ok(ev);
            }
            let (guard, res) = self
                .shared
                .wake
                .wait_timeout(core, Duration::from_millis(20))
                .unwrap();
            core = guard;
            if res.timed_out() && Instant::now() >= deadline {
                return Err(Error::FabricTimeout(format!("completion of ticket {ticket}")));
            }
        }
    }

    /// Waits for `n` remote COMPLETION messages for a batch.
    pub fn wait_remote_completions(&self, batch_id: u64, n: usize) -> Result<Vec<CompletionEvent>> {
        let deadline = Instant::now() + self.timeout();
        let mut core = self.shared.core.lock().unwrap();
        loop {
            let got = core.remote_completions_for(batch_id);
            if got.len() >= n {
                return Ok(got);
            }
            let (guard, res) = self
                .shared
                .wake
                .wait_timeout(core, Duration::from_millis(20))
                .unwrap();
            core = guard;
            if res.timed_out() && Instant::now() >= deadline {
                return Err(Error::FabricTimeout(format!(
                    "remote completions for batch {batch_id}"
                )));
            }
        }
    }

    pub fn read_view(&self, offset: u64, index: u32) -> Result<ShareView> {
        let core = self.shared.core.lock().unwrap();
        core.read_view(offset, index)
    }

    /// Serves triggers and PUTs until every peer disconnects; the headless
    /// target loop.
    pub fn run_headless(&self) {
        while self.shared.peers_alive.load(Ordering::SeqCst) > 0
            && !self.shared.shutdown.load(Ordering::SeqCst)
        {
            std::thread::sleep(Duration::from_millis(50));
        }
    }

    pub fn shutdown(mut self) {
        self.shared.shutdown.store(true, Ordering::SeqCst);
        self.shared.fabric.shutdown();
        self.shared.wake.notify_all();
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for SocketNode {
    fn drop(&mut self) {
        self.shared.shutdown.store(true, Ordering::SeqCst);
        self.shared.fabric.shutdown();
        self.shared.wake.notify_all();
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

fn reader_loop(shared: Arc<Shared>, _peer: PartyId, mut stream: std::net::TcpStream) {
    loop {
        if shared.shutdown.load(Ordering::SeqCst) {
            break;
        }
        let msg = match read_message(&mut stream) {
            Ok(Some(msg)) => msg,
            Ok(None) => break,
            Err(_) => break,
        };
        let outbound = {
            let mut core = shared.core.lock().unwrap();
            match core.handle_message(msg, shared.now_us()) {
                Ok(res) => res.outbound,
                Err(e) => {
                    eprintln!("party {}: dropping message: {e}", core.party());
                    Vec::new()
                }
            }
        };
        shared.wake.notify_all();
        for m in &outbound {
            if shared.fabric.send_now(m).is_err() {
                break;
            }
        }
    }
    shared.peers_alive.fetch_sub(1, Ordering::SeqCst);
    shared.wake.notify_all();
}

enum WaitOutcome {
    Satisfied,
    Poisoned,
    TimedOut,
}

fn wait_for<'a>(
    shared: &'a Shared,
    mut core: MutexGuard<'a, NodeCore>,
    ticket: u64,
    pred: impl Fn(&NodeCore, u64) -> bool,
) -> (MutexGuard<'a, NodeCore>, WaitOutcome) {
    let deadline = Instant::now() + Duration::from_millis(core.timeout_ms());
    loop {
        if core.batch_poisoned_for(ticket) {
            return (core, WaitOutcome::Poisoned);
        }
        if pred(&core, ticket) {
            return (core, WaitOutcome::Satisfied);
        }
        if shared.shutdown.load(Ordering::SeqCst) || Instant::now() >= deadline {
            return (core, WaitOutcome::TimedOut);
        }
        let (guard, _) = shared
            .wake
            .wait_timeout(core, Duration::from_millis(20))
            .unwrap();
        core = guard;
    }
}

fn dispatch_completion(shared: &Shared, completion: Completion) {
    shared.fabric.counters.record_op(shared.fabric.party());
    for msg in &completion.outbound {
        let _ = shared.fabric.send(msg);
    }
    let _ = shared.fabric.flush_all();
    shared.wake.notify_all();
}

fn run_compute(shared: &Shared, ticket: u64) {
    let outcome = {
        let mut core = shared.core.lock().unwrap();
        match core.compute_done(ticket, shared.now_us()) {
            Ok(outcome) => outcome,
            Err(e) => {
                eprintln!("party {}: job {ticket} failed: {e}", core.party());
                return;
            }
        }
    };
    for msg in &outcome.outbound {
        if shared.fabric.send(msg).is_err() {
            return;
        }
    }
    let _ = shared.fabric.flush_all();
    if let Some(completion) = outcome.completion {
        dispatch_completion(shared, completion);
    } else if outcome.await_ingress {
        wait_ingress_then_finish(shared, ticket);
    }
}

fn wait_ingress_then_finish(shared: &Shared, ticket: u64) {
    let core = shared.core.lock().unwrap();
    let (mut core, outcome) = wait_for(shared, core, ticket, |c, t| c.ingress_ready_for(t));
    let completion = match outcome {
        WaitOutcome::Poisoned => core.fail_poisoned(ticket, shared.now_us()),
        WaitOutcome::TimedOut => core.fail_timeout(ticket, shared.now_us()),
        WaitOutcome::Satisfied => match core.on_ready(ticket, shared.now_us()) {
            Ok(ReadyAction::Finished(c)) => c,
            Ok(_) => {
                drop(core);
                run_compute(shared, ticket);
                return;
            }
            Err(e) => {
                eprintln!("party {}: job {ticket}: {e}", core.party());
                return;
            }
        },
    };
    drop(core);
    dispatch_completion(shared, completion);
}

fn worker_loop(shared: Arc<Shared>) {
    loop {
        if shared.shutdown.load(Ordering::SeqCst) {
            break;
        }
        let started = {
            let mut core = shared.core.lock().unwrap();
            core.try_start(shared.now_us())
        };
        let Some(started) = started else {
            let core = shared.core.lock().unwrap();
            let _ = shared
                .wake
                .wait_timeout(core, Duration::from_millis(20))
                .unwrap();
            continue;
        };
        let ticket = started.ticket;
        match started.action {
            StartAction::Finished(completion) => dispatch_completion(&shared, completion),
            StartAction::Compute { .. } => run_compute(&shared, ticket),
            StartAction::AwaitIngress => {
                // Split stage-2: ingress first, then the compute pass.
                let core = shared.core.lock().unwrap();
                let (mut core, outcome) =
                    wait_for(&shared, core, ticket, |c, t| c.ingress_ready_for(t));
                match outcome {
                    WaitOutcome::Poisoned => {
                        let c = core.fail_poisoned(ticket, shared.now_us());
                        drop(core);
                        dispatch_completion(&shared, c);
                    }
                    WaitOutcome::TimedOut => {
                        let c = core.fail_timeout(ticket, shared.now_us());
                        drop(core);
                        dispatch_completion(&shared, c);
                    }
                    WaitOutcome::Satisfied => {
                        match core.on_ready(ticket, shared.now_us()) {
                            Ok(ReadyAction::Compute { .. }) => {
                                drop(core);
                                run_compute(&shared, ticket);
                            }
                            Ok(ReadyAction::Finished(c)) => {
                                drop(core);
                                dispatch_completion(&shared, c);
                            }
                            Ok(ReadyAction::Wait) | Err(_) => {}
                        }
                    }
                }
            }
            StartAction::Fetch { requests } => {
                for msg in &requests {
                    if shared.fabric.send_now(msg).is_err() {
                        continue;
                    }
                }
                let core = shared.core.lock().unwrap();
                let (mut core, outcome) = wait_for(&shared, core, ticket, |c, t| c.fetch_done(t));
                match outcome {
                    WaitOutcome::Poisoned => {
                        let c = core.fail_poisoned(ticket, shared.now_us());
                        drop(core);
                        dispatch_completion(&shared, c);
                    }
                    WaitOutcome::TimedOut => {
                        let c = core.fail_timeout(ticket, shared.now_us());
                        drop(core);
                        dispatch_completion(&shared, c);
                    }
                    WaitOutcome::Satisfied => match core.on_ready(ticket, shared.now_us()) {
                        Ok(ReadyAction::Compute { .. }) => {
                            drop(core);
                            run_compute(&shared, ticket);
                        }
                        Ok(ReadyAction::Wait) => {
                            // Fetched stage-2 job still needs ingress.
                            let (mut core, outcome) =
                                wait_for(&shared, core, ticket, |c, t| c.ingress_ready_for(t));
                            match outcome {
                                WaitOutcome::Satisfied => {
                                    if let Ok(ReadyAction::Compute { .. }) =
                                        core.on_ready(ticket, shared.now_us())
                                    {
                                        drop(core);
                                        run_compute(&shared, ticket);
                                    }
                                }
                                WaitOutcome::Poisoned => {
                                    let c = core.fail_poisoned(ticket, shared.now_us());
                                    drop(core);
                                    dispatch_completion(&shared, c);
                                }
                                WaitOutcome::TimedOut => {
                                    let c = core.fail_timeout(ticket, shared.now_us());
                                    drop(core);
                                    dispatch_completion(&shared, c);
                                }
                            }
                        }
                        Ok(ReadyAction::Finished(c)) => {
                            drop(core);
                            dispatch_completion(&shared, c);
                        }
                        Err(_) => {}
                    },
                }
            }
        }
    }
}
