//! Four-party secret-sharing MPC with a lookaside-accelerator execution
//! model and a one-sided PUT fabric.
//!
//! Secrets live in the ring of integers mod 2^128, split into four additive
//! slots with each party holding three of them. Addition is local;
//! multiplication costs one round in which every party sends and receives
//! exactly three 128-bit values, optionally accompanied by truncated-hash
//! verification that aborts the batch on any tampering.
//!
//! Execution is modeled after a SmartNIC lookaside unit: hosts enqueue
//! 48-byte commands against data at rest in a flat memory region, a control
//! unit dispatches them to accelerator instances, and the instances talk to
//! their peers directly over the fabric. Two interchangeable transports are
//! provided: a deterministic in-process simulation with per-link bandwidth
//! and latency, and real stream sockets between four processes.
//!
//! Start with the runnable examples:
//!
//! ```bash
//! cargo run --example ring_sharing
//! cargo run --example multiply_protocol
//! cargo run --example accelerator_batch
//! cargo run --example headless_trigger
//! cargo run --example socket_cluster
//! cargo run --example saturation_report
//! cargo run --example bench_sweep
//! ```

pub mod engine;
pub mod fabric;
pub mod node;
pub mod protocol;
pub mod ring;

mod error;

pub use engine::{per_link_rate, AccelCostModel, CompletionEvent, JobStatus, LookasideCommand, Opcode};
pub use error::{Error, Result};
pub use fabric::{min_accels, LinkModel, MessageType, MetricsSnapshot, WireMessage};
pub use node::{InputBatch, PartyConfig, SimCluster, SocketNode, Transport};
pub use protocol::{add_local, mul_stage1, mul_stage2, multiply_once, term_roles, ModeFlags, TermRole};
pub use ring::{deal, prf, reconstruct, DealtSecret, KeyMaterial, KeySet, PartyId, PrfCounter, RingElement, ShareView, Slot, NUM_PARTIES};
