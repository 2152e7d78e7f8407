//! Wavefront traversal strategies for one extruded diamond.
//!
//! All strategies walk the tile in z-blocks of `bs_z` cells. At tile step
//! `τ` the block starting at `z0` covers `[z0 − τR, z0 + bs_z − τR)`, so
//! each step trails the previous one by `R` planes. They differ in how the
//! threads of a group share a block and how they synchronize.

use std::fmt;
use std::hint;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Barrier, OnceLock};
use std::thread;

use serde::{Deserialize, Serialize};

use super::decompose::ThreadAssignment;
use super::TileJob;
use crate::error::{Error, Result};
use crate::registry::Registry;

/// Selects a [`WavefrontStrategy`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WavefrontVariant {
    /// Fixed pipeline positions; each thread waits only on the progress of
    /// the threads whose output it reads.
    #[serde(rename = "relaxed")]
    RelaxedPipelined,
    /// Fixed data ownership in z; group barrier after every step.
    #[serde(rename = "fed")]
    FixedExecutionToData,
    /// Fixed pipeline positions with a group barrier after every step.
    #[serde(rename = "barrier")]
    BarrierPipelined,
}

impl WavefrontVariant {
    pub const ALL: [WavefrontVariant; 3] = [
        WavefrontVariant::RelaxedPipelined,
        WavefrontVariant::FixedExecutionToData,
        WavefrontVariant::BarrierPipelined,
    ];

    pub fn name(self) -> &'static str {
        self.strategy().name()
    }

    pub fn strategy(self) -> &'static dyn WavefrontStrategy {
        match self {
            WavefrontVariant::RelaxedPipelined => &Relaxed,
            WavefrontVariant::FixedExecutionToData => &Fed,
            WavefrontVariant::BarrierPipelined => &Lockstep,
        }
    }
}

impl fmt::Display for WavefrontVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WavefrontVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        wavefronts().get(s).map(|w| w.variant())
    }
}

/// Built-in wavefront strategies keyed by name.
pub fn wavefronts() -> &'static Registry<dyn WavefrontStrategy> {
    static REGISTRY: OnceLock<Registry<dyn WavefrontStrategy>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        Registry::<dyn WavefrontStrategy>::new("wavefront variant")
            .register("relaxed", &Relaxed)
            .register("fed", &Fed)
            .register("barrier", &Lockstep)
    })
}

/// Synchronization state shared by the threads of one group.
#[derive(Debug)]
pub struct GroupSync {
    pub barrier: Barrier,
    /// Per-thread progress: `epoch << 32 | items completed in this tile`.
    pub progress: Vec<AtomicU64>,
}

impl GroupSync {
    pub fn new(size: usize) -> Self {
        Self {
            barrier: Barrier::new(size),
            progress: (0..size).map(|_| AtomicU64::new(0)).collect(),
        }
    }

    fn publish(&self, tid: usize, epoch: u64, done: u64) {
        self.progress[tid].store(epoch << 32 | done, Ordering::Release);
    }

    fn wait_for(&self, tid: usize, epoch: u64, done: u64) {
        let target = epoch << 32 | done;
        let mut spins = 0u32;
        while self.progress[tid].load(Ordering::Acquire) < target {
            spins += 1;
            if spins < 64 {
                hint::spin_loop();
            } else {
                thread::yield_now();
            }
        }
    }
}

/// How a thread group traverses one tile.
pub trait WavefrontStrategy: Send + Sync {
    fn name(&self) -> &'static str;

    fn variant(&self) -> WavefrontVariant;

    /// Runs `me`'s share of `job`. Called concurrently by every member of
    /// the group, each with its own assignment.
    fn execute(&self, job: &TileJob<'_>, me: &ThreadAssignment, sync: &GroupSync);
}

struct Relaxed;
struct Fed;
struct Lockstep;

/// `[lo, hi)` clipped to `[0, n)`.
fn clip(lo: i64, hi: i64, n: usize) -> (usize, usize) {
    let lo = lo.clamp(0, n as i64) as usize;
    let hi = hi.clamp(0, n as i64) as usize;
    (lo, hi.max(lo))
}

/// Z-window of pipeline position `pos` at tile step `tau`.
fn position_window(job: &TileJob<'_>, pos: usize, tau: usize) -> (usize, usize) {
    let c = job.chunk as i64;
    let shift = (tau * job.radius) as i64;
    clip(pos as i64 * c - shift, (pos as i64 + 1) * c - shift, job.layout.nz)
}

/// Pieces of the block window at step `tau` owned by z-thread `tz`, where
/// ownership is fixed by `z mod bs_z`.
pub(crate) fn owned_pieces(
    block: usize,
    tau: usize,
    bs_z: usize,
    chunk: usize,
    radius: usize,
    tz: usize,
    nz: usize,
) -> [(usize, usize); 2] {
    let bs = bs_z as i64;
    let lo = block as i64 * bs - (tau * radius) as i64;
    let hi = lo + bs;
    let own = |m: i64| {
        let a = m * bs + (tz * chunk) as i64;
        clip(a.max(lo), (a + chunk as i64).min(hi), nz)
    };
    let m0 = lo.div_euclid(bs);
    [own(m0), own(m0 + 1)]
}

impl WavefrontStrategy for Relaxed {
    fn name(&self) -> &'static str {
        "relaxed"
    }

    fn variant(&self) -> WavefrontVariant {
        WavefrontVariant::RelaxedPipelined
    }

    fn execute(&self, job: &TileJob<'_>, me: &ThreadAssignment, sync: &GroupSync) {
        let tz_count = job.shape.tz;
        let plane = job.shape.tx * job.shape.ty;
        let nt = job.tile.steps();
        // how many trailing positions a step reads from: their windows
        // must reach 2R below our own
        let reach = (2 * job.radius).div_ceil(job.chunk);
        let column = |tz: usize| tz * plane..(tz + 1) * plane;

        let mut done = 0u64;
        for block in 0..job.blocks {
            let pos = block * tz_count + me.tid_z;
            for tau in 0..nt {
                if tau > 0 {
                    for back in 1..=reach.min(pos) {
                        let p = pos - back;
                        let need = ((p / tz_count) * nt + tau) as u64;
                        for peer in column(p % tz_count) {
                            sync.wait_for(peer, job.epoch, need);
                        }
                    }
                    let need = (block * nt + tau) as u64;
                    for peer in column(me.tid_z) {
                        if peer != me.tid {
                            sync.wait_for(peer, job.epoch, need);
                        }
                    }
                }
                let z = position_window(job, pos, tau);
                job.update(tau, me, z);
                done += 1;
                sync.publish(me.tid, job.epoch, done);
            }
        }
    }
}

impl WavefrontStrategy for Lockstep {
    fn name(&self) -> &'static str {
        "barrier"
    }

    fn variant(&self) -> WavefrontVariant {
        WavefrontVariant::BarrierPipelined
    }

    fn execute(&self, job: &TileJob<'_>, me: &ThreadAssignment, sync: &GroupSync) {
        for block in 0..job.blocks {
            let pos = block * job.shape.tz + me.tid_z;
            for tau in 0..job.tile.steps() {
                job.update(tau, me, position_window(job, pos, tau));
                sync.barrier.wait();
            }
        }
    }
}

impl WavefrontStrategy for Fed {
    fn name(&self) -> &'static str {
        "fed"
    }

    fn variant(&self) -> WavefrontVariant {
        WavefrontVariant::FixedExecutionToData
    }

    fn execute(&self, job: &TileJob<'_>, me: &ThreadAssignment, sync: &GroupSync) {
        for block in 0..job.blocks {
            for tau in 0..job.tile.steps() {
                let pieces = owned_pieces(block, tau, job.bs_z, job.chunk, job.radius, me.tid_z, job.layout.nz);
                for z in pieces {
                    job.update(tau, me, z);
                }
                sync.barrier.wait();
            }
        }
    }
}
