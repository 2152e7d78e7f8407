//! Multi-threaded execution of extruded diamond tiles.
//!
//! A run tessellates the y-t plane, then `groups` thread groups pull ready
//! tiles from the [`Scheduler`]. Every tile spans the full x and z extent;
//! inside a group the tile is split along x, y and z by
//! [`decompose`] and traversed by a [`WavefrontStrategy`].

mod decompose;
mod tracker;
mod wavefront;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Instant;

pub use decompose::{decompose, ThreadAssignment, ThreadGroupShape, TileBounds, YPart};
pub use tracker::UpdateTracker;
pub use wavefront::{wavefronts, GroupSync, WavefrontStrategy, WavefrontVariant};

use crate::error::{Error, Result};
use crate::geometry::{build_tessellation, DiamondShape, DiamondTessellation, DiamondTile, WavefrontSpec};
use crate::grid::{GridSpec, Layout, ProblemState, RawFields};
use crate::scheduler::{QueuePolicy, Scheduler, TileGraph, TraceEvent, TraceLog};
use crate::stencil::Stencil;

/// Parameters of one engine run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Diamond width `D_w`.
    pub d_w: usize,
    /// Wavefront tile width `N_F`: z-cells per thread and pipeline position.
    pub n_f: usize,
    pub shape: ThreadGroupShape,
    pub variant: WavefrontVariant,
    pub groups: usize,
    /// Z-block size; `N_F · T_z` when unset.
    pub bs_z: Option<usize>,
    pub policy: QueuePolicy,
    /// Check the dependency contract cell by cell (slow).
    pub track_updates: bool,
    pub trace: bool,
    /// Upper bound on `groups · shape.size()`, when known.
    pub thread_budget: Option<usize>,
}

impl RunConfig {
    pub fn new(d_w: usize, n_f: usize, shape: ThreadGroupShape, variant: WavefrontVariant, groups: usize) -> Self {
        Self {
            d_w,
            n_f,
            shape,
            variant,
            groups,
            bs_z: None,
            policy: QueuePolicy::Fifo,
            track_updates: cfg!(debug_assertions),
            trace: false,
            thread_budget: None,
        }
    }

    pub fn block_z(&self) -> usize {
        self.bs_z.unwrap_or(self.n_f * self.shape.tz)
    }

    pub fn threads(&self) -> usize {
        self.groups * self.shape.size()
    }
}

/// Outcome of [`run`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PerfReport {
    pub wall_seconds: f64,
    pub lups: u64,
    /// 1e9 lattice updates per second.
    pub glups: f64,
    pub tiles: usize,
    pub trace: Option<Vec<TraceEvent>>,
}

/// Everything a group member needs to execute its share of one tile.
pub struct TileJob<'a> {
    pub tile: DiamondTile,
    kernel: &'static dyn Stencil,
    raw: RawFields,
    layout: Layout,
    /// Absolute step at which the tessellation's time axis starts.
    t_origin: u64,
    radius: usize,
    shape: ThreadGroupShape,
    bs_z: usize,
    /// `bs_z / T_z`.
    chunk: usize,
    /// Z-blocks needed to sweep the tile's trailing window past `N_z`.
    blocks: usize,
    epoch: u64,
    tracker: Option<&'a UpdateTracker>,
}

impl TileJob<'_> {
    /// Updates `me`'s x- and y-share of z-planes `z` at tile step `tau`.
    fn update(&self, tau: usize, me: &ThreadAssignment, z: (usize, usize)) {
        let t = self.tile.t_begin + tau;
        let (yb, ye) = self.tile.y_bounds(t).expect("step inside tile");
        let (yb, ye) = me.y_part.range(yb, ye, self.tile.y_split());
        let (ib, ie) = me.x;
        if yb == ye || z.0 == z.1 || ib == ie {
            return;
        }
        let r = self.radius;
        let view = self.raw.step(self.t_origin + t as u64);
        for k in z.0 + r..z.1 + r {
            for j in yb + r..ye + r {
                if let Some(tr) = self.tracker {
                    tr.record_row(t as u32, ib, ie, j, k);
                }
                // SAFETY: the row is interior; the tessellation orders every
                // conflicting access to it (see module docs of `geometry`),
                // and the strategy orders accesses within the tile.
                unsafe { self.kernel.sweep_row(&view, self.layout.index(ib, j, k), ie - ib) };
            }
        }
    }
}

/// Static part of a run shared by all groups.
struct Plan<'a> {
    tess: &'a DiamondTessellation,
    kernel: &'static dyn Stencil,
    raw: RawFields,
    layout: Layout,
    t_origin: u64,
    config: &'a RunConfig,
    assignments: Vec<ThreadAssignment>,
    bs_z: usize,
    tracker: Option<&'a UpdateTracker>,
}

impl Plan<'_> {
    fn job(&self, id: usize, epoch: u64) -> TileJob<'_> {
        let tile = self.tess.tiles[id];
        let r = self.tess.shape.radius;
        let span = self.layout.nz + tile.steps().saturating_sub(1) * r;
        TileJob {
            tile,
            kernel: self.kernel,
            raw: self.raw,
            layout: self.layout,
            t_origin: self.t_origin,
            radius: r,
            shape: self.config.shape,
            bs_z: self.bs_z,
            chunk: self.bs_z / self.config.shape.tz,
            blocks: span.div_ceil(self.bs_z),
            epoch,
            tracker: self.tracker,
        }
    }
}

/// Checks every precondition of [`run`] that does not depend on the
/// number of steps.
pub fn check_config(grid: &GridSpec, radius: usize, config: &RunConfig) -> Result<()> {
    grid.validate(radius)?;
    WavefrontSpec::new(config.d_w, config.n_f, radius)?;
    DiamondShape::new(config.d_w, radius)?;
    if !grid.ny.is_multiple_of(config.d_w) {
        return Err(Error::config(format!(
            "N_y={} is not a multiple of D_w={}",
            grid.ny, config.d_w
        )));
    }
    if config.groups == 0 {
        return Err(Error::config("at least one thread group is required"));
    }
    if let Some(budget) = config.thread_budget {
        if config.threads() > budget {
            return Err(Error::config(format!(
                "{} groups of {} threads exceed the budget of {budget}",
                config.groups,
                config.shape.size()
            )));
        }
    }
    decompose(&TileBounds { x: (radius, radius + grid.nx), bs_z: config.block_z() }, &config.shape, radius)?;
    Ok(())
}

fn validate(state: &ProblemState, config: &RunConfig) -> Result<(Layout, usize)> {
    let layout = *state.layout();
    check_config(state.grid(), layout.radius, config)?;
    Ok((layout, config.block_z()))
}

/// Advances `state` by `steps` time steps with wavefront diamond blocking.
///
/// The result is bitwise identical to [`crate::stencil::naive_sweep`] for
/// every admissible configuration.
pub fn run(state: &mut ProblemState, steps: u64, config: &RunConfig) -> Result<PerfReport> {
    let (layout, bs_z) = validate(state, config)?;
    let r = layout.radius;
    let tess = build_tessellation(layout.ny, steps as usize, config.d_w, r)?;
    let assignments = decompose(&TileBounds { x: (r, r + layout.nx), bs_z }, &config.shape, r)?;
    let tracker = config.track_updates.then(|| UpdateTracker::new(layout));
    let trace = config.trace.then(TraceLog::new);

    let scheduler = Scheduler::with_policy(TileGraph::from_tessellation(&tess), config.policy);
    scheduler.seed_ready();
    let plan = Plan {
        tess: &tess,
        kernel: state.kind().kernel(),
        raw: state.raw_fields(),
        layout,
        t_origin: state.t_current(),
        config,
        assignments,
        bs_z,
        tracker: tracker.as_ref(),
    };

    let errors: Mutex<Vec<Error>> = Mutex::new(Vec::new());
    let start = Instant::now();
    if !tess.is_empty() {
        thread::scope(|s| {
            for group in 0..config.groups {
                let sync = GroupSync::new(config.shape.size());
                let slot = AtomicUsize::new(usize::MAX);
                let (plan, scheduler, errors, trace) = (&plan, &scheduler, &errors, trace.as_ref());
                s.spawn(move || {
                    thread::scope(|inner| {
                        for me in &plan.assignments {
                            let (sync, slot) = (&sync, &slot);
                            inner.spawn(move || {
                                group_member(plan, scheduler, sync, slot, me, group, trace, errors)
                            });
                        }
                    });
                });
            }
        });
    }
    let wall = start.elapsed().as_secs_f64();

    if let Some(e) = errors.into_inner().unwrap_or_else(|e| e.into_inner()).into_iter().next() {
        return Err(e);
    }
    if let Some(tr) = &tracker {
        tr.verify(steps as u32).map_err(Error::Contract)?;
    }
    state.advance(steps);

    let lups = state.grid().lups(steps);
    Ok(PerfReport {
        wall_seconds: wall,
        lups,
        glups: if wall > 0.0 { lups as f64 / wall / 1e9 } else { 0.0 },
        tiles: tess.len(),
        trace: trace.map(TraceLog::into_events),
    })
}

const STOP: usize = usize::MAX;

#[allow(clippy::too_many_arguments)]
fn group_member(
    plan: &Plan<'_>,
    scheduler: &Scheduler,
    sync: &GroupSync,
    slot: &AtomicUsize,
    me: &ThreadAssignment,
    group: usize,
    trace: Option<&TraceLog>,
    errors: &Mutex<Vec<Error>>,
) {
    let strategy = plan.config.variant.strategy();
    let master = me.tid == 0;
    let mut epoch = 0u64;
    loop {
        if master {
            slot.store(scheduler.pop_blocking().unwrap_or(STOP), Ordering::Relaxed);
        }
        sync.barrier.wait();
        let id = slot.load(Ordering::Relaxed);
        if id == STOP {
            break;
        }
        epoch += 1;
        let started = trace.map(TraceLog::now);
        strategy.execute(&plan.job(id, epoch), me, sync);
        sync.barrier.wait();
        if master {
            if let (Some(log), Some(t0)) = (trace, started) {
                log.record(id, group, t0, log.now());
            }
            if let Err(e) = scheduler.complete(id) {
                errors.lock().unwrap_or_else(|e| e.into_inner()).push(e);
            }
        }
    }
}

/// Executes a single tile with one thread group, outside any scheduler.
///
/// Tile times are taken relative to the state's current step, and the
/// caller is responsible for having completed the tile's dependencies and
/// for advancing the state once the whole tessellation is done.
pub fn update_tile(
    state: &mut ProblemState,
    tess: &DiamondTessellation,
    tile: usize,
    wf: &WavefrontSpec,
    shape: ThreadGroupShape,
    variant: WavefrontVariant,
) -> Result<()> {
    let mut config = RunConfig::new(tess.shape.width, wf.n_f, shape, variant, 1);
    config.track_updates = false;
    let (layout, bs_z) = validate(state, &config)?;
    if tile >= tess.len() {
        return Err(Error::Range(format!("tile {tile} of {}", tess.len())));
    }
    let r = layout.radius;
    let plan = Plan {
        tess,
        kernel: state.kind().kernel(),
        raw: state.raw_fields(),
        layout,
        t_origin: state.t_current(),
        config: &config,
        assignments: decompose(&TileBounds { x: (r, r + layout.nx), bs_z }, &shape, r)?,
        bs_z,
        tracker: None,
    };
    let sync = GroupSync::new(shape.size());
    thread::scope(|s| {
        for me in &plan.assignments {
            let (plan, sync) = (&plan, &sync);
            s.spawn(move || variant.strategy().execute(&plan.job(tile, 1), me, sync));
        }
    });
    Ok(())
}
