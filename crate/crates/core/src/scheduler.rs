//! Dependency-counting ready queue that hands tiles to thread groups.
//!
//! One mutex guards the queue and the counters. Each dispatched tile carries
//! a large amount of work, so contention on it is negligible.

use std::collections::VecDeque;
use std::io::Write;
use std::sync::{Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::geometry::DiamondTessellation;

/// Order in which ready tiles leave the queue.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum QueuePolicy {
    #[default]
    Fifo,
    Lifo,
    /// Lowest tile row first, FIFO among equals.
    EarliestRow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum TileState {
    Waiting,
    Queued,
    Running,
    Done,
}

/// Dependency counts and adjacency for a set of tiles.
#[derive(Clone, Debug)]
pub struct TileGraph {
    pub deps: Vec<Vec<usize>>,
    pub dependents: Vec<Vec<usize>>,
    /// Row of each tile, for priority policies.
    pub rows: Vec<usize>,
}

impl TileGraph {
    pub fn from_tessellation(tess: &DiamondTessellation) -> Self {
        Self {
            deps: tess.deps.clone(),
            dependents: tess.dependents.clone(),
            rows: tess.tiles.iter().map(|t| t.row).collect(),
        }
    }

    /// Builds a graph from explicit dependency lists.
    pub fn from_deps(deps: Vec<Vec<usize>>) -> Self {
        let mut dependents = vec![Vec::new(); deps.len()];
        for (id, ds) in deps.iter().enumerate() {
            for &d in ds {
                dependents[d].push(id);
            }
        }
        let rows = vec![0; deps.len()];
        Self {
            deps,
            dependents,
            rows,
        }
    }

    pub fn len(&self) -> usize {
        self.deps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deps.is_empty()
    }

    /// True when `order` runs every tile once and after all its deps.
    pub fn is_topological(&self, order: &[usize]) -> bool {
        if order.len() != self.len() {
            return false;
        }
        let mut pos = vec![usize::MAX; self.len()];
        for (p, &id) in order.iter().enumerate() {
            if id >= self.len() || pos[id] != usize::MAX {
                return false;
            }
            pos[id] = p;
        }
        (0..self.len()).all(|id| self.deps[id].iter().all(|&d| pos[d] < pos[id]))
    }
}

/// Result of a non-blocking pop.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pop {
    Tile(usize),
    /// Nothing ready now, but unfinished tiles remain.
    Empty,
    /// Every tile has completed.
    Done,
}

#[derive(Debug)]
struct Inner {
    queue: VecDeque<usize>,
    remaining: Vec<usize>,
    state: Vec<TileState>,
    done: usize,
    seeded: bool,
}

/// One executed tile, for offline analysis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceEvent {
    pub tile: usize,
    pub group: usize,
    pub start: Duration,
    pub end: Duration,
}

/// Thread-safe scheduler over a [`TileGraph`].
#[derive(Debug)]
pub struct Scheduler {
    graph: TileGraph,
    policy: QueuePolicy,
    inner: Mutex<Inner>,
    ready: Condvar,
}

impl Scheduler {
    pub fn new(graph: TileGraph) -> Self {
        Self::with_policy(graph, QueuePolicy::Fifo)
    }

    pub fn with_policy(graph: TileGraph, policy: QueuePolicy) -> Self {
        let remaining = graph.deps.iter().map(Vec::len).collect();
        let n = graph.len();
        Self {
            graph,
            policy,
            inner: Mutex::new(Inner {
                queue: VecDeque::new(),
                remaining,
                state: vec![TileState::Waiting; n],
                done: 0,
                seeded: false,
            }),
            ready: Condvar::new(),
        }
    }

    pub fn graph(&self) -> &TileGraph {
        &self.graph
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Enqueues every tile without dependencies. Idempotent.
    pub fn seed_ready(&self) {
        let mut inner = self.lock();
        if inner.seeded {
            return;
        }
        inner.seeded = true;
        for id in 0..self.graph.len() {
            if inner.remaining[id] == 0 {
                inner.state[id] = TileState::Queued;
                inner.queue.push_back(id);
            }
        }
        drop(inner);
        self.ready.notify_all();
    }

    fn take(&self, inner: &mut Inner) -> Option<usize> {
        let id = match self.policy {
            QueuePolicy::Fifo => inner.queue.pop_front(),
            QueuePolicy::Lifo => inner.queue.pop_back(),
            QueuePolicy::EarliestRow => {
                let best = inner
                    .queue
                    .iter()
                    .enumerate()
                    .min_by_key(|(pos, id)| (self.graph.rows[**id], *pos))
                    .map(|(pos, _)| pos);
                best.and_then(|pos| inner.queue.remove(pos))
            }
        }?;
        inner.state[id] = TileState::Running;
        Some(id)
    }

    /// Takes the next ready tile without blocking.
    pub fn pop_ready(&self) -> Pop {
        let mut inner = self.lock();
        match self.take(&mut inner) {
            Some(id) => Pop::Tile(id),
            None if inner.done == self.graph.len() => Pop::Done,
            None => Pop::Empty,
        }
    }

    /// Waits for a ready tile; `None` once every tile has completed.
    pub fn pop_blocking(&self) -> Option<usize> {
        let mut inner = self.lock();
        loop {
            if let Some(id) = self.take(&mut inner) {
                return Some(id);
            }
            if inner.done == self.graph.len() {
                return None;
            }
            inner = self.ready.wait(inner).unwrap_or_else(|e| e.into_inner());
        }
    }

    /// Marks `id` finished and returns the tiles it made ready.
    pub fn complete(&self, id: usize) -> Result<Vec<usize>> {
        let mut inner = self.lock();
        match inner.state.get(id) {
            Some(TileState::Running) => {}
            Some(TileState::Done) => return Err(Error::Contract(format!("tile {id} completed twice"))),
            Some(_) => return Err(Error::Contract(format!("tile {id} completed before it was popped"))),
            None => return Err(Error::Contract(format!("unknown tile {id}"))),
        }
        inner.state[id] = TileState::Done;
        inner.done += 1;
        let mut newly = Vec::new();
        for &child in &self.graph.dependents[id] {
            inner.remaining[child] -= 1;
            if inner.remaining[child] == 0 {
                inner.state[child] = TileState::Queued;
                inner.queue.push_back(child);
                newly.push(child);
            }
        }
        let finished = inner.done == self.graph.len();
        drop(inner);
        if finished || !newly.is_empty() {
            self.ready.notify_all();
        }
        Ok(newly)
    }

    pub fn completed(&self) -> usize {
        self.lock().done
    }
}

/// Collects [`TraceEvent`]s relative to a common start instant.
#[derive(Debug)]
pub struct TraceLog {
    origin: Instant,
    events: Mutex<Vec<TraceEvent>>,
}

impl Default for TraceLog {
    fn default() -> Self {
        Self::new()
    }
}

impl TraceLog {
    pub fn new() -> Self {
        Self {
            origin: Instant::now(),
            events: Mutex::new(Vec::new()),
        }
    }

    pub fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    pub fn record(&self, tile: usize, group: usize, start: Duration, end: Duration) {
        self.events
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(TraceEvent { tile, group, start, end });
    }

    pub fn into_events(self) -> Vec<TraceEvent> {
        self.events.into_inner().unwrap_or_else(|e| e.into_inner())
    }
}

/// Writes trace events as `tile,group,start_us,end_us`.
pub fn write_trace_csv(events: &[TraceEvent], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "tile,group,start_us,end_us")?;
    for e in events {
        writeln!(out, "{},{},{},{}", e.tile, e.group, e.start.as_micros(), e.end.as_micros())?;
    }
    Ok(())
}
