//! Auto-tuning of diamond width, wavefront width and thread-group shape.
//!
//! For every group size dividing the thread budget, every shape of that
//! size is hill-climbed in the `(D_w, N_F)` plane. Candidates whose cache
//! blocks do not fit the cache budget are pruned before any kernel runs,
//! and each measurement grows its test size until it is stable.

use std::collections::HashMap;
use std::fs;
use std::hash::Hash;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{self, RunConfig, ThreadGroupShape, WavefrontVariant};
use crate::error::{Error, Result};
use crate::geometry::DiamondShape;
use crate::grid::{init_state, GridSpec};
use crate::models::{cache_block_size, to_f64, CacheModelInput, MachineSpec};
use crate::stencil::StencilKind;

/// One configuration of the search space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Candidate {
    pub d_w: usize,
    pub n_f: usize,
    pub shape: ThreadGroupShape,
    pub variant: WavefrontVariant,
    pub n_groups: usize,
}

impl Candidate {
    pub fn run_config(&self) -> RunConfig {
        RunConfig::new(self.d_w, self.n_f, self.shape, self.variant, self.n_groups)
    }
}

/// A measured candidate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningPoint {
    #[serde(flatten)]
    pub candidate: Candidate,
    pub measured_glups: f64,
    /// Diamond rows in the final measurement.
    pub test_rows: usize,
    /// The measurement never stabilised within `max_repeats`.
    pub low_confidence: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneConfig {
    /// Relative change between successive measurements accepted as stable.
    pub stability_threshold: f64,
    pub max_repeats: usize,
    /// Cache available to all concurrently running tiles; `None` disables
    /// pruning.
    pub cache_budget_bytes: Option<f64>,
    /// Inclusive bounds on `D_w`; the upper bound is clamped to `N_y`.
    pub d_w_bounds: (usize, usize),
    pub n_f_bounds: (usize, usize),
    pub variant: WavefrontVariant,
    /// Diamond rows of the first measurement.
    pub initial_rows: usize,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            stability_threshold: 0.05,
            max_repeats: 6,
            cache_budget_bytes: None,
            d_w_bounds: (1, usize::MAX),
            n_f_bounds: (1, 8),
            variant: WavefrontVariant::RelaxedPipelined,
            initial_rows: 1,
        }
    }
}

impl TuneConfig {
    pub fn for_machine(machine: &MachineSpec) -> Self {
        Self {
            cache_budget_bytes: Some(machine.usable_cache() as f64),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.stability_threshold > 0.0 && self.stability_threshold < 1.0) {
            return Err(Error::config("stability threshold must lie in (0, 1)"));
        }
        if self.max_repeats == 0 || self.initial_rows == 0 {
            return Err(Error::config("max_repeats and initial_rows must be positive"));
        }
        let (a, b) = self.d_w_bounds;
        let (c, d) = self.n_f_bounds;
        if a > b || c > d || d == 0 {
            return Err(Error::config("empty tuning bounds"));
        }
        Ok(())
    }
}

/// Thread-group shapes of exactly `group_size` threads.
///
/// `T_y` is 1 or 2 and `T_c` divides `components`. Ordered by `T_c`
/// ascending, then `T_x` descending, then `T_y` descending.
pub fn enumerate_shapes(group_size: usize, components: usize) -> Vec<ThreadGroupShape> {
    let mut out = Vec::new();
    for tc in (1..=components.max(1)).filter(|c| components.max(1).is_multiple_of(*c) && group_size.is_multiple_of(*c)) {
        let spatial = group_size / tc;
        for tx in (1..=spatial).rev().filter(|x| spatial.is_multiple_of(*x)) {
            for ty in [2, 1] {
                if (spatial / tx).is_multiple_of(ty) {
                    out.push(ThreadGroupShape { tx, ty, tz: spatial / tx / ty, tc });
                }
            }
        }
    }
    out
}

/// Every `(shape, n_groups)` pair that uses exactly `threads` threads.
pub fn feasible_shapes(threads: usize, components: usize) -> Vec<(ThreadGroupShape, usize)> {
    (1..=threads)
        .filter(|g| threads.is_multiple_of(*g))
        .flat_map(|g| enumerate_shapes(g, components).into_iter().map(move |s| (s, threads / g)))
        .collect()
}

/// Concurrent cache footprint of a candidate: one block per group.
pub fn cache_footprint(kind: StencilKind, grid: &GridSpec, c: &Candidate) -> Option<f64> {
    let info = kind.info();
    let r = info.radius;
    DiamondShape::new(c.d_w, r).ok()?;
    if c.d_w + c.n_f <= 2 * r {
        return None;
    }
    let input = CacheModelInput::new(grid.leading_bytes(r), c.d_w, c.n_f, r, info.domain_streams);
    Some(to_f64(cache_block_size(&input)) * c.n_groups as f64)
}

/// True when the candidate fits the cache budget.
pub fn prune(kind: StencilKind, grid: &GridSpec, c: &Candidate, budget: Option<f64>) -> bool {
    match (budget, cache_footprint(kind, grid, c)) {
        (None, _) => true,
        (Some(b), Some(bytes)) => bytes <= b,
        (Some(_), None) => false,
    }
}

/// Runs a candidate on a test problem.
pub trait Benchmark {
    /// Throughput in GLUP/s of `c` on a problem `rows` diamond rows tall.
    fn measure(&mut self, c: &Candidate, rows: usize) -> Result<f64>;
}

/// Measures with the real engine on a private, seeded state.
#[derive(Clone, Debug)]
pub struct EngineBenchmark {
    pub kind: StencilKind,
    pub grid: GridSpec,
    pub seed: u64,
}

impl Benchmark for EngineBenchmark {
    fn measure(&mut self, c: &Candidate, rows: usize) -> Result<f64> {
        let r = self.kind.radius();
        let steps = (rows * c.d_w / (2 * r)) as u64;
        let mut state = init_state(self.kind, self.grid, self.seed)?;
        let mut config = c.run_config();
        config.track_updates = false;
        Ok(engine::run(&mut state, steps, &config)?.glups)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measurement {
    pub glups: f64,
    pub rows: usize,
    pub repeats: usize,
    pub low_confidence: bool,
}

/// Measures with doubling test sizes until two successive results differ
/// by less than the threshold, or `max_repeats` measurements were made.
pub fn adaptive_measure(c: &Candidate, bench: &mut dyn Benchmark, config: &TuneConfig) -> Result<Measurement> {
    let mut rows = config.initial_rows;
    let mut last = bench.measure(c, rows)?;
    let mut repeats = 1;
    while repeats < config.max_repeats {
        rows *= 2;
        let next = bench.measure(c, rows)?;
        repeats += 1;
        let spread = (next - last).abs() / last.abs().max(f64::MIN_POSITIVE);
        last = next;
        if spread < config.stability_threshold {
            return Ok(Measurement { glups: last, rows, repeats, low_confidence: false });
        }
    }
    Ok(Measurement { glups: last, rows, repeats, low_confidence: true })
}

/// Steepest-ascent local search.
///
/// At each step all neighbours are scored and the best one strictly above
/// the current score is taken; among equal scores the first one listed
/// wins, so a plateau never moves the search. Scores are memoised.
pub fn hill_climb<P, N, M>(start: P, mut neighbors: N, mut measure: M) -> Result<(P, f64)>
where
    P: Clone + Eq + Hash,
    N: FnMut(&P) -> Vec<P>,
    M: FnMut(&P) -> Result<f64>,
{
    let mut seen: HashMap<P, f64> = HashMap::new();
    let mut score = |p: &P, seen: &mut HashMap<P, f64>| -> Result<f64> {
        if let Some(&v) = seen.get(p) {
            return Ok(v);
        }
        let v = measure(p)?;
        seen.insert(p.clone(), v);
        Ok(v)
    };
    let mut current = start;
    let mut best = score(&current, &mut seen)?;
    loop {
        let mut next = None;
        for n in neighbors(&current) {
            let v = score(&n, &mut seen)?;
            if v > next.as_ref().map_or(best, |(_, b)| *b) {
                next = Some((n, v));
            }
        }
        match next {
            Some((p, v)) => {
                current = p;
                best = v;
            }
            None => return Ok((current, best)),
        }
    }
}

/// One measurement of the search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchEntry {
    pub point: TuningPoint,
    pub repeats: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeSummary {
    pub shape: ThreadGroupShape,
    pub n_groups: usize,
    /// Admissible points inside the bounds.
    pub admissible: usize,
    /// Of those, points dropped by the cache model.
    pub pruned: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneOutcome {
    pub best: TuningPoint,
    pub shapes: Vec<ShapeSummary>,
    pub log: Vec<SearchEntry>,
}

/// The search space of one tuning problem.
struct Space<'a> {
    kind: StencilKind,
    grid: GridSpec,
    config: &'a TuneConfig,
    d_ws: Vec<usize>,
}

impl<'a> Space<'a> {
    fn new(kind: StencilKind, grid: GridSpec, config: &'a TuneConfig) -> Self {
        let step = 2 * kind.radius();
        let (lo, hi) = config.d_w_bounds;
        let d_ws = (1..)
            .map(|m| m * step)
            .take_while(|&d| d <= hi.min(grid.ny))
            .filter(|&d| d >= lo && grid.ny.is_multiple_of(d))
            .collect();
        Self { kind, grid, config, d_ws }
    }

    fn admissible(&self, c: &Candidate) -> bool {
        engine::check_config(&self.grid, self.kind.radius(), &c.run_config()).is_ok()
    }

    fn keep(&self, c: &Candidate) -> bool {
        self.admissible(c) && prune(self.kind, &self.grid, c, self.config.cache_budget_bytes)
    }

    fn points(&self, shape: ThreadGroupShape, n_groups: usize) -> impl Iterator<Item = Candidate> + '_ {
        let (f0, f1) = self.config.n_f_bounds;
        let variant = self.config.variant;
        self.d_ws.iter().flat_map(move |&d_w| {
            (f0.max(1)..=f1).map(move |n_f| Candidate { d_w, n_f, shape, variant, n_groups })
        })
    }

    fn summary(&self, shape: ThreadGroupShape, n_groups: usize) -> ShapeSummary {
        let admissible: Vec<_> = self.points(shape, n_groups).filter(|c| self.admissible(c)).collect();
        let pruned = admissible
            .iter()
            .filter(|c| !prune(self.kind, &self.grid, c, self.config.cache_budget_bytes))
            .count();
        ShapeSummary { shape, n_groups, admissible: admissible.len(), pruned }
    }

    /// Axis-aligned moves: the next admissible `D_w` (a multiple of 2R
    /// dividing `N_y`) each way, and `N_F ± 1`.
    fn neighbors(&self, c: &Candidate) -> Vec<Candidate> {
        let pos = self.d_ws.iter().position(|&d| d == c.d_w);
        let mut out = Vec::with_capacity(4);
        if let Some(i) = pos {
            if i + 1 < self.d_ws.len() {
                out.push(Candidate { d_w: self.d_ws[i + 1], ..*c });
            }
            if i > 0 {
                out.push(Candidate { d_w: self.d_ws[i - 1], ..*c });
            }
        }
        if c.n_f < self.config.n_f_bounds.1 {
            out.push(Candidate { n_f: c.n_f + 1, ..*c });
        }
        if c.n_f > self.config.n_f_bounds.0.max(1) {
            out.push(Candidate { n_f: c.n_f - 1, ..*c });
        }
        out.retain(|n| self.keep(n));
        out
    }
}

/// Enumerated shapes with their admissible and pruned point counts,
/// without running anything.
pub fn plan(kind: StencilKind, grid: GridSpec, threads: usize, config: &TuneConfig) -> Result<Vec<ShapeSummary>> {
    config.validate()?;
    if threads == 0 {
        return Err(Error::config("thread budget must be positive"));
    }
    let space = Space::new(kind, grid, config);
    Ok(feasible_shapes(threads, 1).into_iter().map(|(s, g)| space.summary(s, g)).collect())
}

/// Tunes `kind` on `grid` for exactly `threads` threads.
///
/// Each shape is hill-climbed from its smallest kept point. The best
/// measurement overall wins; ties go to the shape enumerated first.
pub fn tune(
    kind: StencilKind,
    grid: GridSpec,
    threads: usize,
    config: &TuneConfig,
    bench: &mut dyn Benchmark,
) -> Result<TuneOutcome> {
    let shapes = plan(kind, grid, threads, config)?;
    let space = Space::new(kind, grid, config);
    let mut log = Vec::new();
    let mut best: Option<TuningPoint> = None;

    for s in &shapes {
        let Some(start) = space.points(s.shape, s.n_groups).find(|c| space.keep(c)) else {
            continue;
        };
        let mut points: HashMap<Candidate, TuningPoint> = HashMap::new();
        let (top, _) = hill_climb(
            start,
            |c| space.neighbors(c),
            |c| {
                let m = adaptive_measure(c, bench, config)?;
                let point = TuningPoint {
                    candidate: *c,
                    measured_glups: m.glups,
                    test_rows: m.rows,
                    low_confidence: m.low_confidence,
                };
                log.push(SearchEntry { point, repeats: m.repeats });
                points.insert(*c, point);
                Ok(m.glups)
            },
        )?;
        let point = points[&top];
        if best.is_none_or(|b| point.measured_glups > b.measured_glups) {
            best = Some(point);
        }
    }

    let best = best.ok_or_else(|| {
        Error::NoFeasiblePoint(format!(
            "no admissible configuration of {kind} on {}x{}x{} with {threads} threads fits the cache budget",
            grid.nx, grid.ny, grid.nz
        ))
    })?;
    Ok(TuneOutcome { best, shapes, log })
}

/// Identifies a tuning problem in a [`TuneStore`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TuneKey {
    pub stencil: StencilKind,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub machine: String,
    pub threads: usize,
}

impl TuneKey {
    pub fn new(stencil: StencilKind, grid: &GridSpec, machine: &str, threads: usize) -> Self {
        Self { stencil, nx: grid.nx, ny: grid.ny, nz: grid.nz, machine: machine.to_string(), threads }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredTune {
    pub key: TuneKey,
    pub best: TuningPoint,
}

/// JSON document of tuning results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneStore {
    pub schema_version: u32,
    pub entries: Vec<StoredTune>,
}

impl Default for TuneStore {
    fn default() -> Self {
        Self { schema_version: Self::SCHEMA_VERSION, entries: Vec::new() }
    }
}

impl TuneStore {
    pub const SCHEMA_VERSION: u32 = 1;

    /// Reads `path`, or returns an empty store if it does not exist.
    pub fn load(path: &Path) -> Result<Self> {
        match fs::read_to_string(path) {
            Ok(text) => {
                let store: Self = serde_json::from_str(&text)
                    .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
                if store.schema_version != Self::SCHEMA_VERSION {
                    return Err(Error::Parse(format!(
                        "{}: schema version {} (expected {})",
                        path.display(),
                        store.schema_version,
                        Self::SCHEMA_VERSION
                    )));
                }
                Ok(store)
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))?;
        fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn get(&self, key: &TuneKey) -> Option<&TuningPoint> {
        self.entries.iter().find(|e| &e.key == key).map(|e| &e.best)
    }

    /// Inserts or replaces the entry for `key`.
    pub fn insert(&mut self, key: TuneKey, best: TuningPoint) {
        match self.entries.iter_mut().find(|e| e.key == key) {
            Some(e) => e.best = best,
            None => self.entries.push(StoredTune { key, best }),
        }
    }
}
