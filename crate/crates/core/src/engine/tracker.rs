use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};
use std::sync::Mutex;

use crate::grid::Layout;

/// Per-cell update counters that check the space-time dependency contract
/// while a run executes.
///
/// Before cell `c` is advanced from run-relative level `t` to `t + 1`, its
/// own counter must read `t` (each level computed exactly once and in
/// order) and every interior cell in its stencil footprint must read `t` or
/// `t + 1` (the level about to be read has been produced and not yet
/// overwritten). Violations are counted rather than panicking so that a
/// broken schedule cannot leave sibling threads stuck in a barrier.
#[derive(Debug)]
pub struct UpdateTracker {
    layout: Layout,
    counts: Vec<AtomicU32>,
    violations: AtomicU64,
    first: Mutex<Option<String>>,
}

impl UpdateTracker {
    pub fn new(layout: Layout) -> Self {
        let n = layout.nx * layout.ny * layout.nz;
        Self {
            layout,
            counts: (0..n).map(|_| AtomicU32::new(0)).collect(),
            violations: AtomicU64::new(0),
            first: Mutex::new(None),
        }
    }

    fn count(&self, i: usize, j: usize, k: usize) -> u32 {
        self.counts[self.layout.interior_index(i, j, k)].load(Ordering::Acquire)
    }

    fn violate(&self, msg: impl FnOnce() -> String) {
        if self.violations.fetch_add(1, Ordering::Relaxed) == 0 {
            *self.first.lock().unwrap_or_else(|e| e.into_inner()) = Some(msg());
        }
    }

    /// Records the update of cells `ib..ie` of row `(j, k)` to level `t + 1`.
    pub fn record_row(&self, t: u32, ib: usize, ie: usize, j: usize, k: usize) {
        let l = &self.layout;
        let r = l.radius;
        for i in ib..ie {
            let own = self.count(i, j, k);
            if own != t {
                self.violate(|| format!("cell ({i},{j},{k}) at level {own} when step {t} ran"));
            }
            for d in 1..=r {
                let neighbours = [
                    (i + d, j, k),
                    (i - d, j, k),
                    (i, j + d, k),
                    (i, j - d, k),
                    (i, j, k + d),
                    (i, j, k - d),
                ];
                for (a, b, c) in neighbours {
                    if l.is_interior(a, b, c) {
                        let n = self.count(a, b, c);
                        if n != t && n != t + 1 {
                            self.violate(|| {
                                format!("step {t} at ({i},{j},{k}) read neighbour ({a},{b},{c}) at level {n}")
                            });
                        }
                    }
                }
            }
            self.counts[l.interior_index(i, j, k)].store(t + 1, Ordering::Release);
        }
    }

    /// Checks that every interior cell reached `steps`, and that no
    /// violation was recorded.
    pub fn verify(&self, steps: u32) -> Result<(), String> {
        if let Some(msg) = self.first.lock().unwrap_or_else(|e| e.into_inner()).clone() {
            return Err(format!(
                "{} dependency violations, first: {msg}",
                self.violations.load(Ordering::Relaxed)
            ));
        }
        let bad = self.counts.iter().filter(|c| c.load(Ordering::Relaxed) != steps).count();
        if bad > 0 {
            return Err(format!("{bad} cells were not updated exactly {steps} times"));
        }
        Ok(())
    }
}
