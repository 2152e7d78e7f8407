//! The four corner-case stencil operators and the naive reference sweep.
//!
//! Every kernel is written once as a point update in the exact operand
//! order of its defining expression. Both the naive sweep and the tiled
//! engine evaluate points through that one function, so the two paths agree
//! bit for bit regardless of traversal order.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ProblemState, StepView};
use crate::registry::Registry;

/// Identifies one of the built-in stencil operators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StencilKind {
    /// 7-point, constant coefficients, first order in time.
    #[serde(rename = "7pt-const")]
    Const7pt,
    /// 7-point, seven coefficient fields, first order in time.
    #[serde(rename = "7pt-var")]
    Var7pt,
    /// 25-point, constant coefficients times a field `C`, second order in time.
    #[serde(rename = "25pt-const")]
    Const25pt,
    /// 25-point, thirteen coefficient fields, first order in time.
    #[serde(rename = "25pt-var")]
    Var25pt,
}

/// Static properties of a stencil operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StencilInfo {
    pub name: &'static str,
    /// Semi-bandwidth `R`.
    pub radius: usize,
    /// Domain-sized arrays streamed per sweep (`N_D`), as used by the
    /// cache-block and code-balance models.
    pub domain_streams: usize,
    pub flops_per_lup: usize,
    pub time_order: usize,
    pub coeff_arrays: usize,
    pub scalar_coeffs: usize,
    /// Minimum memory traffic per update under pure spatial blocking.
    pub spatial_balance: usize,
}

const CONST7: StencilInfo = StencilInfo {
    name: "7pt-const",
    radius: 1,
    domain_streams: 2,
    flops_per_lup: 7,
    time_order: 1,
    coeff_arrays: 0,
    scalar_coeffs: 2,
    spatial_balance: 24,
};

const VAR7: StencilInfo = StencilInfo {
    name: "7pt-var",
    radius: 1,
    domain_streams: 9,
    flops_per_lup: 13,
    time_order: 1,
    coeff_arrays: 7,
    scalar_coeffs: 0,
    spatial_balance: 80,
};

// Two solution arrays plus the coefficient field C.
const CONST25: StencilInfo = StencilInfo {
    name: "25pt-const",
    radius: 4,
    domain_streams: 3,
    flops_per_lup: 33,
    time_order: 2,
    coeff_arrays: 1,
    scalar_coeffs: 5,
    spatial_balance: 32,
};

const VAR25: StencilInfo = StencilInfo {
    name: "25pt-var",
    radius: 4,
    domain_streams: 15,
    flops_per_lup: 37,
    time_order: 1,
    coeff_arrays: 13,
    scalar_coeffs: 0,
    spatial_balance: 128,
};

impl StencilKind {
    pub const ALL: [StencilKind; 4] = [
        StencilKind::Const7pt,
        StencilKind::Var7pt,
        StencilKind::Const25pt,
        StencilKind::Var25pt,
    ];

    pub fn info(self) -> &'static StencilInfo {
        match self {
            StencilKind::Const7pt => &CONST7,
            StencilKind::Var7pt => &VAR7,
            StencilKind::Const25pt => &CONST25,
            StencilKind::Var25pt => &VAR25,
        }
    }

    pub fn name(self) -> &'static str {
        self.info().name
    }

    pub fn radius(self) -> usize {
        self.info().radius
    }

    pub fn kernel(self) -> &'static dyn Stencil {
        match self {
            StencilKind::Const7pt => &Const7ptKernel,
            StencilKind::Var7pt => &Var7ptKernel,
            StencilKind::Const25pt => &Const25ptKernel,
            StencilKind::Var25pt => &Var25ptKernel,
        }
    }

    /// Scale applied to the unit draws of coefficient fields.
    pub(crate) fn coeff_scale(self) -> f64 {
        match self {
            StencilKind::Const7pt => 0.0,
            StencilKind::Var7pt => 1.0 / 7.0,
            StencilKind::Const25pt => 0.1,
            StencilKind::Var25pt => 1.0 / 25.0,
        }
    }

    /// Scales applied to the unit draws of scalar coefficients.
    pub(crate) fn scalar_scales(self) -> &'static [f64] {
        match self {
            StencilKind::Const7pt => &[1.0 / 7.0; 2],
            StencilKind::Const25pt => &[1.0 / 25.0; 5],
            StencilKind::Var7pt | StencilKind::Var25pt => &[],
        }
    }
}

impl fmt::Display for StencilKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StencilKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        stencils().get(s).map(|k| k.kind())
    }
}

/// All built-in stencil kernels, keyed by name.
pub fn stencils() -> &'static Registry<dyn Stencil> {
    static REGISTRY: OnceLock<Registry<dyn Stencil>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        Registry::<dyn Stencil>::new("stencil")
            .register(CONST7.name, &Const7ptKernel)
            .register(VAR7.name, &Var7ptKernel)
            .register(CONST25.name, &Const25ptKernel)
            .register(VAR25.name, &Var25ptKernel)
    })
}

/// A stencil point update, dispatched once per x-row.
pub trait Stencil: Send + Sync {
    fn kind(&self) -> StencilKind;

    /// Next-level value at element `idx`.
    ///
    /// # Safety
    /// `idx` must be an interior element of the layout `view` was built
    /// for, and no other thread may be writing any element the footprint
    /// reads.
    unsafe fn eval(&self, view: &StepView, idx: usize) -> f64;

    /// Updates `len` consecutive elements starting at `base`.
    ///
    /// # Safety
    /// Same as [`Stencil::eval`] for every element, and no other thread
    /// touches the destination elements.
    unsafe fn sweep_row(&self, view: &StepView, base: usize, len: usize);
}

/// A point kernel with a statically known expression.
trait PointKernel: Send + Sync {
    const KIND: StencilKind;

    unsafe fn point(view: &StepView, idx: usize) -> f64;
}

impl<K: PointKernel> Stencil for K {
    fn kind(&self) -> StencilKind {
        K::KIND
    }

    unsafe fn eval(&self, view: &StepView, idx: usize) -> f64 {
        K::point(view, idx)
    }

    unsafe fn sweep_row(&self, view: &StepView, base: usize, len: usize) {
        for idx in base..base + len {
            let value = K::point(view, idx);
            view.next.add(idx).write(value);
        }
    }
}

struct Const7ptKernel;
struct Var7ptKernel;
struct Const25ptKernel;
struct Var25ptKernel;

impl PointKernel for Const7ptKernel {
    const KIND: StencilKind = StencilKind::Const7pt;

    #[inline(always)]
    unsafe fn point(w: &StepView, c: usize) -> f64 {
        let v = w.cur;
        let (dj, dk) = (w.dj, w.dk);
        let (c0, c1) = (w.scalars[0], w.scalars[1]);
        c0 * *v.add(c)
            + c1 * (*v.add(c + 1) + *v.add(c - 1))
            + c1 * (*v.add(c + dj) + *v.add(c - dj))
            + c1 * (*v.add(c + dk) + *v.add(c - dk))
    }
}

impl PointKernel for Var7ptKernel {
    const KIND: StencilKind = StencilKind::Var7pt;

    #[inline(always)]
    unsafe fn point(w: &StepView, c: usize) -> f64 {
        let v = w.cur;
        let (dj, dk) = (w.dj, w.dk);
        let cf = |n: usize| *w.coeffs[n].add(c);
        cf(0) * *v.add(c)
            + cf(1) * *v.add(c + 1)
            + cf(2) * *v.add(c - 1)
            + cf(3) * *v.add(c + dj)
            + cf(4) * *v.add(c - dj)
            + cf(5) * *v.add(c + dk)
            + cf(6) * *v.add(c - dk)
    }
}

impl PointKernel for Const25ptKernel {
    const KIND: StencilKind = StencilKind::Const25pt;

    // The defining expression reads `C * [ ... ]` with an unmatched opening
    // bracket; C is taken to scale the whole bracketed sum.
    #[inline(always)]
    unsafe fn point(w: &StepView, c: usize) -> f64 {
        let v = w.cur;
        let (dj, dk) = (w.dj, w.dk);
        let s = &w.scalars;
        let ring = |d: usize| {
            *v.add(c + d)
                + *v.add(c - d)
                + *v.add(c + d * dj)
                + *v.add(c - d * dj)
                + *v.add(c + d * dk)
                + *v.add(c - d * dk)
        };
        2.0 * *v.add(c) - *w.next.add(c)
            + *w.coeffs[0].add(c)
                * (s[0] * *v.add(c) + s[1] * ring(1) + s[2] * ring(2) + s[3] * ring(3) + s[4] * ring(4))
    }
}

impl PointKernel for Var25ptKernel {
    const KIND: StencilKind = StencilKind::Var25pt;

    #[inline(always)]
    unsafe fn point(w: &StepView, c: usize) -> f64 {
        let v = w.cur;
        let (dj, dk) = (w.dj, w.dk);
        let cf = |n: usize| *w.coeffs[n].add(c);
        let pair = |d: usize| *v.add(c + d) + *v.add(c - d);
        cf(0) * *v.add(c)
            + cf(1) * pair(1)
            + cf(2) * pair(dj)
            + cf(3) * pair(dk)
            + cf(4) * pair(2)
            + cf(5) * pair(2 * dj)
            + cf(6) * pair(2 * dk)
            + cf(7) * pair(3)
            + cf(8) * pair(3 * dj)
            + cf(9) * pair(3 * dk)
            + cf(10) * pair(4)
            + cf(11) * pair(4 * dj)
            + cf(12) * pair(4 * dk)
    }
}

/// Value the next step would assign to interior cell `(i, j, k)`.
///
/// # Panics
/// If the cell is not interior.
pub fn apply_point(state: &mut ProblemState, i: usize, j: usize, k: usize) -> f64 {
    let layout = *state.layout();
    assert!(layout.is_interior(i, j, k), "({i}, {j}, {k}) is not an interior cell");
    let step = state.t_current();
    let view = state.raw_fields().step(step);
    // SAFETY: interior index, exclusive borrow of the state.
    unsafe { state.kind().kernel().eval(&view, layout.index(i, j, k)) }
}

/// Advances `state` by `steps` full sweeps in lexicographic `(k, j, i)`
/// order. Single-threaded; ghost cells are never written.
pub fn naive_sweep(state: &mut ProblemState, steps: u64) {
    let layout = *state.layout();
    let kernel = state.kind().kernel();
    let r = layout.radius;
    let raw = state.raw_fields();
    let t0 = state.t_current();
    for t in t0..t0 + steps {
        let view = raw.step(t);
        for k in r..r + layout.nz {
            for j in r..r + layout.ny {
                // SAFETY: the row is interior and `state` is exclusively borrowed.
                unsafe { kernel.sweep_row(&view, layout.index(r, j, k), layout.nx) };
            }
        }
    }
    state.advance(steps);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{init_state, GridSpec};

    fn filled(kind: StencilKind, n: usize, value: f64) -> ProblemState {
        let mut s = init_state(kind, GridSpec::cube(n), 0).unwrap();
        s.field_mut(0).fill(value);
        s.field_mut(1).fill(value);
        s
    }

    #[test]
    fn metadata_matches_operator_definitions() {
        let expect = [
            (StencilKind::Const7pt, 1, 2, 7, 1, 0),
            (StencilKind::Var7pt, 1, 9, 13, 1, 7),
            (StencilKind::Const25pt, 4, 3, 33, 2, 1),
            (StencilKind::Var25pt, 4, 15, 37, 1, 13),
        ];
        for (kind, r, nd, flops, order, coeffs) in expect {
            let info = kind.info();
            assert_eq!(
                (info.radius, info.domain_streams, info.flops_per_lup, info.time_order, info.coeff_arrays),
                (r, nd, flops, order, coeffs),
                "{kind}"
            );
        }
    }

    #[test]
    fn names_round_trip_through_registry() {
        for kind in StencilKind::ALL {
            assert_eq!(kind.name().parse::<StencilKind>().unwrap(), kind);
        }
        assert!("27pt".parse::<StencilKind>().is_err());
    }

    #[test]
    fn zero_field_gives_zero() {
        let mut s = filled(StencilKind::Const7pt, 6, 0.0);
        assert_eq!(apply_point(&mut s, 3, 3, 3), 0.0);
    }

    #[test]
    fn identity_coefficients_preserve_value() {
        let mut s = filled(StencilKind::Const7pt, 6, 5.0);
        s.scalars = vec![1.0, 0.0];
        assert_eq!(apply_point(&mut s, 2, 4, 3), 5.0);
    }

    #[test]
    fn var7_matches_straight_line_evaluation() {
        let mut s = init_state(StencilKind::Var7pt, GridSpec::cube(6), 11).unwrap();
        let l = *s.layout();
        for (i, j, k) in [(1, 1, 1), (3, 4, 5), (6, 6, 6), (2, 5, 3)] {
            let v = s.field(0);
            let c = s.coeffs();
            let at = |i: usize, j: usize, k: usize| v[l.index(i, j, k)];
            let cc = |n: usize| c[n][l.index(i, j, k)];
            let expect = cc(0) * at(i, j, k)
                + cc(1) * at(i + 1, j, k)
                + cc(2) * at(i - 1, j, k)
                + cc(3) * at(i, j + 1, k)
                + cc(4) * at(i, j - 1, k)
                + cc(5) * at(i, j, k + 1)
                + cc(6) * at(i, j, k - 1);
            assert_eq!(apply_point(&mut s, i, j, k).to_bits(), expect.to_bits());
        }
    }

    #[test]
    fn const25_second_order_reads_previous_level() {
        // All V equal to 1, U equal to 3, C zero: 2*1 - 3 = -1.
        let mut s = filled(StencilKind::Const25pt, 9, 1.0);
        s.field_mut(1).fill(3.0);
        s.coeff_mut(0).fill(0.0);
        assert_eq!(apply_point(&mut s, 6, 6, 6), -1.0);
    }

    #[test]
    fn zero_steps_is_noop() {
        let mut s = init_state(StencilKind::Var25pt, GridSpec::cube(10), 2).unwrap();
        let before = s.clone();
        naive_sweep(&mut s, 0);
        assert_eq!(s, before);
    }

    #[test]
    fn identity_sweep_keeps_interior() {
        let mut s = init_state(StencilKind::Const7pt, GridSpec::cube(7), 4).unwrap();
        s.scalars = vec![1.0, 0.0];
        let start = s.solution().to_vec();
        naive_sweep(&mut s, 10);
        assert_eq!(s.t_current(), 10);
        let l = *s.layout();
        for k in 1..8 {
            for j in 1..8 {
                for i in 1..8 {
                    let idx = l.index(i, j, k);
                    assert_eq!(s.solution()[idx], start[idx]);
                }
            }
        }
    }

    #[test]
    fn ghosts_are_never_written() {
        let mut s = init_state(StencilKind::Var25pt, GridSpec::cube(9), 5).unwrap();
        let before = s.clone();
        naive_sweep(&mut s, 3);
        let l = *s.layout();
        for n in 0..2 {
            for (idx, (a, b)) in s.field(n).iter().zip(before.field(n)).enumerate() {
                let (i, j, k) = l.coords(idx);
                if !l.is_interior(i, j, k) {
                    assert_eq!(a.to_bits(), b.to_bits());
                }
            }
        }
    }
}
