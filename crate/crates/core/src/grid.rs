//! Grid geometry, field storage and deterministic initialization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stencil::StencilKind;

/// Bytes per grid element (double precision).
pub const ELEMENT_BYTES: usize = 8;

/// Interior extents of the 3-D grid plus leading-dimension padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Extra elements appended to every x-row, for alignment.
    #[serde(default)]
    pub pad_x: usize,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Self {
            nx,
            ny,
            nz,
            pad_x: 0,
        }
    }

    pub fn cube(n: usize) -> Self {
        Self::new(n, n, n)
    }

    pub fn with_padding(mut self, pad_x: usize) -> Self {
        self.pad_x = pad_x;
        self
    }

    /// Every interior extent must hold at least one full stencil footprint.
    pub fn validate(&self, radius: usize) -> Result<()> {
        let min = 2 * radius + 1;
        for (axis, n) in [("x", self.nx), ("y", self.ny), ("z", self.nz)] {
            if n < min {
                return Err(Error::InvalidGrid(format!(
                    "extent N{axis}={n} is below 2R+1={min} for radius {radius}"
                )));
            }
        }
        Ok(())
    }

    /// Bytes in one padded x-row including ghosts (`N_xb`).
    pub fn leading_bytes(&self, radius: usize) -> usize {
        (self.nx + 2 * radius + self.pad_x) * ELEMENT_BYTES
    }

    pub fn cells(&self) -> u64 {
        (self.nx * self.ny * self.nz) as u64
    }

    /// Lattice updates performed by `steps` full sweeps.
    pub fn lups(&self, steps: u64) -> u64 {
        self.cells() * steps
    }
}

/// Array-level addressing of a field with ghost layers and padding.
///
/// Coordinates `(i, j, k)` are array coordinates: the interior spans
/// `radius..radius + n` along each axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub radius: usize,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Elements per x-row (stride of j).
    pub sx: usize,
    /// Rows per xy-plane.
    pub sy: usize,
    /// Planes.
    pub sz: usize,
}

impl Layout {
    pub fn new(grid: &GridSpec, radius: usize) -> Self {
        Self {
            radius,
            nx: grid.nx,
            ny: grid.ny,
            nz: grid.nz,
            sx: grid.nx + 2 * radius + grid.pad_x,
            sy: grid.ny + 2 * radius,
            sz: grid.nz + 2 * radius,
        }
    }

    #[inline(always)]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.sy + j) * self.sx + i
    }

    /// Stride between consecutive k-planes.
    #[inline(always)]
    pub fn plane(&self) -> usize {
        self.sx * self.sy
    }

    pub fn len(&self) -> usize {
        self.sx * self.sy * self.sz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_interior(&self, i: usize, j: usize, k: usize) -> bool {
        let r = self.radius;
        (r..r + self.nx).contains(&i) && (r..r + self.ny).contains(&j) && (r..r + self.nz).contains(&k)
    }

    /// Dense index of an interior cell, for per-cell bookkeeping.
    #[inline(always)]
    pub fn interior_index(&self, i: usize, j: usize, k: usize) -> usize {
        let r = self.radius;
        ((k - r) * self.ny + (j - r)) * self.nx + (i - r)
    }

    /// Inverse of [`Layout::index`], returning array coordinates.
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let i = idx % self.sx;
        let j = (idx / self.sx) % self.sy;
        let k = idx / self.plane();
        (i, j, k)
    }
}

/// The complete space-time working set of one simulation.
///
/// `fields[0]` is `V` and `fields[1]` is `U` in the kernels. At
/// completed step count `t`, the newest level lives in `fields[t % 2]` and
/// the level before it in `fields[(t + 1) % 2]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemState {
    kind: StencilKind,
    grid: GridSpec,
    layout: Layout,
    fields: [Vec<f64>; 2],
    coeffs: Vec<Vec<f64>>,
    /// Scalar coefficients (`c0`, `c1`, ...) of constant-coefficient kinds.
    pub scalars: Vec<f64>,
    t_current: u64,
}

/// Seeds pseudo-random values into every cell of a new state.
///
/// Values depend only on `(seed, field, k, j, i)`, so any traversal order
/// or thread count yields the same state.
pub fn init_state(kind: StencilKind, grid: GridSpec, seed: u64) -> Result<ProblemState> {
    let info = kind.info();
    grid.validate(info.radius)?;
    let layout = Layout::new(&grid, info.radius);

    let fill = |field: u64, scale: f64| -> Vec<f64> {
        let mut data = vec![0.0; layout.len()];
        for k in 0..layout.sz {
            for j in 0..layout.sy {
                let row = layout.index(0, j, k);
                // padding past the ghost layer stays zero
                for i in 0..layout.nx + 2 * layout.radius {
                    data[row + i] = scale * cell_random(seed, field, k as u64, j as u64, i as u64);
                }
            }
        }
        data
    };

    let fields = [fill(0, 1.0), fill(1, 1.0)];
    let coeff_scale = kind.coeff_scale();
    let coeffs = (0..info.coeff_arrays)
        .map(|n| fill(2 + n as u64, coeff_scale))
        .collect();
    let scalars = kind
        .scalar_scales()
        .iter()
        .enumerate()
        .map(|(n, scale)| scale * cell_random(seed, 1000 + n as u64, 0, 0, 0))
        .collect();

    Ok(ProblemState {
        kind,
        grid,
        layout,
        fields,
        coeffs,
        scalars,
        t_current: 0,
    })
}

impl ProblemState {
    pub fn kind(&self) -> StencilKind {
        self.kind
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Completed time steps.
    pub fn t_current(&self) -> u64 {
        self.t_current
    }

    pub(crate) fn advance(&mut self, steps: u64) {
        self.t_current += steps;
    }

    /// The newest time level.
    pub fn solution(&self) -> &[f64] {
        &self.fields[(self.t_current % 2) as usize]
    }

    /// The level before [`ProblemState::solution`].
    pub fn previous(&self) -> &[f64] {
        &self.fields[((self.t_current + 1) % 2) as usize]
    }

    /// Raw access to `V` (0) or `U` (1).
    pub fn field(&self, n: usize) -> &[f64] {
        &self.fields[n]
    }

    pub fn field_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.fields[n]
    }

    pub fn coeffs(&self) -> &[Vec<f64>] {
        &self.coeffs
    }

    pub fn coeff_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.coeffs[n]
    }

    /// Order-sensitive digest of the interior of the newest level.
    pub fn checksum(&self) -> u64 {
        let l = &self.layout;
        let r = l.radius;
        let sol = self.solution();
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for k in r..r + l.nz {
            for j in r..r + l.ny {
                for i in r..r + l.nx {
                    h = mix64(h ^ sol[l.index(i, j, k)].to_bits());
                }
            }
        }
        h
    }

    /// First interior cell whose newest-level value differs bitwise from
    /// `other`, as `(i, j, k, self_value, other_value)`.
    pub fn first_difference(&self, other: &ProblemState) -> Option<(usize, usize, usize, f64, f64)> {
        let l = &self.layout;
        let r = l.radius;
        let (a, b) = (self.solution(), other.solution());
        for k in r..r + l.nz {
            for j in r..r + l.ny {
                for i in r..r + l.nx {
                    let idx = l.index(i, j, k);
                    if a[idx].to_bits() != b[idx].to_bits() {
                        return Some((i, j, k, a[idx], b[idx]));
                    }
                }
            }
        }
        None
    }

    /// Pointers for one step's kernel evaluation. `step` is the absolute
    /// index of the step being computed (level `step` → `step + 1`).
    pub(crate) fn raw_fields(&mut self) -> RawFields {
        let mut coeffs = [std::ptr::null(); MAX_COEFFS];
        for (slot, c) in coeffs.iter_mut().zip(&self.coeffs) {
            *slot = c.as_ptr();
        }
        let mut scalars = [0.0; MAX_SCALARS];
        scalars[..self.scalars.len()].copy_from_slice(&self.scalars);
        let [f0, f1] = &mut self.fields;
        RawFields {
            fields: [f0.as_mut_ptr(), f1.as_mut_ptr()],
            coeffs,
            scalars,
            dj: self.layout.sx,
            dk: self.layout.plane(),
        }
    }
}

pub(crate) const MAX_COEFFS: usize = 13;
pub(crate) const MAX_SCALARS: usize = 5;

/// Unchecked pointer view of a [`ProblemState`], shared by every thread of
/// a run. Soundness rests on the tiling: concurrent writers never touch the
/// same element and readers only read levels whose writers have finished.
#[derive(Clone, Copy, Debug)]
pub struct RawFields {
    fields: [*mut f64; 2],
    coeffs: [*const f64; MAX_COEFFS],
    scalars: [f64; MAX_SCALARS],
    dj: usize,
    dk: usize,
}

unsafe impl Send for RawFields {}
unsafe impl Sync for RawFields {}

impl RawFields {
    /// View for computing absolute step `step`.
    #[inline]
    pub fn step(&self, step: u64) -> StepView {
        let cur = (step % 2) as usize;
        StepView {
            cur: self.fields[cur],
            next: self.fields[1 - cur],
            coeffs: self.coeffs,
            scalars: self.scalars,
            dj: self.dj,
            dk: self.dk,
        }
    }
}

/// Everything one kernel evaluation reads: the current level `cur`, the
/// destination `next` (holding the level before `cur`), coefficients and
/// strides.
#[derive(Clone, Copy, Debug)]
pub struct StepView {
    pub cur: *const f64,
    pub next: *mut f64,
    pub coeffs: [*const f64; MAX_COEFFS],
    pub scalars: [f64; MAX_SCALARS],
    pub dj: usize,
    pub dk: usize,
}

#[inline(always)]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-based uniform draw in `[0, 1)` keyed on its coordinates.
pub fn cell_random(seed: u64, field: u64, k: u64, j: u64, i: u64) -> f64 {
    const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
    let mut h = mix64(seed.wrapping_add(GOLDEN));
    for word in [field, k, j, i] {
        h = mix64(h ^ word.wrapping_add(GOLDEN).wrapping_mul(GOLDEN));
    }
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        let a = init_state(StencilKind::Const7pt, GridSpec::cube(8), 0).unwrap();
        let b = init_state(StencilKind::Const7pt, GridSpec::cube(8), 0).unwrap();
        assert_eq!(a.field(0).len(), b.field(0).len());
        assert!(a.field(0).iter().zip(b.field(0)).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(a.field(1).iter().zip(b.field(1)).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(a.scalars, b.scalars);
    }

    #[test]
    fn seed_changes_state() {
        let a = init_state(StencilKind::Const7pt, GridSpec::cube(8), 0).unwrap();
        let b = init_state(StencilKind::Const7pt, GridSpec::cube(8), 1).unwrap();
        assert!(a.field(0).iter().zip(b.field(0)).any(|(x, y)| x != y));
    }

    #[test]
    fn var25_allocates_thirteen_coefficient_fields() {
        let s = init_state(StencilKind::Var25pt, GridSpec::cube(16), 7).unwrap();
        assert_eq!(s.coeffs().len(), 13);
        assert!(s.coeffs().iter().all(|c| c.len() == s.layout().len()));
    }

    #[test]
    fn small_grid_rejected() {
        let err = init_state(StencilKind::Const25pt, GridSpec::cube(8), 0).unwrap_err();
        assert!(matches!(err, Error::InvalidGrid(_)));
        assert!(init_state(StencilKind::Const25pt, GridSpec::cube(9), 0).is_ok());
    }

    #[test]
    fn leading_bytes_counts_ghosts_and_padding() {
        let g = GridSpec::new(10, 9, 9).with_padding(3);
        assert_eq!(g.leading_bytes(1), (10 + 2 + 3) * 8);
        let l = Layout::new(&g, 1);
        assert_eq!(l.coords(l.index(4, 5, 6)), (4, 5, 6));
    }

    #[test]
    fn draws_are_in_unit_interval() {
        for n in 0..1000 {
            let x = cell_random(3, n % 7, n, n / 3, n / 11);
            assert!((0.0..1.0).contains(&x));
        }
    }
}
