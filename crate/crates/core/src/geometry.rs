//! Diamond tiling of the y-t plane and wavefront geometry along z.
//!
//! A diamond of width `D_w` for radius `R` has half-height
//! `h = D_w / (2R)`. Measured from its bottom vertex, step `s` covers
//! `2R(s + 1)` cells while widening (`s < h`, the last of these is the
//! waist of width `D_w`) and `2R(2h - 1 - s)` cells while narrowing, for
//! `2h - 1` steps in total. Rows of diamonds repeat every `h` steps and
//! alternate a `D_w / 2` shift in y, which tiles the plane exactly.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Z-extent of the wavefront window: `D_w - 2R + N_F`.
pub fn wavefront_width(d_w: usize, n_f: usize, radius: usize) -> Result<usize> {
    if radius == 0 || n_f == 0 || d_w < 2 * radius {
        return Err(Error::config(format!(
            "wavefront needs D_w >= 2R and N_F >= 1 (D_w={d_w}, N_F={n_f}, R={radius})"
        )));
    }
    let w = d_w + n_f - 2 * radius;
    if w == 0 {
        return Err(Error::config("wavefront width is zero"));
    }
    Ok(w)
}

/// Wavefront tile parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WavefrontSpec {
    /// Cells the wavefront advances in z per pipeline position.
    pub n_f: usize,
    /// Z-extent of the wavefront window (`W_w`).
    pub width: usize,
}

impl WavefrontSpec {
    pub fn new(d_w: usize, n_f: usize, radius: usize) -> Result<Self> {
        Ok(Self {
            n_f,
            width: wavefront_width(d_w, n_f, radius)?,
        })
    }
}

/// Width and slope of a diamond.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DiamondShape {
    pub width: usize,
    pub radius: usize,
}

impl DiamondShape {
    pub fn new(width: usize, radius: usize) -> Result<Self> {
        if radius == 0 {
            return Err(Error::config("stencil radius must be positive"));
        }
        if width < 2 * radius || !width.is_multiple_of(2 * radius) {
            return Err(Error::config(format!(
                "diamond width {width} must be a positive multiple of 2R={}",
                2 * radius
            )));
        }
        Ok(Self { width, radius })
    }

    /// Steps from the bottom vertex up to and including the waist.
    pub fn half_height(&self) -> usize {
        self.width / (2 * self.radius)
    }

    /// Time steps spanned by an unclipped diamond.
    pub fn height(&self) -> usize {
        2 * self.half_height() - 1
    }

    /// Half of the y-extent at step `s` above the bottom vertex.
    pub fn half_width_at(&self, s: usize) -> Option<usize> {
        let h = self.half_height();
        if s < h {
            Some(self.radius * (s + 1))
        } else if s < 2 * h - 1 {
            Some(self.radius * (2 * h - 1 - s))
        } else {
            None
        }
    }

    /// Lattice updates in one unclipped diamond per y-t plane.
    pub fn area(&self) -> usize {
        (0..self.height()).map(|s| 2 * self.half_width_at(s).unwrap()).sum()
    }
}

/// LUPs in one diamond extruded over `nz` planes: `N_z·D_w²/(2R)`.
pub fn extruded_tile_volume(d_w: usize, radius: usize, nz: usize) -> u64 {
    (nz * d_w * d_w / (2 * radius)) as u64
}

/// Which sides of a tile are cut by the domain or the time range.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clip {
    pub bottom: bool,
    pub top: bool,
    pub left: bool,
    pub right: bool,
}

impl Clip {
    pub fn any(&self) -> bool {
        self.bottom || self.top || self.left || self.right
    }
}

/// One (possibly clipped) diamond of a tessellation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DiamondTile {
    pub id: usize,
    pub row: usize,
    pub col: usize,
    /// Y coordinate of the symmetry axis (interior coordinates, may lie on
    /// or beyond the domain edge).
    pub y_center: i64,
    /// Time of the unclipped bottom vertex (may be negative).
    pub t_bottom: i64,
    /// First time step executed.
    pub t_begin: usize,
    /// One past the last time step executed.
    pub t_end: usize,
    pub shape: DiamondShape,
    pub ny: usize,
    pub clip: Clip,
}

impl DiamondTile {
    pub fn steps(&self) -> usize {
        self.t_end - self.t_begin
    }

    /// Y-range of the unclipped diamond at time `t`.
    pub fn unclipped_bounds(&self, t: i64) -> Option<(i64, i64)> {
        let s = t - self.t_bottom;
        if s < 0 {
            return None;
        }
        let hw = self.shape.half_width_at(s as usize)? as i64;
        Some((self.y_center - hw, self.y_center + hw))
    }

    /// Y-range `[yb, ye)` executed at time step `t`, clipped to the domain.
    /// Empty ranges are returned as `(x, x)`.
    pub fn y_bounds(&self, t: usize) -> Result<(usize, usize)> {
        if !(self.t_begin..self.t_end).contains(&t) {
            return Err(Error::Range(format!(
                "time step {t} outside tile {} span [{}, {})",
                self.id, self.t_begin, self.t_end
            )));
        }
        let (lo, hi) = self
            .unclipped_bounds(t as i64)
            .expect("clipped span lies inside the diamond");
        let ny = self.ny as i64;
        let lo = lo.clamp(0, ny) as usize;
        let hi = hi.clamp(0, ny) as usize;
        Ok((lo, hi.max(lo)))
    }

    /// The y coordinate splitting the tile into its two halves, clipped.
    pub fn y_split(&self) -> usize {
        self.y_center.clamp(0, self.ny as i64) as usize
    }

    /// Y-t points covered by the tile.
    pub fn area(&self) -> usize {
        (self.t_begin..self.t_end)
            .map(|t| {
                let (a, b) = self.y_bounds(t).unwrap();
                b - a
            })
            .sum()
    }
}

/// Same as [`DiamondTile::y_bounds`].
pub fn diamond_y_bounds(tile: &DiamondTile, t: usize) -> Result<(usize, usize)> {
    tile.y_bounds(t)
}

/// All tiles covering `y ∈ [0, ny) × t ∈ [0, steps)` and their dependencies.
#[derive(Clone, Debug)]
pub struct DiamondTessellation {
    pub ny: usize,
    pub steps: usize,
    pub shape: DiamondShape,
    pub tiles: Vec<DiamondTile>,
    /// `deps[id]`: tiles that must complete before `id` starts.
    pub deps: Vec<Vec<usize>>,
    /// `dependents[id]`: tiles listing `id` among their deps.
    pub dependents: Vec<Vec<usize>>,
}

/// Tiles the y-t plane with diamonds. Requires `D_w mod 2R = 0` and
/// `Ny mod D_w = 0`; `steps` is arbitrary and the last row is cut flat.
pub fn build_tessellation(ny: usize, steps: usize, d_w: usize, radius: usize) -> Result<DiamondTessellation> {
    let shape = DiamondShape::new(d_w, radius)?;
    if ny == 0 || !ny.is_multiple_of(d_w) {
        return Err(Error::config(format!(
            "Ny={ny} must be a positive multiple of the diamond width {d_w}"
        )));
    }

    let h = shape.half_height() as i64;
    let height = shape.height() as i64;
    let mut tiles = Vec::new();
    let mut deps = Vec::new();
    let mut by_pos: HashMap<(usize, i64), usize> = HashMap::new();

    let mut row = 0usize;
    while (row as i64 - 1) * h < steps as i64 {
        let t_bottom = (row as i64 - 1) * h;
        let t_begin = t_bottom.max(0);
        let t_end = (t_bottom + height).min(steps as i64);
        if t_begin < t_end {
            let offset = if row.is_multiple_of(2) { 0 } else { d_w as i64 / 2 };
            let mut col = 0usize;
            let mut y_center = offset;
            while y_center <= ny as i64 {
                let id = tiles.len();
                let reach = (y_center - d_w as i64 / 2, y_center + d_w as i64 / 2);
                let tile = DiamondTile {
                    id,
                    row,
                    col,
                    y_center,
                    t_bottom,
                    t_begin: t_begin as usize,
                    t_end: t_end as usize,
                    shape,
                    ny,
                    clip: Clip {
                        bottom: t_begin > t_bottom,
                        top: t_end < t_bottom + height,
                        left: reach.0 < 0,
                        right: reach.1 > ny as i64,
                    },
                };
                let below = if row == 0 {
                    Vec::new()
                } else {
                    [y_center - d_w as i64 / 2, y_center + d_w as i64 / 2]
                        .iter()
                        .filter_map(|c| by_pos.get(&(row - 1, *c)).copied())
                        .collect()
                };
                by_pos.insert((row, y_center), id);
                tiles.push(tile);
                deps.push(below);
                col += 1;
                y_center += d_w as i64;
            }
        }
        row += 1;
    }

    let mut dependents = vec![Vec::new(); tiles.len()];
    for (id, ds) in deps.iter().enumerate() {
        for &d in ds {
            dependents[d].push(id);
        }
    }

    Ok(DiamondTessellation {
        ny,
        steps,
        shape,
        tiles,
        deps,
        dependents,
    })
}

impl DiamondTessellation {
    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    /// Number of tile rows actually present.
    pub fn rows(&self) -> usize {
        self.tiles.iter().map(|t| t.row + 1).max().unwrap_or(0)
    }

    /// Tile containing `(y, t)`, found by scanning.
    pub fn owner(&self, y: usize, t: usize) -> Option<usize> {
        self.tiles.iter().find_map(|tile| {
            let (a, b) = tile.y_bounds(t).ok()?;
            (a..b).contains(&y).then_some(tile.id)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent point-in-diamond test: the diamond is the set of
    /// `(y, t)` whose distance from the axis, in half-cells, fits under the
    /// two slopes meeting at the waist.
    fn in_diamond(d_w: i64, r: i64, y: i64, s: i64) -> bool {
        let h = d_w / (2 * r);
        if s < 0 || s > 2 * h - 2 {
            return false;
        }
        // distance of the cell centre y + 1/2 from the axis, doubled
        let dist2 = (2 * y + 1).abs();
        let lower = 2 * r * (s + 1);
        let upper = 2 * r * (2 * h - 1 - s);
        dist2 < lower.min(upper)
    }

    fn brute_width(d_w: usize, r: usize, s: usize) -> usize {
        let d = d_w as i64;
        (-d..d).filter(|&y| in_diamond(d, r as i64, y, s as i64)).count()
    }

    #[test]
    fn wavefront_width_examples() {
        assert_eq!(wavefront_width(8, 1, 1).unwrap(), 7);
        assert_eq!(wavefront_width(16, 4, 4).unwrap(), 12);
        for r in 1..5 {
            assert_eq!(wavefront_width(2 * r, 1, r).unwrap(), 1);
        }
        assert!(wavefront_width(8, 0, 1).is_err());
        assert!(wavefront_width(4, 1, 4).is_err());
    }

    #[test]
    fn diamond_widths_match_brute_force() {
        for (d_w, r) in [(8, 1), (12, 1), (16, 4), (24, 4), (2, 1), (8, 4)] {
            let shape = DiamondShape::new(d_w, r).unwrap();
            for s in 0..shape.height() {
                assert_eq!(2 * shape.half_width_at(s).unwrap(), brute_width(d_w, r, s), "D_w={d_w} R={r} s={s}");
            }
            assert_eq!(shape.half_width_at(shape.height()), None);
        }
    }

    #[test]
    fn waist_bottom_and_shoulder_widths() {
        let shape = DiamondShape::new(8, 1).unwrap();
        let tile = DiamondTile {
            id: 0,
            row: 1,
            col: 0,
            y_center: 16,
            t_bottom: 0,
            t_begin: 0,
            t_end: shape.height(),
            shape,
            ny: 64,
            clip: Clip::default(),
        };
        let width = |t| {
            let (a, b) = diamond_y_bounds(&tile, t).unwrap();
            b - a
        };
        assert_eq!(width(0), 2);
        assert_eq!(width(3), 8);
        assert_eq!(width(4), 6);
        assert!(matches!(diamond_y_bounds(&tile, 7), Err(Error::Range(_))));
    }

    #[test]
    fn slope_law() {
        for (d_w, r) in [(8, 1), (16, 4), (32, 4)] {
            let shape = DiamondShape::new(d_w, r).unwrap();
            let h = shape.half_height();
            for s in 0..shape.height() - 1 {
                let a = 2 * shape.half_width_at(s).unwrap() as i64;
                let b = 2 * shape.half_width_at(s + 1).unwrap() as i64;
                let expect = if s + 1 < h { 2 * r as i64 } else { -2 * r as i64 };
                assert_eq!(b - a, expect);
            }
        }
    }

    #[test]
    fn volume_examples() {
        assert_eq!(extruded_tile_volume(8, 1, 100), 3200);
        assert_eq!(extruded_tile_volume(16, 4, 1), 32);
        for r in 1..5 {
            assert_eq!(extruded_tile_volume(2 * r, r, 7), (2 * r * 7) as u64);
        }
        for (d_w, r) in [(8, 1), (16, 4), (48, 4)] {
            let shape = DiamondShape::new(d_w, r).unwrap();
            assert_eq!(shape.area() as u64, extruded_tile_volume(d_w, r, 1));
        }
    }

    #[test]
    fn rejects_bad_divisibility() {
        assert!(build_tessellation(30, 8, 8, 1).is_err());
        assert!(build_tessellation(32, 8, 6, 4).is_err());
        assert!(build_tessellation(32, 8, 7, 1).is_err());
    }

    #[test]
    fn empty_time_range_gives_no_tiles() {
        let tess = build_tessellation(32, 0, 8, 1).unwrap();
        assert!(tess.is_empty());
    }

    #[test]
    fn exact_cover_small() {
        let tess = build_tessellation(32, 16, 8, 1).unwrap();
        for t in 0..16 {
            for y in 0..32 {
                let n = tess
                    .tiles
                    .iter()
                    .filter(|tile| tile.y_bounds(t).map(|(a, b)| (a..b).contains(&y)).unwrap_or(false))
                    .count();
                assert_eq!(n, 1, "(y={y}, t={t})");
            }
        }
    }

    #[test]
    fn single_column_domain() {
        // Ny = D_w, one half-height of steps: the row-0 diamond is cut into
        // two edge halves and the row-1 diamond shows its lower half.
        let tess = build_tessellation(8, 4, 8, 1).unwrap();
        assert_eq!(tess.len(), 3);
        assert!(tess.tiles.iter().all(|t| t.clip.any()));
        assert_eq!(tess.tiles.iter().map(|t| t.area()).sum::<usize>(), 32);
    }

    #[test]
    fn interior_tiles_have_two_parents() {
        let tess = build_tessellation(64, 32, 8, 1).unwrap();
        for tile in &tess.tiles {
            if tile.row > 0 && !tile.clip.left && !tile.clip.right {
                assert_eq!(tess.deps[tile.id].len(), 2, "{tile:?}");
            }
            if tile.row <= 1 {
                assert!(tess.deps[tile.id].is_empty() || tile.row == 1);
            }
        }
    }
}
