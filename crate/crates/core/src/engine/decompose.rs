use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Threads cooperating on one tile: `T_x · T_y · T_z` spatial threads
/// times `T_c` component threads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ThreadGroupShape {
    pub tx: usize,
    pub ty: usize,
    pub tz: usize,
    #[serde(default = "one")]
    pub tc: usize,
}

fn one() -> usize {
    1
}

impl ThreadGroupShape {
    pub const SINGLE: ThreadGroupShape = ThreadGroupShape {
        tx: 1,
        ty: 1,
        tz: 1,
        tc: 1,
    };

    pub fn new(tx: usize, ty: usize, tz: usize) -> Self {
        Self { tx, ty, tz, tc: 1 }
    }

    pub fn size(&self) -> usize {
        self.tc * self.tx * self.ty * self.tz
    }

    pub fn validate(&self) -> Result<()> {
        if self.tx == 0 || self.tz == 0 || self.tc == 0 {
            return Err(Error::config(format!("thread group {self} has a zero dimension")));
        }
        if !(1..=2).contains(&self.ty) {
            return Err(Error::config(format!("thread group {self}: T_y must be 1 or 2")));
        }
        Ok(())
    }
}

impl fmt::Display for ThreadGroupShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.tx, self.ty, self.tz)?;
        if self.tc != 1 {
            write!(f, "x{}", self.tc)?;
        }
        Ok(())
    }
}

/// Parses `TxxTyxTz` or `TxxTyxTzxTc`.
impl FromStr for ThreadGroupShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts = s
            .split(['x', 'X', ','])
            .map(|p| p.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| Error::Parse(format!("thread group `{s}` is not TxxTyxTz")))?;
        let shape = match parts[..] {
            [tx, ty, tz] => Self::new(tx, ty, tz),
            [tx, ty, tz, tc] => Self { tx, ty, tz, tc },
            _ => return Err(Error::Parse(format!("thread group `{s}` is not TxxTyxTz"))),
        };
        shape.validate()?;
        Ok(shape)
    }
}

/// Which part of a tile's y-range a thread updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum YPart {
    Whole,
    /// Below the split; the lower edge moves with the slope.
    Lower,
    /// At or above the split; the upper edge moves with the slope.
    Upper,
}

impl YPart {
    /// Sub-range of `[yb, ye)` for this part, given the fixed split point.
    pub fn range(self, yb: usize, ye: usize, split: usize) -> (usize, usize) {
        let mid = split.clamp(yb, ye);
        match self {
            YPart::Whole => (yb, ye),
            YPart::Lower => (yb, mid),
            YPart::Upper => (mid, ye),
        }
    }
}

/// Extent of a tile as seen by the decomposition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TileBounds {
    /// X-range in array coordinates.
    pub x: (usize, usize),
    /// Wavefront z-block size `bs_z`.
    pub bs_z: usize,
}

/// One thread's share of a tile.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ThreadAssignment {
    pub tid: usize,
    pub tid_x: usize,
    pub tid_y: usize,
    pub tid_z: usize,
    /// `[ib, ie)` along x.
    pub x: (usize, usize),
    pub y_part: YPart,
    /// Per-step movement of the (lower, upper) y edges: `(R, 0)` for the
    /// lower half, `(0, R)` for the upper, `(R, R)` for a whole range.
    pub y_inc: (usize, usize),
    /// `[zbi, zei)` within the z-block.
    pub z: (usize, usize),
}

/// Splits a tile among the threads of `shape`.
///
/// Thread ids follow `tid = tid_z·(T_x·T_y) + tid_y·T_x + tid_x`. The
/// x-range is split into near-equal parts with the remainder spread over
/// the first threads; the y-range is halved at the tile axis when
/// `T_y = 2`; z-blocks are cut into `T_z` equal chunks.
pub fn decompose(bounds: &TileBounds, shape: &ThreadGroupShape, radius: usize) -> Result<Vec<ThreadAssignment>> {
    shape.validate()?;
    if shape.tc != 1 {
        return Err(Error::config(format!(
            "T_c={} but scalar stencils have one component per cell",
            shape.tc
        )));
    }
    let (xb, xe) = bounds.x;
    let nx = xe.saturating_sub(xb);
    if nx < shape.tx {
        return Err(Error::config(format!("{} x-threads for {nx} x-cells", shape.tx)));
    }
    if bounds.bs_z < shape.tz || !bounds.bs_z.is_multiple_of(shape.tz) {
        return Err(Error::config(format!(
            "z-block of {} cells cannot be split evenly among {} threads",
            bounds.bs_z, shape.tz
        )));
    }

    let q = nx / shape.tx;
    let rem = nx % shape.tx;
    let chunk = bounds.bs_z / shape.tz;
    let mut out = Vec::with_capacity(shape.size());
    for tid in 0..shape.size() {
        let tid_x = tid % shape.tx;
        let tid_y = (tid / shape.tx) % shape.ty;
        let tid_z = tid / (shape.tx * shape.ty);
        let (ib, ie) = if tid_x < rem {
            let ib = xb + tid_x * (q + 1);
            (ib, ib + q + 1)
        } else {
            let ib = xb + rem * (q + 1) + (tid_x - rem) * q;
            (ib, ib + q)
        };
        let (y_part, y_inc) = match (shape.ty, tid_y) {
            (1, _) => (YPart::Whole, (radius, radius)),
            (_, 0) => (YPart::Lower, (radius, 0)),
            _ => (YPart::Upper, (0, radius)),
        };
        out.push(ThreadAssignment {
            tid,
            tid_x,
            tid_y,
            tid_z,
            x: (ib, ie),
            y_part,
            y_inc,
            z: (chunk * tid_z, chunk * (tid_z + 1)),
        });
    }
    Ok(out)
}
