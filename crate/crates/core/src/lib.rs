//! Multi-core wavefront diamond temporal blocking for 3-D stencils.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`] and [`stencil`]: field storage, the four corner-case
//!   operators and the naive sweep used as the correctness oracle.
//! * [`geometry`]: diamond tiles in the y-t plane and wavefront widths.
//! * [`engine`]: thread-group execution of extruded diamonds with
//!   interchangeable wavefront strategies.
//! * [`scheduler`]: the dependency-counting ready queue.
//! * [`models`]: cache block size, code balance, ECM and Roofline.
//! * [`tuner`]: thread-group enumeration and hill-climbing search.

pub mod engine;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod models;
pub mod registry;
pub mod scheduler;
pub mod stencil;
pub mod tuner;

pub use engine::{run, PerfReport, RunConfig, ThreadGroupShape, WavefrontVariant};
pub use error::{Error, Result};
pub use grid::{init_state, GridSpec, ProblemState};
pub use stencil::{naive_sweep, StencilKind};
