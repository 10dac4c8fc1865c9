//! Sliver-free weighted Delaunay triangulations, well-separated dual
//! tessellations, nested refinement hierarchies, and finite boundary
//! combinatorics on flat tori, in exact rational arithmetic.
//!
//! The crate is organized as a pipeline:
//!
//! * [`pointset`]: separated and syndetic point sets on a periodic domain,
//!   with exact validators and generators.
//! * [`triangulation`]: weighted (regular) Delaunay triangulations via
//!   orthosphere emptiness, plus bottom-vertex subdivision of cells.
//! * [`sliver`]: weight assignment that removes flat simplices, following a
//!   forbidden-interval argument over one coordinate class at a time.
//! * [`dual`]: the piecewise-linear dual tessellation, its capacity and
//!   separation certificates, and boundary volume bounds.
//! * [`hierarchy`]: nested coarsenings built by thinning and re-running the
//!   pipeline at larger scales, with per-level certificates.
//! * [`af`]: the finite combinatorial structure extracted from a hierarchy
//!   (tuple maps, boundary sets, chain maps, and the induced relations).
//! * [`oracle`]: independent brute-force reimplementations used to
//!   cross-check the main algorithms on small instances.
//!
//! Everything authoritative is exact; floats appear only in exports and logs.

pub mod af;
pub mod dual;
pub mod error;
pub mod export;
pub mod hierarchy;
pub mod kernel;
pub mod num;
pub mod oracle;
pub mod pipeline;
pub mod pointset;
pub mod polytope;
pub mod report;
pub mod sliver;
pub mod torus;
pub mod triangulation;

pub use error::{GeomError, Result};
pub use num::Rat;

/// Stage tracing to stderr, enabled by setting `TESSERA_TRACE` in the
/// environment. Used by long-running builds to report progress; output is
/// diagnostic only and never part of an artifact.
pub(crate) fn trace(msg: impl FnOnce() -> String) {
    use std::sync::OnceLock;
    static ON: OnceLock<bool> = OnceLock::new();
    if *ON.get_or_init(|| std::env::var_os("TESSERA_TRACE").is_some()) {
        eprintln!("[trace] {}", msg());
    }
}
