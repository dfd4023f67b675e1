//! Dataset and result I/O, batch fitting and evaluation pipelines for
//! `pose-forge`, and the pieces behind the `pose-forge` command line tool.

pub mod depth;
pub mod error;
pub mod eval;
pub mod fit;
pub mod ply;
pub mod predictions;
pub mod results;
pub mod scene;
pub mod symmetry_io;
pub mod toy;

pub use error::{HarnessError, Result};
