pub mod error;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod gicp;
pub mod graph;
pub mod io;
pub mod pipeline;
pub mod plot;
pub mod reloc;
pub mod semantics;
pub mod sim;

pub use error::{Error, Result};
