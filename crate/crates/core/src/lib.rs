//! Dense linear-algebra verification of bipartite classical-communication
//! classes of quantum operations.

pub mod causal;
pub mod channels;
pub mod cli;
pub mod composition;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod lp;
pub mod numerics;
pub mod procmat;
pub mod selftest;
pub mod sep;

pub use error::{Error, Result};
