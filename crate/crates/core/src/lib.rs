pub mod benchgen;
pub mod cli;
pub mod conic;
pub mod evalsim;
pub mod error;
pub mod freqdata;
pub mod io;
pub mod polysys;
pub mod synth;

pub use error::{Error, Result};
