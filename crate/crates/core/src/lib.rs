pub mod analysis;
pub mod attractor;
pub mod continua;
pub mod decomp;
pub mod error;
pub mod geometry;
pub mod maps;
pub mod pnm;
pub mod quotient;

pub use error::{Error, Result};
