pub mod dirichlet;
pub mod error;
pub mod fields;
pub mod params;
pub mod pvop;
pub mod weakform;
pub mod liouville;
pub mod quad;

pub use error::{Error, Result};
pub use params::Params;
pub use quad::{Estimate, QuadSpec};
