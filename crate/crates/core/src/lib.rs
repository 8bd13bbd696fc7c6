pub mod covest;
pub mod dispersion;
pub mod elliptical;
pub mod error;
pub mod exec;
pub mod graphs;
pub mod gtests;
pub mod linalg;
pub mod quad;
pub mod rng;
pub mod study;

pub use error::{Error, Result};
