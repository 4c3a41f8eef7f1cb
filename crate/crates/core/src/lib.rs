pub mod error;
pub mod math;
pub mod marginalize;
pub mod mediation;
pub mod regression;
pub mod sensitivity;
pub mod simulation;

pub use error::{Error, Result};
