pub mod epr;
pub mod error;
pub mod gaussian;
pub mod model;
pub mod montecarlo;
pub mod pulses;
pub mod quadrature;
pub mod spectral;

pub use error::{Error, Result};
