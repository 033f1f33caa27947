pub mod error;
pub mod quadrature;
pub mod special;

pub mod asymptotics;
pub mod dynamics;
pub mod energy;
pub mod fitting;
pub mod info_flow;
pub mod scenario;
pub mod spectral;

pub use error::{Error, Result};
