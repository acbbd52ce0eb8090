pub mod bounds;
pub mod curves;
pub mod error;
pub mod exposure;
pub mod fva;
pub mod instruments;
pub mod mc;
pub mod models;
pub mod numerics;
pub mod par;
pub mod sensitivities;

pub use error::{Error, Result};
