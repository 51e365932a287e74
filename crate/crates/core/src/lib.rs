//! Riesz-type potential operators with upper doubling measures on finite
//! quasi-metric measure spaces.

pub mod config;
pub mod error;
pub mod numeric;
pub mod lebesgue;
pub mod measure;
pub mod operators;
pub mod space;
pub mod two_component;
pub mod verify;

pub use error::{Error, Result};
