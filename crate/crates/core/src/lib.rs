pub mod cli;
pub mod conditions;
pub mod determine;
pub mod error;
pub mod exprlang;
pub mod fracops;
pub mod iterate;
pub mod problem;
pub mod verify;

pub use error::{Error, Result};
