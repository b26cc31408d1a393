pub mod corpus;
pub mod downstream;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod ndtensor;
pub mod objectives;
pub mod seeding;
pub mod unlearn;

#[cfg(test)]
mod testutil;

pub use error::{Result, SaniError};
