//! Command-line driver for `aopt-core`: run configurations, file formats,
//! random test directions and a thread-pool batch evaluator.

pub mod commands;
pub mod config;
pub mod directions;
pub mod error;
pub mod evaluator;
pub mod formats;
pub mod scenario;
