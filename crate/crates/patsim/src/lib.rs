pub mod api;
pub mod config;
pub mod engine;
pub mod error;
pub mod files;
pub mod parallel;
pub mod store;

pub use error::{Error, Result};
