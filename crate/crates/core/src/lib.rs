//! Towers, transfer operators and linear response for smooth unimodal maps.

pub mod acceptance;
pub mod cli;
pub mod config;
pub mod error;
pub mod measure;
pub mod oracle;
pub mod presets;
pub mod profile;
pub mod recurrence;
pub mod response;
pub mod tce;
pub mod tower;
pub mod transfer;
pub mod unimodal;

pub use error::{Error, Result};
