//! Neural reflectance fields.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod encoding;
pub mod error;
pub mod export;
pub mod field;
pub mod geometry;
pub mod image;
pub mod lightcache;
pub mod mlp;
pub mod raymarch;
pub mod reflectance;
pub mod report;
pub mod scenegen;
pub mod trainer;
pub mod validate;

pub use error::{Error, Result};
