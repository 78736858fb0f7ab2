//! Files, pipeline driver, synthetic data and the feedback session server
//! around [`insfuse_core`].

#![warn(missing_debug_implementations, rust_2018_idioms)]

pub mod config;
mod error;
pub mod io;
pub mod pipeline;
pub mod server;
pub mod session;
pub mod simulate;
pub mod synth;

pub use error::{Error, Result};
pub use insfuse_core as core;
