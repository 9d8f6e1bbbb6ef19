//! Streaming speech-processing runtime and simulator.
//!
//! A deterministic scripted model stands in for an encoder-decoder speech
//! recognizer so that the serving loop can be exercised end to end: sliding
//! windows with LocalAgreement-2 confirmation, reference-guided beam pruning,
//! a hush-word input policy with a FLOPs cost model, and a dual-executor
//! pipelined schedule with an allocation profiler.

pub mod costmodel;
pub mod decoder;
pub mod error;
mod hashing;
pub mod hush;
pub mod metrics;
pub mod model;
pub mod par;
pub mod pipeline;
pub mod runner;
pub mod scenario;
pub mod streaming;
pub mod types;

pub use error::{Error, Result};
