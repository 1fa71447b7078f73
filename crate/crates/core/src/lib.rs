//! Benchmark factory and evaluation harness for stacked-object physics
//! scenes: seeded scene generation with ground-truth stability labels, QA
//! dataset emission, physical-context description builders (Human-Narration
//! and Structured-Physics), a chat-completion evaluation harness with
//! binary reframing and stratified metrics, and triage routing between the
//! two context builders.

pub mod config;
pub mod context;
pub mod error;
pub mod eval;
pub mod gen;
pub mod geom;
pub mod manifest;
pub mod pipeline;
pub mod qa;
pub mod scene;
pub mod sim;
pub mod triage;
pub mod util;

pub use error::{Error, Result};
