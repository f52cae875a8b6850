//! Harness for LLM-driven library migration of client projects.

pub mod gateway;
pub mod prompt;
pub mod workspace;
pub mod analyzer;
pub mod toolchain;
pub mod experiment;
