//! Behavioral diagnostics for question-answering-over-context models.
//!
//! The toolkit probes a model through a uniform [`adapter::Adapter`] interface
//! and measures how it generalizes to novel instances, how much of the question
//! it actually uses, and whether its answers change with the image.

pub mod data;
pub mod adapter;
pub mod knn;
pub mod stats;
pub mod synth;
pub mod analysis;
pub mod report;
pub mod config;
pub mod pipeline;
