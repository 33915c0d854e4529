//! Guideline-driven clinical decision support with language models.
//!
//! The guideline is a binary decision tree over yes/no clinical questions.
//! Four strategies turn a free-text patient description into one of its
//! leaf recommendations, and the evaluation module benchmarks them.

pub mod assets;
pub mod dataset;
pub mod evaluation;
pub mod guideline;
pub mod llm;
pub mod prompt;
pub mod strategies;
