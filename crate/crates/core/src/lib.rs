pub mod annotate;
pub mod backend;
pub mod cli;
pub mod distill;
pub mod formats;
pub mod geometry;
pub mod matching;
pub mod metrics;
pub mod pipeline;
pub mod schema;
