//! Language-guided end-to-end driving on synthetic scenes.

pub mod config;
pub mod dataset;
pub mod describer;
pub mod error;
pub mod evalkit;
pub mod heads;
pub mod itg;
pub mod model;
pub mod nn;
pub mod optim;
pub mod pipeline;
pub mod render;
pub mod scene;
pub mod scenegen;
pub mod tokenizer;
pub mod topology;
pub mod vl_align;

pub use error::{Error, Result};
