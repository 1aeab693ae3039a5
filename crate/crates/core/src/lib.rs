//! Emoji prediction for short social-media texts.
//!
//! The pipeline: [`corpus`] loads tab-separated splits, [`tokenizer`]
//! segments tweets and maps tokens to ids, [`models`] holds four
//! classifiers (feedforward, CNN, transformer encoder and a multiscale
//! attention head), [`training`] runs the epoch loop with focal loss from
//! [`losses`] and Adam/AdamW from [`optim`], and [`metrics`] produces
//! per-class reports.

pub mod corpus;
mod error;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod optim;
pub mod presets;
pub mod tokenizer;
pub mod training;

pub use error::{Error, Result};
pub use tensor;
