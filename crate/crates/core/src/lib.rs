//! Recurrent attention classifier for scientific abstracts: corpus cleaning,
//! TF-IDF token selection, embedding lookup, LSTM/GRU networks trained with
//! hand-written backpropagation, a two-level label hierarchy and evaluation.

pub mod corpus;
pub mod embed;
mod error;
pub mod eval;
pub mod features;
pub mod hierarchy;
pub mod net;
pub mod pipeline;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};
