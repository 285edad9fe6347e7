//! Multi-view sentence representation learning.
//!
//! Two encoders read the same sentence: a bidirectional GRU (the `f` view)
//! and a linear projection averaged over words (the `g` view). They are
//! trained jointly so that each view of a sentence agrees with the other view
//! of its neighbouring sentences, using an in-batch softmax over cosine
//! agreements with a trainable temperature.

pub mod ablate;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod encoders;
pub mod error;
pub mod evalkit;
pub mod model;
pub mod numerics;
pub mod objective;
pub mod postprocess;
pub mod synthetic;
pub mod train;
pub mod wordvec;

pub use error::{Error, Result};
