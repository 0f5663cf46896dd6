//! Semi-supervised training of attention encoder-decoder models with data
//! augmentation.
//!
//! The crate contains everything needed to run FixMatch- and Noisy
//! Student-style pseudo-labeling experiments for sequence-to-sequence
//! recognition at desk scale: a small autodiff engine ([`numerics`]), the
//! encoder-decoder ([`model`]), SpecAugment masking ([`augment`]), losses and
//! the training loop ([`train`]), pseudo-label generation ([`pseudolabel`]),
//! beam search ([`decode`]), scoring ([`metrics`]), a synthetic corpus
//! ([`synthdata`]) and the experiment harness ([`experiment`]).

pub mod augment;
mod binio;
pub mod config;
pub mod decode;
pub mod experiment;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod pseudolabel;
pub mod seed;
pub mod sequence;
pub mod synthdata;
pub mod train;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
