//! Author gender profiling from bleached text.
//!
//! Raw tweets are rewritten into abstract per-token representations
//! ([`bleach`]), turned into sparse n-gram features ([`features`]) and
//! classified with a linear SVM ([`linear`]). The [`eval`] module runs the
//! in-language cross-validation and cross-lingual transfer experiments, the
//! feature report and Fleiss' kappa; [`embed`] provides the aligned
//! word-embedding baseline and [`synth`] generates seeded test corpora.

pub mod bleach;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod eval;
pub mod exec;
pub mod features;
pub mod linear;
pub mod synth;

pub use error::{Error, Result};
