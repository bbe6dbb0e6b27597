//! Semi-self-supervised ICD coding over clinical text notes.
//!
//! A small annotated set of notes trains a clinical feature extractor; the
//! extractor then imputes question/answer features for notes that only carry
//! an ICD label, and an L1-regularized multinomial logistic regression is
//! trained on the union. The crate provides every piece of that loop at desk
//! scale:
//!
//! - [`text`]: tokenization with offsets and PII scrubbing,
//! - [`corpus`]: the question catalog, synthetic labeled notes and splits,
//! - [`extractor`]: oracle, noisy and trainable lexicon extractors,
//! - [`features`]: design-matrix encoding and tier masks,
//! - [`metrics`]: span F1, MCC, class reports and confidence intervals,
//! - [`classifier`]: the proximal-gradient solver and linear SHAP,
//! - [`experiments`]: the pipeline, tier evaluation and augmentation study.
//!
//! The guide in `book/` walks through each stage; its code blocks are
//! compiled and run as doc-tests of this crate.

pub mod classifier;
pub mod corpus;
pub mod digest;
pub mod error;
pub mod experiments;
pub mod extractor;
pub mod features;
pub mod metrics;
pub mod text;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/extractor.md")]
    mod extractor {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/classifier.md")]
    mod classifier {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
