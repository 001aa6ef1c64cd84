//! Evaluation toolkit for persona-conditioned language-model "twins" of
//! congresspersons.
//!
//! The crate covers the full analysis loop:
//!
//! - [`corpus`]: tweets, roster, roll-call votes and bill question sets.
//! - [`providers`]: embedding / generation contracts, an HTTP client and
//!   deterministic mocks.
//! - [`retrieval`]: exact cosine nearest-neighbour search (the RAG backbone).
//! - [`prompts`]: prompt templates and refusal handling.
//! - [`numerics`]: classical MDS, elbow selection and Fisher's linear discriminant.
//! - [`stats`]: k-NN cross-validation, baselines, Kendall's tau, Wilcoxon, OLS.
//! - [`turing`]: the statistical Turing test on generated tweets.
//! - [`dkps`]: data kernel perspective spaces and roll-call vote prediction.
//! - [`flipscore`]: per-senator flip scores and their validation.
//! - [`topics`]: topic labelling and a multinomial logistic classifier.
//! - [`synthetic`]: seeded synthetic corpora for tests and demos.

pub mod corpus;
pub mod dkps;
pub mod error;
pub mod flipscore;
pub mod numerics;
pub mod prompts;
pub mod providers;
pub mod retrieval;
pub mod stats;
pub mod synthetic;
pub mod topics;
pub mod turing;
pub mod util;

pub use error::{Error, ErrorKind, Result};
