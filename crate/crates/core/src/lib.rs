//! Bayesian multinomial regression by permuted and augmented stick breaking.
//!
//! Any binary classifier with a Bernoulli likelihood can serve as the stick
//! link; this crate provides Pólya-Gamma logistic, robit, SVM
//! pseudo-likelihood, and multinomial softplus links, each with a Gibbs
//! update, and a Metropolis-Hastings move over the category-to-stick mapping.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod links;
pub mod rng;
pub mod sampling;
pub mod softplus;
pub mod stickbreak;

pub use error::{DataError, ModelError};
