//! Adaptive correlated Metropolis-Hastings.
//!
//! The sampler runs a trial chain that feeds a history of states to a
//! Student-t mixture fitter, and a main chain whose proposal composes
//! independent, correlated, block and random-walk moves built from that
//! mixture. See the README for an overview of the modules.

pub mod arwmh;
pub mod chain;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod fit;
pub mod kernels;
pub mod mixture_t;
pub mod smc;
pub mod special;
pub mod targets;

pub use chain::{run, ChainOutput, ChainStart, RunConfig, RunOutput};
pub use error::{Error, Result};
pub use kernels::{Branch, ProposalConfig, RhoLaw};
pub use mixture_t::{Partition, StudentT, TMixture};
pub use targets::{Envelope, Target};
