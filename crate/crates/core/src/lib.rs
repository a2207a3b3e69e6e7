//! Two-level stochastic blockmodel for undirected binary networks.
//!
//! Communities group vertices; supercommunities group communities. Inference
//! is by a Pólya-Gamma Gibbs sampler ([`mcmc`]) or coordinate-ascent
//! variational Bayes under a Jaakkola–Jordan bound ([`vb`]).

pub mod error;
pub mod mcmc;
pub mod model;
pub mod network;
pub mod prior_diag;
pub mod simgen;
pub mod special;
pub mod spectral;
pub mod summaries;
pub mod tri;
pub mod vb;

pub use error::{Error, Result};
pub use network::{BlockStats, Network, NetworkFormat};
pub use tri::TriMatrix;
