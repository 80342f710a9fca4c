//! Finite pointed sphere metric spaces and the Gaussian field they carry.
//!
//! * [`metric`]: exact spaces, Gram matrices, LDLᵀ membership certificates,
//!   float embeddings.
//! * [`geometry`]: type spheres over a finite set, rotations about an axis,
//!   the ε threshold, and certified connectedness witnesses.
//! * [`fraisse`]: strong amalgamation, random extensions, generic chains, and
//!   finite witnesses for the extension property.
//! * [`gaussian`]: the centered Gaussian field with covariance `⟨a, b⟩`,
//!   invariance and mixing instrumentation.
//! * [`orders`]: the random linear order obtained by sorting field values.

pub mod error;
pub mod fraisse;
pub mod gaussian;
pub mod geometry;
pub mod metric;
pub mod orders;
pub mod rational;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use metric::{
    certify_membership, embed, gram_from_distances, verify_isometry, EmbeddedSpace, GramMatrix,
    Membership, PartialIsometry, ScalarSquared, SpaceDistances,
};
pub use rational::SnapPolicy;
