//! Mean-field variational inference for strongly log-concave targets through the lifted
//! convex problem over coordinatewise monotone transport maps, together with the
//! stability, sensitivity and Bernstein–von Mises bounds that accompany it.
//!
//! A product measure ν = T♯N(0, I_d) is stored as a [`transport::TransportMap`] on a
//! Gaussian quantile grid. [`solver::solve_lifted`] minimizes
//! F_V(T) = −Σᵢ∫log Tᵢ′ dρ₁ + ∫V∘T dρ over maps whose slopes lie in [1/√β, 1/√α].

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod applications;
pub mod error;
pub mod numerics;
pub mod oracle;
pub mod potentials;
pub mod sensitivity;
pub mod solver;
pub mod stability;
pub mod transport;

pub use error::{Error, Result};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Library version embedded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Hex SHA-256 of a serializable configuration plus a free-form tag.
pub fn config_hash<T: Serialize>(cfg: &T, tag: &str) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(cfg).unwrap_or_default());
    h.update(tag.as_bytes());
    hex::encode(h.finalize())
}
