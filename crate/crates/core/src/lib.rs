//! Exact length spectrum of the modular surface and its congruence covers.
//!
//! Length multiplicities are computed from class numbers of indefinite
//! binary quadratic forms: for each trace `t ≥ 3` the discriminants
//! `(t² − 4)/u²` over admissible `u` contribute `h(d)/j` weighted by the
//! subgroup's `M(t, u)`, and prime powers are deflated in exact rational
//! arithmetic. An independent word-enumeration oracle cross-checks the
//! result for the full modular group.

pub mod analysis;
pub mod arith;
pub mod cli;
pub mod error;
pub mod forms;
pub mod lfunc;
pub mod oracle;
mod serde_big;
pub mod spectrum;

pub use error::{Error, Result};
