//! Invariant manifolds of linear time-varying systems `dy/dt = Q(t) y`.
//!
//! A full-row-rank frame `Φ(t)` (optionally completed by `Φ₂(t)` to a
//! nonsingular stack) defines the projector `M(t) = Φ⁺(t)Φ(t)` and the two
//! subspaces `Mⁿ(t) = im M(t)` and `M^{m−n}(t) = ker M(t)`. The operator
//! `L(M, Q) = dM/dt + MQ − QM` decides which of them are invariant:
//!
//! * `L = 0`: both are invariant;
//! * `L M = 0`: `Mⁿ(t)` is invariant, and the system restricted to it is
//!   `dx/dt = P(t) x` with `P = (dΦ/dt + ΦQ)Φ⁺`;
//! * `L (E − M) = 0`: `M^{m−n}(t)` is invariant.
//!
//! Modules:
//! - [`matexpr`]: expression language for entries of `Q(t)`, `Φ(t)`, with
//!   exact symbolic derivatives.
//! - [`linalg`]: dense matrices, inversion, rank, pseudoinverses.
//! - [`manifold`]: projector frames and subspace checks.
//! - [`invariance`]: `L`, the three verdicts and the reduced matrix `P`.
//! - [`flow`]: RK4 fundamental matrices, drift and conjugacy checks.
//! - [`scenario`]: systems with known invariant structure, built by
//!   conjugating a block matrix through a time-dependent frame.
//! - [`config`]: the JSON config format shared with the CLI.

pub mod config;
mod error;
pub mod flow;
pub mod invariance;
pub mod linalg;
pub mod manifold;
pub mod matexpr;
pub mod scenario;

pub use error::Error;
pub use linalg::DenseMatrix;
pub use matexpr::{parse_expr, Expr, MatrixFunction};

pub type Result<T, E = Error> = std::result::Result<T, E>;
