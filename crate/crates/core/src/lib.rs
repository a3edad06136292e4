//! Feature-entropy regularization for multimodal encoders, plus the tooling
//! needed to study it at desk scale.
//!
//! The crate is `no_std` and only needs `alloc`. It contains:
//!
//! - [`matrix`] and [`linalg`]: a small dense `f64` matrix type with Cholesky,
//!   cyclic Jacobi and Gram-based singular values.
//! - [`rng`]: a seeded, reproducible random stream.
//! - [`mer`]: the marginal (variance-floor) and spectral (correlation
//!   log-determinant) entropy losses with hand-derived gradients.
//! - [`diagnostics`]: RankMe, CKA, Procrustes similarity, class-conditional
//!   alignment and linear probes.
//! - [`net`]: a deterministic late-fusion MLP trainer with Adam.
//! - [`synth`]: a synthetic multimodal domain-generalization generator with a
//!   spurious cross-modal channel.
//! - [`study`]: the fusion-vs-regularized-vs-unimodal comparison built from the
//!   pieces above.
//!
//! File formats, the command line and timing live in the `merdg-lab` crate.
#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Error payloads are built with `format!` throughout, literal or not.
#![allow(clippy::useless_format)]

extern crate alloc;

pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod matrix;
pub mod mer;
pub mod net;
pub mod rng;
pub mod study;
pub mod synth;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use mer::{MerBreakdown, MerConfig};
pub use rng::SeededRng;
