//! Hybrid quantum-classical vision experiments.
//!
//! `quanvis` bundles the pieces that together form a small-data image
//! classification pipeline:
//!
//! * [`qsim`] — exact statevector simulation of ≤16-qubit circuits.
//! * [`quanv`] — quanvolutional preprocessing: image patches encoded through
//!   a fixed random circuit, Pauli-Z expectations becoming output channels.
//! * [`imaging`] — 9×9 region-grid split/label/stitch machinery for defect
//!   localization on mixed-resolution corpora.
//! * [`nn`] — a minimal trainable conv/dense stack with hand-derived
//!   gradients and Adam, enough to train matched QNN and CNN classifiers.
//! * [`harness`] — experiment orchestration: synthetic crack corpora,
//!   stage-1 and stage-2 comparison protocols, reports and plots.
//!
//! The `quanvis` binary exposes all of it as subcommands; see the book under
//! `book/` for a guided tour.

pub mod cli;
pub mod error;
pub mod harness;
pub mod imaging;
pub mod nn;
pub mod plot;
pub mod qsim;
pub mod quanv;

pub use error::{Error, Result};

/// The book chapters from `book/`, included as modules so every code block
/// runs under `cargo test --doc` and the guide cannot drift from the API.
pub mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/statevector.md")]
    pub mod statevector {}
    #[doc = include_str!("../../../book/src/quanvolution.md")]
    pub mod quanvolution {}
    #[doc = include_str!("../../../book/src/localization.md")]
    pub mod localization {}
    #[doc = include_str!("../../../book/src/training.md")]
    pub mod training {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    pub mod experiments {}
}
