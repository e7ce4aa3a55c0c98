//! Per-layer likelihood-based modulation classification for
//! spatial-multiplexing MIMO, built on a punctured QR (WR) decomposition
//! that decouples one layer at a time, plus joint classification and
//! soft-output subspace detection.
//!
//! Module map:
//! - [`constellation`]: modulation types, Gray-labelled QAM sets, slicing.
//! - [`linalg`]: complex matrices, Householder QR, puncturing.
//! - [`channel`]: Rayleigh / Kronecker channels and frame synthesis.
//! - [`metric`]: subspace, LORD and ZF distance models.
//! - [`classifiers`]: likelihood accumulation and the joint references.
//! - [`detection`]: LLRs, the distance cache and the joint pipeline.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod classifiers;
pub mod constellation;
pub mod detection;
pub mod linalg;
pub mod metric;

pub use channel::{draw_frame, Frame, FrameSpec, Observation};
pub use classifiers::{ClassifierKind, ClassifierOptions, HypothesisScore, OpCounter, Received};
pub use constellation::{Constellation, Modulation};
pub use linalg::CMatrix;
pub use num_complex::Complex64;
