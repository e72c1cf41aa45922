//! Asymptotic key rates for BB84 with Cascade error correction.
//!
//! Cascade's two-way parity exchange reveals the error string to an
//! eavesdropper. This crate bounds the key-rate objective with and without
//! that string in Eve's hands (`F` and `F'`) and decides whether the two
//! differ. The pieces:
//!
//! - [`operators`]: dense Hermitian linear algebra, partial traces, matrix
//!   logarithms and relative entropy;
//! - [`protocol`] and [`channel`]: Kraus maps, POVMs, simulated statistics and
//!   the constraints built from them;
//! - [`solver`]: the conditional-gradient solver with certified bounds, the
//!   verdict and the key-rate formulas;
//! - [`decoy`]: single-photon yield intervals from decoy-state data;
//! - [`cascade`]: a bit-exact Cascade simulator with transcript reconstruction;
//! - [`symmetry`]: the Pauli twirl and the Bell-diagonal oracle;
//! - [`experiment`] and [`verify`]: the commands behind the `cascade-lab` CLI.
//!
//! The guide in `book/` walks through each of these with runnable examples.

pub mod cascade;
pub mod channel;
pub mod decoy;
pub mod error;
pub mod experiment;
pub mod operators;
pub mod protocol;
pub mod solver;
pub mod symmetry;
pub mod verify;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/operators.md")]
    mod operators {}
    #[doc = include_str!("../../../book/src/protocol.md")]
    mod protocol {}
    #[doc = include_str!("../../../book/src/solver.md")]
    mod solver {}
    #[doc = include_str!("../../../book/src/decoy.md")]
    mod decoy {}
    #[doc = include_str!("../../../book/src/cascade.md")]
    mod cascade {}
    #[doc = include_str!("../../../book/src/symmetry.md")]
    mod symmetry {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
