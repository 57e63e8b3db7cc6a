//! Algorithmic core of the tactogen toolkit.
//!
//! Everything in this crate is pure computation: a small dense-tensor
//! autodiff engine with an adaptive-moment optimizer, conditional U-Net
//! style networks, rectified-flow and DDPM training/sampling, radix-2
//! FFT spectral metrics, a procedural visual/height texture corpus, and
//! height-map-to-haptic-signal synthesis.
//!
//! The crate is `no_std` (alloc required). All transcendental math goes
//! through `libm`, so results are bit-identical across platforms. File
//! formats, dataset layout and the CLI live in the companion `tactogen`
//! crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod adam;
pub mod corpus;
pub mod diffusion;
pub mod flow;
pub mod gradcheck;
pub mod graph;
pub mod haptic;
pub mod heightmap;
pub mod kernels;
pub mod nn;
pub mod real;
pub mod rng;
pub mod spectral;
pub mod tensor;
pub mod train;

pub use graph::{Graph, NodeId};
pub use heightmap::HeightMap;
pub use real::Real;
pub use rng::Rng;
pub use tensor::Tensor;

use alloc::string::String;

/// Error type shared by every fallible operation in the core.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// An input violated an operation's shape or range contract.
    Contract(String),
    /// A forward or backward pass produced NaN/Inf.
    NonFinite { op: &'static str, index: usize },
    /// Training loss exceeded the divergence bound.
    Diverged { step: usize, loss_bits: u64 },
}

impl core::fmt::Display for Error {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::NonFinite { op, index } => {
                write!(f, "numeric fault: non-finite value in `{op}` at index {index}")
            }
            Error::Diverged { step, loss_bits } => {
                write!(
                    f,
                    "training diverged at step {step} (loss {})",
                    f64::from_bits(*loss_bits)
                )
            }
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;

/// Shorthand used by ops to build a contract-violation error.
pub(crate) fn contract(msg: impl core::fmt::Display) -> Error {
    Error::Contract(alloc::format!("{msg}"))
}
