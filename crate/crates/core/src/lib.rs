//! Spectral analysis of Markov chains whose banded transition matrices admit
//! a positive bidiagonal factorization.

pub mod banded;
pub mod corpus;
pub mod error;
pub mod factorization;
pub mod infinite;
pub mod markov;
pub mod recursion;
pub mod scalar;
pub mod simulate;
pub mod spectral;
pub mod tolerances;
pub mod verify;

pub use banded::{matrix_power, max_abs_diff, BandedMatrix, DenseMatrix, Mode};
pub use error::{Error, Result};
pub use tolerances::Tolerances;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/matrices.md")]
    struct Matrices;
    #[doc = include_str!("../../../book/src/spectrum.md")]
    struct Spectrum;
    #[doc = include_str!("../../../book/src/chains.md")]
    struct Chains;
    #[doc = include_str!("../../../book/src/infinite.md")]
    struct Infinite;
    #[doc = include_str!("../../../book/src/simulation.md")]
    struct Simulation;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
