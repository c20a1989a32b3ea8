//! Codes whose constraints each hold every symbol of `1..=q` exactly once.
//!
//! - [`graph`]: factor graphs for Latin, sudoku and (semi-)pandiagonal
//!   squares and random regular ensembles; counting and sampling codewords.
//! - [`permanent`]: permanents and cofactor permanents on a `2^q` trellis.
//! - [`erasure`]: subset message passing and the erasure decoder.
//! - [`bp`]: soft belief propagation.
//! - [`encoder`]: bits to codewords with an exact arithmetic coder, and back.
//! - [`analysis`]: rate estimates and density evolution thresholds.
//! - [`sim`]: block error simulation on the erasure channel.
//!
//! ```
//! use permcodes::erasure::{decode_erasure, ErasureStatus};
//! use permcodes::graph::{build_structure, sample_codeword};
//! use permcodes::{PartialGrid, Structure, SymbolSet};
//!
//! let graph = build_structure(Structure::Sudoku, 4)?;
//! let word = sample_codeword(&graph, 1)?;
//! let mut grid = PartialGrid::from_codeword(4, &word);
//! grid.cells_mut()[0] = SymbolSet::full(4);
//! let (decoded, status) = decode_erasure(&graph, &grid)?;
//! assert_eq!(status, ErasureStatus::Decoded);
//! assert_eq!(decoded.to_codeword(), Some(word));
//! # Ok::<(), permcodes::Error>(())
//! ```

pub mod analysis;
pub mod bp;
pub mod encoder;
pub mod erasure;
pub mod error;
pub mod graph;
pub mod permanent;
pub mod sim;
pub mod symbols;

pub use error::{Error, Result};
pub use graph::{Codeword, FactorGraph, PartialGrid, Structure};
pub use symbols::SymbolSet;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/constraint-graphs.md")]
    mod constraint_graphs {}
    #[doc = include_str!("../../../book/src/permanents.md")]
    mod permanents {}
    #[doc = include_str!("../../../book/src/erasure-decoding.md")]
    mod erasure_decoding {}
    #[doc = include_str!("../../../book/src/soft-decoding.md")]
    mod soft_decoding {}
    #[doc = include_str!("../../../book/src/encoding.md")]
    mod encoding {}
    #[doc = include_str!("../../../book/src/analysis.md")]
    mod analysis {}
    #[doc = include_str!("../../../book/src/command-line.md")]
    mod command_line {}
}
