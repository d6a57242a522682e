//! Relighting data synthesis.
//!
//! Pairs of photographs taken with a target light off and on are calibrated
//! into linear sRGB and split into an ambient image and the light's own
//! contribution. Because light adds linearly, any mix of the two can be
//! rendered ([`relight::relight`]), tone mapped into 8-bit frames
//! ([`tonemap`]), expanded over parameter grids and sampled into training
//! records ([`dataset`]), and scored against predictions ([`evalkit`]).
//!
//! The guide in `book/` walks through each stage with runnable examples.

pub mod calibrate;
pub mod dataset;
pub mod error;
pub mod evalkit;
pub mod imagecore;
pub mod palette;
pub mod relight;
pub mod tonemap;

pub use error::{Error, Result};

// The book's code blocks run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/light-arithmetic.md")]
    mod light_arithmetic {}
    #[doc = include_str!("../../../book/src/calibration.md")]
    mod calibration {}
    #[doc = include_str!("../../../book/src/tone-mapping.md")]
    mod tone_mapping {}
    #[doc = include_str!("../../../book/src/dataset.md")]
    mod dataset {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/relightd.md")]
    mod relightd {}
}
