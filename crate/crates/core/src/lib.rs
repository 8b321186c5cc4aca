//! Multiscale graph network for human motion prediction.
//!
//! Poses are encoded per dimension with a truncated DCT, mapped through
//! stacked multiscale graph units on a three-level skeleton hierarchy, and
//! decoded back to frames.

pub mod cli;
pub mod data;
pub mod dct;
pub mod error;
pub mod model;
pub mod selfcheck;
pub mod skeleton;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/dct.md")]
    pub struct Dct;
    #[doc = include_str!("../../../book/src/autodiff.md")]
    pub struct Autodiff;
    #[doc = include_str!("../../../book/src/skeleton.md")]
    pub struct Skeleton;
    #[doc = include_str!("../../../book/src/architecture.md")]
    pub struct Architecture;
    #[doc = include_str!("../../../book/src/training.md")]
    pub struct Training;
    #[doc = include_str!("../../../book/src/evaluation.md")]
    pub struct Evaluation;
    #[doc = include_str!("../../../book/src/formats.md")]
    pub struct Formats;
}
