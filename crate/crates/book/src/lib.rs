//! The guide's chapters as doctests: each module's docs are one chapter of
//! `book/src`, so `cargo test -p stocm-book` runs every snippet.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/noise-algebra.md")]
pub mod noise_algebra {}
#[doc = include_str!("../../../book/src/centre-manifold.md")]
pub mod centre_manifold {}
#[doc = include_str!("../../../book/src/memory-kernels.md")]
pub mod memory_kernels {}
#[doc = include_str!("../../../book/src/weak-models.md")]
pub mod weak_models {}
#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
