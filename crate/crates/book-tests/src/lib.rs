//! The guide's chapters, included as documentation so `cargo test` runs
//! every Rust snippet in them.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/optics.md")]
pub mod optics {}

#[doc = include_str!("../../../book/src/blur-range.md")]
pub mod blur_range {}

#[doc = include_str!("../../../book/src/sweep.md")]
pub mod sweep {}

#[doc = include_str!("../../../book/src/seam.md")]
pub mod seam {}

#[doc = include_str!("../../../book/src/rendering.md")]
pub mod rendering {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
