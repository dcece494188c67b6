//! The `book/` guide, compiled so that its Rust snippets run as doc-tests.
//! Each module below is one chapter.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/noise.md")]
pub mod noise {}

#[doc = include_str!("../../../book/src/accounting.md")]
pub mod accounting {}

#[doc = include_str!("../../../book/src/majorization.md")]
pub mod majorization {}

#[doc = include_str!("../../../book/src/conversion.md")]
pub mod conversion {}

#[doc = include_str!("../../../book/src/optimizer.md")]
pub mod optimizer {}

#[doc = include_str!("../../../book/src/dpsgd.md")]
pub mod dpsgd {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
