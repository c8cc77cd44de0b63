//! The user guide, embedded chapter by chapter so that `cargo test --doc`
//! runs every code block in the book (`book/` at the repository root; render
//! it with `mdbook build book`). The book and the doc-tests cannot drift:
//! they are the same files.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/words.md")]
pub mod words {}

#[doc = include_str!("../../../book/src/measures.md")]
pub mod measures {}

#[doc = include_str!("../../../book/src/decoupling.md")]
pub mod decoupling {}

#[doc = include_str!("../../../book/src/coupling.md")]
pub mod coupling {}

#[doc = include_str!("../../../book/src/pressure.md")]
pub mod pressure {}

#[doc = include_str!("../../../book/src/fluctuation.md")]
pub mod fluctuation {}

#[doc = include_str!("../../../book/src/level3.md")]
pub mod level3 {}

#[doc = include_str!("../../../book/src/renewal.md")]
pub mod renewal {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
