//! The user guide in `book/`. Each chapter is compiled here so that its code
//! blocks run as doctests with `cargo test`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/grid.md")]
pub mod grid {}
#[doc = include_str!("../../../book/src/models.md")]
pub mod models {}
#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}
#[doc = include_str!("../../../book/src/eigenproblem.md")]
pub mod eigenproblem {}
#[doc = include_str!("../../../book/src/entropy.md")]
pub mod entropy {}
#[doc = include_str!("../../../book/src/one_way_mutation.md")]
pub mod one_way_mutation {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
