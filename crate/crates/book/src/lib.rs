//! Guide chapters compiled as doctests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/q-functions.md")]
pub mod q_functions {}

#[doc = include_str!("../../../book/src/minimal-solution.md")]
pub mod minimal_solution {}

#[doc = include_str!("../../../book/src/equations.md")]
pub mod equations {}

#[doc = include_str!("../../../book/src/explosion.md")]
pub mod explosion {}

#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
