pub mod acceptance;
pub mod chaos;
pub mod error;
pub mod fou;
pub mod gaussian;
pub mod hermite;
pub mod mc;
pub mod numerics;
pub mod rng;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/gaussian.md")]
    mod gaussian {}
    #[doc = include_str!("../../../book/src/fast-process.md")]
    mod fast_process {}
    #[doc = include_str!("../../../book/src/chaos.md")]
    mod chaos {}
    #[doc = include_str!("../../../book/src/hermite-process.md")]
    mod hermite_process {}
    #[doc = include_str!("../../../book/src/monte-carlo.md")]
    mod monte_carlo {}
    #[doc = include_str!("../../../book/src/homogenization.md")]
    mod homogenization {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
