pub mod classical;
pub mod error;
pub mod exact;
pub mod fpe;
pub mod hermite;
pub mod langevin;
pub mod linalg;
pub mod noise;
pub mod output;
pub mod qpe;
pub mod quad;
pub mod quantum;
pub mod vqe;

pub use error::{Error, Result};

// Compile and run the guide's snippets as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/basis.md")]
    mod basis {}
    #[doc = include_str!("../../../book/src/classical.md")]
    mod classical {}
    #[doc = include_str!("../../../book/src/oracles.md")]
    mod oracles {}
    #[doc = include_str!("../../../book/src/simulator.md")]
    mod simulator {}
    #[doc = include_str!("../../../book/src/qpe.md")]
    mod qpe {}
    #[doc = include_str!("../../../book/src/vqe.md")]
    mod vqe {}
    #[doc = include_str!("../../../book/src/noise.md")]
    mod noise {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
