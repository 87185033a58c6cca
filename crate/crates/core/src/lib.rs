pub mod error;
pub mod gridcode;
pub mod harness;
pub mod refmodel;
pub mod rom;
pub mod seqnet;
pub mod signal;
pub mod units;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/sequence-networks.md")]
    mod sequence_networks {}
    #[doc = include_str!("../../../book/src/grid-code.md")]
    mod grid_code {}
    #[doc = include_str!("../../../book/src/rom.md")]
    mod rom {}
    #[doc = include_str!("../../../book/src/reference-model.md")]
    mod reference_model {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    mod scenarios {}
}
