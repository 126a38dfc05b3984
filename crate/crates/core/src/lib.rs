pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod delta_mapper;
pub mod error;
pub mod hierarchy;
pub mod hyp_nn;
pub mod manifold;
pub mod parallel;
pub mod stats;
pub mod synth_data;
pub mod training;

pub use error::{Error, Result};

/// The guide's chapters, compiled here so their listings run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/autodiff.md")]
    mod autodiff {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/latent_ops.md")]
    mod latent_ops {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
    #[doc = include_str!("../../../book/src/acceptance.md")]
    mod acceptance {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
