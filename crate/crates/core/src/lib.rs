pub mod benchmark;
pub mod checkpoint;
pub mod data;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod joint;
pub mod linear;
pub mod models;
pub mod neural;
pub mod retrofit;
pub mod rng;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/embeddings.md")]
    mod embeddings {}
    #[doc = include_str!("../../../book/src/retrofitting.md")]
    mod retrofitting {}
    #[doc = include_str!("../../../book/src/joint.md")]
    mod joint {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/benchmark.md")]
    mod benchmark {}
}
