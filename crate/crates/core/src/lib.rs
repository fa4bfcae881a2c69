// `!(x >= 0.0)` rejects NaN along with negatives, and the DP loops index
// several arrays by the same position.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod agreement;
pub mod augment;
pub mod autodiff;
pub mod corpus;
pub mod crf;
pub mod error;
pub mod explain;
pub mod labeler;
pub mod metrics;
pub mod parallel;
pub mod rng;
pub mod synth;
pub mod textproc;
pub mod trainer;
pub mod vocab;

pub use error::{Error, Result};

// Compiles and runs the guide's code blocks as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/preprocessing.md")]
    mod preprocessing {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/crf.md")]
    mod crf {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/agreement.md")]
    mod agreement {}
    #[doc = include_str!("../../../book/src/explain.md")]
    mod explain {}
    #[doc = include_str!("../../../book/src/augmentation.md")]
    mod augmentation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
