//! Multi-step forecasting of time series with long runs of missing values.
//!
//! Input windows are encoded as two short streams (available points and
//! missing blocks) that drive two GRU encoders; a decoder unrolls over the
//! horizon and handles missing future covariates. See the guide under
//! `book/` for a walkthrough.

pub mod cells;
pub mod checkpoint;
pub mod codec;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod gradcheck;
pub mod model;
pub mod optim;
pub mod param;
pub mod synthetic;
pub mod tensor;
pub mod train;

// Compiles and runs the guide's listings as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/encoding.md")]
    mod encoding {}
    #[doc = include_str!("../../../book/src/grud.md")]
    mod grud {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
