// Negated float comparisons are deliberate: they reject NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod appendix_calculus;
pub mod calculus;
pub mod call_identity;
pub mod cli_ingest;
pub mod decomposition;
pub mod error;
pub mod function_space;
pub mod generators;
pub mod partitions;
pub mod path_model;

pub use error::{Error, Result};
