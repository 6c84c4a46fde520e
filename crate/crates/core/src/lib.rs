//! Signal processing, drop detection, feature stacking, the patch transformer
//! classifier and its evaluation tools for mainstage house sub-genre
//! classification.
//!
//! The crate is `no_std` and needs only an allocator. Everything that touches
//! files, threads or the command line lives in the `mainstage` crate.
#![no_std]
// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod audio;
pub mod cuesheet;
pub mod dataset;
mod error;
pub mod eval;
pub mod features;
pub mod float;
pub mod model;
pub mod msf;
pub mod rng;
pub mod segmentation;

pub use error::{Error, Result};
