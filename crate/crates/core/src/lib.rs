//! Discrete Darboux transformations for block-tridiagonal difference
//! Schrödinger operators, with the two-channel free particle in the
//! oscillator basis as the worked application.

// `!(x < 0.0)` style guards are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blockjacobi;
pub mod darboux;
pub mod error;
pub mod harness;
pub mod hermite2ch;
pub mod intertwine;
pub mod seeds;
pub mod smallmat;

pub use error::{Error, Result};
