//! Discrete loop soups, Gaussian free fields and boundary-excursion Poisson
//! point processes on finite graphs, with exact evaluators for the parity
//! identities that link them.
//!
//! The crate is organized bottom-up: [`lattice`] provides domains and their
//! linear algebra, [`gff`], [`loopsoup`] and [`excursions`] are the three
//! random objects, [`identities`] holds the closed forms and the calibration of
//! lattice constants, and [`experiments`] runs Monte-Carlo checks of the
//! closed forms against the samplers.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod excursions;
pub mod experiments;
pub mod gff;
pub mod identities;
pub mod lattice;
pub mod loopsoup;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};

#[cfg(test)]
#[macro_export]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b): (f64, f64) = ($a, $b);
        assert!((a - b).abs() <= $tol, "{} vs {} (tol {})", a, b, $tol);
    }};
}
