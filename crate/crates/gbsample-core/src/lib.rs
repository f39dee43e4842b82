//! Gradient-statistics machinery for class-imbalanced semi-supervised training.
//!
//! The crate covers four pieces that together drive a teacher-student loop
//! toward class-balanced pseudo labels:
//!
//! * [`loss`] — analytic loss/gradient of softmax cross-entropy and softmax
//!   focal loss with respect to the class logits.
//! * [`ledger`] — accumulation of per-proposal gradients into the class-wise
//!   positive/negative gradient matrix and its exponential moving average.
//! * [`weights`] — learnable class-weight logits driven toward the solution
//!   of the gradient-balance linear system (damped Jacobi via an alignment
//!   loss), plus a direct elimination solver.
//! * [`thresholds`] / [`sampler`] — per-class pseudo-label score thresholds
//!   derived from the solved weights, and confidence-weighted repeat-factor
//!   sampling rates.
//!
//! The crate is `no_std` compatible (`alloc` required); disable the default
//! `std` feature for embedded use.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod error;
pub mod ledger;
pub mod loss;
pub mod matrix;
pub mod sampler;
pub mod thresholds;
pub mod weights;

pub use error::Error;
pub use matrix::SquareMatrix;

pub(crate) mod fmath {
    //! Float math routed through libm so the crate builds without std.

    #[inline]
    pub fn exp(x: f64) -> f64 {
        libm::exp(x)
    }

    #[inline]
    pub fn ln(x: f64) -> f64 {
        libm::log(x)
    }

    #[inline]
    pub fn sqrt(x: f64) -> f64 {
        libm::sqrt(x)
    }

    #[inline]
    pub fn powf(x: f64, y: f64) -> f64 {
        libm::pow(x, y)
    }

    #[inline]
    pub fn abs(x: f64) -> f64 {
        libm::fabs(x)
    }
}
