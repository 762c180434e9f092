//! Set-valued KKL observer construction for plants without backward
//! distinguishability.
//!
//! The pipeline: integrate a plant ([`dynsys`]), build the filter pair and
//! evaluate the KKL transform by a truncated backward integral
//! ([`transform`]), invert it set-valuedly ([`setvalued`]), run the filter
//! and track set estimates over time ([`observer`]), and cross-check
//! everything against brute-force indistinguishability and differential
//! observability diagnostics ([`distinguish`]).
//!
//! The crate is `no_std` + `alloc`; all float transcendentals go through
//! libm so results are bit-reproducible across platforms.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod distinguish;
pub mod dynsys;
pub mod error;
pub mod linalg;
pub mod math;
pub mod observer;
pub mod rng;
pub mod setvalued;
pub mod transform;

pub use error::{Error, Result};
