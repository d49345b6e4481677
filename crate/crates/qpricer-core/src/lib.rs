//! Robust pricing of bounded contingent claims in an incomplete Brownian
//! market, under a Tsallis-relative-entropy penalty.
//!
//! The buyer price of a bounded claim is the infimum, over equivalent
//! martingale measures, of a distorted expectation plus an entropy penalty.
//! The same value solves a quadratic BSDE whose driver is
//! `lambda * z + gamma |z_perp|^2 / (2 mu(y))`, and a recursive dual over
//! measure tilts. This crate implements all three formulations and the
//! machinery to check them against each other:
//!
//! * [`qcalc`] — deformed exponential/logarithm pair and the `mu` function.
//! * [`market`] — seeded Brownian ensembles, stochastic exponentials,
//!   measure changes and reweighted expectations.
//! * [`entropy`] — Tsallis relative entropy by the definitional and the
//!   integral route, plus nested conditional estimates.
//! * [`claims`] — bounded payoffs with mechanical bound certificates.
//! * [`bsde`] — the pricing BSDE by an ADI finite difference scheme and by
//!   regression Monte Carlo, closed forms for one-sided claims, the dual
//!   recursion, and optimizer extraction.
//! * [`pricing`] — price reports, dual gap records, bounds, gamma sweeps
//!   and the property test battery.
//!
//! The crate is `no_std` (with `alloc`); all transcendental math goes
//! through `libm` so results are identical across platforms and callers.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

pub mod bsde;
pub mod claims;
pub mod entropy;
pub mod error;
pub mod market;
pub mod pricing;
pub mod qcalc;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use qcalc::QGammaParams;
