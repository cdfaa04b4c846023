//! Exact-arithmetic construction of an absolutely normal number whose orbits
//! `{b^j x}` have near-optimal discrepancy in every integer base.
//!
//! The crate is organized bottom-up:
//!
//! * [`measure`]: exact rationals and canonical unions of half-open intervals.
//! * [`enclosure`]: rational enclosures of irrational constants with directed rounding.
//! * [`orbit`]: the counting function `F` and exact deviation regions `{x : F >= t}`.
//! * [`schedule`] and [`badsets`]: the bad sets `G`, `H`, their unions `Delta_n`,
//!   tail bounds and the closed-form probability bounds.
//! * [`constructor`]: digit emission by nested dyadic halving, with certificates.
//! * [`discrepancy`]: exact extreme and star discrepancy and the reference constants.
//! * [`mc`]: seeded Monte Carlo cross-checks of exact measures.

pub mod badsets;
pub mod constructor;
pub mod discrepancy;
pub mod enclosure;
pub mod error;
pub mod mc;
pub mod measure;
pub mod orbit;
pub mod schedule;

pub use error::{Error, Result};
pub use measure::{fmt_rat, parse_rat, Interval, IntervalSet, Rational};
