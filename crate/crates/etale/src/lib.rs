//! Exact and numerical computation in twisted convolution algebras of
//! discrete etale groupoids.
//!
//! The library models a small zoo of discrete groupoids (finite tables, group
//! models, pair groupoids, isotropy bundles, finite transformation groupoids,
//! and shift groupoids on periodic-point descriptors), circle-valued
//! 2-cocycles on them, and the twisted convolution *-algebra of finitely
//! supported functions. On top of that sit regular representation matrices,
//! certified norm estimates, a finite C*-algebra block decomposition, and a
//! one-sided decision procedure that certifies uniqueness of the C*-norm on
//! the twisted L1-algebra from verifiable structural evidence.

pub mod cli;
pub mod coeff;
pub mod cyclo;
pub mod enclosure;
pub mod error;
pub mod cocycle;
pub mod element;
pub mod repnorm;
pub mod uniqueness;
pub mod groupoid;
pub mod phase;
pub mod snf;

pub use error::{Error, Result};
