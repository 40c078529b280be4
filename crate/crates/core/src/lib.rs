//! Riemannian Gaussian variational flow matching.
//!
//! Generative flows on manifolds with closed-form geodesics, together with
//! the Euclidean and Riemannian flow-matching baselines they are compared
//! against. The crate is `no_std` (with `alloc`); file formats and the command
//! line live in the companion `rgvfm` crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

mod linalg;

pub mod data;
pub mod diff;
pub mod error;
pub mod manifold;
pub mod metrics;
pub mod net;
pub mod objectives;
pub mod rgauss;
pub mod rng;
pub mod sampler;
pub mod train;

pub use error::{Error, Result};
pub use manifold::{ManifoldKind, ManifoldPoint, TangentVector};
