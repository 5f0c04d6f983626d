//! Random-features least-squares regression trained by averaged SGD.
//!
//! The crate covers the full experimental loop: drawing frozen random feature
//! maps ([`features`]), generating or loading data ([`data`]), training with
//! averaged SGD or the minimum-norm solver ([`optimizer`]), analytic and
//! empirical covariance spectra ([`spectral`]), the six-path bias/variance
//! decomposition ([`decomposition`]) and config-driven sweeps with CSV and SVG
//! output ([`sweep`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod decomposition;
pub mod error;
pub mod features;
pub mod optimizer;
pub mod rng;
pub mod spectral;
pub mod sweep;

pub use error::{Error, Result};
pub use features::{ActivationKind, FeatureMap};
