//! Spectral numerics for the Gaussian free field on closed model manifolds.
//!
//! The crate follows one chain of constructions: Laplace spectra of model
//! geometries ([`spectrum`]), truncations of the smoothed Green–potential
//! operator ([`operator`]), Gohberg–Krein determinants and the renormalized
//! Wick-square partition function ([`determinant`], [`partition`]), Monte
//! Carlo sampling of the regularized field ([`gff`]), inverse spectral
//! read-outs from determinant zeros, heat traces and wave traces
//! ([`inverse`]), and symmetric-tensor X-ray transforms on the flat 2-torus
//! ([`tensor`]). [`config`] and [`commands`] drive all of it from JSON
//! experiment files.

pub mod commands;
pub mod config;
pub mod determinant;
pub mod error;
pub mod gff;
pub mod inverse;
pub mod numeric;
pub mod operator;
pub mod partition;
pub mod spectrum;
pub mod tensor;

pub use error::{Error, Result};
