//! Numerical homogenisation of pore-scale Stokes-Cahn-Hilliard flow on
//! periodic perforated domains.

pub mod cell;
pub mod error;
pub mod field;
pub mod grid;
pub mod harness;
pub mod init;
pub mod macroscale;
pub mod micro;
pub mod ops;
pub mod sparse;
pub mod unfolding;

pub use error::{HomogError, Result};
