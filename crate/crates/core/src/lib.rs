//! Kink solitons of the φ⁴ model scattering off, trapped by and bound to a
//! localized impurity potential.
//!
//! - [`model`]: potential, effective coupling, free kink, energy, meson dispersion
//! - [`dynamics`]: leapfrog evolution of the full field equation
//! - [`statics`]: bound and barrier-top static profiles (Newton and shooting)
//! - [`collective`]: reduced equation for the kink center and its stability
//! - [`diagnostics`]: probe spectra, envelopes, scattering outcome
//! - [`config`]: run files and the experiment runner behind the `kinklab` binary

pub mod collective;
pub mod config;
pub mod diagnostics;
pub mod dynamics;
pub mod model;
pub mod output;
pub mod statics;
pub mod tridiag;

pub use model::{FieldState, Grid, Impurity, ModelParams};
