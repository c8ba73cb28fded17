//! Numerical laboratory for the Ostrovsky equation
//!
//! ```text
//! u_t + β u_xxx − γ ∂_x⁻¹ u + ∂_x(u²) = 0
//! ```
//!
//! on a large periodic box standing in for the real line.  The crate is split
//! into the spectral substrate ([`spectral`]), the dispersion relation and its
//! resonance function ([`dispersion`]), an integrating-factor time stepper
//! ([`evolve`]), the differentiation-by-parts decomposition ([`normal_form`]),
//! continuous-frequency evaluation of the first Picard iterate ([`picard`]),
//! and spectral-slope regularity measurements ([`regularity`]).
//!
//! Fourier convention throughout: `û(ξ) = ∫ u(x) e^{−ixξ} dx`, so that
//! `‖u‖_{H^s}² = ∫ ⟨ξ⟩^{2s} |û(ξ)|² dξ` and products become
//! `(uv)^ = (2π)⁻¹ û ∗ v̂`.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dispersion;
pub mod evolve;
pub mod io;
pub mod normal_form;
pub mod picard;
pub mod quadrature;
pub mod regularity;
pub mod spectral;
pub mod stats;

pub use dispersion::{DispersionParams, ResonanceTriple};
pub use evolve::{EvolutionConfig, Trajectory};
pub use spectral::{FrequencyGrid, SobolevIndex, SpectralField};
