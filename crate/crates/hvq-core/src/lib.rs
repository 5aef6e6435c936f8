//! Numerical toolkit for wave dynamics parameterized by a hidden scale `λ`.
//!
//! The crate propagates the modified Schrödinger equation
//! `i|λ| ∂_t Ψ = ½(−i|λ|∂_i − A_i) g^ij(q) (−i|λ|∂_j − A_j)Ψ + VΨ`
//! on uniform grids, one branch per value of `|λ|`, and layers on top of it:
//!
//! * [`exprlang`] — a small expression language for potentials and initial data,
//! * [`fields`] — grids, scalar/complex fields, stencils and the polar `(R, S)` transform,
//! * [`hidden`] — the unbiased distribution `P(λ)` with sampling and quadrature views,
//! * [`dynamics`] — Hamiltonian assembly with the sandwich operator ordering and
//!   Crank–Nicolson stepping,
//! * [`trajectories`] — guidance-field particle transport and Born-rule checks,
//! * [`ensemble`] — λ-branch mixtures, marginal densities and interference,
//! * [`measurement`] — pointer-based measurement models and spectral broadening,
//! * [`classical`] — Hamilton trajectories and characteristics-based ensemble transport,
//! * [`verify`] — residual checks of the coupled amplitude/phase equations.
//!
//! All numerics are generic over the floating-point scalar via [`Scalar`];
//! the `*64` aliases below pin the default double-precision instantiation.

// Stencil and assembly loops index several parallel arrays at shared
// offsets; indexed form is the clearer one there.
#![allow(clippy::needless_range_loop)]

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

pub mod classical;
pub mod dynamics;
pub mod ensemble;
pub mod exprlang;
pub mod fields;
pub mod hidden;
pub mod linalg;
pub mod measurement;
pub mod rng;
pub mod trajectories;
pub mod verify;

/// Floating-point scalar the numerical core is generic over (f32 or f64).
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + std::fmt::LowerExp
    + Send
    + Sync
    + 'static
{
    /// Shorthand for `T::from_f64(x).unwrap()`, for tolerances and literals.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub type Complex<T> = num_complex::Complex<T>;

pub type Grid64 = fields::Grid<f64>;
pub type ScalarField64 = fields::ScalarField<f64>;
pub type ComplexField64 = fields::ComplexField<f64>;
pub type PolarPair64 = fields::PolarPair<f64>;
pub type LambdaDistribution64 = hidden::LambdaDistribution<f64>;
pub type ClassicalSystem64 = dynamics::ClassicalSystem;
pub type LambdaEnsemble64 = ensemble::LambdaEnsemble<f64>;
pub type MeasurementSetup64 = measurement::MeasurementSetup<f64>;
pub type PointerStatistics64 = measurement::PointerStatistics<f64>;
