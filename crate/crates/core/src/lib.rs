//! Numerical laboratory for free-period action minimization on surfaces:
//! magnetic Tonelli Lagrangians on the flat torus and the round sphere,
//! minimal-boundary search, Mane critical values, bounding-chain homology
//! certificates, and the Randers closed-geodesic census.
//!
//! The numeric core is generic over the scalar type through
//! [`scalar::Real`]; `f64` aliases for the main entry points live at the
//! crate root.

pub mod action;
pub mod critical;
pub mod dump;
pub mod error;
pub mod expr;
pub mod fields;
pub mod homology;
pub mod lagrangian;
pub mod loops;
pub mod preset;
pub mod scalar;
pub mod search;
pub mod surface;

pub use error::{Error, Result};
pub use scalar::Real;

/// Concrete working-precision aliases.
pub type Surface64 = surface::SurfaceModel<f64>;
pub type Lagrangian64 = lagrangian::MagneticTonelliData<f64>;
pub type Loop64 = loops::LoopPath<f64>;
pub type Multicurve64 = loops::Multicurve<f64>;
pub type Spectrum64 = critical::EnergySpectrum<f64>;
pub type SearchReport64 = search::SearchReport<f64>;

/// Single-precision aliases for experiments at reduced precision.
pub type Surface32 = surface::SurfaceModel<f32>;
pub type Lagrangian32 = lagrangian::MagneticTonelliData<f32>;
pub type Loop32 = loops::LoopPath<f32>;
pub type Multicurve32 = loops::Multicurve<f32>;
