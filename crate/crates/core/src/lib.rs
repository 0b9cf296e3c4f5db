//! Genealogical distance of two sampled individuals in a two-type Moran
//! population with mutation and selection.

pub mod analytics;
pub mod error;
pub mod family;
pub mod generator;
pub mod moran;
pub mod polynomial;
pub mod quadrature;
pub mod rng;
pub mod scalar;
pub mod sde;
pub mod stats;

pub use error::{Error, Result};
pub use polynomial::RationalPolynomial;
pub use scalar::Real;

pub type ModelParamsF64 = moran::ModelParams<f64>;
pub type ModelParamsF32 = moran::ModelParams<f32>;
pub type PopulationStateF64 = moran::PopulationState<f64>;
pub type FamilyStateF64 = family::FamilyState<f64>;
pub type SimplexStateF64 = sde::SimplexState<f64>;
pub type SimplexStateF32 = sde::SimplexState<f32>;
pub type SdeConfigF64 = sde::SdeConfig<f64>;
pub type SdeConfigF32 = sde::SdeConfig<f32>;
pub type EmpiricalCdfF64 = stats::EmpiricalCdf<f64>;
pub type EquilibriumSpecF64 = analytics::EquilibriumSpec<f64>;
