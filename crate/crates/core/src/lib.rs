//! Reconstruction of dielectric permittivity `ε(x)` and conductivity `σ(x)`
//! in the 2D damped wave model
//!
//! ```text
//! ε ∂ₜₜE + σ ∂ₜE − ΔE = f    in Ω × (0, T]
//! ```
//!
//! from (noisy, possibly partial) boundary observations of `E`.
//!
//! The crate is `no_std` and only needs `alloc`. It provides:
//!
//! - [`grid`]: the uniform grid, the pinned frame mask and factor-2 refinement,
//! - [`fields`]: coefficient fields, space-time fields, boundary traces, noise
//!   and inter-grid transfer,
//! - [`forward`]: the explicit leapfrog solver and its discrete energy,
//! - [`adjoint`]: the backward-in-time adjoint solve driven by a boundary residual,
//! - [`objective`]: Tikhonov functional, Lagrangian, decomposition identities
//!   and error metrics,
//! - [`gradient`]: adjoint-state gradient assembly and a finite-difference oracle,
//! - [`optimizer`]: the conjugate gradient reconstruction and its adaptive,
//!   refinement-driven variant.
//!
//! File formats, configuration and the command line live in the `wavecip` crate.
#![no_std]

extern crate alloc;

pub mod adjoint;
pub mod error;
pub mod fields;
pub mod forward;
pub mod gradient;
pub mod grid;
pub(crate) mod math;
pub mod objective;
pub mod optimizer;

pub use error::{Error, Result};
pub use fields::{add_noise, 
    AdmissibleSet, BoundaryTrace, CoefficientField, FieldRole, NoiseModel, Role, Side, SideSet,
    SpaceTimeField,
};
pub use grid::{Grid2D, NodeClass, RegionMask};
