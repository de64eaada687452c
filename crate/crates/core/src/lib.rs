//! Linearized Boltzmann–Nordheim operator for a Bose gas near a Planck
//! equilibrium, and the half-space (Milne) problem built on it.

pub mod error;
pub mod exec;
pub mod grid;
pub mod hydro;
pub mod indata;
pub mod kernels;
pub mod milne;
pub mod operator;
pub mod planck;
pub mod quadrature;
pub mod resolvent;
pub mod slab;
pub mod spectrum;

pub use error::{Error, Result};
pub use exec::Exec;
pub use grid::{build_grid, moment, planck_table, GridSpec, MomentumGrid, Node, PlanckTable};
pub use hydro::{build_basis, decay_constants, DecayConstants, Decomposition, HydroBasis};
pub use operator::{assemble, CollisionOperator, KernelQuadrature, OperatorConfig};
