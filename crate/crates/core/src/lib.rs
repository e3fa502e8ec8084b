//! Port-Hamiltonian and input-output Hamiltonian systems: modeling, structural
//! verification, structure-preserving simulation with energy audits, and
//! controller synthesis by interconnection.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the `*F64`
//! aliases below cover the common case.
//!
//! ```
//! use nalgebra::{dmatrix, dvector};
//! use phs_core::model::{Hamiltonian, PhsModel, SignalSpec};
//! use phs_core::simulate::{energy_audit, simulate, Method};
//!
//! let osc = PhsModel::constant(
//!     vec!["q".into(), "p".into()],
//!     dmatrix![0.0, 1.0; -1.0, 0.0],
//!     dmatrix![0.0, 0.0; 0.0, 0.1],
//!     dmatrix![0.0; 1.0],
//!     Hamiltonian::pure_quadratic(dmatrix![1.0, 0.0; 0.0, 1.0])?,
//! )?;
//! let u = SignalSpec::expressions(&["sin(t)"])?;
//! let traj = simulate(&osc, &u, &dvector![1.0, 0.0], 10.0, 0.01, Method::ImplicitMidpoint)?;
//! assert!(energy_audit(&traj, &osc)?.passed());
//! # Ok::<(), phs_core::Error>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod dirac;
pub mod energyport;
pub mod error;
pub mod expr;
pub mod linalg;
pub mod model;
pub mod netbuild;
pub mod report;
mod scalar;
pub mod simulate;
pub mod synthesis;

pub use error::{Error, Result};
pub use expr::{Expr, ExprError};
pub use report::Check;
pub use scalar::Scalar;

pub type HamiltonianF64 = model::Hamiltonian<f64>;
pub type MatrixFieldF64 = model::MatrixField<f64>;
pub type PhsModelF64 = model::PhsModel<f64>;
pub type ExtendedPhsModelF64 = model::ExtendedPhsModel<f64>;

pub type HamiltonianF32 = model::Hamiltonian<f32>;
pub type PhsModelF32 = model::PhsModel<f32>;
pub type TrajectoryF64 = simulate::Trajectory<f64>;
pub type DiracStructureF64 = dirac::DiracStructure<f64>;
pub type IohModelF64 = energyport::IohModel<f64>;
pub type FeedbackLawF64 = synthesis::FeedbackLaw<f64>;
