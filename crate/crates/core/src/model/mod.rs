//! Hamiltonians, state-modulated matrices and port-Hamiltonian models.

mod extended;
mod field;
mod hamiltonian;
mod phs;
mod signal;

pub use extended::{build_extended, ExtendedPhsModel};
pub use field::{Entry, MatrixField};
pub(crate) use hamiltonian::fd_hessian;
pub use hamiltonian::{Hamiltonian, ShiftedHamiltonian};
pub use phs::{
    default_samples, validate_phs, PhsModel, Rayleigh, ValidationReport, DEFAULT_SEED,
    STRUCTURE_TOL,
};
pub use signal::SignalSpec;

/// `["x1", "x2", ...]`-style name lists.
pub fn numbered_names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}
