//! Doubled-space operator algebra and the transformed super-Hamiltonian.

mod algebra;
mod hamiltonian;

pub use algebra::{
    difference, normal_order, quasi_particle_expansion, simplify, tilde_conjugate,
    transform_product, Ladder, Mode, OperatorSymbol, OperatorTerm, OrbitalIndex,
};
pub use hamiltonian::{
    build_super_hamiltonian, number_expectation, verify_trace_preservation, SuperHamiltonian,
    TraceCheck,
};
