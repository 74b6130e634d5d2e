//! Symbolic derivation of the amplitude equations and their numerical
//! evaluation.

mod evaluate;
mod expectation;
mod program;

pub use evaluate::{evaluate, evaluate_into};
pub use expectation::{wick_vacuum_expectation, DeltaProduct};
pub use program::{
    generate_eom, ContractionInstruction, ContractionProgram, Operand, OperandKind, Slot, Target,
};
