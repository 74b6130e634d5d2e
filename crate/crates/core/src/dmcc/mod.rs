//! Cluster amplitudes and their Runge-Kutta propagation.

mod amplitudes;
mod propagate;

pub use amplitudes::{
    antisymmetrize_in_place, antisymmetrized, hermiticity_deviation, ClusterAmplitudes, PairBlock, Residuals, Truncation,
};
pub use propagate::{rk4_advance, rk4_step, Rk4Workspace, run_quench, run_quench_with_bath, DmccPropagator};
