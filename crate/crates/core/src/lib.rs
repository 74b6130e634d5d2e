//! Real-time thermo-field coupled-cluster dynamics for the single-impurity
//! Anderson model, with dense and matrix-product-state reference propagators.

pub mod dmcc;
pub mod error;
pub mod fock;
pub mod model;
pub mod observables;
pub mod oracle_dense;
pub mod oracle_tebd;
pub mod thermofield;
pub mod trajectory;
pub mod wick;

pub use error::{Error, Result};
pub use model::{
    build_bath, impurity_level, occupation, BathDiscretization, Occupations, SiamConfig, Spin,
};
pub use trajectory::{TrajectoryRecord, TrajectorySample};

// The guide's snippets run as doc-tests, one module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/thermofield.md")]
    mod thermofield {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/dmcc.md")]
    mod dmcc {}
    #[doc = include_str!("../../../book/src/equations.md")]
    mod equations {}
    #[doc = include_str!("../../../book/src/references.md")]
    mod references {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
