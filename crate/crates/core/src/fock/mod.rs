//! Truncated bosonic Fock space over a radial mode grid.

pub mod dilation;
pub mod grid;
pub mod space;
pub mod sparse;

pub use grid::{build_mode_grid, GridError, GridScheme, ModeGrid};
pub use space::{
    annihilation_op, creation_op, field_op, free_field_op, grading_projection, number_op, parity_op, FockError,
    FockSpace,
};
pub use sparse::{op_norm_dense, spin_tensor, SparseOperator};
