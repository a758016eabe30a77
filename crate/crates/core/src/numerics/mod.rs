//! Dense `f64` tensors, a reverse-mode tape, optimizers, finite-difference
//! checking, seeded randomness and checkpoint IO.

mod checkpoint;
mod gradcheck;
mod params;
mod rng;
mod tape;
mod tensor;

pub use checkpoint::Checkpoint;
pub use gradcheck::{
    analytic_gradients, compare_gradients, finite_difference_check, numeric_gradients,
    relative_error, GradCheckReport, GradMismatch, REL_ERROR_FLOOR,
};
pub use params::{Adam, Optimizer, ParamId, ParamStore, Sgd};
pub use rng::Rng;
pub use tape::{Gradients, Tape, Var, LOG_FLOOR};
pub use tensor::{SparseMatrix, Tensor};

/// Glorot-uniform initialisation.
pub fn glorot(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    rng.uniform_tensor(rows, cols, -limit, limit)
}
