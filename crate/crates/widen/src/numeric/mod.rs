//! Dense matrices, the differentiable operation vocabulary, reverse-mode
//! gradient accumulation, and a finite-difference verifier.

pub mod gradcheck;
pub mod matrix;
pub mod tape;

pub use gradcheck::finite_diff_check;
pub use matrix::{
    add, concat_cols, elementwise_mul, l2_normalize_row, matmul, maxpool_pair, relu, scale,
    softmax_rows, Matrix, NORM_EPSILON,
};
pub use tape::{Tape, Var};
