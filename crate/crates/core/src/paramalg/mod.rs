//! Affine-parametric matrices and multivariate polynomials.

mod matrix;
mod poly;

pub use matrix::{
    adjugate, adjugate_vector, characteristic_matrix, det_poly, eval_matrix, eval_vector,
    first_order_channels, matrix_from_channels, numeric_from_channels, offset_vector,
    upper_bound_channels, upper_bound_matrix, AlgebraError, Channel, ChannelRate, ParamMatrix,
};
pub use poly::MultiPoly;
pub(crate) use poly::binomial;
