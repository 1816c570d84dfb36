//! Ergodicity certificates for stochastic reaction networks.

pub mod ergodicity;
pub mod network;
pub mod par;
pub mod paramalg;
pub mod parse;
pub mod spectral;
pub mod positivity;
pub mod ssa;
