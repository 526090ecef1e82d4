//! Fund exposure allocation: predict per-pair expected revenue, then assign
//! funds to customers under exposure, top-K and risk constraints.

pub mod cli;
pub mod domain;
pub mod error;
pub mod io;
pub mod optimizer;
pub mod par;
pub mod predictor;
pub mod synth;
