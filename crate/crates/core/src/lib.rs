//! Computerized adaptive testing on the three-parameter logistic IRT model.

pub mod calibration;
pub mod engine;
pub mod exercise;
pub mod io;
pub mod irt;
pub mod rng;
pub mod simulator;
pub mod stats;
