pub mod resample;
pub mod model;
pub mod lie;
pub mod metrics;
pub mod eval;
pub mod harness;
