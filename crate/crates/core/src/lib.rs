pub mod lm;
pub mod ensemble;
pub mod decoding;
pub mod metrics;
pub mod harness;
