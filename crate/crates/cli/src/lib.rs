//! Command implementations behind the `msl` binary and the loopback HTTP
//! screening service.

pub mod eval;
pub mod infer;
pub mod service;

/// Environment variable naming the default model path.
pub const MODEL_ENV: &str = "MSL_MODEL";
