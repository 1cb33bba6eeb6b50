//! Offline screening toolkit for a small three-class skin-lesion classifier.
//!
//! * [`engine`]: graph executor and kernels (reference and optimized routes)
//! * [`model_io`]: the MSLW container format and parameter/size envelope
//! * [`golden`]: golden activation bundles used to check the engine
//! * [`imaging`]: decoding, model-input preprocessing, augmentation
//! * [`datasets`]: JSONL manifests, stratified splitting, duplicate checks
//! * [`metrics`]: confusion matrices, per-class metrics, Wilson intervals, reports
//! * [`training`]: early stopping and training provenance
//! * [`screening`]: triage rule and screening/case-log records

pub mod datasets;
pub mod engine;
pub mod golden;
pub mod imaging;
pub mod metrics;
pub mod model_io;
pub mod screening;
pub mod tensor;
pub mod training;

pub use engine::{execute, ExecOptions, ExecutionTrace};
pub use model_io::{load_model, ModelContainer, ModelMetadata};
pub use tensor::Tensor;
