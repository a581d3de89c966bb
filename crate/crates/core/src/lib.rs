//! Training-time fault localization for small feed-forward networks.
//!
//! A model described by a [`nn::ModelSpec`] is trained under a
//! [`monitor::Monitor`] that runs the symptom [`detectors`] after every
//! forward pass, loss computation and backward pass. The first symptom stops
//! training and is mapped by [`diagnosis::map_symptom`] to a recommended
//! change, producing a [`monitor::DiagnosisReport`].

// `!(a < b)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod codes;
pub mod data;
pub mod detectors;
pub mod diagnosis;
pub mod error;
pub mod monitor;
pub mod nn;
pub mod rng;
pub mod tensor;

pub use codes::{Message, MessageCode, Quantity, Stage, Symptom, SymptomCode};
pub use data::{Dataset, DatasetSpec};
pub use detectors::MonitorConfig;
pub use error::{Error, Result};
pub use monitor::{run_diagnosis, DiagnosisReport, RunOptions};
pub use rng::Rng;
pub use tensor::Tensor;
