//! Field-aware click-through-rate models built around the compressed
//! interaction network (CIN): embeddings, FM, DNN, cross network and CIN
//! components with hand-written backward passes, the combined xDeepFM
//! scorer, Adam training, AUC/log-loss metrics, brute-force verifiers and a
//! command-line front end.

pub mod cli;
pub mod components;
pub mod data;
pub mod embedding;
pub mod error;
pub mod kv;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod optim;
pub mod oracle;

pub use error::{Error, Result};
pub use model::{Model, ModelParams, ModelSpec, Parts, Preset};
