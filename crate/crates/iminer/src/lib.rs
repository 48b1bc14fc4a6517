//! Web usage mining and traffic trend prediction.
//!
//! The pipeline: access logs are aggregated into hourly or daily traffic
//! series, turned into feature tables, segmented with fuzzy c-means (seeded
//! and sized by an evolutionary search), and the resulting cluster-augmented
//! features feed a Takagi-Sugeno fuzzy inference system whose rule base and
//! learning parameters are evolved while the membership functions and linear
//! consequents are fine-tuned by gradient descent with momentum. A
//! self-organizing map serves as the baseline clusterer and an evaluation
//! harness reports RMSE / correlation with polynomial trend lines.

pub mod error;
pub mod evo;
pub mod fcm;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod som;
pub mod synth;
pub mod tsfis;
pub mod tune;

pub use error::{Error, Result};
