//! Anomaly-driven KPI ranking for network troubleshooting.
//!
//! The pipeline mirrors how an operator works a ticket: standardize the KPI
//! matrix, find anomalous timeslots (isolation forest, DBSCAN, an ideal
//! ensemble, or a ground-truth oracle), score every KPI by its
//! anomalous-vs-normal contrast, optionally bias scores with knowledge from
//! previously solved cases, and present KPIs best-first. Evaluation measures
//! agreement with expert labels (nDCG) and reading effort, and the tuning
//! module reproduces grid and randomized hyperparameter searches over
//! generated, labeled corpora.

pub mod detect;
pub mod error;
pub mod eval;
pub mod expert;
pub mod ingest;
pub mod model;
pub mod score;
pub mod seed;
pub mod synth;
pub mod tune;

pub use error::{Error, Result};
