//! Toolkit for cross-dataset lesion segmentation studies: tensor archives
//! and weight averaging, prediction ensembles, raster I/O, Dice and binned
//! AUPR, labelling-style characterization, experiment planning, reports,
//! and synthetic fixtures.

pub mod archive;
pub mod averaging;
pub mod characterization;
pub mod cli;
pub mod ensemble;
pub mod error;
pub mod metrics;
pub mod plan;
pub mod raster;
pub mod report;
pub mod rng;
pub mod synth;

pub use archive::{read_archive, write_archive, AveragingMode, Role, Scope, Tensor, TensorArchive};
pub use averaging::{average_weights, AveragingRequest};
pub use error::{Error, ErrorClass, Result};
