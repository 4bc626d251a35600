//! Path-metric tomography with a fully connected neural model.
//!
//! The crate simulates the hidden side of a tomography experiment (topology,
//! link metrics, routing) and implements the inference side: pair sampling,
//! the MLP predictor, path-augmented training, masked NMF as a baseline,
//! extended-adjacency reconstruction and evaluation. [`experiment`] ties the
//! stages together into seeded, resumable experiment cells and grids.

pub mod error;
pub mod experiment;
pub mod io;
pub mod metrics;
pub mod netmodel;
pub mod neuralnet;
pub mod nmf;
pub mod pairs;
mod par;
pub mod pat;
pub mod predictions;
pub mod reconstruct;
pub mod routing;
pub mod sampling;
pub mod seeds;

pub use error::{Error, Result};
pub use netmodel::{LinkMetricRegime, MetricSemantics, Topology};
pub use pairs::{Pair, PairTable};
pub use routing::{GroundTruthTable, RoutingStrategy};
pub use sampling::{MeasurementSet, SamplingMethod};
