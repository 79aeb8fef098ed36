//! Spiking-network training laboratory built around spike-synchrony-dependent
//! plasticity (SSDP).
//!
//! The crate provides:
//!
//! - [`neuron`]: discrete-time leaky integrate-and-fire dynamics with
//!   dendritic integration and a multi-Gaussian surrogate pseudo-derivative;
//! - [`plasticity`]: SSDP weight updates (exponential and Gaussian kernels),
//!   a loop-based reference oracle, a classical pairwise STDP baseline and
//!   first-spike-time utilities;
//! - [`network`]: a one-hidden-layer spiking classifier trained by surrogate
//!   backpropagation hybridized with SSDP;
//! - [`optim`]: Adam and cosine-annealing schedules;
//! - [`data`]: IDX dataset ingestion, rate/latency spike encoders and
//!   synthetic synchrony tasks;
//! - [`analysis`]: spike-time jitter, synchrony index, loss-curve capture and
//!   CSV export;
//! - [`config`] / [`train`]: declarative run configuration and the training
//!   driver behind the CLI.

pub mod analysis;
pub mod config;
pub mod data;
pub mod error;
pub mod network;
pub mod neuron;
pub mod optim;
pub mod plasticity;
pub mod raster;
pub mod seeds;
pub mod train;

pub use error::{Error, Result};
pub use raster::SpikeRaster;

pub use config::RunConfig;
pub use network::{ForwardRecord, LayerWeights, Model, ModelSpec, SpikeMode, UpdateOrder};
pub use neuron::{MembraneState, NeuronParams, ResetMode, SurrogateParams};
pub use optim::{AdamState, CosineSchedule};
pub use plasticity::{DeltaW, DtTensor, FirstSpikeTimes, SpikeIndicator, SsdpConfig, SsdpVariant};
