//! Physically guided neural networks with internal variables (PGNNIV) for
//! two-dimensional nonlinear diffusion `div(-K(u) grad u) = f`, with fixed
//! reduced-order decoders (Fourier, POD, pretrained autoencoder) as
//! alternatives to a trainable decoder.
//!
//! The pipeline runs `data_gen -> decoders -> networks -> physics_loss ->
//! trainer -> metrics`; [`trainer::run_experiment`] ties it together.

pub mod autodiff;
pub mod data_gen;
pub mod decoders;
pub mod metrics;
pub mod networks;
pub mod physics_loss;
pub mod rng;
pub mod trainer;

pub use autodiff::{Graph, NodeId, Tensor2};
pub use data_gen::{Dataset, Field, Material, SampleBundle};
pub use decoders::FrozenDecoder;
pub use metrics::RunReport;
pub use networks::{DecoderKind, Model, ModelSpec};
pub use physics_loss::{LossBreakdown, LossWeights, ResidualNodes};
pub use trainer::{run_experiment, RunConfig, Schedule, TrainMode};
