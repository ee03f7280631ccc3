//! Full-batch Adam training of a PGNNIV model and end-to-end experiment runs.

mod experiment;
mod schedule;

pub use experiment::{
    load_attachment, run_experiment, run_with_source, write_history_csv, ExperimentError,
    RunConfig, RunOutcome, EXPLANATORY_RESOLUTION,
};
pub use schedule::Schedule;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamConfig, AdamError, AdamState, GraphError, Tensor2};
use crate::data_gen::SampleBundle;
use crate::networks::{
    build_eval_graph, build_model_graph, Model, ModelGraph, NetworkError, ParamGroup,
};
use crate::physics_loss::{
    build_loss, BatchTargets, LossBreakdown, LossNodes, LossWeights, PhysicsError, ResidualNodes,
    Stencils,
};
use crate::rng::{derive_seed, streams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    #[default]
    Scratch,
    /// Start from a checkpoint with every encoder leaf frozen.
    TransferFrozenEncoder,
    /// Start from a checkpoint with every leaf trainable.
    FineTune,
}

impl TrainMode {
    pub fn needs_checkpoint(self) -> bool {
        self != TrainMode::Scratch
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("training diverged at epoch {epoch}: non-finite value in {component}")]
    Diverged { epoch: usize, component: String },
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Adam(#[from] AdamError),
}

/// Seeds of the independent random streams of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedStreams {
    pub root: u64,
    pub coefficients: u64,
    pub noise: u64,
    pub split: u64,
    pub init: u64,
    pub autoencoder: u64,
}

/// Every random stream of a run, derived from one seed. Dataset generation
/// and model initialisation derive the same streams internally from `root`.
pub fn seed_all(seed: u64) -> SeedStreams {
    SeedStreams {
        root: seed,
        coefficients: derive_seed(seed, streams::COEFFICIENTS),
        noise: derive_seed(seed, streams::NOISE),
        split: derive_seed(seed, streams::SPLIT),
        init: derive_seed(seed, streams::INIT),
        autoencoder: derive_seed(seed, streams::AUTOENCODER),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: LossBreakdown,
    pub test: LossBreakdown,
    /// Seconds since the first epoch started.
    pub cum_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn total_seconds(&self) -> f64 {
        self.last().map_or(0.0, |r| r.cum_seconds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub weights: LossWeights,
    pub schedule: Schedule,
    pub residual_nodes: ResidualNodes,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            schedule: Schedule::desk(),
            residual_nodes: ResidualNodes::All,
        }
    }
}

/// Sets the trainability mask for `mode`.
pub fn apply_mode(model: &mut Model, mode: TrainMode) {
    for g in [
        ParamGroup::Encoder,
        ParamGroup::Decoder,
        ParamGroup::Explanatory,
    ] {
        model.set_trainable(g, true);
    }
    if mode == TrainMode::TransferFrozenEncoder {
        model.set_trainable(ParamGroup::Encoder, false);
    }
}

struct LossGraph {
    net: ModelGraph,
    loss: LossNodes,
}

fn loss_graph(
    model: &Model,
    batch: &[&SampleBundle],
    with_grad: bool,
    settings: &TrainSettings,
) -> Result<LossGraph, TrainError> {
    let inputs = Tensor2::from_rows(&batch.iter().map(|s| s.input()).collect::<Vec<_>>());
    let targets = BatchTargets::from_samples(batch.iter().copied())?;
    let stencils = Stencils::new(targets.grid.m)?;
    let mut net = if with_grad {
        build_model_graph(model, &inputs)?
    } else {
        build_eval_graph(model, &inputs)?
    };
    let loss = build_loss(
        &mut net.graph,
        net.u_hat,
        net.k_hat,
        &targets,
        &stencils,
        &settings.weights,
        settings.residual_nodes,
    )?;
    Ok(LossGraph { net, loss })
}

fn diverged(epoch: usize, err: GraphError) -> TrainError {
    match err {
        GraphError::NonFinite { node, .. } => TrainError::Diverged {
            epoch,
            component: node,
        },
        other => TrainError::Graph(other),
    }
}

/// Loss of `model` on `batch` without recording gradients.
pub fn evaluate_loss(
    model: &Model,
    batch: &[&SampleBundle],
    settings: &TrainSettings,
) -> Result<LossBreakdown, TrainError> {
    let mut g = loss_graph(model, batch, false, settings)?;
    g.net.forward(model)?;
    Ok(g.loss.breakdown(&g.net.graph, &settings.weights))
}

/// Trains `model` with full-batch Adam on `train`, recording the loss on
/// `test` every epoch from a separate graph that carries no gradients.
/// The trainability mask of `model` decides which leaves are updated.
pub fn train(
    mut model: Model,
    train: &[&SampleBundle],
    test: &[&SampleBundle],
    settings: &TrainSettings,
) -> Result<(Model, History), TrainError> {
    settings.schedule.validate().map_err(TrainError::Schedule)?;
    settings.weights.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if test.is_empty() {
        return Err(TrainError::EmptySplit("test"));
    }
    let mut tg = loss_graph(&model, train, true, settings)?;
    let mut eg = loss_graph(&model, test, false, settings)?;
    let trainable = tg.net.trainable(&model);
    let mut adam = AdamState::new(
        trainable.iter().map(|&(k, _)| &model.params[k].value),
        AdamConfig::default(),
    );
    let schedule = settings.schedule;
    let mut history = History {
        records: Vec::with_capacity(schedule.total_epochs()),
    };
    let start = Instant::now();
    for epoch in 1..=schedule.total_epochs() {
        tg.net.forward(&model).map_err(|e| diverged(epoch, e))?;
        let train_loss = tg.loss.breakdown(&tg.net.graph, &settings.weights);
        let grads = tg.net.graph.backward()?;
        eg.net.forward(&model).map_err(|e| diverged(epoch, e))?;
        let test_loss = eg.loss.breakdown(&eg.net.graph, &settings.weights);

        let grad_list: Vec<&Tensor2> = trainable.iter().map(|(_, id)| &grads[id]).collect();
        let mut params: Vec<&mut Tensor2> = model
            .params
            .iter_mut()
            .filter(|p| p.trainable)
            .map(|p| &mut p.value)
            .collect();
        adam.step(&mut params, &grad_list, schedule.learning_rate(epoch))?;
        if schedule.reset_adam_at_phase2 && epoch == schedule.phase1_epochs {
            adam.reset();
        }
        if let Some(bad) = model.params.iter().find(|p| !p.value.is_finite()) {
            return Err(TrainError::Diverged {
                epoch,
                component: format!("parameter '{}'", bad.name),
            });
        }
        history.records.push(EpochRecord {
            epoch,
            train: train_loss,
            test: test_loss,
            cum_seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok((model, history))
}
