use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{apply_mode, seed_all, train, History, Schedule, TrainError, TrainMode, TrainSettings};
use crate::data_gen::{read_dataset, split_dataset, Dataset, Material, SampleBundle, SplitScheme};
use crate::decoders::{
    fourier_basis, pod_basis, pretrain_autoencoder, read_basis, snapshot_matrix, DecoderError,
    LinearBasis, LinearDecoder, PretrainedAutoencoder,
};
use crate::metrics::{
    curve_error, k_curve, predictive_error, quartiles, write_kcurve_csv, PredictiveSummary,
    RunReport, Timing,
};
use crate::networks::{
    count_parameters, read_checkpoint, write_checkpoint, DecoderAttachment, DecoderKind,
    ExplanatorySpec, Model, ModelSpec, ParamGroup, PredictiveSpec,
};
use crate::physics_loss::{LossBreakdown, LossWeights, ResidualNodes};

/// Points of the `u` sweep used for the explanatory error.
pub const EXPLANATORY_RESOLUTION: usize = 1001;

fn default_size() -> usize {
    10
}

/// Everything that defines one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub material: Material,
    #[serde(rename = "D")]
    pub dataset_size: usize,
    pub mu: f64,
    #[serde(default = "default_size")]
    pub m: usize,
    #[serde(default = "default_size")]
    pub n: usize,
    pub decoder: DecoderKind,
    #[serde(default)]
    pub mode: TrainMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_checkpoint: Option<PathBuf>,
    #[serde(default)]
    pub weights: LossWeights,
    #[serde(default)]
    pub schedule: Schedule,
    /// Pretraining plan of the autoencoder; defaults to `schedule`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ae_schedule: Option<Schedule>,
    /// Precomputed basis (Fourier or POD) or pretrained autoencoder to attach
    /// instead of building one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoder_file: Option<PathBuf>,
    #[serde(default)]
    pub residual_nodes: ResidualNodes,
    pub seed: u64,
    /// Dataset file to use instead of generating one from `seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outdir: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(
        material: Material,
        dataset_size: usize,
        mu: f64,
        decoder: DecoderKind,
        seed: u64,
    ) -> Self {
        Self {
            material,
            dataset_size,
            mu,
            m: 10,
            n: 10,
            decoder,
            mode: TrainMode::Scratch,
            source_checkpoint: None,
            weights: LossWeights::default(),
            schedule: Schedule::desk(),
            ae_schedule: None,
            decoder_file: None,
            residual_nodes: ResidualNodes::All,
            seed,
            data: None,
            outdir: None,
        }
    }

    /// Directory-safe name encoding the configuration.
    pub fn run_name(&self) -> String {
        let mode = match self.mode {
            TrainMode::Scratch => "scratch",
            TrainMode::TransferFrozenEncoder => "frozen",
            TrainMode::FineTune => "finetune",
        };
        format!(
            "{}_D{}_mu{}_m{}_n{}_{}_{}_s{}",
            self.material.name(),
            self.dataset_size,
            self.mu,
            self.m,
            self.n,
            self.decoder,
            mode,
            self.seed
        )
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            predictive: PredictiveSpec::new(self.m, self.n, self.decoder),
            explanatory: ExplanatorySpec::default(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.dataset_size < 10 {
            return Err(format!("D must be at least 10, got {}", self.dataset_size));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(format!("mu must be non-negative, got {}", self.mu));
        }
        self.spec()
            .predictive
            .validate()
            .map_err(|e| e.to_string())?;
        self.weights.validate().map_err(|e| e.to_string())?;
        self.schedule.validate()?;
        if let Some(s) = &self.ae_schedule {
            s.validate().map_err(|e| format!("ae_schedule: {e}"))?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("run {run}: {source}")]
    Train {
        run: String,
        #[source]
        source: TrainError,
    },
    #[error("run {run}: {detail}")]
    Numerical { run: String, detail: String },
    #[error("run {run}: {detail}")]
    Setup { run: String, detail: String },
}

impl ExperimentError {
    /// Divergence or a failed decomposition, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            ExperimentError::Numerical { .. }
                | ExperimentError::Train {
                    source: TrainError::Diverged { .. },
                    ..
                }
        )
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub model: Model,
    pub history: History,
}

fn decoder_error(run: &str, e: DecoderError) -> ExperimentError {
    match e {
        DecoderError::Diverged { .. } | DecoderError::SvdNoConvergence { .. } => {
            ExperimentError::Numerical {
                run: run.to_string(),
                detail: e.to_string(),
            }
        }
        other => ExperimentError::Setup {
            run: run.to_string(),
            detail: other.to_string(),
        },
    }
}

/// Runs `config`, loading the transfer source from `config.source_checkpoint`.
pub fn run_experiment(config: &RunConfig) -> Result<RunOutcome, ExperimentError> {
    let source = match (&config.source_checkpoint, config.mode.needs_checkpoint()) {
        (Some(path), true) => Some(read_checkpoint(path).map_err(|e| ExperimentError::Setup {
            run: config.run_name(),
            detail: e.to_string(),
        })?),
        (None, true) => {
            return Err(ExperimentError::Config(format!(
                "mode {:?} needs source_checkpoint",
                config.mode
            )))
        }
        (_, false) => None,
    };
    run_with_source(config, source.as_ref())
}

/// Runs `config` with an in-memory transfer source.
pub fn run_with_source(
    config: &RunConfig,
    source: Option<&Model>,
) -> Result<RunOutcome, ExperimentError> {
    config.validate().map_err(ExperimentError::Config)?;
    let run = config.run_name();
    let setup = |detail: String| ExperimentError::Setup {
        run: run.clone(),
        detail,
    };
    let dataset = match &config.data {
        Some(path) => {
            let ds = read_dataset(path).map_err(|e| setup(e.to_string()))?;
            if ds.len() != config.dataset_size || ds.m != config.m || ds.material != config.material
            {
                return Err(ExperimentError::Config(format!(
                    "dataset {} holds {} samples of {} on m={}, config asks for {} of {} on m={}",
                    path.display(),
                    ds.len(),
                    ds.material,
                    ds.m,
                    config.dataset_size,
                    config.material,
                    config.m
                )));
            }
            ds
        }
        None => Dataset::generate(
            config.material,
            config.dataset_size,
            config.m,
            config.mu,
            config.seed,
        )
        .map_err(|e| setup(e.to_string()))?,
    };
    let clean = dataset.clean().map_err(|e| setup(e.to_string()))?;
    let seeds = seed_all(config.seed);
    let scheme = if config.decoder == DecoderKind::Autoencoder {
        SplitScheme::Autoencoder
    } else {
        SplitScheme::Standard
    };
    let splits =
        split_dataset(dataset.len(), scheme, seeds.split).map_err(|e| setup(e.to_string()))?;
    let pick = |idx: &[usize]| -> Vec<&SampleBundle> {
        idx.iter().map(|&i| &dataset.samples[i]).collect()
    };
    let (train_set, test_set) = (pick(&splits.train), pick(&splits.test));

    let mut energy_error = None;
    let mut model = match source {
        Some(src) => {
            if src.spec.predictive != config.spec().predictive {
                return Err(setup(format!(
                    "source checkpoint spec {:?} does not match the config spec {:?}",
                    src.spec.predictive,
                    config.spec().predictive
                )));
            }
            let mut model = Model::new(config.spec(), config.seed, src.attachment.clone())
                .map_err(|e| setup(e.to_string()))?;
            model
                .load_groups(
                    src,
                    &[
                        ParamGroup::Encoder,
                        ParamGroup::Decoder,
                        ParamGroup::Explanatory,
                    ],
                )
                .map_err(|e| setup(e.to_string()))?;
            model
        }
        None => {
            let attachment = match (&config.decoder_file, config.decoder) {
                (Some(path), kind) => {
                    load_attachment(path, kind).map_err(|e| decoder_error(&run, e))?
                }
                (None, kind) => match kind {
                    DecoderKind::Baseline => DecoderAttachment::None,
                    DecoderKind::Fourier => DecoderAttachment::Linear {
                        basis: fourier_basis(config.m, config.n)
                            .map_err(|e| decoder_error(&run, e))?
                            .basis,
                    },
                    DecoderKind::Pod => {
                        let fields: Vec<_> = train_set.iter().map(|s| s.u.clone()).collect();
                        let snapshots =
                            snapshot_matrix(&fields).map_err(|e| decoder_error(&run, e))?;
                        let pod =
                            pod_basis(&snapshots, config.n).map_err(|e| decoder_error(&run, e))?;
                        energy_error = Some(pod.energy_error);
                        DecoderAttachment::Linear { basis: pod.modes }
                    }
                    DecoderKind::Autoencoder => {
                        let ae_idx = &splits.ae.as_ref().expect("autoencoder scheme").train;
                        let fields: Vec<_> = ae_idx
                            .iter()
                            .map(|&i| dataset.samples[i].u.clone())
                            .collect();
                        let schedule = config.ae_schedule.unwrap_or(config.schedule);
                        let ae = pretrain_autoencoder(&fields, config.n, &schedule, seeds.root)
                            .map_err(|e| decoder_error(&run, e))?;
                        DecoderAttachment::Frozen {
                            decoder: ae.decoder,
                        }
                    }
                },
            };
            Model::new(config.spec(), config.seed, attachment).map_err(|e| setup(e.to_string()))?
        }
    };
    apply_mode(&mut model, config.mode);

    let settings = TrainSettings {
        weights: config.weights,
        schedule: config.schedule,
        residual_nodes: config.residual_nodes,
    };
    let (model, history) = train(model, &train_set, &test_set, &settings).map_err(|source| {
        ExperimentError::Train {
            run: run.clone(),
            source,
        }
    })?;

    let mut per_sample = Vec::with_capacity(splits.validation.len());
    for &i in &splits.validation {
        let (u_hat, _) = crate::networks::predict_field(&model, &dataset.samples[i].input())
            .map_err(|e| setup(e.to_string()))?;
        per_sample
            .push(predictive_error(&u_hat, &clean.samples[i].u).map_err(|e| setup(e.to_string()))?);
    }
    let (u_min, u_max) = clean.u_range();
    let curve = k_curve(
        &model,
        config.material,
        u_min,
        u_max,
        EXPLANATORY_RESOLUTION,
    )
    .map_err(|e| setup(e.to_string()))?;
    let last = *history.last().expect("at least one epoch");
    let report = RunReport {
        config: config.clone(),
        seed: config.seed,
        epochs: history.records.len(),
        predictive: PredictiveSummary {
            quartiles: quartiles(&per_sample).map_err(|e| setup(e.to_string()))?,
            per_sample,
        },
        explanatory_error: curve_error(&curve).map_err(|e| setup(e.to_string()))?,
        u_range: [u_min, u_max],
        parameters: count_parameters(&model.spec.predictive, &model.spec.explanatory),
        trainable_parameters: model.trainable_count(),
        energy_error,
        final_train: last.train,
        final_test: last.test,
        timing: Timing {
            total_seconds: history.total_seconds(),
            seconds_per_epoch: history.total_seconds() / history.records.len() as f64,
        },
    };
    if let Some(dir) = &config.outdir {
        write_artifacts(dir, &report, &model, &history, &curve).map_err(setup)?;
    }
    Ok(RunOutcome {
        report,
        model,
        history,
    })
}

/// Reads a basis file (linear decoders) or a pretrained autoencoder file.
pub fn load_attachment(path: &Path, kind: DecoderKind) -> Result<DecoderAttachment, DecoderError> {
    let file_err = |detail: String| DecoderError::File {
        path: path.display().to_string(),
        detail,
    };
    match kind {
        DecoderKind::Baseline => Err(file_err(
            "the baseline decoder takes no decoder file".into(),
        )),
        DecoderKind::Fourier | DecoderKind::Pod => {
            let decoder = read_basis(path)?;
            let matches = matches!(
                (&decoder, kind),
                (LinearDecoder::Fourier(_), DecoderKind::Fourier)
                    | (LinearDecoder::Pod(_), DecoderKind::Pod)
            );
            if !matches {
                return Err(file_err(format!("file does not hold a {kind} basis")));
            }
            Ok(DecoderAttachment::Linear {
                basis: decoder.matrix().clone(),
            })
        }
        DecoderKind::Autoencoder => {
            let text = fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
            let ae: PretrainedAutoencoder =
                serde_json::from_str(&text).map_err(|e| file_err(e.to_string()))?;
            Ok(DecoderAttachment::Frozen {
                decoder: ae.decoder,
            })
        }
    }
}

fn write_artifacts(
    dir: &Path,
    report: &RunReport,
    model: &Model,
    history: &History,
    curve: &crate::metrics::KCurve,
) -> Result<(), String> {
    let ctx =
        |what: &str, e: &dyn std::fmt::Display| format!("writing {what} in {}: {e}", dir.display());
    fs::create_dir_all(dir).map_err(|e| ctx("directory", &e))?;
    write_history_csv(&dir.join("history.csv"), history).map_err(|e| ctx("history.csv", &e))?;
    write_checkpoint(model, &dir.join("checkpoint.json"))
        .map_err(|e| ctx("checkpoint.json", &e))?;
    let text = serde_json::to_string_pretty(report).map_err(|e| ctx("report.json", &e))?;
    fs::write(dir.join("report.json"), text).map_err(|e| ctx("report.json", &e))?;
    write_kcurve_csv(&dir.join("kcurve.csv"), curve).map_err(|e| ctx("kcurve.csv", &e))
}

/// One line per epoch: the five loss columns of the train and test splits
/// and the cumulative wall-clock time.
pub fn write_history_csv(path: &Path, history: &History) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["epoch".to_string()];
    for split in ["train", "test"] {
        for (name, _) in LossBreakdown::default().components() {
            header.push(format!("{split}_{name}"));
        }
    }
    header.push("cum_seconds".into());
    w.write_record(&header)?;
    for r in &history.records {
        let mut row = vec![r.epoch.to_string()];
        for b in [&r.train, &r.test] {
            row.extend(b.components().iter().map(|(_, v)| v.to_string()));
        }
        row.push(r.cum_seconds.to_string());
        w.write_record(&row)?;
    }
    w.flush()
}
