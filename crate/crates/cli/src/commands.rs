use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::Serialize;

use pgnniv::data_gen::{
    dataset_file_name, read_dataset, split_dataset, write_dataset, SplitScheme,
};
use pgnniv::decoders::{fourier_basis, pretrain_autoencoder, FrozenDecoder, AE_HIDDEN};
use pgnniv::metrics::{
    curve_error, k_curve, predictive_error, quartiles, write_kcurve_csv, Quartiles,
};
use pgnniv::networks::mlp::init_mlp;
use pgnniv::networks::{
    count_parameters, predict_field, read_checkpoint, DecoderAttachment, ExplanatorySpec,
    ParamGroup, ParameterCounts, PredictiveSpec,
};
use pgnniv::rng::SplitMix64;
use pgnniv::trainer::{seed_all, ExperimentError, RunOutcome, EXPLANATORY_RESOLUTION};
use pgnniv::{
    run_experiment, Dataset, DecoderKind, Model, ModelSpec, RunConfig, Schedule, TrainMode,
};

use crate::{
    CmdResult, DatagenArgs, EvalArgs, Failure, OutRoot, ParamsArgs, PretrainArgs, TrainArgs,
    TransferArgs,
};

pub fn datagen(a: DatagenArgs) -> CmdResult {
    if !(a.mu >= 0.0 && a.mu.is_finite()) {
        return Err(anyhow!("--mu must be a non-negative noise fraction, got {}", a.mu).into());
    }
    if a.count == 0 {
        return Err(anyhow!("--count must be at least 1").into());
    }
    if a.m < 3 {
        return Err(anyhow!("--m must be at least 3, got {}", a.m).into());
    }
    let path = a.out.unwrap_or_else(|| {
        a.root
            .root
            .join(dataset_file_name(a.material, a.count, a.mu, a.m))
    });
    let ds = Dataset::generate(a.material, a.count, a.m, a.mu, a.seed)?;
    create_parent(&path)?;
    write_dataset(&ds, &path)?;
    println!(
        "wrote {} samples of {} to {}",
        ds.len(),
        a.material,
        path.display()
    );
    Ok(())
}

pub fn pretrain_ae(a: PretrainArgs) -> CmdResult {
    let ds = read_dataset(&a.data)?;
    let schedule = if a.epochs2 == 0 {
        Schedule::single(a.epochs, a.lr)
    } else {
        Schedule::two_phase(a.epochs, a.lr, a.epochs2, a.lr2)
    };
    schedule.validate().map_err(anyhow::Error::msg)?;
    let splits = split_dataset(ds.len(), SplitScheme::Autoencoder, seed_all(a.seed).split)?;
    let ae_train = &splits.ae.as_ref().expect("autoencoder scheme").train;
    let fields: Vec<_> = ae_train.iter().map(|&i| ds.samples[i].u.clone()).collect();
    let ae = pretrain_autoencoder(&fields, a.n, &schedule, a.seed).map_err(|e| {
        let numerical = matches!(e, pgnniv::decoders::DecoderError::Diverged { .. });
        let e = anyhow::Error::new(e).context("pretraining the autoencoder");
        if numerical {
            Failure::Numerical(e)
        } else {
            Failure::Usage(e)
        }
    })?;
    create_parent(&a.out)?;
    fs::write(&a.out, serde_json::to_string(&ae)?)
        .with_context(|| format!("writing {}", a.out.display()))?;
    println!(
        "pretrained on {} fields, final reconstruction loss {:.4e}, wrote {}",
        fields.len(),
        ae.loss_history.last().copied().unwrap_or(f64::NAN),
        a.out.display()
    );
    Ok(())
}

/// Reads a run config; relative paths inside it are taken relative to the file.
pub fn read_config(path: &Path) -> anyhow::Result<RunConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut config: RunConfig = serde_json::from_str(&text)
        .with_context(|| format!("parsing run config {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    for p in [
        &mut config.data,
        &mut config.source_checkpoint,
        &mut config.decoder_file,
        &mut config.outdir,
    ]
    .into_iter()
    .flatten()
    {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    Ok(config)
}

fn execute(mut config: RunConfig, root: &OutRoot) -> CmdResult {
    config
        .validate()
        .map_err(|e| anyhow::anyhow!("invalid config: {e}"))?;
    if config.outdir.is_none() {
        config.outdir = Some(root.root.join(config.run_name()));
    }
    let outdir = config.outdir.clone().expect("set above");
    let RunOutcome { report, .. } = run_experiment(&config).map_err(experiment_failure)?;
    let q = report.predictive.quartiles;
    println!(
        "{}: median error {:.4e} (Q1 {:.4e}, Q3 {:.4e}), explanatory error {:.4e}, {:.2} s, artifacts in {}",
        config.run_name(),
        q.q2,
        q.q1,
        q.q3,
        report.explanatory_error,
        report.timing.total_seconds,
        outdir.display()
    );
    Ok(())
}

fn experiment_failure(e: ExperimentError) -> Failure {
    if e.is_numerical() {
        Failure::Numerical(e.into())
    } else {
        Failure::Usage(e.into())
    }
}

pub fn train(a: TrainArgs) -> CmdResult {
    execute(read_config(&a.config)?, &a.root)
}

pub fn transfer(a: TransferArgs) -> CmdResult {
    let mut config = read_config(&a.config)?;
    config.mode = if a.fine_tune {
        TrainMode::FineTune
    } else {
        TrainMode::TransferFrozenEncoder
    };
    config.source_checkpoint = Some(a.source);
    execute(config, &a.root)
}

#[derive(Serialize)]
struct Evaluation {
    checkpoint: PathBuf,
    data: PathBuf,
    samples: usize,
    quartiles: Quartiles,
    per_sample: Vec<f64>,
    explanatory_error: f64,
    u_range: [f64; 2],
}

pub fn eval(a: EvalArgs) -> CmdResult {
    let model = read_checkpoint(&a.checkpoint)?;
    let ds = read_dataset(&a.data)?;
    if ds.m != model.spec.predictive.m {
        return Err(anyhow!(
            "checkpoint expects m = {}, dataset {} has m = {}",
            model.spec.predictive.m,
            a.data.display(),
            ds.m
        )
        .into());
    }
    let clean = ds.clean()?;
    let per_sample = ds
        .samples
        .iter()
        .zip(&clean.samples)
        .map(|(noisy, truth)| {
            let (u_hat, _) = predict_field(&model, &noisy.input())?;
            Ok(predictive_error(&u_hat, &truth.u)?)
        })
        .collect::<anyhow::Result<Vec<f64>>>()?;
    let (u_min, u_max) = clean.u_range();
    let curve = k_curve(&model, ds.material, u_min, u_max, EXPLANATORY_RESOLUTION)?;
    let summary = Evaluation {
        checkpoint: a.checkpoint,
        data: a.data,
        samples: per_sample.len(),
        quartiles: quartiles(&per_sample)?,
        per_sample,
        explanatory_error: curve_error(&curve)?,
        u_range: [u_min, u_max],
    };
    if let Some(path) = &a.kcurve {
        create_parent(path)?;
        write_kcurve_csv(path, &curve).with_context(|| format!("writing {}", path.display()))?;
    }
    let text = serde_json::to_string_pretty(&summary)?;
    match &a.out {
        Some(path) => {
            create_parent(path)?;
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

#[derive(Serialize)]
struct ParamsOutput {
    m: usize,
    n: usize,
    decoder: DecoderKind,
    #[serde(flatten)]
    formula: ParameterCounts,
    p_pre_trainable: usize,
    literal_encoding: usize,
    literal_decoding: usize,
    literal_explanatory: usize,
    literal_trainable: usize,
}

/// Placeholder decoder data of the right shape, enough to instantiate the model.
fn placeholder_attachment(spec: &PredictiveSpec) -> anyhow::Result<DecoderAttachment> {
    let nodes = spec.output_size();
    Ok(match spec.decoder {
        DecoderKind::Baseline => DecoderAttachment::None,
        DecoderKind::Fourier => DecoderAttachment::Linear {
            basis: fourier_basis(spec.m, spec.n)?.basis,
        },
        DecoderKind::Pod => DecoderAttachment::Linear {
            basis: pgnniv::Tensor2::zeros(nodes, spec.n),
        },
        DecoderKind::Autoencoder => {
            let [h0, h1] = AE_HIDDEN;
            DecoderAttachment::Frozen {
                decoder: FrozenDecoder {
                    m: spec.m,
                    n: spec.n,
                    layers: init_mlp(&[spec.n, h1, h0, nodes], &mut SplitMix64::new(0)),
                },
            }
        }
    })
}

pub fn params(a: ParamsArgs) -> CmdResult {
    let predictive = PredictiveSpec::new(a.m, a.n, a.decoder);
    predictive.validate()?;
    let explanatory = ExplanatorySpec::default();
    let formula = count_parameters(&predictive, &explanatory);
    let attachment = placeholder_attachment(&predictive)?;
    let model = Model::new(
        ModelSpec {
            predictive,
            explanatory,
        },
        0,
        attachment,
    )?;
    let out = ParamsOutput {
        m: a.m,
        n: a.n,
        decoder: a.decoder,
        formula,
        p_pre_trainable: formula.p_encoding + formula.p_decoding_trainable,
        literal_encoding: model.group_count(ParamGroup::Encoder),
        literal_decoding: model.group_count(ParamGroup::Decoder),
        literal_explanatory: model.group_count(ParamGroup::Explanatory),
        literal_trainable: model.trainable_count(),
    };
    if a.json {
        println!("{}", serde_json::to_string_pretty(&out)?);
        return Ok(());
    }
    println!(
        "architecture        m = {}, n = {}, decoder = {}",
        out.m, out.n, out.decoder
    );
    println!(
        "P_encoding          {:>8}  (literal {})",
        formula.p_encoding, out.literal_encoding
    );
    println!(
        "P_decoding          {:>8}  (trainable {}, literal {})",
        formula.p_decoding, formula.p_decoding_trainable, out.literal_decoding
    );
    println!("P_pre               {:>8}", formula.p_pre);
    println!("P_pre (trainable)   {:>8}", out.p_pre_trainable);
    println!(
        "P_exp (formula)     {:>8}  (literal {})",
        formula.p_exp_formula, out.literal_explanatory
    );
    println!("P_exp (reference)   {:>8}", formula.p_exp_reference);
    println!("trainable total     {:>8}", out.literal_trainable);
    Ok(())
}

pub fn create_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}
