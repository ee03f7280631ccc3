//! Predictive network (encoder plus a pluggable decoder) and the pixel-wise
//! explanatory network that maps `u` to the conductivity `K`.

mod counts;
pub mod mlp;

pub use counts::{
    count_parameters, encoder_formula, p_exp_formula, p_pre_formula, split_formula,
    ParameterCounts, P_EXP_REFERENCE,
};

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, GraphError, NodeId, Tensor2};
use crate::data_gen::Field;
use crate::decoders::FrozenDecoder;
use crate::rng::{derive_seed, streams, SplitMix64};
use mlp::{
    constant_params, hidden_tanh, init_mlp, mlp_attach, mlp_forward, Activation, DenseLayer,
};

#[derive(Debug, thiserror::Error)]
pub enum NetworkError {
    #[error("decoder '{kind}' needs {needed} attached")]
    MissingAttachment {
        kind: DecoderKind,
        needed: &'static str,
    },
    #[error("attachment does not fit the spec: {0}")]
    AttachmentShape(String),
    #[error("input has length {got}, expected {expected}")]
    InputLength { expected: usize, got: usize },
    #[error("checkpoint leaf '{name}' is incompatible: {detail}")]
    LeafMismatch { name: String, detail: String },
    #[error("invalid spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("checkpoint {path}: {detail}")]
    File { path: String, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderKind {
    /// Trainable mirror of the encoder, `n -> 10 -> 20 -> m^2`.
    Baseline,
    Fourier,
    Pod,
    #[serde(alias = "ae")]
    Autoencoder,
}

impl DecoderKind {
    pub const ALL: [DecoderKind; 4] = [
        DecoderKind::Baseline,
        DecoderKind::Fourier,
        DecoderKind::Pod,
        DecoderKind::Autoencoder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DecoderKind::Baseline => "baseline",
            DecoderKind::Fourier => "fourier",
            DecoderKind::Pod => "pod",
            DecoderKind::Autoencoder => "autoencoder",
        }
    }

    pub fn is_trainable(self) -> bool {
        self == DecoderKind::Baseline
    }
}

impl fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DecoderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(DecoderKind::Baseline),
            "fourier" => Ok(DecoderKind::Fourier),
            "pod" => Ok(DecoderKind::Pod),
            "autoencoder" | "ae" => Ok(DecoderKind::Autoencoder),
            other => Err(format!(
                "unknown decoder kind '{other}' (valid kinds: baseline, fourier, pod, autoencoder)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictiveSpec {
    pub m: usize,
    pub n: usize,
    /// Encoder widths before the latent layer; the baseline decoder mirrors them.
    pub hidden: Vec<usize>,
    pub decoder: DecoderKind,
}

impl PredictiveSpec {
    pub fn new(m: usize, n: usize, decoder: DecoderKind) -> Self {
        Self {
            m,
            n,
            hidden: vec![20, 10],
            decoder,
        }
    }

    /// `4m` boundary values of `u` plus `4m` of the normal flux.
    pub fn input_size(&self) -> usize {
        8 * self.m
    }

    pub fn output_size(&self) -> usize {
        self.m * self.m
    }

    pub fn encoder_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_size()];
        s.extend(&self.hidden);
        s.push(self.n);
        s
    }

    pub fn decoder_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.n];
        s.extend(self.hidden.iter().rev());
        s.push(self.output_size());
        s
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.m < 3 {
            return Err(NetworkError::Spec(format!(
                "grid size m = {} is below 3",
                self.m
            )));
        }
        if self.n == 0 || self.n > self.output_size() {
            return Err(NetworkError::Spec(format!(
                "latent size n = {} must be in 1..={}",
                self.n,
                self.output_size()
            )));
        }
        if self.hidden.contains(&0) {
            return Err(NetworkError::Spec("hidden widths must be positive".into()));
        }
        Ok(())
    }
}

/// Pixel-wise map `u -> K`: a 1x1 expansion to `n_filters` channels, a
/// hidden MLP, and a 1x1 contraction back to one channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplanatorySpec {
    pub c_in: usize,
    pub c_out: usize,
    pub n_filters: usize,
    pub hidden: Vec<usize>,
}

impl Default for ExplanatorySpec {
    fn default() -> Self {
        Self {
            c_in: 1,
            c_out: 1,
            n_filters: 5,
            hidden: vec![10],
        }
    }
}

impl ExplanatorySpec {
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.c_in, self.n_filters];
        s.extend(&self.hidden);
        s.push(self.n_filters);
        s.push(self.c_out);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub predictive: PredictiveSpec,
    #[serde(default)]
    pub explanatory: ExplanatorySpec,
}

/// Fixed decoder data carried by a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecoderAttachment {
    None,
    /// `m^2 x n` orthonormal basis (Fourier or POD).
    Linear {
        basis: Tensor2,
    },
    Frozen {
        decoder: FrozenDecoder,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Encoder,
    Decoder,
    Explanatory,
}

impl ParamGroup {
    fn prefix(self) -> &'static str {
        match self {
            ParamGroup::Encoder => "encoder",
            ParamGroup::Decoder => "decoder",
            ParamGroup::Explanatory => "explanatory",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub group: ParamGroup,
    pub value: Tensor2,
    pub trainable: bool,
}

/// Parameters and decoder attachment of a PGNNIV model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub spec: ModelSpec,
    pub seed: u64,
    pub params: Vec<Parameter>,
    pub attachment: DecoderAttachment,
}

fn layer_params(group: ParamGroup, layers: Vec<DenseLayer>) -> Vec<Parameter> {
    layers
        .into_iter()
        .enumerate()
        .flat_map(|(k, l)| {
            [
                Parameter {
                    name: format!("{}.{k}.weight", group.prefix()),
                    group,
                    value: l.weight,
                    trainable: true,
                },
                Parameter {
                    name: format!("{}.{k}.bias", group.prefix()),
                    group,
                    value: l.bias,
                    trainable: true,
                },
            ]
        })
        .collect()
}

fn init_stream(seed: u64, part: u64) -> SplitMix64 {
    SplitMix64::new(derive_seed(derive_seed(seed, streams::INIT), part))
}

/// Encoder layers (and the baseline decoder's) drawn from the init stream of `seed`.
pub fn build_predictive(spec: &PredictiveSpec, seed: u64) -> Result<Vec<Parameter>, NetworkError> {
    spec.validate()?;
    let mut params = layer_params(
        ParamGroup::Encoder,
        init_mlp(&spec.encoder_sizes(), &mut init_stream(seed, 0)),
    );
    if spec.decoder == DecoderKind::Baseline {
        params.extend(layer_params(
            ParamGroup::Decoder,
            init_mlp(&spec.decoder_sizes(), &mut init_stream(seed, 1)),
        ));
    }
    Ok(params)
}

pub fn build_explanatory(spec: &ExplanatorySpec, seed: u64) -> Vec<Parameter> {
    layer_params(
        ParamGroup::Explanatory,
        init_mlp(&spec.layer_sizes(), &mut init_stream(seed, 2)),
    )
}

impl Model {
    /// Builds freshly initialised parameters; `attachment` must match the decoder kind.
    pub fn new(
        spec: ModelSpec,
        seed: u64,
        attachment: DecoderAttachment,
    ) -> Result<Self, NetworkError> {
        let mut params = build_predictive(&spec.predictive, seed)?;
        params.extend(build_explanatory(&spec.explanatory, seed));
        let model = Self {
            spec,
            seed,
            params,
            attachment,
        };
        model.check_attachment()?;
        Ok(model)
    }

    fn check_attachment(&self) -> Result<(), NetworkError> {
        let p = &self.spec.predictive;
        let (nodes, n) = (p.output_size(), p.n);
        match (p.decoder, &self.attachment) {
            (DecoderKind::Baseline, DecoderAttachment::None) => Ok(()),
            (DecoderKind::Fourier | DecoderKind::Pod, DecoderAttachment::Linear { basis }) => {
                if basis.shape() == (nodes, n) {
                    Ok(())
                } else {
                    Err(NetworkError::AttachmentShape(format!(
                        "basis is {}x{}, expected {nodes}x{n}",
                        basis.rows(),
                        basis.cols()
                    )))
                }
            }
            (DecoderKind::Autoencoder, DecoderAttachment::Frozen { decoder }) => {
                if decoder.n == n && decoder.m == p.m {
                    Ok(())
                } else {
                    Err(NetworkError::AttachmentShape(format!(
                        "frozen decoder maps {} -> {}x{}, expected {n} -> {}x{}",
                        decoder.n, decoder.m, decoder.m, p.m, p.m
                    )))
                }
            }
            (kind @ (DecoderKind::Fourier | DecoderKind::Pod), _) => {
                Err(NetworkError::MissingAttachment {
                    kind,
                    needed: "a linear basis",
                })
            }
            (DecoderKind::Autoencoder, _) => Err(NetworkError::MissingAttachment {
                kind: DecoderKind::Autoencoder,
                needed: "a frozen decoder",
            }),
            (DecoderKind::Baseline, _) => Err(NetworkError::AttachmentShape(
                "the baseline decoder takes no attachment".into(),
            )),
        }
    }

    pub fn param(&self, name: &str) -> Option<&Parameter> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn set_trainable(&mut self, group: ParamGroup, trainable: bool) {
        for p in self.params.iter_mut().filter(|p| p.group == group) {
            p.trainable = trainable;
        }
    }

    /// Number of scalar parameters the optimiser updates.
    pub fn trainable_count(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.value.len())
            .sum()
    }

    pub fn group_count(&self, group: ParamGroup) -> usize {
        self.params
            .iter()
            .filter(|p| p.group == group)
            .map(|p| p.value.len())
            .sum()
    }

    /// Copies every parameter of the listed groups from `source` by name.
    pub fn load_groups(
        &mut self,
        source: &Model,
        groups: &[ParamGroup],
    ) -> Result<(), NetworkError> {
        for p in self.params.iter_mut().filter(|p| groups.contains(&p.group)) {
            let src = source
                .param(&p.name)
                .ok_or_else(|| NetworkError::LeafMismatch {
                    name: p.name.clone(),
                    detail: "absent from the source checkpoint".into(),
                })?;
            if src.value.shape() != p.value.shape() {
                return Err(NetworkError::LeafMismatch {
                    name: p.name.clone(),
                    detail: format!(
                        "source is {}x{}, target is {}x{}",
                        src.value.rows(),
                        src.value.cols(),
                        p.value.rows(),
                        p.value.cols()
                    ),
                });
            }
            p.value = src.value.clone();
        }
        Ok(())
    }

    fn layers(&self, group: ParamGroup) -> Vec<DenseLayer> {
        self.params
            .iter()
            .filter(|p| p.group == group)
            .collect::<Vec<_>>()
            .chunks(2)
            .map(|wb| DenseLayer {
                weight: wb[0].value.clone(),
                bias: wb[1].value.clone(),
            })
            .collect()
    }

    /// Predicted fields and latent codes for the rows of `x` (`D x 8m`).
    pub fn predict_rows(&self, x: &Tensor2) -> Result<(Tensor2, Tensor2), NetworkError> {
        let spec = &self.spec.predictive;
        if x.cols() != spec.input_size() {
            return Err(NetworkError::InputLength {
                expected: spec.input_size(),
                got: x.cols(),
            });
        }
        let enc = self.layers(ParamGroup::Encoder);
        let z = mlp_forward(&enc, &hidden_tanh(enc.len()), x);
        let u = match &self.attachment {
            DecoderAttachment::None => {
                let dec = self.layers(ParamGroup::Decoder);
                mlp_forward(&dec, &hidden_tanh(dec.len()), &z)
            }
            DecoderAttachment::Linear { basis } => z.matmul(&basis.transpose()),
            DecoderAttachment::Frozen { decoder } => {
                mlp_forward(&decoder.layers, &hidden_tanh(decoder.layers.len()), &z)
            }
        };
        Ok((u, z))
    }

    /// `K` evaluated pixel-wise at every entry of `u`, returned in the same shape.
    pub fn explain_values(&self, u: &Tensor2) -> Tensor2 {
        let layers = self.layers(ParamGroup::Explanatory);
        let col = Tensor2::from_vec(u.len(), 1, u.data().to_vec());
        mlp_forward(&layers, &explanatory_activations(layers.len()), &col)
            .reshaped(u.rows(), u.cols())
    }
}

fn explanatory_activations(layers: usize) -> Vec<Activation> {
    hidden_tanh(layers)
}

/// Field and latent code predicted from one boundary input vector.
pub fn predict_field(model: &Model, x: &[f64]) -> Result<(Field, Vec<f64>), NetworkError> {
    let (u, z) = model.predict_rows(&Tensor2::row(x.to_vec()))?;
    let m = model.spec.predictive.m;
    Ok((u.reshaped(m, m), z.into_vec()))
}

/// Conductivity predicted at every node of `u_hat`.
pub fn explain_k(model: &Model, u_hat: &Field) -> Field {
    model.explain_values(u_hat)
}

/// A model laid out on a graph for a fixed batch of inputs.
#[derive(Debug, Clone)]
pub struct ModelGraph {
    pub graph: Graph,
    /// One leaf per entry of `Model::params`, in order.
    pub param_leaves: Vec<NodeId>,
    pub latent: NodeId,
    /// `D x m^2` predicted fields.
    pub u_hat: NodeId,
    /// `D x m^2` predicted conductivities.
    pub k_hat: NodeId,
}

impl ModelGraph {
    /// Leaves of trainable parameters paired with their index in `Model::params`.
    pub fn trainable(&self, model: &Model) -> Vec<(usize, NodeId)> {
        model
            .params
            .iter()
            .zip(&self.param_leaves)
            .enumerate()
            .filter(|(_, (p, _))| p.trainable)
            .map(|(k, (_, &id))| (k, id))
            .collect()
    }

    /// Runs the graph with the current parameter values of `model`.
    pub fn forward(&mut self, model: &Model) -> Result<Tensor2, GraphError> {
        let bindings: Vec<(NodeId, &Tensor2)> = self
            .param_leaves
            .iter()
            .zip(&model.params)
            .map(|(&id, p)| (id, &p.value))
            .collect();
        self.graph.forward(&bindings)
    }
}

/// Builds encoder, decoder and explanatory network on a new graph whose
/// input is the constant batch `inputs` (`D x 8m`). Frozen parameters become
/// leaves without gradients; a fully frozen encoder is evaluated once and its
/// codes enter as a constant.
pub fn build_model_graph(model: &Model, inputs: &Tensor2) -> Result<ModelGraph, NetworkError> {
    assemble(model, inputs, true)
}

/// Same layout as [`build_model_graph`] with no gradient tracking anywhere.
pub fn build_eval_graph(model: &Model, inputs: &Tensor2) -> Result<ModelGraph, NetworkError> {
    assemble(model, inputs, false)
}

fn assemble(model: &Model, inputs: &Tensor2, with_grad: bool) -> Result<ModelGraph, NetworkError> {
    let spec = &model.spec.predictive;
    if inputs.cols() != spec.input_size() {
        return Err(NetworkError::InputLength {
            expected: spec.input_size(),
            got: inputs.cols(),
        });
    }
    let mut g = Graph::new();
    let param_leaves: Vec<NodeId> = model
        .params
        .iter()
        .map(|p| {
            g.leaf(
                &p.name,
                p.value.rows(),
                p.value.cols(),
                with_grad && p.trainable,
            )
        })
        .collect();
    let pairs = |group: ParamGroup| -> Vec<(NodeId, NodeId)> {
        model
            .params
            .iter()
            .zip(&param_leaves)
            .filter(|(p, _)| p.group == group)
            .map(|(_, &id)| id)
            .collect::<Vec<_>>()
            .chunks(2)
            .map(|c| (c[0], c[1]))
            .collect()
    };
    let frozen_encoder = with_grad
        && model
            .params
            .iter()
            .all(|p| p.group != ParamGroup::Encoder || !p.trainable);
    let latent = if frozen_encoder {
        let (_, z) = model.predict_rows(inputs)?;
        g.constant("latent", z)
    } else {
        let x = g.constant("inputs", inputs.clone());
        let enc = pairs(ParamGroup::Encoder);
        mlp_attach(&mut g, x, &enc, &hidden_tanh(enc.len()))?
    };
    g.label(latent, "latent");
    let u_hat = match &model.attachment {
        DecoderAttachment::None => {
            let dec = pairs(ParamGroup::Decoder);
            mlp_attach(&mut g, latent, &dec, &hidden_tanh(dec.len()))?
        }
        DecoderAttachment::Linear { basis } => {
            let bt = g.constant("basis_t", basis.transpose());
            g.matmul(latent, bt)?
        }
        DecoderAttachment::Frozen { decoder } => {
            let consts = constant_params(&mut g, "frozen_decoder", &decoder.layers);
            mlp_attach(&mut g, latent, &consts, &hidden_tanh(consts.len()))?
        }
    };
    g.label(u_hat, "u_hat");
    let (d, nodes) = (inputs.rows(), spec.output_size());
    let pixels = g.reshape(u_hat, d * nodes, 1)?;
    let exp = pairs(ParamGroup::Explanatory);
    let k_pixels = mlp_attach(&mut g, pixels, &exp, &explanatory_activations(exp.len()))?;
    let k_hat = g.reshape(k_pixels, d, nodes)?;
    g.label(k_hat, "k_hat");
    Ok(ModelGraph {
        graph: g,
        param_leaves,
        latent,
        u_hat,
        k_hat,
    })
}

pub fn write_checkpoint(model: &Model, path: &Path) -> Result<(), NetworkError> {
    let err = |detail: String| NetworkError::File {
        path: path.display().to_string(),
        detail,
    };
    let text = serde_json::to_string(model).map_err(|e| err(e.to_string()))?;
    fs::write(path, text).map_err(|e| err(e.to_string()))
}

pub fn read_checkpoint(path: &Path) -> Result<Model, NetworkError> {
    let err = |detail: String| NetworkError::File {
        path: path.display().to_string(),
        detail,
    };
    let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let model: Model = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
    model.check_attachment()?;
    Ok(model)
}

#[cfg(test)]
mod tests;
