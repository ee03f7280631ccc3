use serde::{Deserialize, Serialize};

use super::DecoderError;
use crate::autodiff::{AdamConfig, AdamState, Graph, NodeId, Tensor2};
use crate::data_gen::Field;
use crate::decoders::compute_svd;
use crate::networks::mlp::{hidden_tanh, init_mlp, mlp_attach, mlp_forward, DenseLayer};
use crate::rng::{derive_seed, streams, SplitMix64};
use crate::trainer::Schedule;

/// Hidden widths on each side of the latent layer, mirroring the predictive encoder.
pub const AE_HIDDEN: [usize; 2] = [20, 10];

/// Decoder half of a pretrained autoencoder, `n -> 10 -> 20 -> m^2`.
///
/// Its weights are never trainable: inside a graph they are attached as
/// constants, so no optimiser can see them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrozenDecoder {
    pub m: usize,
    pub n: usize,
    pub layers: Vec<DenseLayer>,
}

impl FrozenDecoder {
    pub const TRAINABLE: bool = false;

    /// Decodes every row of `z` (`D x n`) to a flattened field.
    pub fn decode_rows(&self, z: &Tensor2) -> Result<Tensor2, DecoderError> {
        if z.cols() != self.n {
            return Err(DecoderError::Length {
                what: "latent vector",
                expected: self.n,
                got: z.cols(),
            });
        }
        Ok(mlp_forward(
            &self.layers,
            &hidden_tanh(self.layers.len()),
            z,
        ))
    }

    /// Upper bound on the Lipschitz constant of the decoder in the Euclidean
    /// norm: the product of the layers' spectral norms (`tanh` is 1-Lipschitz).
    pub fn lipschitz_bound(&self) -> Result<f64, DecoderError> {
        let mut bound = 1.0;
        for l in &self.layers {
            bound *= compute_svd(&l.weight)?.singular_values[0];
        }
        Ok(bound)
    }
}

/// Evaluates the frozen decoder at a single latent vector.
pub fn ae_decode(z: &[f64], dec: &FrozenDecoder) -> Result<Field, DecoderError> {
    let out = dec.decode_rows(&Tensor2::row(z.to_vec()))?;
    Ok(out.reshaped(dec.m, dec.m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainedAutoencoder {
    pub encoder: Vec<DenseLayer>,
    pub decoder: FrozenDecoder,
    /// Mean squared reconstruction error per sample after each epoch.
    pub loss_history: Vec<f64>,
}

impl PretrainedAutoencoder {
    pub fn encode_rows(&self, x: &Tensor2) -> Tensor2 {
        mlp_forward(&self.encoder, &hidden_tanh(self.encoder.len()), x)
    }

    pub fn reconstruct_rows(&self, x: &Tensor2) -> Result<Tensor2, DecoderError> {
        self.decoder.decode_rows(&self.encode_rows(x))
    }
}

/// Stacks fields as rows of a `D x m^2` matrix.
pub fn snapshot_matrix(fields: &[Field]) -> Result<Tensor2, DecoderError> {
    let first = fields.first().ok_or(DecoderError::EmptySnapshots)?;
    let n = first.len();
    let mut data = Vec::with_capacity(fields.len() * n);
    for f in fields {
        if f.len() != n {
            return Err(DecoderError::Length {
                what: "snapshot field",
                expected: n,
                got: f.len(),
            });
        }
        data.extend_from_slice(f.data());
    }
    Ok(Tensor2::from_vec(fields.len(), n, data))
}

/// Trains the symmetric autoencoder `N -> 20 -> 10 -> n -> 10 -> 20 -> N`
/// with full-batch Adam on the mean (over samples) of the squared
/// reconstruction error, following `schedule`.
pub fn pretrain_autoencoder(
    fields: &[Field],
    n: usize,
    schedule: &Schedule,
    seed: u64,
) -> Result<PretrainedAutoencoder, DecoderError> {
    let x = snapshot_matrix(fields)?;
    let nodes = x.cols();
    let m = (nodes as f64).sqrt().round() as usize;
    if n == 0 || n > nodes {
        return Err(DecoderError::ModeCount {
            requested: n,
            available: nodes,
        });
    }
    schedule.validate().map_err(DecoderError::Schedule)?;
    let mut rng = SplitMix64::new(derive_seed(seed, streams::AUTOENCODER));
    let [h0, h1] = AE_HIDDEN;
    let mut layers = init_mlp(&[nodes, h0, h1, n], &mut rng);
    layers.extend(init_mlp(&[n, h1, h0, nodes], &mut rng));

    let mut g = Graph::new();
    let input = g.constant("snapshots", x.clone());
    let leaves: Vec<(NodeId, NodeId)> = layers
        .iter()
        .enumerate()
        .map(|(k, l)| {
            (
                g.leaf(&format!("ae.{k}.w"), l.weight.rows(), l.weight.cols(), true),
                g.leaf(&format!("ae.{k}.b"), 1, l.bias.cols(), true),
            )
        })
        .collect();
    let z = mlp_attach(&mut g, input, &leaves[..3], &hidden_tanh(3))?;
    let out = mlp_attach(&mut g, z, &leaves[3..], &hidden_tanh(3))?;
    let diff = g.sub(out, input)?;
    let ss = g.sum_squares(diff);
    g.scale(ss, 1.0 / x.rows() as f64);

    let mut adam = AdamState::new(
        layers.iter().flat_map(|l| [&l.weight, &l.bias]),
        AdamConfig::default(),
    );
    let mut loss_history = Vec::with_capacity(schedule.total_epochs());
    for epoch in 1..=schedule.total_epochs() {
        let bindings: Vec<(NodeId, &Tensor2)> = leaves
            .iter()
            .zip(&layers)
            .flat_map(|(&(w, b), l)| [(w, &l.weight), (b, &l.bias)])
            .collect();
        let loss = g
            .forward(&bindings)
            .map_err(|source| DecoderError::Diverged {
                epoch,
                detail: source.to_string(),
            })?
            .item();
        loss_history.push(loss);
        let grads = g.backward()?;
        let grad_list: Vec<&Tensor2> = leaves
            .iter()
            .flat_map(|(w, b)| [&grads[w], &grads[b]])
            .collect();
        let mut params: Vec<&mut Tensor2> = layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect();
        adam.step(&mut params, &grad_list, schedule.learning_rate(epoch))?;
        if schedule.reset_adam_at_phase2 && epoch == schedule.phase1_epochs {
            adam.reset();
        }
    }
    let decoder_layers = layers.split_off(3);
    Ok(PretrainedAutoencoder {
        encoder: layers,
        decoder: FrozenDecoder {
            m,
            n,
            layers: decoder_layers,
        },
        loss_history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_gen::{Dataset, Material};

    fn fields(count: usize, seed: u64) -> Vec<Field> {
        Dataset::generate(Material::Material1, count, 5, 0.0, seed)
            .unwrap()
            .samples
            .into_iter()
            .map(|s| s.u)
            .collect()
    }

    fn short() -> Schedule {
        Schedule::single(300, 3e-3)
    }

    #[test]
    fn pretraining_is_deterministic_and_reduces_loss() {
        let f = fields(12, 1);
        let a = pretrain_autoencoder(&f, 3, &short(), 9).unwrap();
        let b = pretrain_autoencoder(&f, 3, &short(), 9).unwrap();
        assert_eq!(a, b);
        assert!(a.loss_history.last().unwrap() < &a.loss_history[0]);
        let c = pretrain_autoencoder(&f, 3, &short(), 10).unwrap();
        assert_ne!(a.decoder, c.decoder);
    }

    #[test]
    fn trained_code_beats_zero_code() {
        let f = fields(12, 2);
        let ae = pretrain_autoencoder(&f, 3, &short(), 4).unwrap();
        let x = snapshot_matrix(&f).unwrap();
        let rec = ae.reconstruct_rows(&x).unwrap();
        let zero = ae
            .decoder
            .decode_rows(&Tensor2::zeros(x.rows(), 3))
            .unwrap();
        for r in 0..x.rows() {
            let err = |y: &Tensor2| {
                y.row_slice(r)
                    .iter()
                    .zip(x.row_slice(r))
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
            };
            assert!(err(&rec) < err(&zero), "sample {r}");
        }
    }

    #[test]
    fn decode_is_deterministic_and_lipschitz() {
        let f = fields(10, 3);
        let ae = pretrain_autoencoder(&f, 2, &Schedule::single(50, 3e-3), 1).unwrap();
        let z0 = ae_decode(&[0.0, 0.0], &ae.decoder).unwrap();
        assert_eq!(z0, ae_decode(&[0.0, 0.0], &ae.decoder).unwrap());
        let bound = ae.decoder.lipschitz_bound().unwrap();
        let mut rng = SplitMix64::new(2);
        for _ in 0..20 {
            let z: Vec<f64> = (0..2).map(|_| rng.normal()).collect();
            let d: Vec<f64> = (0..2).map(|_| 0.1 * rng.normal()).collect();
            let zd: Vec<f64> = z.iter().zip(&d).map(|(a, b)| a + b).collect();
            let change = ae_decode(&zd, &ae.decoder)
                .unwrap()
                .sub(&ae_decode(&z, &ae.decoder).unwrap())
                .frobenius_norm();
            let dn = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(change <= bound * dn * (1.0 + 1e-12));
        }
        assert!(ae_decode(&[0.0], &ae.decoder).is_err());
    }
}
