use serde::{Deserialize, Serialize};

use crate::autodiff::{tanh, Graph, GraphError, NodeId, Tensor2};
use crate::rng::SplitMix64;

/// Fully connected layer acting on row vectors: `y = x W + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `fan_in x fan_out`.
    pub weight: Tensor2,
    /// `1 x fan_out`.
    pub bias: Tensor2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Linear,
}

impl DenseLayer {
    /// Weights then biases, each entry uniform on `±1/sqrt(fan_in)`.
    pub fn init(rng: &mut SplitMix64, fan_in: usize, fan_out: usize) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut draw = |n: usize| {
            (0..n)
                .map(|_| rng.uniform_range(-bound, bound))
                .collect::<Vec<_>>()
        };
        let weight = Tensor2::from_vec(fan_in, fan_out, draw(fan_in * fan_out));
        let bias = Tensor2::from_vec(1, fan_out, draw(fan_out));
        Self { weight, bias }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.cols()
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Layers for the widths `sizes[0] -> sizes[1] -> ...`, drawn in order from one stream.
pub fn init_mlp(sizes: &[usize], rng: &mut SplitMix64) -> Vec<DenseLayer> {
    sizes
        .windows(2)
        .map(|w| DenseLayer::init(rng, w[0], w[1]))
        .collect()
}

/// `tanh` on every layer except the last, which is linear.
pub fn hidden_tanh(layers: usize) -> Vec<Activation> {
    (0..layers)
        .map(|k| {
            if k + 1 == layers {
                Activation::Linear
            } else {
                Activation::Tanh
            }
        })
        .collect()
}

/// Evaluates the network on the rows of `x` without recording a graph.
pub fn mlp_forward(layers: &[DenseLayer], activations: &[Activation], x: &Tensor2) -> Tensor2 {
    assert_eq!(layers.len(), activations.len());
    let mut h = x.clone();
    for (layer, act) in layers.iter().zip(activations) {
        let mut y = h.matmul(&layer.weight);
        let c = y.cols();
        for row in y.data_mut().chunks_mut(c) {
            for (v, &b) in row.iter_mut().zip(layer.bias.data()) {
                *v += b;
                if *act == Activation::Tanh {
                    *v = tanh(*v);
                }
            }
        }
        h = y;
    }
    h
}

/// Appends the network to `graph`; `params[k]` holds the weight and bias nodes of layer `k`.
pub fn mlp_attach(
    graph: &mut Graph,
    input: NodeId,
    params: &[(NodeId, NodeId)],
    activations: &[Activation],
) -> Result<NodeId, GraphError> {
    assert_eq!(params.len(), activations.len());
    let mut h = input;
    for (&(w, b), act) in params.iter().zip(activations) {
        let z = graph.matmul(h, w)?;
        h = graph.add(z, b)?;
        if *act == Activation::Tanh {
            h = graph.tanh(h);
        }
    }
    Ok(h)
}

/// Adds the layers as constant nodes (no gradients).
pub fn constant_params(
    graph: &mut Graph,
    prefix: &str,
    layers: &[DenseLayer],
) -> Vec<(NodeId, NodeId)> {
    layers
        .iter()
        .enumerate()
        .map(|(k, l)| {
            (
                graph.constant(&format!("{prefix}.{k}.w"), l.weight.clone()),
                graph.constant(&format!("{prefix}.{k}.b"), l.bias.clone()),
            )
        })
        .collect()
}
