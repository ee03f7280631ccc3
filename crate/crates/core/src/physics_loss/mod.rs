//! Grid differential operators and the physics-regularised training loss.
//!
//! Fields of a batch are stacked as rows of a `D x N` matrix (`N = m^2`,
//! row-major per [`Grid`]), so every operator here is a fixed sparse map over
//! columns and differentiates through [`Graph::column_mix`].

mod stencil;

pub use stencil::{div2d, flux, grad2d, Stencils};

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, GraphError, NodeId, Tensor2};
use crate::data_gen::{Grid, SampleBundle};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PhysicsError {
    #[error("grid size m = {0} is below the minimum of 3")]
    GridTooSmall(usize),
    #[error("field shapes disagree: {0}")]
    Shape(String),
    #[error("loss weight {name} must be positive, got {value}")]
    Weight { name: &'static str, value: f64 },
    #[error("empty batch")]
    EmptyBatch,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Penalty coefficients of the four loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            c0: 1e7,
            c1: 1e4,
            c2: 1e3,
            c3: 1e5,
        }
    }
}

impl LossWeights {
    pub fn unit() -> Self {
        Self {
            c0: 1.0,
            c1: 1.0,
            c2: 1.0,
            c3: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        for (name, value) in [
            ("c0", self.c0),
            ("c1", self.c1),
            ("c2", self.c2),
            ("c3", self.c3),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(PhysicsError::Weight { name, value });
            }
        }
        Ok(())
    }
}

/// Nodes on which the divergence residual is penalised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualNodes {
    #[default]
    All,
    Interior,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub mse_e: f64,
    pub mse_pi1: f64,
    pub mse_pi2: f64,
    pub mse_pi3: f64,
}

impl LossBreakdown {
    /// Weighted total, accumulated as `((c0 e + c1 pi1) + c2 pi2) + c3 pi3`.
    pub fn compose(
        weights: &LossWeights,
        mse_e: f64,
        mse_pi1: f64,
        mse_pi2: f64,
        mse_pi3: f64,
    ) -> Self {
        let total =
            weights.c0 * mse_e + weights.c1 * mse_pi1 + weights.c2 * mse_pi2 + weights.c3 * mse_pi3;
        Self {
            total,
            mse_e,
            mse_pi1,
            mse_pi2,
            mse_pi3,
        }
    }

    /// `(name, value)` pairs in a fixed order, used for reporting divergence.
    pub fn components(&self) -> [(&'static str, f64); 5] {
        [
            ("total", self.total),
            ("mse_e", self.mse_e),
            ("mse_pi1", self.mse_pi1),
            ("mse_pi2", self.mse_pi2),
            ("mse_pi3", self.mse_pi3),
        ]
    }
}

/// Observed data of a batch, stacked one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchTargets {
    pub grid: Grid,
    pub u: Tensor2,
    pub boundary_u: Tensor2,
    pub boundary_q: Tensor2,
    pub f: Tensor2,
}

impl BatchTargets {
    pub fn from_samples<'a>(
        samples: impl IntoIterator<Item = &'a SampleBundle>,
    ) -> Result<Self, PhysicsError> {
        let samples: Vec<&SampleBundle> = samples.into_iter().collect();
        let first = samples.first().ok_or(PhysicsError::EmptyBatch)?;
        let grid = first.grid();
        let (n, b) = (grid.nodes(), 4 * grid.m);
        let mut u = Vec::with_capacity(samples.len() * n);
        let mut f = Vec::with_capacity(samples.len() * n);
        let mut bu = Vec::with_capacity(samples.len() * b);
        let mut bq = Vec::with_capacity(samples.len() * b);
        for (k, s) in samples.iter().enumerate() {
            if s.u.shape() != (grid.m, grid.m)
                || s.f.shape() != (grid.m, grid.m)
                || s.boundary_u.len() != b
                || s.boundary_q.len() != b
            {
                return Err(PhysicsError::Shape(format!(
                    "sample {k} does not match the {0}x{0} grid of sample 0",
                    grid.m
                )));
            }
            u.extend_from_slice(s.u.data());
            f.extend_from_slice(s.f.data());
            bu.extend_from_slice(&s.boundary_u);
            bq.extend_from_slice(&s.boundary_q);
        }
        let d = samples.len();
        Ok(Self {
            grid,
            u: Tensor2::from_vec(d, n, u),
            boundary_u: Tensor2::from_vec(d, b, bu),
            boundary_q: Tensor2::from_vec(d, b, bq),
            f: Tensor2::from_vec(d, n, f),
        })
    }

    pub fn batch_size(&self) -> usize {
        self.u.rows()
    }
}

/// Graph nodes of the loss terms; `total` is the last node added.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossNodes {
    pub total: NodeId,
    pub mse_e: NodeId,
    pub mse_pi1: NodeId,
    pub mse_pi2: NodeId,
    pub mse_pi3: NodeId,
    pub flux_x: NodeId,
    pub flux_y: NodeId,
}

impl LossNodes {
    /// Reads the component values from the last forward pass.
    pub fn breakdown(&self, graph: &Graph, weights: &LossWeights) -> LossBreakdown {
        let v = |id: NodeId| graph.value(id).item();
        let out = LossBreakdown::compose(
            weights,
            v(self.mse_e),
            v(self.mse_pi1),
            v(self.mse_pi2),
            v(self.mse_pi3),
        );
        debug_assert_eq!(out.total.to_bits(), v(self.total).to_bits());
        out
    }
}

/// Appends the loss to `graph` given predicted fields `u_hat` and
/// conductivities `k_hat`, both `D x N` nodes. The data targets enter as
/// constants.
pub fn build_loss(
    graph: &mut Graph,
    u_hat: NodeId,
    k_hat: NodeId,
    targets: &BatchTargets,
    stencils: &Stencils,
    weights: &LossWeights,
    residual_nodes: ResidualNodes,
) -> Result<LossNodes, PhysicsError> {
    weights.validate()?;
    let grid = targets.grid;
    if stencils.grid() != grid {
        return Err(PhysicsError::Shape(format!(
            "stencils built for m = {} but targets have m = {}",
            stencils.grid().m,
            grid.m
        )));
    }
    let inv_d = 1.0 / targets.batch_size() as f64;
    let u_data = graph.constant("u_data", targets.u.clone());
    let bu_data = graph.constant("boundary_u_data", targets.boundary_u.clone());
    let bq_data = graph.constant("boundary_q_data", targets.boundary_q.clone());
    let f_data = graph.constant("f_data", targets.f.clone());

    let mse = |g: &mut Graph, residual: NodeId, label: &str| {
        let ss = g.sum_squares(residual);
        let id = g.scale(ss, inv_d);
        g.label(id, label);
        id
    };

    let e = graph.sub(u_hat, u_data)?;
    let mse_e = mse(graph, e, "mse_e");

    let bu_hat = graph.gather_cols(u_hat, grid.boundary_indices())?;
    let pi1 = graph.sub(bu_hat, bu_data)?;
    let mse_pi1 = mse(graph, pi1, "mse_pi1");

    let dudx = graph.column_mix(u_hat, stencils.dx())?;
    let dudy = graph.column_mix(u_hat, stencils.dy())?;
    let kx = graph.mul(k_hat, dudx)?;
    let ky = graph.mul(k_hat, dudy)?;
    let qx = graph.scale(kx, -1.0);
    let qy = graph.scale(ky, -1.0);
    graph.label(qx, "qx_hat");
    graph.label(qy, "qy_hat");

    let bqx = graph.gather_cols(qx, grid.vertical_edges())?;
    let bqy = graph.gather_cols(qy, grid.horizontal_edges())?;
    let bq_hat = graph.concat_cols(vec![bqx, bqy])?;
    let pi2 = graph.sub(bq_hat, bq_data)?;
    let mse_pi2 = mse(graph, pi2, "mse_pi2");

    let dqx = graph.column_mix(qx, stencils.dx())?;
    let dqy = graph.column_mix(qy, stencils.dy())?;
    let div = graph.add(dqx, dqy)?;
    let mut pi3 = graph.sub(div, f_data)?;
    if residual_nodes == ResidualNodes::Interior {
        pi3 = graph.gather_cols(pi3, grid.interior_indices())?;
    }
    let mse_pi3 = mse(graph, pi3, "mse_pi3");

    let t0 = graph.scale(mse_e, weights.c0);
    let t1 = graph.scale(mse_pi1, weights.c1);
    let t2 = graph.scale(mse_pi2, weights.c2);
    let t3 = graph.scale(mse_pi3, weights.c3);
    let s01 = graph.add(t0, t1)?;
    let s012 = graph.add(s01, t2)?;
    let total = graph.add(s012, t3)?;
    graph.label(total, "loss");
    Ok(LossNodes {
        total,
        mse_e,
        mse_pi1,
        mse_pi2,
        mse_pi3,
        flux_x: qx,
        flux_y: qy,
    })
}

/// Evaluates the loss for fixed predictions: `u_hat[k]` and `k_hat[k]` are
/// the predicted field and conductivity of `samples[k]`.
pub fn pgnniv_loss(
    samples: &[SampleBundle],
    u_hat: &[Tensor2],
    k_hat: &[Tensor2],
    weights: &LossWeights,
    residual_nodes: ResidualNodes,
) -> Result<LossBreakdown, PhysicsError> {
    let targets = BatchTargets::from_samples(samples)?;
    if u_hat.len() != samples.len() || k_hat.len() != samples.len() {
        return Err(PhysicsError::Shape(format!(
            "{} samples but {} predicted fields and {} conductivity fields",
            samples.len(),
            u_hat.len(),
            k_hat.len()
        )));
    }
    let stack = |fields: &[Tensor2], name: &str| -> Result<Tensor2, PhysicsError> {
        let n = targets.grid.nodes();
        let mut data = Vec::with_capacity(fields.len() * n);
        for (k, f) in fields.iter().enumerate() {
            if f.len() != n {
                return Err(PhysicsError::Shape(format!(
                    "{name}[{k}] has {} values, expected {n}",
                    f.len()
                )));
            }
            data.extend_from_slice(f.data());
        }
        Ok(Tensor2::from_vec(fields.len(), n, data))
    };
    let mut graph = Graph::new();
    let u = graph.constant("u_hat", stack(u_hat, "u_hat")?);
    let k = graph.constant("k_hat", stack(k_hat, "k_hat")?);
    let stencils = Stencils::new(targets.grid.m)?;
    let nodes = build_loss(
        &mut graph,
        u,
        k,
        &targets,
        &stencils,
        weights,
        residual_nodes,
    )?;
    graph.forward(&[])?;
    Ok(nodes.breakdown(&graph, weights))
}
