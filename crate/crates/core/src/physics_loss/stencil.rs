use std::sync::Arc;

use super::PhysicsError;
use crate::autodiff::{ColumnMix, Tensor2};
use crate::data_gen::{Field, Grid};

/// Second-order first-derivative stencils on an `m x m` grid: central
/// differences inside, three-point one-sided differences on the edges.
#[derive(Debug, Clone)]
pub struct Stencils {
    grid: Grid,
    dx: Arc<ColumnMix>,
    dy: Arc<ColumnMix>,
}

/// Weights of `d/ds` along one line of `m` nodes at position `i`, as
/// `(offset index, weight)` pairs.
fn line_weights(i: usize, m: usize, h: f64) -> [(usize, f64); 3] {
    let s = 1.0 / (2.0 * h);
    if i == 0 {
        [(0, -3.0 * s), (1, 4.0 * s), (2, -s)]
    } else if i == m - 1 {
        [(m - 1, 3.0 * s), (m - 2, -4.0 * s), (m - 3, s)]
    } else {
        [(i + 1, s), (i - 1, -s), (i, 0.0)]
    }
}

impl Stencils {
    /// Stencils for spacing `1 / (m - 1)`.
    pub fn new(m: usize) -> Result<Self, PhysicsError> {
        if m < 3 {
            return Err(PhysicsError::GridTooSmall(m));
        }
        Self::with_spacing(m, Grid::new(m).spacing())
    }

    pub fn with_spacing(m: usize, h: f64) -> Result<Self, PhysicsError> {
        if m < 3 {
            return Err(PhysicsError::GridTooSmall(m));
        }
        let grid = Grid::new(m);
        let mut dx = Vec::with_capacity(grid.nodes());
        let mut dy = Vec::with_capacity(grid.nodes());
        for j in 0..m {
            for i in 0..m {
                dx.push(
                    line_weights(i, m, h)
                        .iter()
                        .filter(|t| t.1 != 0.0)
                        .map(|&(k, w)| (grid.index(k, j), w))
                        .collect(),
                );
                dy.push(
                    line_weights(j, m, h)
                        .iter()
                        .filter(|t| t.1 != 0.0)
                        .map(|&(k, w)| (grid.index(i, k), w))
                        .collect(),
                );
            }
        }
        let n = grid.nodes();
        Ok(Self {
            grid,
            dx: Arc::new(ColumnMix::new(n, dx)),
            dy: Arc::new(ColumnMix::new(n, dy)),
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// `d/dx` acting on flattened fields (one per row).
    pub fn dx(&self) -> Arc<ColumnMix> {
        Arc::clone(&self.dx)
    }

    pub fn dy(&self) -> Arc<ColumnMix> {
        Arc::clone(&self.dy)
    }

    fn apply(&self, mix: &ColumnMix, field: &Field) -> Result<Field, PhysicsError> {
        let m = self.grid.m;
        if field.shape() != (m, m) {
            return Err(PhysicsError::Shape(format!(
                "field is {}x{}, stencils are for {m}x{m}",
                field.rows(),
                field.cols()
            )));
        }
        let flat = Tensor2::from_vec(1, m * m, field.data().to_vec());
        Ok(mix.apply(&flat).reshaped(m, m))
    }
}

fn stencils_for(field: &Field, h: f64) -> Result<Stencils, PhysicsError> {
    if field.rows() != field.cols() {
        return Err(PhysicsError::Shape(format!(
            "field must be square, got {}x{}",
            field.rows(),
            field.cols()
        )));
    }
    Stencils::with_spacing(field.rows(), h)
}

/// `(du/dx, du/dy)` of a single field with grid spacing `h`.
pub fn grad2d(field: &Field, h: f64) -> Result<(Field, Field), PhysicsError> {
    let s = stencils_for(field, h)?;
    Ok((s.apply(&s.dx, field)?, s.apply(&s.dy, field)?))
}

/// `d qx/dx + d qy/dy` with the same stencils as [`grad2d`].
pub fn div2d(qx: &Field, qy: &Field, h: f64) -> Result<Field, PhysicsError> {
    if qx.shape() != qy.shape() {
        return Err(PhysicsError::Shape(format!(
            "qx is {}x{} but qy is {}x{}",
            qx.rows(),
            qx.cols(),
            qy.rows(),
            qy.cols()
        )));
    }
    let s = stencils_for(qx, h)?;
    let a = s.apply(&s.dx, qx)?;
    let b = s.apply(&s.dy, qy)?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Ok(Tensor2::from_vec(qx.rows(), qx.cols(), data))
}

/// `q = -K grad u`, elementwise.
pub fn flux(k: &Field, dudx: &Field, dudy: &Field) -> Result<(Field, Field), PhysicsError> {
    if k.shape() != dudx.shape() || k.shape() != dudy.shape() {
        return Err(PhysicsError::Shape(
            "K and gradient fields differ in shape".into(),
        ));
    }
    let times = |d: &Field| {
        let data = k
            .data()
            .iter()
            .zip(d.data())
            .map(|(a, b)| -(a * b))
            .collect();
        Tensor2::from_vec(k.rows(), k.cols(), data)
    };
    Ok((times(dudx), times(dudy)))
}
