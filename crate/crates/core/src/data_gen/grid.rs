use serde::{Deserialize, Serialize};

/// Uniform `m x m` node grid on the unit square.
///
/// Fields are stored row-major with the row index running along `y` and the
/// column index along `x`: node `(i, j)` sits at `x = i h`, `y = j h` with
/// flat index `j * m + i` and `h = 1 / (m - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub m: usize,
}

impl Grid {
    pub fn new(m: usize) -> Self {
        Self { m }
    }

    pub fn nodes(&self) -> usize {
        self.m * self.m
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.m as f64 - 1.0)
    }

    pub fn coord(&self, i: usize) -> f64 {
        i as f64 / (self.m as f64 - 1.0)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.m + i
    }

    /// Flat indices of the edge `x = 0`, ordered by increasing `y`.
    pub fn edge_x0(&self) -> Vec<usize> {
        (0..self.m).map(|j| self.index(0, j)).collect()
    }

    pub fn edge_x1(&self) -> Vec<usize> {
        (0..self.m).map(|j| self.index(self.m - 1, j)).collect()
    }

    /// Flat indices of the edge `y = 0`, ordered by increasing `x`.
    pub fn edge_y0(&self) -> Vec<usize> {
        (0..self.m).map(|i| self.index(i, 0)).collect()
    }

    pub fn edge_y1(&self) -> Vec<usize> {
        (0..self.m).map(|i| self.index(i, self.m - 1)).collect()
    }

    /// Edges `x=0, x=1, y=0, y=1` concatenated (corners appear twice), length `4m`.
    pub fn boundary_indices(&self) -> Vec<usize> {
        let mut out = self.edge_x0();
        out.extend(self.edge_x1());
        out.extend(self.edge_y0());
        out.extend(self.edge_y1());
        out
    }

    /// Indices of the two vertical edges (`x=0`, `x=1`) where the normal flux is `qx`.
    pub fn vertical_edges(&self) -> Vec<usize> {
        let mut out = self.edge_x0();
        out.extend(self.edge_x1());
        out
    }

    /// Indices of the two horizontal edges (`y=0`, `y=1`) where the normal flux is `qy`.
    pub fn horizontal_edges(&self) -> Vec<usize> {
        let mut out = self.edge_y0();
        out.extend(self.edge_y1());
        out
    }

    pub fn interior_indices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for j in 1..self.m - 1 {
            for i in 1..self.m - 1 {
                out.push(self.index(i, j));
            }
        }
        out
    }
}
