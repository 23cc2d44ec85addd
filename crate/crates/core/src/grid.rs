use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Parameters of a geometric partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub xmin: f64,
    pub xmax: f64,
    pub cells: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { xmin: 1e-4, xmax: 40.0, cells: 512 }
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        make_geometric_grid(self.xmin, self.xmax, self.cells)
    }
}

/// Partition of a truncated size interval into cells.
///
/// Centers are geometric means of the cell edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    edges: Vec<f64>,
    centers: Vec<f64>,
    widths: Vec<f64>,
    spec: Option<GridSpec>,
}

/// Geometric grid of `n` cells on `[xmin, xmax]` with constant edge ratio.
pub fn make_geometric_grid(xmin: f64, xmax: f64, n: usize) -> Result<Grid> {
    if !(xmin > 0.0 && xmax > xmin && xmax.is_finite()) {
        return Err(domain(format!("grid bounds must satisfy 0 < xmin < xmax < inf (got [{xmin}, {xmax}])")));
    }
    if n == 0 {
        return Err(domain("grid needs at least one cell"));
    }
    let span = xmax / xmin;
    let mut edges: Vec<f64> = (0..=n).map(|i| xmin * span.powf(i as f64 / n as f64)).collect();
    edges[0] = xmin;
    edges[n] = xmax;
    let mut g = Grid::from_edges(edges)?;
    g.spec = Some(GridSpec { xmin, xmax, cells: n });
    Ok(g)
}

impl Grid {
    /// Grid from arbitrary strictly increasing positive edges.
    pub fn from_edges(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(domain("grid needs at least two edges"));
        }
        if !(edges[0] > 0.0) || edges.iter().any(|e| !e.is_finite()) {
            return Err(domain("grid edges must be positive and finite"));
        }
        if edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(domain("grid edges must be strictly increasing"));
        }
        let centers = edges.windows(2).map(|w| (w[0] * w[1]).sqrt()).collect();
        let widths = edges.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Self { edges, centers, widths, spec: None })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn xmin(&self) -> f64 {
        self.edges[0]
    }

    pub fn xmax(&self) -> f64 {
        self.edges[self.edges.len() - 1]
    }

    /// Construction parameters, when the grid is geometric.
    pub fn spec(&self) -> Option<GridSpec> {
        self.spec
    }

    /// Largest cell width in log-size, `max ln(e_{i+1}/e_i)`.
    pub fn max_log_width(&self) -> f64 {
        self.edges.windows(2).map(|w| (w[1] / w[0]).ln()).fold(0.0, f64::max)
    }

    /// Index of the cell containing `x`, if any.
    pub fn locate(&self, x: f64) -> Option<usize> {
        if !(x >= self.xmin() && x <= self.xmax()) {
            return None;
        }
        let i = self.edges.partition_point(|&e| e <= x);
        Some(i.saturating_sub(1).min(self.len() - 1))
    }

    /// The grid with all edges multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(domain(format!("grid scale factor must be positive (got {factor})")));
        }
        let mut g = Self::from_edges(self.edges.iter().map(|e| e * factor).collect())?;
        g.spec = self.spec.map(|s| GridSpec { xmin: g.xmin(), xmax: g.xmax(), ..s });
        Ok(g)
    }

    /// True when both grids have identical edges.
    pub fn same_as(&self, other: &Grid) -> bool {
        std::ptr::eq(self, other) || self.edges == other.edges
    }
}
