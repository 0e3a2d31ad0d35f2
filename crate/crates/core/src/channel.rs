//! Scalar fields on the reference channel Ω₋ = ω × (−1, 0).

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::spectral::{PeriodicField, PeriodicGrid};
use crate::vertical::VerticalNodes;

/// Samples on the tensor grid (horizontal nodes) × (vertical nodes), stored
/// layer by layer: one [`PeriodicField`]-shaped slab per vertical node.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelField {
    grid: PeriodicGrid,
    m: usize,
    values: Vec<f64>,
}

impl ChannelField {
    pub fn zeros(grid: PeriodicGrid, m: usize) -> Self {
        ChannelField {
            grid,
            m,
            values: vec![0.0; m * grid.len()],
        }
    }

    pub fn from_layers(layers: Vec<PeriodicField>) -> Result<Self> {
        let grid = layers
            .first()
            .ok_or_else(|| Error::param("layers", "need at least one layer"))?
            .grid();
        let m = layers.len();
        let mut values = Vec::with_capacity(m * grid.len());
        for l in &layers {
            if l.grid() != grid {
                return Err(Error::GridMismatch("layers on different grids".into()));
            }
            values.extend_from_slice(l.values());
        }
        Ok(ChannelField { grid, m, values })
    }

    /// Samples `f(x1, x2, y3)` at every node.
    pub fn from_fn(grid: PeriodicGrid, vnodes: &VerticalNodes, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let layers = vnodes
            .nodes()
            .iter()
            .map(|&y| PeriodicField::from_fn(grid, |x1, x2| f(x1, x2, y)))
            .collect();
        Self::from_layers(layers).expect("non-empty node set")
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn layer_slice(&self, j: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[j * n..(j + 1) * n]
    }

    pub fn layer_slice_mut(&mut self, j: usize) -> &mut [f64] {
        let n = self.grid.len();
        &mut self.values[j * n..(j + 1) * n]
    }

    pub fn layer(&self, j: usize) -> PeriodicField {
        PeriodicField::new(self.grid, self.layer_slice(j).to_vec()).expect("layer length")
    }

    pub fn layers(&self) -> Vec<PeriodicField> {
        (0..self.m).map(|j| self.layer(j)).collect()
    }

    /// Vertical profile above horizontal node `i`.
    pub fn profile(&self, i: usize) -> Vec<f64> {
        let n = self.grid.len();
        (0..self.m).map(|j| self.values[j * n + i]).collect()
    }

    pub fn map_layers(&self, f: impl Fn(&PeriodicField) -> PeriodicField) -> Self {
        Self::from_layers(self.layers().iter().map(f).collect()).expect("same grid")
    }

    pub fn scaled(&self, a: f64) -> Self {
        ChannelField {
            grid: self.grid,
            m: self.m,
            values: self.values.iter().map(|v| a * v).collect(),
        }
    }

    pub fn sub(&self, other: &ChannelField) -> Result<Self> {
        self.check_shape(other)?;
        Ok(ChannelField {
            grid: self.grid,
            m: self.m,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn add(&self, other: &ChannelField) -> Result<Self> {
        self.check_shape(other)?;
        Ok(ChannelField {
            grid: self.grid,
            m: self.m,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub(crate) fn check_shape(&self, other: &ChannelField) -> Result<()> {
        if self.grid != other.grid || self.m != other.m {
            return Err(Error::GridMismatch(format!(
                "channel fields {:?}x{} vs {:?}x{}",
                self.grid, self.m, other.grid, other.m
            )));
        }
        Ok(())
    }

    /// Per horizontal node, `∫_{−1}^0 f(·, y) w(y) dy`.
    pub fn vertical_integral(&self, vnodes: &VerticalNodes, weight: impl Fn(f64) -> f64) -> Result<PeriodicField> {
        vnodes.check_len(self.m)?;
        let n = self.grid.len();
        let mut out = vec![0.0; n];
        for (j, (&y, &w)) in vnodes.nodes().iter().zip(vnodes.weights()).enumerate() {
            let c = w * weight(y);
            for (o, v) in out.iter_mut().zip(self.layer_slice(j)) {
                *o += c * v;
            }
        }
        PeriodicField::new(self.grid, out)
    }

    /// Applies an m×m matrix along the vertical direction.
    pub(crate) fn apply_vertical(&self, mat: &nalgebra::DMatrix<f64>) -> Self {
        let n = self.grid.len();
        let mut out = vec![0.0; self.values.len()];
        for i in 0..mat.nrows() {
            for j in 0..mat.ncols() {
                let a = mat[(i, j)];
                if a == 0.0 {
                    continue;
                }
                let src = &self.values[j * n..(j + 1) * n];
                for (o, s) in out[i * n..(i + 1) * n].iter_mut().zip(src) {
                    *o += a * s;
                }
            }
        }
        ChannelField {
            grid: self.grid,
            m: mat.nrows(),
            values: out,
        }
    }

    /// One row per (horizontal node, vertical node).
    pub fn to_csv(&self, vnodes: &VerticalNodes, name: &str) -> String {
        let mut out = String::new();
        match self.grid.dim() {
            1 => writeln!(out, "x,y3,{name}").unwrap(),
            _ => writeln!(out, "x1,x2,y3,{name}").unwrap(),
        }
        for (j, &y) in vnodes.nodes().iter().enumerate() {
            for (i, v) in self.layer_slice(j).iter().enumerate() {
                let [x1, x2] = self.grid.coords(i);
                match self.grid.dim() {
                    1 => writeln!(out, "{x1},{y},{v:e}").unwrap(),
                    _ => writeln!(out, "{x1},{x2},{y},{v:e}").unwrap(),
                }
            }
        }
        out
    }
}

/// `∫_{−1}^{0} profile · weight` above every horizontal node.
pub fn vertical_integral(
    field: &ChannelField,
    vnodes: &VerticalNodes,
    weight: impl Fn(f64) -> f64,
) -> Result<PeriodicField> {
    field.vertical_integral(vnodes, weight)
}
