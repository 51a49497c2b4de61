//! Geometric size grid closed under doubling.
//!
//! Nodes are `x_m = 2^((m - N) / k)` for `m = 0..=2N`, so `k` nodes span one
//! octave and `x_{m+k} = 2 x_m` holds bit for bit: each node is stored as an
//! exact power of two times `2^(r/k)` with `r = (m - N) mod k`.
//!
//! Every node owns the logarithmic cell `[x_m 2^(-1/2k), x_m 2^(1/2k)]` and
//! the quadrature weight is the midpoint rule in `ln x`:
//! `w_m = (ln 2 / k) x_m`. The rule integrates `1/x` exactly, doubles exactly
//! under the doubling map and is second order for smooth densities.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    half_count: usize,
    resolution: usize,
    log_step: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    /// Builds the grid with `2N + 1` nodes and `k` nodes per octave.
    pub fn new(half_count: usize, resolution: usize) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::Grid("resolution k must be positive".into()));
        }
        if half_count < resolution {
            return Err(Error::Grid(format!(
                "half count N = {half_count} is smaller than k = {resolution}; \
                 the doubling shift would leave the grid"
            )));
        }
        let n = half_count as i64;
        let k = resolution as i64;
        let log_step = std::f64::consts::LN_2 / resolution as f64;
        let nodes: Vec<f64> = (0..=2 * n)
            .map(|m| {
                let e = m - n;
                let octave = e.div_euclid(k);
                let rem = e.rem_euclid(k);
                2f64.powi(octave as i32) * (rem as f64 / resolution as f64).exp2()
            })
            .collect();
        let weights = nodes.iter().map(|x| log_step * x).collect();
        Ok(Self {
            half_count,
            resolution,
            log_step,
            nodes,
            weights,
        })
    }

    pub fn half_count(&self) -> usize {
        self.half_count
    }

    /// Nodes per octave.
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Spacing in `ln x`, equal to `ln 2 / k`.
    pub fn log_step(&self) -> f64 {
        self.log_step
    }

    /// Ratio between consecutive nodes, `2^(1/k)`.
    pub fn ratio(&self) -> f64 {
        (1.0 / self.resolution as f64).exp2()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn node(&self, m: usize) -> f64 {
        self.nodes[m]
    }

    /// Index of the node `x = 1`.
    pub fn unit_index(&self) -> usize {
        self.half_count
    }

    /// Node index holding `2 x_m`, or `None` when doubling leaves the grid.
    pub fn double_index(&self, m: usize) -> Option<usize> {
        let target = m + self.resolution;
        (target < self.nodes.len()).then_some(target)
    }

    /// Node index holding `x_m / 2`, or `None` below the grid.
    pub fn half_index(&self, m: usize) -> Option<usize> {
        m.checked_sub(self.resolution)
    }

    /// Node closest to `x` in logarithmic distance.
    pub fn nearest(&self, x: f64) -> usize {
        let pos = x.log2() * self.resolution as f64 + self.half_count as f64;
        pos.round().clamp(0.0, (self.nodes.len() - 1) as f64) as usize
    }

    /// Bounds of the union of logarithmic cells.
    pub fn covered_interval(&self) -> (f64, f64) {
        let half = (0.5 / self.resolution as f64).exp2();
        (self.nodes[0] / half, self.nodes[self.nodes.len() - 1] * half)
    }

    /// `Σ w_m f_m`, rejecting non-finite input.
    pub fn integrate(&self, f: &[f64]) -> Result<f64> {
        if f.len() != self.len() {
            return Err(Error::Length {
                got: f.len(),
                expected: self.len(),
            });
        }
        if let Some(index) = f.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(self.quadrature(f))
    }

    /// Unchecked `Σ w_m f_m` for hot loops.
    pub(crate) fn quadrature(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }
}
