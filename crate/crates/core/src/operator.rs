//! Discrete growth-fragmentation operators on the doubling grid.
//!
//! Unknowns are stored feature-major: entry `(i, m)` lives at `i * L + m`
//! with `L = 2N + 1`. All adjoints are taken with respect to the quadrature
//! inner product `<f, g> = Σ_{i,m} w_m f_{i,m} g_{i,m}`.
//!
//! Transport is a first-order upwind finite volume scheme on the logarithmic
//! cells: the flux leaving cell `m` is `τ_m n_m`. Division at node `m + k`
//! feeds node `m` of every feature with weight `4 p κ_ji`; since
//! `w_{m+k} = 2 w_m` holds exactly, one division removes `w_{m+k} n` cells and
//! creates `2p` times as many, carrying `p` times the mass. Nodes below `x_k`
//! cannot divide because their daughters would fall off the grid.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::Model;

/// Largest number of unknowns accepted by the dense exports.
pub const DENSE_LIMIT: usize = 4096;

/// Courant numbers within this distance of 1 are treated as exactly 1.
const EXACT_SHIFT_TOL: f64 = 1e-12;

/// Coefficients shared by the semi-discrete and the time-stepping operators.
#[derive(Debug, Clone)]
struct Coefficients {
    features: usize,
    len: usize,
    shift: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    tau: Vec<f64>,
    gamma: Vec<f64>,
    /// `κ_ji` stored at `[i * M + j]`: the weight of feature `j` mothers in
    /// the daughters of feature `i`.
    kappa_t: Vec<f64>,
    death_factor: f64,
}

impl Coefficients {
    fn new(grid: &Grid, model: &Model) -> Result<Self> {
        model.check_on_grid(grid)?;
        let features = model.len();
        let len = grid.len();
        let shift = grid.resolution();
        let mut tau = vec![0.0; features * len];
        let mut gamma = vec![0.0; features * len];
        for i in 0..features {
            for m in 0..len {
                tau[i * len + m] = model.tau(grid, i, m);
                if m >= shift {
                    gamma[i * len + m] = model.gamma(grid, i, m);
                }
            }
        }
        let kernel = model.kernel();
        let mut kappa_t = vec![0.0; features * features];
        for i in 0..features {
            for j in 0..features {
                kappa_t[i * features + j] = kernel.get(j, i);
            }
        }
        Ok(Self {
            features,
            len,
            shift,
            nodes: grid.nodes().to_vec(),
            weights: grid.weights().to_vec(),
            tau,
            gamma,
            kappa_t,
            death_factor: model.death_factor(),
        })
    }

    fn dim(&self) -> usize {
        self.features * self.len
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::Length {
                got: v.len(),
                expected: self.dim(),
            });
        }
        if let Some(index) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(())
    }
}

/// Generator `A` of the semi-discrete system `dn/dt = A n`.
#[derive(Debug, Clone)]
pub struct SemiDiscreteOperator {
    c: Coefficients,
}

/// Builds the semi-discrete generator for a validated grid and model.
pub fn assemble(grid: &Grid, model: &Model) -> Result<SemiDiscreteOperator> {
    SemiDiscreteOperator::new(grid, model)
}

impl SemiDiscreteOperator {
    pub fn new(grid: &Grid, model: &Model) -> Result<Self> {
        Ok(Self {
            c: Coefficients::new(grid, model)?,
        })
    }

    /// Number of unknowns `M (2N + 1)`.
    pub fn dim(&self) -> usize {
        self.c.dim()
    }

    pub fn features(&self) -> usize {
        self.c.features
    }

    /// Nodes per feature.
    pub fn nodes(&self) -> usize {
        self.c.len
    }

    /// `τ_{i,m}` in storage order.
    pub fn tau(&self) -> &[f64] {
        &self.c.tau
    }

    /// `γ_{i,m}` in storage order, zero at nodes that cannot divide.
    pub fn gamma(&self) -> &[f64] {
        &self.c.gamma
    }

    pub fn weights(&self) -> &[f64] {
        &self.c.weights
    }

    /// Grid nodes `x_m`.
    pub fn grid_nodes(&self) -> &[f64] {
        &self.c.nodes
    }

    /// Nodes per octave.
    pub fn resolution(&self) -> usize {
        self.c.shift
    }

    pub fn death_factor(&self) -> f64 {
        self.c.death_factor
    }

    /// `A n`.
    pub fn apply(&self, n: &[f64]) -> Result<Vec<f64>> {
        self.c.check(n)?;
        let mut out = vec![0.0; self.dim()];
        self.apply_into(n, &mut out);
        Ok(out)
    }

    /// Transpose of `A` for the quadrature inner product.
    pub fn apply_adjoint(&self, phi: &[f64]) -> Result<Vec<f64>> {
        self.c.check(phi)?;
        let mut out = vec![0.0; self.dim()];
        self.apply_adjoint_into(phi, &mut out);
        Ok(out)
    }

    pub(crate) fn apply_into(&self, n: &[f64], out: &mut [f64]) {
        let c = &self.c;
        let (mm, l, k) = (c.features, c.len, c.shift);
        let gain = 4.0 * c.death_factor;
        for i in 0..mm {
            let base = i * l;
            for m in 0..l {
                let idx = base + m;
                let inflow = if m > 0 {
                    c.tau[idx - 1] * n[idx - 1]
                } else {
                    0.0
                };
                let mut v = -(c.tau[idx] * n[idx] - inflow) / c.weights[m] - c.gamma[idx] * n[idx];
                if m + k < l {
                    let mut g = 0.0;
                    for j in 0..mm {
                        let kap = c.kappa_t[i * mm + j];
                        if kap > 0.0 {
                            let src = j * l + m + k;
                            g += kap * c.gamma[src] * n[src];
                        }
                    }
                    v += gain * g;
                }
                out[idx] = v;
            }
        }
    }

    pub(crate) fn apply_adjoint_into(&self, phi: &[f64], out: &mut [f64]) {
        let c = &self.c;
        let (mm, l, k) = (c.features, c.len, c.shift);
        let gain = 2.0 * c.death_factor;
        for j in 0..mm {
            let base = j * l;
            for m in 0..l {
                let idx = base + m;
                let next = if m + 1 < l { phi[idx + 1] } else { 0.0 };
                let mut v = c.tau[idx] * (next - phi[idx]) / c.weights[m] - c.gamma[idx] * phi[idx];
                if m >= k && c.gamma[idx] > 0.0 {
                    let mut g = 0.0;
                    for i in 0..mm {
                        let kap = c.kappa_t[i * mm + j];
                        if kap > 0.0 {
                            g += kap * phi[i * l + m - k];
                        }
                    }
                    v += gain * c.gamma[idx] * g;
                }
                out[idx] = v;
            }
        }
    }

    /// Rate at which mass leaves through the top of the grid, so that
    /// `d/dt Σ w x n = c_τ Σ w τ n - outflux` with `c_τ = transport_mass_factor()`.
    pub fn mass_outflux(&self, n: &[f64]) -> f64 {
        let c = &self.c;
        let top = c.len - 1;
        let x_top = c.weights[top] / self.log_step();
        let r = self.ratio();
        (0..c.features)
            .map(|i| r * x_top * c.tau[i * c.len + top] * n[i * c.len + top])
            .sum()
    }

    /// Number leaving through the top: `Σ_i τ_{i,top} n_{i,top}`.
    pub fn number_outflux(&self, n: &[f64]) -> f64 {
        let c = &self.c;
        let top = c.len - 1;
        (0..c.features)
            .map(|i| c.tau[i * c.len + top] * n[i * c.len + top])
            .sum()
    }

    /// `(2^(1/k) - 1) / (ln 2 / k)`: the upwind scheme moves mass at this
    /// multiple of `∫ τ n`, which tends to 1 as `k` grows.
    pub fn transport_mass_factor(&self) -> f64 {
        (self.ratio() - 1.0) / self.log_step()
    }

    fn log_step(&self) -> f64 {
        std::f64::consts::LN_2 / self.c.shift as f64
    }

    fn ratio(&self) -> f64 {
        (1.0 / self.c.shift as f64).exp2()
    }

    /// Row-major dense matrix of `A`, for grids with at most [`DENSE_LIMIT`]
    /// unknowns.
    pub fn to_dense(&self) -> Result<Vec<f64>> {
        dense_from_action(self.dim(), |v, out| self.apply_into(v, out))
    }
}

/// One symmetric split time step `S = R_{dt/2} ∘ T ∘ R_{dt/2}`: half a
/// division substep, upwind transport, half a division substep.
///
/// A division substep of length `h` removes `(1 - e^{-γ h}) n` from every node
/// and redistributes it to the half-size node, which keeps the step
/// nonnegative and conservative for any `γ h`, including the very large values
/// reached at the top of the grid when `β` grows fast. The symmetric
/// arrangement puts recorded states halfway between two division substeps, so
/// moments such as `∫ γ n` carry no first-order sampling bias.
#[derive(Debug, Clone)]
pub struct StepOperator {
    c: Coefficients,
    dt: f64,
    /// `1 - ν_{i,m}`.
    stay: Vec<f64>,
    /// Courant numbers `ν_{i,m} = dt τ_{i,m} / w_m`.
    courant: Vec<f64>,
    /// `dt τ_{i,m-1} / w_m`.
    inflow: Vec<f64>,
    /// `1 - e^{-γ dt / 2}`.
    divide: Vec<f64>,
}

/// Largest stable step: `ln 2 / (k v_max)` for linear growth, otherwise the
/// smallest `w_m / τ_{i,m}`.
pub fn canonical_dt(grid: &Grid, model: &Model) -> f64 {
    if model.growth().is_linear() {
        return grid.log_step() / model.features().max();
    }
    let mut dt = f64::INFINITY;
    for i in 0..model.len() {
        for m in 0..grid.len() {
            dt = dt.min(grid.weights()[m] / model.tau(grid, i, m));
        }
    }
    dt
}

impl StepOperator {
    pub fn new(grid: &Grid, model: &Model, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Range {
                name: "dt",
                value: dt,
                expected: "finite and positive",
            });
        }
        let c = Coefficients::new(grid, model)?;
        let (mm, l) = (c.features, c.len);
        let mut courant = vec![0.0; mm * l];
        for i in 0..mm {
            for m in 0..l {
                let idx = i * l + m;
                let mut nu = dt * c.tau[idx] / c.weights[m];
                if nu > 1.0 + EXACT_SHIFT_TOL {
                    return Err(Error::Cfl {
                        feature: i,
                        node: m,
                        courant: nu,
                    });
                }
                if (nu - 1.0).abs() <= EXACT_SHIFT_TOL {
                    nu = 1.0;
                }
                courant[idx] = nu;
            }
        }
        let stay = courant.iter().map(|nu| 1.0 - nu).collect();
        let mut inflow = vec![0.0; mm * l];
        for i in 0..mm {
            for m in 1..l {
                let idx = i * l + m;
                inflow[idx] = courant[idx - 1] * c.weights[m - 1] / c.weights[m];
            }
        }
        let divide: Vec<f64> = c.gamma.iter().map(|g| -(-0.5 * g * dt).exp_m1()).collect();
        let worst = c.gamma.iter().fold(0.0f64, |a, g| a.max(g * dt));
        log::debug!("step operator: dt = {dt:e}, max gamma dt = {worst:e}");
        Ok(Self {
            c,
            dt,
            stay,
            courant,
            inflow,
            divide,
        })
    }

    /// Step operator with [`canonical_dt`].
    pub fn canonical(grid: &Grid, model: &Model) -> Result<Self> {
        Self::new(grid, model, canonical_dt(grid, model))
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.c.dim()
    }

    pub fn features(&self) -> usize {
        self.c.features
    }

    pub fn nodes(&self) -> usize {
        self.c.len
    }

    pub fn tau(&self) -> &[f64] {
        &self.c.tau
    }

    pub fn gamma(&self) -> &[f64] {
        &self.c.gamma
    }

    pub fn weights(&self) -> &[f64] {
        &self.c.weights
    }

    /// Grid nodes `x_m`.
    pub fn grid_nodes(&self) -> &[f64] {
        &self.c.nodes
    }

    /// Nodes per octave.
    pub fn resolution(&self) -> usize {
        self.c.shift
    }

    pub fn courant(&self) -> &[f64] {
        &self.courant
    }

    pub fn death_factor(&self) -> f64 {
        self.c.death_factor
    }

    /// `κ_ij`.
    pub fn kappa(&self, i: usize, j: usize) -> f64 {
        self.c.kappa_t[j * self.c.features + i]
    }

    /// Whether transport of feature `i` is an exact index shift.
    pub fn is_exact_shift(&self, i: usize) -> bool {
        let l = self.c.len;
        self.courant[i * l..(i + 1) * l].iter().all(|&nu| nu == 1.0)
    }

    /// `S n`.
    pub fn apply(&self, n: &[f64]) -> Result<Vec<f64>> {
        self.c.check(n)?;
        let mut out = n.to_vec();
        self.step_in_place(&mut out);
        Ok(out)
    }

    /// `S* φ` for the quadrature inner product.
    pub fn apply_adjoint(&self, phi: &[f64]) -> Result<Vec<f64>> {
        self.c.check(phi)?;
        let mut out = phi.to_vec();
        self.adjoint_step_in_place(&mut out);
        Ok(out)
    }

    /// Transport substep `T` only.
    pub fn transport(&self, n: &[f64]) -> Result<Vec<f64>> {
        self.c.check(n)?;
        let mut out = n.to_vec();
        self.transport_in_place(&mut out);
        Ok(out)
    }

    /// Half division substep `R_{dt/2}` only.
    pub fn react_half(&self, n: &[f64]) -> Result<Vec<f64>> {
        self.c.check(n)?;
        let mut out = n.to_vec();
        self.react_in_place(&mut out);
        Ok(out)
    }

    pub(crate) fn step_in_place(&self, n: &mut [f64]) {
        self.react_in_place(n);
        self.transport_in_place(n);
        self.react_in_place(n);
    }

    pub(crate) fn adjoint_step_in_place(&self, phi: &mut [f64]) {
        self.react_adjoint_in_place(phi);
        self.transport_adjoint_in_place(phi);
        self.react_adjoint_in_place(phi);
    }

    // Every substep reads only entries it has not yet overwritten: transport
    // sweeps down (node m reads m - 1), its adjoint sweeps up, division sweeps
    // up (node m reads m + k) and its adjoint sweeps down.

    fn transport_in_place(&self, n: &mut [f64]) {
        let l = self.c.len;
        for i in 0..self.c.features {
            let base = i * l;
            for idx in (base + 1..base + l).rev() {
                n[idx] = self.stay[idx] * n[idx] + self.inflow[idx] * n[idx - 1];
            }
            n[base] *= self.stay[base];
        }
    }

    fn transport_adjoint_in_place(&self, phi: &mut [f64]) {
        let l = self.c.len;
        for i in 0..self.c.features {
            let base = i * l;
            let top = base + l - 1;
            for idx in base..top {
                phi[idx] = self.stay[idx] * phi[idx] + self.courant[idx] * phi[idx + 1];
            }
            phi[top] *= self.stay[top];
        }
    }

    fn react_in_place(&self, n: &mut [f64]) {
        let c = &self.c;
        let (mm, l, k) = (c.features, c.len, c.shift);
        let gain = 4.0 * c.death_factor;
        for m in 0..l {
            for i in 0..mm {
                let idx = i * l + m;
                let mut v = n[idx] - self.divide[idx] * n[idx];
                if m + k < l {
                    let mut g = 0.0;
                    for j in 0..mm {
                        let kap = c.kappa_t[i * mm + j];
                        if kap > 0.0 {
                            let src = j * l + m + k;
                            g += kap * self.divide[src] * n[src];
                        }
                    }
                    v += gain * g;
                }
                n[idx] = v;
            }
        }
    }

    fn react_adjoint_in_place(&self, phi: &mut [f64]) {
        let c = &self.c;
        let (mm, l, k) = (c.features, c.len, c.shift);
        let gain = 2.0 * c.death_factor;
        for m in (0..l).rev() {
            for j in 0..mm {
                let idx = j * l + m;
                let q = self.divide[idx];
                let mut v = phi[idx] - q * phi[idx];
                if m >= k && q > 0.0 {
                    let mut g = 0.0;
                    for i in 0..mm {
                        let kap = c.kappa_t[i * mm + j];
                        if kap > 0.0 {
                            g += kap * phi[i * l + m - k];
                        }
                    }
                    v += gain * q * g;
                }
                phi[idx] = v;
            }
        }
    }

    /// Row-major dense matrix of `S`.
    pub fn to_dense(&self) -> Result<Vec<f64>> {
        dense_from_action(self.dim(), |v, out| {
            out.copy_from_slice(v);
            self.step_in_place(out);
        })
    }
}

fn dense_from_action(dim: usize, mut action: impl FnMut(&[f64], &mut [f64])) -> Result<Vec<f64>> {
    if dim > DENSE_LIMIT {
        return Err(Error::Config(format!(
            "dense export is limited to {DENSE_LIMIT} unknowns, operator has {dim}"
        )));
    }
    let mut dense = vec![0.0; dim * dim];
    let mut e = vec![0.0; dim];
    let mut col = vec![0.0; dim];
    for c in 0..dim {
        e[c] = 1.0;
        action(&e, &mut col);
        e[c] = 0.0;
        for r in 0..dim {
            dense[r * dim + c] = col[r];
        }
    }
    Ok(dense)
}
