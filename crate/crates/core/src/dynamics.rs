//! Time stepping of the Cauchy problem with renormalization.
//!
//! The stored values are the density divided by `exp(log_scale)`. At every
//! record point the state is divided by its total number and the logarithm
//! of that number is added to `log_scale`, so long runs never overflow and the
//! recorded `log_scale` series is the logarithm of the total number.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::Model;
use crate::operator::StepOperator;

/// Renormalize between record points once the total leaves this band.
const GUARD: f64 = 1e100;

/// Densities per feature and node, feature-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    features: usize,
    nodes: usize,
    values: Vec<f64>,
    t: f64,
    log_scale: f64,
}

impl Population {
    pub fn new(features: usize, nodes: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != features * nodes {
            return Err(Error::Length {
                got: values.len(),
                expected: features * nodes,
            });
        }
        if let Some(index) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            features,
            nodes,
            values,
            t: 0.0,
            log_scale: 0.0,
        })
    }

    pub fn zeros(features: usize, nodes: usize) -> Self {
        Self {
            features,
            nodes,
            values: vec![0.0; features * nodes],
            t: 0.0,
            log_scale: 0.0,
        }
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.values[i * self.nodes..(i + 1) * self.nodes]
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.t = t;
        self
    }

    /// `Σ_i Σ_m w_m n_{i,m}` at the stored scale.
    pub fn total_number(&self, weights: &[f64]) -> f64 {
        self.values
            .chunks(self.nodes)
            .map(|f| f.iter().zip(weights).map(|(n, w)| n * w).sum::<f64>())
            .sum()
    }

    /// Divides by the total number and accumulates its logarithm. A zero
    /// state is left untouched.
    pub fn renormalize(&mut self, weights: &[f64]) {
        let total = self.total_number(weights);
        if total > 0.0 && total.is_finite() {
            self.values.iter_mut().for_each(|v| *v /= total);
            self.log_scale += total.ln();
        }
    }
}

/// Identical profile `C x^a exp(-b x^2)` on every feature with total number 1.
pub fn initial_profile(grid: &Grid, features: usize, a: f64, b_exp: f64) -> Result<Population> {
    if !(a.is_finite() && a >= 0.0) {
        return Err(Error::Range {
            name: "a",
            value: a,
            expected: "finite and nonnegative",
        });
    }
    if !(b_exp.is_finite() && b_exp > 0.0) {
        return Err(Error::Range {
            name: "b_exp",
            value: b_exp,
            expected: "finite and positive",
        });
    }
    if features == 0 {
        return Err(Error::Model("at least one feature is needed".into()));
    }
    let shape: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&x| (a * x.ln() - b_exp * x * x).exp())
        .collect();
    let total = features as f64 * grid.quadrature(&shape);
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::Model(format!(
            "initial profile with a = {a}, b_exp = {b_exp} vanishes or overflows on the grid"
        )));
    }
    let values = (0..features)
        .flat_map(|_| shape.iter().map(|s| s / total))
        .collect();
    Population::new(features, grid.len(), values)
}

/// Weight of a moment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weight {
    One,
    Tau,
    Gamma,
    /// `x^α`.
    Size(f64),
}

/// Whether a moment is taken on the stored values or on the true density.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Renormalized,
    True,
}

/// `Σ_i Σ_m w_m weight_{i,m} n_{i,m}`.
pub fn moment(state: &Population, op: &StepOperator, weight: Weight, scale: Scale) -> f64 {
    let l = state.nodes;
    let w = op.weights();
    let x = op.grid_nodes();
    let sum: f64 = state
        .values
        .iter()
        .enumerate()
        .map(|(idx, n)| {
            let m = idx % l;
            let f = match weight {
                Weight::One => 1.0,
                Weight::Tau => op.tau()[idx],
                Weight::Gamma => op.gamma()[idx],
                Weight::Size(alpha) => x[m].powf(alpha),
            };
            w[m] * f * n
        })
        .sum();
    match scale {
        Scale::Renormalized => sum,
        Scale::True => sum * state.log_scale.exp(),
    }
}

/// Advances the state by one step of `op`.
pub fn step(state: &mut Population, op: &StepOperator) -> Result<()> {
    if state.values.len() != op.dim() {
        return Err(Error::Length {
            got: state.values.len(),
            expected: op.dim(),
        });
    }
    op.step_in_place(&mut state.values);
    state.t += op.dt();
    Ok(())
}

/// When to stop, record and take snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub t_end: f64,
    pub record_dt: f64,
    pub snapshot_times: Vec<f64>,
}

impl Schedule {
    pub fn new(t_end: f64, record_dt: f64) -> Self {
        Self {
            t_end,
            record_dt,
            snapshot_times: Vec::new(),
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::Range {
                name: "t_end",
                value: self.t_end,
                expected: "finite and positive",
            });
        }
        if !(self.record_dt.is_finite() && self.record_dt > 0.0) {
            return Err(Error::Range {
                name: "record_dt",
                value: self.record_dt,
                expected: "finite and positive",
            });
        }
        if let Some(&t) = self
            .snapshot_times
            .iter()
            .find(|t| !(t.is_finite() && **t >= 0.0))
        {
            return Err(Error::Range {
                name: "snapshot_times",
                value: t,
                expected: "finite and nonnegative",
            });
        }
        Ok(())
    }
}

/// Diagnostics at one record point.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    /// Logarithm of the total number; `-inf` for a vanishing population.
    pub log_mass: f64,
    /// `∫∫ τ n / ∫∫ x n`, NaN when undefined.
    pub lambda_tau: f64,
    /// `∫∫ γ n / ∫∫ n`, NaN when undefined.
    pub lambda_gamma: f64,
    /// Renormalized density at the node `x = 1`, per feature.
    pub slices: Vec<f64>,
}

/// Renormalized state at a requested time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub log_scale: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dt: f64,
    pub samples: Vec<Sample>,
    pub snapshots: Vec<Snapshot>,
    pub final_state: Population,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }
}

fn sample(state: &Population, op: &StepOperator, unit: usize) -> Sample {
    let number = moment(state, op, Weight::One, Scale::Renormalized);
    let size = moment(state, op, Weight::Size(1.0), Scale::Renormalized);
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { f64::NAN };
    let log_mass = if number > 0.0 {
        state.log_scale + number.ln()
    } else {
        f64::NEG_INFINITY
    };
    Sample {
        t: state.t,
        log_mass,
        lambda_tau: ratio(moment(state, op, Weight::Tau, Scale::Renormalized), size),
        lambda_gamma: ratio(moment(state, op, Weight::Gamma, Scale::Renormalized), number),
        slices: (0..state.features)
            .map(|i| state.values[i * state.nodes + unit])
            .collect(),
    }
}

/// Runs the canonical step operator of `model` on `grid`.
pub fn simulate(
    model: &Model,
    grid: &Grid,
    schedule: &Schedule,
    initial: Population,
) -> Result<Trajectory> {
    let op = StepOperator::canonical(grid, model)?;
    simulate_with(&op, grid, schedule, initial, |_| Ok(()))
}

/// Runs `op` from `initial` and calls `observe` on the renormalized state at
/// every record point, including the initial time.
pub fn simulate_with(
    op: &StepOperator,
    grid: &Grid,
    schedule: &Schedule,
    initial: Population,
    mut observe: impl FnMut(&Population) -> Result<()>,
) -> Result<Trajectory> {
    schedule.validate()?;
    if initial.values.len() != op.dim() {
        return Err(Error::Length {
            got: initial.values.len(),
            expected: op.dim(),
        });
    }
    let dt = op.dt();
    let steps = (schedule.t_end / dt - 1e-9).ceil().max(1.0) as usize;
    let every = ((schedule.record_dt / dt).round() as usize).max(1);
    let unit = grid.unit_index();
    let t0 = initial.t;
    let mut snapshot_steps: Vec<(usize, f64)> = schedule
        .snapshot_times
        .iter()
        .map(|&t| ((((t - t0) / dt) - 1e-9).ceil().max(0.0) as usize, t))
        .filter(|(s, _)| *s <= steps)
        .collect();
    snapshot_steps.sort_by_key(|s| s.0);

    let mut state = initial;
    let mut samples = Vec::with_capacity(steps / every + 2);
    let mut snapshots = Vec::new();
    let mut next_snapshot = 0;

    state.renormalize(op.weights());
    let record = |state: &Population,
                      samples: &mut Vec<Sample>,
                      observe: &mut dyn FnMut(&Population) -> Result<()>|
     -> Result<()> {
        samples.push(sample(state, op, unit));
        observe(state)
    };
    record(&state, &mut samples, &mut observe)?;
    while next_snapshot < snapshot_steps.len() && snapshot_steps[next_snapshot].0 == 0 {
        snapshots.push(snapshot(&state));
        next_snapshot += 1;
    }
    for s in 1..=steps {
        step(&mut state, op)?;
        state.t = t0 + s as f64 * dt;
        let at_record = s % every == 0 || s == steps;
        if at_record {
            state.renormalize(op.weights());
            if let Some(index) = state.values.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { index });
            }
            record(&state, &mut samples, &mut observe)?;
        } else if s % 64 == 0 {
            let total = state.total_number(op.weights());
            if !(1.0 / GUARD..GUARD).contains(&total) && total > 0.0 {
                state.renormalize(op.weights());
            }
        }
        while next_snapshot < snapshot_steps.len() && snapshot_steps[next_snapshot].0 == s {
            state.renormalize(op.weights());
            snapshots.push(snapshot(&state));
            next_snapshot += 1;
        }
    }
    Ok(Trajectory {
        dt,
        samples,
        snapshots,
        final_state: state,
    })
}

fn snapshot(state: &Population) -> Snapshot {
    Snapshot {
        t: state.t,
        log_scale: state.log_scale,
        values: state.values.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_named_kernel, DivisionLaw, FeatureSet, GrowthLaw, Kernel, NamedKernel};

    fn desk(kernel: NamedKernel) -> (Grid, Model) {
        let grid = Grid::new(300, 30).unwrap();
        let model =
            Model::linear_cubic(vec![1.0, 2.0, 3.0], build_named_kernel(kernel, 3).unwrap())
                .unwrap();
        (grid, model)
    }

    #[test]
    fn initial_profile_peak_and_total() {
        let grid = Grid::new(600, 50).unwrap();
        let pop = initial_profile(&grid, 3, 30.0, 60.0).unwrap();
        let op = StepOperator::canonical(
            &grid,
            &Model::linear_cubic(vec![1.0, 2.0, 3.0], Kernel::identity(3)).unwrap(),
        )
        .unwrap();
        let total = moment(&pop, &op, Weight::One, Scale::True);
        assert!((total - 1.0).abs() < 1e-12);
        let f0 = pop.feature(0);
        let peak = (0..grid.len())
            .max_by(|&a, &b| f0[a].total_cmp(&f0[b]))
            .unwrap();
        assert!((grid.node(peak) / 0.5).log2().abs() <= 1.0 / 50.0);
        assert_eq!(pop.feature(0), pop.feature(2));
    }

    #[test]
    fn initial_profile_limits() {
        let grid = Grid::new(100, 10).unwrap();
        let pop = initial_profile(&grid, 1, 0.0, 1e6).unwrap();
        let v = pop.feature(0);
        // All of the weighted number sits below x = 0.01.
        let below: f64 = (0..grid.len())
            .filter(|&m| grid.node(m) < 0.01)
            .map(|m| grid.weights()[m] * v[m])
            .sum();
        assert!((below - 1.0).abs() < 1e-9);
        assert!(initial_profile(&grid, 1, -1.0, 1.0).is_err());
        assert!(initial_profile(&grid, 1, 1.0, 0.0).is_err());
        assert!(initial_profile(&grid, 1, 1e5, 1e-3).is_err());
    }

    #[test]
    fn moments() {
        let grid = Grid::new(20, 4).unwrap();
        let model = Model::linear_cubic(vec![2.5], Kernel::identity(1)).unwrap();
        let op = StepOperator::canonical(&grid, &model).unwrap();
        let mut values = vec![0.0; grid.len()];
        values[20] = 1.0 / grid.weights()[20];
        let pop = Population::new(1, grid.len(), values).unwrap();
        assert!((moment(&pop, &op, Weight::Size(1.0), Scale::True) - 1.0).abs() < 1e-15);
        assert!((moment(&pop, &op, Weight::One, Scale::Renormalized) - 1.0).abs() < 1e-15);
        let tau = moment(&pop, &op, Weight::Tau, Scale::True);
        let x = moment(&pop, &op, Weight::Size(1.0), Scale::True);
        assert!((tau - 2.5 * x).abs() < 1e-14);
    }

    #[test]
    fn zero_data_stays_zero() {
        let (grid, model) = desk(NamedKernel::Irreducible);
        let traj = simulate(
            &model,
            &grid,
            &Schedule::new(0.5, 0.1),
            Population::zeros(3, grid.len()),
        )
        .unwrap();
        assert!(traj.final_state.values().iter().all(|&v| v == 0.0));
        assert!(traj.samples.iter().all(|s| s.log_mass == f64::NEG_INFINITY));
        assert!(traj.samples.iter().all(|s| s.lambda_tau.is_nan()));
    }

    #[test]
    fn records_and_snapshots() {
        let (grid, model) = desk(NamedKernel::Irreducible);
        let init = initial_profile(&grid, 3, 30.0, 60.0).unwrap();
        let mut schedule = Schedule::new(1.0, 0.1);
        schedule.snapshot_times = vec![0.0, 0.5];
        let mut seen = 0;
        let traj = simulate_with(
            &StepOperator::canonical(&grid, &model).unwrap(),
            &grid,
            &schedule,
            init,
            |_| {
                seen += 1;
                Ok(())
            },
        )
        .unwrap();
        assert_eq!(seen, traj.samples.len());
        assert!(traj.times().windows(2).all(|w| w[0] < w[1]));
        assert!((traj.samples.last().unwrap().t - 1.0).abs() < traj.dt);
        assert_eq!(traj.snapshots.len(), 2);
        assert_eq!(traj.snapshots[0].t, 0.0);
        assert!((traj.snapshots[1].t - 0.5).abs() < traj.dt);
        assert!(traj.final_state.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn fast_linear_feature_moves_without_diffusion() {
        let grid = Grid::new(40, 8).unwrap();
        let model = Model::new(
            FeatureSet::new(vec![3.0]).unwrap(),
            GrowthLaw::Linear,
            DivisionLaw::Power {
                coefficient: 0.0,
                exponent: 2.0,
            },
            Kernel::identity(1),
            1.0,
        )
        .unwrap();
        let op = StepOperator::canonical(&grid, &model).unwrap();
        let mut values = vec![0.0; grid.len()];
        values[10] = 1.0;
        let mut pop = Population::new(1, grid.len(), values).unwrap();
        for _ in 0..5 {
            step(&mut pop, &op).unwrap();
        }
        let support: Vec<usize> = (0..grid.len()).filter(|&m| pop.values()[m] != 0.0).collect();
        assert_eq!(support, vec![15]);
    }

    #[test]
    fn conservative_case_keeps_number() {
        let grid = Grid::new(120, 12).unwrap();
        let model = Model::linear_cubic(vec![1.0, 2.0], Kernel::identity(2))
            .unwrap()
            .with_death_factor(0.5)
            .unwrap();
        let op = StepOperator::canonical(&grid, &model).unwrap();
        let mut pop = initial_profile(&grid, 2, 30.0, 60.0).unwrap();
        let before = pop.total_number(op.weights());
        for _ in 0..50 {
            let react = op.react_half(pop.values()).unwrap();
            let b = pop.total_number(op.weights());
            let a: f64 = react
                .iter()
                .enumerate()
                .map(|(idx, v)| op.weights()[idx % grid.len()] * v)
                .sum();
            assert!((a - b).abs() <= 1e-12 * b);
            step(&mut pop, &op).unwrap();
        }
        // Nothing leaves the grid on this horizon, so the number is frozen.
        let after = pop.total_number(op.weights());
        assert!((after - before).abs() <= 1e-12 * before);
    }
}
