//! Closed-form growth rates and consistency checks against the solvers.

use crate::dynamics::{initial_profile, moment, simulate_with, Scale, Schedule, Trajectory, Weight};
use crate::entropy::{detect_oscillation, Behavior};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::{
    build_named_kernel, DivisionLaw, FeatureSet, GrowthLaw, Kernel, Model, NamedKernel,
};
use crate::operator::StepOperator;
use crate::spectral::{estimate_lambda_n, solve_eigenproblem, EigenPair, PowerOptions};

fn check_p(p: f64) -> Result<f64> {
    if p > 0.0 && p <= 1.0 {
        Ok(p)
    } else {
        Err(Error::Range {
            name: "p",
            value: p,
            expected: "half-open interval (0, 1]",
        })
    }
}

/// `τ₀ (log₂ p + 1)`: growth rate of the single-trait population with linear
/// growth when each daughter survives with probability `p`.
pub fn lambda_with_death(tau0: f64, p: f64) -> Result<f64> {
    if !(tau0 > 0.0 && tau0.is_finite()) {
        return Err(Error::Range {
            name: "tau0",
            value: tau0,
            expected: "finite and positive",
        });
    }
    Ok(tau0 * (check_p(p)?.log2() + 1.0))
}

/// `2^{v₁/v₂ - 1}`: the survival fraction at which a fast subpopulation
/// grows exactly as fast as the slow one.
pub fn critical_p0(v1: f64, v2: f64) -> Result<f64> {
    if !(v1 > 0.0 && v1 <= v2 && v2.is_finite()) {
        return Err(Error::Config(format!(
            "critical p0 needs 0 < v1 <= v2, got v1 = {v1}, v2 = {v2}"
        )));
    }
    Ok((v1 / v2 - 1.0).exp2())
}

/// `v₂ (log₂ p + 1)`.
pub fn lambda_fast_subpop(v2: f64, p: f64) -> Result<f64> {
    lambda_with_death(v2, p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichReport {
    pub lambda_1: f64,
    pub lambda: f64,
    pub lambda_2: f64,
    pub epsilon: f64,
    pub holds: bool,
}

/// Solves the single-trait problems frozen at the slowest and the fastest
/// trait and checks `λ₁ - ε ≤ λ ≤ λ₂ + ε` with `ε = 2 (tol + 0.01)` times
/// `max(|λ₁|, |λ₂|, 1)`.
pub fn check_sandwich(
    model: &Model,
    grid: &Grid,
    pair: &EigenPair,
    opts: PowerOptions,
) -> Result<SandwichReport> {
    let solve = |i: usize| -> Result<f64> {
        let frozen = model.frozen(i)?;
        let op = StepOperator::canonical(grid, &frozen)?;
        Ok(solve_eigenproblem(&op, opts)?.lambda)
    };
    let (l1, l2) = rayon::join(|| solve(0), || solve(model.len() - 1));
    let (lambda_1, lambda_2) = (l1?, l2?);
    let epsilon = 2.0 * (opts.tol + 0.01) * lambda_1.abs().max(lambda_2.abs()).max(1.0);
    let lambda = pair.lambda;
    Ok(SandwichReport {
        lambda_1,
        lambda,
        lambda_2,
        epsilon,
        holds: lambda_1 - epsilon <= lambda && lambda <= lambda_2 + epsilon,
    })
}

/// `|<S N, φ> - μ <N, φ>| / (μ dt max(|λ|, 1))` with `μ = e^{λ dt}`: the
/// duality bracket of the pair on the scale of the generator.
pub fn duality_residual(op: &StepOperator, pair: &EigenPair) -> Result<f64> {
    let sn = op.apply(&pair.n)?;
    let mu = (pair.lambda * op.dt()).exp();
    let lhs = pair.pairing(&sn, &pair.phi);
    let rhs = mu * pair.pairing(&pair.n, &pair.phi);
    Ok((lhs - rhs).abs() / (mu * op.dt() * pair.lambda.abs().max(1.0)))
}

/// Predicted long-time shape of one subpopulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentPrediction {
    Zero,
    Periodic,
}

impl ComponentPrediction {
    pub fn as_str(&self) -> &'static str {
        match self {
            ComponentPrediction::Zero => "zero",
            ComponentPrediction::Periodic => "periodic",
        }
    }
}

/// One row of the conjectured behavior of the two-trait one-way mutation
/// models.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjectureRow {
    pub family: &'static str,
    pub p_low: f64,
    pub p_high: f64,
    pub n1: ComponentPrediction,
    pub n2: ComponentPrediction,
    /// Predicted growth rate at the evaluated `p`.
    pub lambda: f64,
}

/// The conjectured row for `family` at survival fraction `p`.
pub fn conjecture_row(family: NamedKernel, v1: f64, v2: f64) -> Result<ConjectureRow> {
    let p0 = critical_p0(v1, v2)?;
    match family {
        NamedKernel::SlowToFast(p) => {
            check_p(p)?;
            Ok(ConjectureRow {
                family: "slow_to_fast",
                p_low: 0.0,
                p_high: 1.0,
                n1: ComponentPrediction::Zero,
                n2: ComponentPrediction::Periodic,
                lambda: v2,
            })
        }
        NamedKernel::FastToSlow(p) => {
            check_p(p)?;
            if p <= p0 {
                Ok(ConjectureRow {
                    family: "fast_to_slow",
                    p_low: 0.0,
                    p_high: p0,
                    n1: ComponentPrediction::Periodic,
                    n2: ComponentPrediction::Zero,
                    lambda: v1,
                })
            } else {
                Ok(ConjectureRow {
                    family: "fast_to_slow",
                    p_low: p0,
                    p_high: 1.0,
                    n1: ComponentPrediction::Periodic,
                    n2: ComponentPrediction::Periodic,
                    lambda: lambda_fast_subpop(v2, p)?,
                })
            }
        }
        other => Err(Error::Config(format!(
            "no conjecture for the {} family",
            other.family_name()
        ))),
    }
}

/// What a simulation of a two-trait model shows at its final time.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMeasurement {
    /// Regression estimate over `[t_end/2, t_end]`.
    pub lambda: f64,
    /// Share of the total number carried by each trait at the final time.
    pub shares: Vec<f64>,
    /// Classification of each trait's density at `x = 1` over the last
    /// quarter of the run.
    pub behaviors: Vec<Behavior>,
}

/// A subpopulation counts as vanished below this share of the total number.
pub const NEGLIGIBLE_SHARE: f64 = 1e-3;

/// Simulates `model` from the standard initial profile and measures the
/// quantities compared against the conjecture.
pub fn measure_run(
    model: &Model,
    grid: &Grid,
    schedule: &Schedule,
    a: f64,
    b_exp: f64,
) -> Result<RunMeasurement> {
    let op = StepOperator::canonical(grid, model)?;
    let init = initial_profile(grid, model.len(), a, b_exp)?;
    let traj = simulate_with(&op, grid, schedule, init, |_| Ok(()))?;
    let t_end = traj.samples.last().map_or(0.0, |s| s.t);
    let lambda = estimate_lambda_n(&traj, t_end)?;
    measure_trajectory(&traj, &op, lambda)
}

/// Trait shares at the final time and per-trait verdicts over the last
/// quarter of `traj`.
pub fn measure_trajectory(traj: &Trajectory, op: &StepOperator, lambda: f64) -> Result<RunMeasurement> {
    let state = &traj.final_state;
    let t_end = traj.samples.last().map_or(0.0, |s| s.t);
    let total = moment(state, op, Weight::One, Scale::Renormalized);
    let shares = (0..state.features())
        .map(|i| {
            let f = state.feature(i);
            f.iter().zip(op.weights()).map(|(n, w)| n * w).sum::<f64>() / total
        })
        .collect();
    let times = traj.times();
    let behaviors = (0..state.features())
        .map(|i| {
            let series: Vec<f64> = traj.samples.iter().map(|s| s.slices[i]).collect();
            detect_oscillation(&times, &series, t_end / 4.0).map(|v| v.class)
        })
        .collect::<Result<_>>()?;
    Ok(RunMeasurement {
        lambda,
        shares,
        behaviors,
    })
}

/// Comparison of one measured run with its conjectured row.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjectureComparison {
    pub row: ConjectureRow,
    pub measured: RunMeasurement,
    pub lambda_relative_error: f64,
    /// Measured `λ` within 2% of the prediction.
    pub lambda_ok: bool,
    /// Vanishing subpopulations are exactly the predicted ones.
    pub zero_pattern_ok: bool,
    /// Whether surviving subpopulations oscillate as predicted; `None` when
    /// a classification is undecided.
    pub behavior_ok: Option<bool>,
}

impl ConjectureComparison {
    pub fn agrees(&self) -> bool {
        self.lambda_ok && self.zero_pattern_ok
    }
}

pub fn evaluate_conjecture(
    family: NamedKernel,
    v1: f64,
    v2: f64,
    measured: RunMeasurement,
) -> Result<ConjectureComparison> {
    let row = conjecture_row(family, v1, v2)?;
    if measured.shares.len() != 2 || measured.behaviors.len() != 2 {
        return Err(Error::Length {
            got: measured.shares.len(),
            expected: 2,
        });
    }
    let predicted = [row.n1, row.n2];
    let lambda_relative_error = (measured.lambda - row.lambda).abs() / row.lambda.abs().max(1e-12);
    let zero_pattern_ok = predicted
        .iter()
        .zip(&measured.shares)
        .all(|(p, &s)| (*p == ComponentPrediction::Zero) == (s < NEGLIGIBLE_SHARE));
    let mut behavior_ok = Some(true);
    for (p, b) in predicted.iter().zip(&measured.behaviors) {
        if *p != ComponentPrediction::Periodic {
            continue;
        }
        match b {
            Behavior::Undecided => {
                behavior_ok = None;
                break;
            }
            Behavior::Converged => behavior_ok = Some(false),
            Behavior::Oscillating => {}
        }
    }
    Ok(ConjectureComparison {
        lambda_ok: lambda_relative_error <= 0.02,
        row,
        measured,
        lambda_relative_error,
        zero_pattern_ok,
        behavior_ok,
    })
}

/// Two-trait model with `τ = v x`, `β = x²` and a one-way mutation kernel.
pub fn two_trait_model(family: NamedKernel, v1: f64, v2: f64) -> Result<Model> {
    Model::new(
        FeatureSet::new(vec![v1, v2])?,
        GrowthLaw::Linear,
        DivisionLaw::Power {
            coefficient: 1.0,
            exponent: 2.0,
        },
        build_named_kernel(family, 2)?,
        1.0,
    )
}

/// Measured switching point of the fast-to-slow family on `grid`.
///
/// Below the switch the slow trait, transported with the time step of the
/// fast one, sets the growth rate; above it the fast subpopulation, which
/// keeps a fraction `p` of its newborns, does. Both rates come from the
/// eigen solver on the discrete operators, and `p` is found by bisection.
pub fn empirical_p0(grid: &Grid, v1: f64, v2: f64, opts: PowerOptions) -> Result<f64> {
    critical_p0(v1, v2)?;
    let linear = |v: f64, p: f64| -> Result<Model> {
        Model::new(
            FeatureSet::new(vec![v])?,
            GrowthLaw::Linear,
            DivisionLaw::Power {
                coefficient: 1.0,
                exponent: 2.0,
            },
            Kernel::identity(1),
            p,
        )
    };
    let dt = grid.log_step() / v2;
    let slow = StepOperator::new(grid, &linear(v1, 1.0)?, dt)?;
    let lambda_slow = solve_eigenproblem(&slow, opts)?.lambda;
    let fast = |p: f64| -> Result<f64> {
        let op = StepOperator::new(grid, &linear(v2, p)?, dt)?;
        Ok(solve_eigenproblem(&op, opts)?.lambda)
    };
    let (mut lo, mut hi) = (0.5, 1.0);
    if fast(hi)? < lambda_slow {
        return Ok(1.0);
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if fast(mid)? < lambda_slow {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-9 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
