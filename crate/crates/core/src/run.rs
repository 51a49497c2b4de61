//! The computations behind the command-line subcommands, usable as a
//! library.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::analytics::{
    check_sandwich, conjecture_row, critical_p0, duality_residual, empirical_p0, evaluate_conjecture,
    measure_trajectory, ConjectureComparison, SandwichReport, NEGLIGIBLE_SHARE,
};
use crate::config::{KernelConfig, RunConfig};
use crate::dynamics::{initial_profile, simulate_with, Trajectory};
use crate::entropy::{
    detect_oscillation, dissipation, gre, l1_phi_distance, projection, renormalized_frame,
    Behavior, BehaviorVerdict, EntropyFunction,
};
use crate::error::{Error, Result};
use crate::io::{self, DiagnosticRow, Field};
use crate::model::{validate_kernel, KernelReport, NamedKernel};
use crate::operator::StepOperator;
use crate::spectral::{
    estimate_lambda_n, rolling_lambda_n, solve_eigenproblem, time_average,
    EigenPair, Estimator,
};

/// Reference growth rates of the three-trait experiments, in the order
/// `λ_n`, `λ_τ`, `λ_γ`.
pub const TABLE1_NON_MIXING: [f64; 3] = [3.005, 3.000, 3.007];
pub const TABLE1_MIXING: [f64; 3] = [1.469, 1.465, 1.470];

/// Output of [`validate`].
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub features: Vec<f64>,
    pub kernel: Vec<Vec<f64>>,
    pub death_factor: f64,
    pub grid_half_count: usize,
    pub grid_resolution: usize,
    pub grid_nodes: usize,
    pub covered_interval: (f64, f64),
    pub dt: f64,
    /// Largest Courant number per trait.
    pub courant: Vec<f64>,
    pub kernel_report: KernelReport,
    pub warnings: Vec<String>,
}

pub fn validate(config: &RunConfig) -> Result<ValidationReport> {
    let grid = config.grid()?;
    let model = config.model()?;
    let op = StepOperator::canonical(&grid, &model)?;
    let kernel_report = validate_kernel(model.kernel(), &model, &grid)?;
    let mut warnings = Vec::new();
    if !kernel_report.irreducible {
        warnings.push(format!(
            "kernel is reducible ({} components): the long-time profile may vanish on some traits and need not converge",
            kernel_report.scc_count
        ));
    }
    if !kernel_report.heterogeneity_ok {
        warnings.push(
            "growth rates of mixing traits are commensurate with doubling: convergence is not guaranteed"
                .into(),
        );
    }
    Ok(ValidationReport {
        features: model.features().values().to_vec(),
        kernel: model.kernel().rows(),
        death_factor: model.death_factor(),
        grid_half_count: grid.half_count(),
        grid_resolution: grid.resolution(),
        grid_nodes: grid.len(),
        covered_interval: grid.covered_interval(),
        dt: op.dt(),
        courant: op
            .courant()
            .chunks(op.nodes())
            .map(|c| c.iter().copied().fold(0.0, f64::max))
            .collect(),
        kernel_report,
        warnings,
    })
}

/// Eigenpair together with its consistency checks.
#[derive(Debug, Clone, Serialize)]
pub struct EigenReport {
    pub lambda: f64,
    pub lambda_adjoint: f64,
    pub residual_direct: f64,
    pub residual_adjoint: f64,
    pub duality_residual: f64,
    pub iterations: usize,
    pub dt: f64,
    pub sandwich: Option<SandwichSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SandwichSummary {
    pub lambda_1: f64,
    pub lambda_2: f64,
    pub epsilon: f64,
    pub holds: bool,
}

impl From<SandwichReport> for SandwichSummary {
    fn from(r: SandwichReport) -> Self {
        Self {
            lambda_1: r.lambda_1,
            lambda_2: r.lambda_2,
            epsilon: r.epsilon,
            holds: r.holds,
        }
    }
}

pub struct EigenRun {
    pub op: StepOperator,
    pub pair: EigenPair,
    pub report: EigenReport,
}

pub fn eigen(config: &RunConfig) -> Result<EigenRun> {
    let grid = config.grid()?;
    let model = config.model()?;
    let op = StepOperator::canonical(&grid, &model)?;
    let opts = config.power_options();
    let pair = solve_eigenproblem(&op, opts)?;
    // The frozen problems only bracket λ for linear growth with full
    // survival of newborns.
    let sandwich = if model.growth().is_linear() && model.death_factor() == 1.0 {
        Some(check_sandwich(&model, &grid, &pair, opts)?.into())
    } else {
        None
    };
    let report = EigenReport {
        lambda: pair.lambda,
        lambda_adjoint: pair.lambda_adjoint,
        residual_direct: pair.residual_direct,
        residual_adjoint: pair.residual_adjoint,
        duality_residual: duality_residual(&op, &pair)?,
        iterations: pair.iterations,
        dt: op.dt(),
        sandwich,
    };
    Ok(EigenRun { op, pair, report })
}

pub struct SimulationRun {
    pub op: StepOperator,
    /// `None` when the eigen solver failed; the entropy columns are then
    /// left empty.
    pub pair: Option<EigenPair>,
    pub trajectory: Trajectory,
    pub rows: Vec<DiagnosticRow>,
    pub warnings: Vec<String>,
}

/// Entropy columns of one state, NaN where undefined.
fn entropy_columns(
    state: &crate::dynamics::Population,
    pair: &EigenPair,
    op: &StepOperator,
) -> (f64, f64, f64) {
    let frame = renormalized_frame(state, pair);
    let rho = projection(&frame, pair);
    let centered: Vec<f64> = frame.iter().zip(&pair.n).map(|(v, n)| v - rho * n).collect();
    let entropy = gre(&centered, pair, EntropyFunction::Square).unwrap_or(f64::NAN);
    let diss = dissipation(&frame, pair, op).unwrap_or(f64::NAN);
    let l1 = l1_phi_distance(&frame, pair, rho).unwrap_or(f64::NAN);
    (entropy, diss, l1)
}

pub fn simulate(config: &RunConfig) -> Result<SimulationRun> {
    let grid = config.grid()?;
    let model = config.model()?;
    let op = StepOperator::canonical(&grid, &model)?;
    let mut warnings = Vec::new();
    let pair = match solve_eigenproblem(&op, config.power_options()) {
        Ok(pair) => Some(pair),
        Err(e) => {
            log::warn!("eigen solve failed, entropy columns left empty: {e}");
            warnings.push(format!("entropy columns empty: {e}"));
            None
        }
    };
    let init = initial_profile(&grid, model.len(), config.initial.a, config.initial.b_exp)?;
    let mut extra = Vec::new();
    let trajectory = simulate_with(&op, &grid, &config.schedule(), init, |state| {
        extra.push(match &pair {
            Some(pair) => entropy_columns(state, pair, &op),
            None => (f64::NAN, f64::NAN, f64::NAN),
        });
        Ok(())
    })?;
    let lambda_n = rolling_lambda_n(&trajectory);
    let rows = trajectory
        .samples
        .iter()
        .zip(&extra)
        .zip(&lambda_n)
        .map(|((s, &(entropy_sq, dissipation_sq, l1_phi)), &lambda_n)| DiagnosticRow {
            t: s.t,
            log_mass: s.log_mass,
            lambda_n,
            lambda_tau: s.lambda_tau,
            lambda_gamma: s.lambda_gamma,
            entropy_sq,
            dissipation_sq,
            l1_phi,
            slices: s.slices.clone(),
        })
        .collect();
    Ok(SimulationRun {
        op,
        pair,
        trajectory,
        rows,
        warnings,
    })
}

/// Long-time summary of a simulation.
#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    pub t_end: f64,
    pub dt: f64,
    /// Regression over `[t_end/2, t_end]`.
    pub lambda_n: f64,
    /// Time averages over `[t_end/2, t_end]`.
    pub lambda_tau: f64,
    pub lambda_gamma: f64,
    pub lambda_eigen: Option<f64>,
    pub behavior: String,
    pub period: Option<f64>,
    pub relative_amplitude: f64,
    pub initial_l1_phi: Option<f64>,
    pub final_l1_phi: Option<f64>,
}

/// Verdict on the total density at `x = 1` over the last quarter of the run.
pub fn classify(trajectory: &Trajectory, t_end: f64) -> Result<BehaviorVerdict> {
    let times = trajectory.times();
    let series: Vec<f64> = trajectory
        .samples
        .iter()
        .map(|s| s.slices.iter().sum())
        .collect();
    detect_oscillation(&times, &series, t_end / 4.0)
}

pub fn summarize(run: &SimulationRun) -> Result<SimulationSummary> {
    let traj = &run.trajectory;
    let t_end = traj.samples.last().map_or(0.0, |s| s.t);
    let mut verdict = classify(traj, t_end)?;
    let finite = |x: f64| x.is_finite().then_some(x);
    let initial_l1_phi = run.rows.first().and_then(|r| finite(r.l1_phi));
    let final_l1_phi = run.rows.last().and_then(|r| finite(r.l1_phi));
    if verdict.class == Behavior::Converged {
        verdict.final_l1_phi = final_l1_phi;
    }
    Ok(SimulationSummary {
        t_end,
        dt: traj.dt,
        lambda_n: estimate_lambda_n(traj, t_end)?,
        lambda_tau: time_average(traj, Estimator::Tau, t_end)?,
        lambda_gamma: time_average(traj, Estimator::Gamma, t_end)?,
        lambda_eigen: run.pair.as_ref().map(|p| p.lambda),
        behavior: verdict.class.as_str().to_string(),
        period: verdict.period,
        relative_amplitude: verdict.relative_amplitude,
        initial_l1_phi,
        final_l1_phi,
    })
}

/// Writes the diagnostics table and the snapshots of a simulation to `dir`
/// with file names starting with `stem`.
pub fn write_simulation(dir: &Path, stem: &str, config: &RunConfig, run: &SimulationRun) -> Result<()> {
    let json = config.to_json();
    std::fs::create_dir_all(dir)?;
    let extra: Vec<String> = run.warnings.iter().map(|w| format!("warning: {w}")).collect();
    let features = run.op.features();
    io::write_csv(
        &dir.join(format!("{stem}diagnostics.csv")),
        &json,
        &extra,
        &io::diagnostics_columns(features),
        run.rows.iter().map(|r| {
            let mut out: Vec<Field> = [
                r.t,
                r.log_mass,
                r.lambda_n,
                r.lambda_tau,
                r.lambda_gamma,
                r.entropy_sq,
                r.dissipation_sq,
                r.l1_phi,
            ]
            .into_iter()
            .map(Field::Num)
            .collect();
            out.extend(r.slices.iter().map(|&s| Field::Num(s)));
            out
        }),
    )?;
    for (i, snap) in run.trajectory.snapshots.iter().enumerate() {
        io::write_snapshot(
            &dir.join(format!("{stem}snapshot_{i:03}.csv")),
            &json,
            snap.t,
            run.op.grid_nodes(),
            &snap.values,
            snap.log_scale,
        )?;
    }
    Ok(())
}

/// One line of the three-trait growth-rate comparison.
#[derive(Debug, Clone, Serialize)]
pub struct Table1Row {
    pub case: &'static str,
    pub lambda_n: f64,
    pub lambda_tau: f64,
    pub lambda_gamma: f64,
    pub reference: [f64; 3],
    pub lambda_eigen: f64,
    pub behavior: String,
}

impl Table1Row {
    /// Largest pairwise relative difference between the three estimators.
    pub fn spread(&self) -> f64 {
        let v = [self.lambda_n, self.lambda_tau, self.lambda_gamma];
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        (hi - lo) / lo.abs()
    }
}

/// Config of one of the three-trait experiments on the grid, schedule and
/// solver settings of `base`.
pub fn three_trait_config(base: &RunConfig, family: &str) -> RunConfig {
    let mut config = base.clone();
    config.model = RunConfig::new(
        vec![1.0, 2.0, 3.0],
        KernelConfig {
            family: Some(family.into()),
            ..Default::default()
        },
    )
    .model;
    config
}

/// Config of a two-trait one-way mutation experiment with `v = (1, 2)`.
pub fn two_trait_config(base: &RunConfig, family: NamedKernel) -> RunConfig {
    let p = match family {
        NamedKernel::SlowToFast(p) | NamedKernel::FastToSlow(p) => Some(p),
        _ => None,
    };
    let mut config = base.clone();
    config.model = RunConfig::new(
        vec![1.0, 2.0],
        KernelConfig {
            family: Some(family.family_name().into()),
            p,
            ..Default::default()
        },
    )
    .model;
    config
}

fn table1_case(config: &RunConfig, case: &'static str, reference: [f64; 3]) -> Result<(Table1Row, SimulationRun)> {
    let run = simulate(config)?;
    let summary = summarize(&run)?;
    let row = Table1Row {
        case,
        lambda_n: summary.lambda_n,
        lambda_tau: summary.lambda_tau,
        lambda_gamma: summary.lambda_gamma,
        reference,
        lambda_eigen: summary.lambda_eigen.unwrap_or(f64::NAN),
        behavior: summary.behavior,
    };
    Ok((row, run))
}

/// Runs the non-mixing and the mixing three-trait experiments.
pub fn table1(base: &RunConfig) -> Result<Vec<(Table1Row, SimulationRun, RunConfig)>> {
    let cases = [
        ("non_mixing", "reducible", TABLE1_NON_MIXING),
        ("mixing", "irreducible", TABLE1_MIXING),
    ];
    cases
        .par_iter()
        .map(|&(case, family, reference)| {
            let config = three_trait_config(base, family);
            let (row, run) = table1_case(&config, case, reference)?;
            Ok((row, run, config))
        })
        .collect()
}

pub fn write_table1(path: &Path, config_json: &str, rows: &[Table1Row]) -> Result<()> {
    let columns = [
        "case",
        "lambda_n",
        "lambda_n_ref",
        "lambda_tau",
        "lambda_tau_ref",
        "lambda_gamma",
        "lambda_gamma_ref",
        "lambda_eigen",
        "max_relative_spread",
        "behavior",
    ]
    .map(String::from);
    io::write_csv(
        path,
        config_json,
        &[],
        &columns,
        rows.iter().map(|r| {
            vec![
                Field::from(r.case),
                Field::Num(r.lambda_n),
                Field::Num(r.reference[0]),
                Field::Num(r.lambda_tau),
                Field::Num(r.reference[1]),
                Field::Num(r.lambda_gamma),
                Field::Num(r.reference[2]),
                Field::Num(r.lambda_eigen),
                Field::Num(r.spread()),
                Field::from(r.behavior.as_str()),
            ]
        }),
    )
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// `p` of a one-way kernel family.
    P,
    DeathFactor,
    HalfCount,
    Resolution,
}

impl SweepParam {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "p" => SweepParam::P,
            "death_factor" => SweepParam::DeathFactor,
            "N" => SweepParam::HalfCount,
            "k" => SweepParam::Resolution,
            other => {
                return Err(Error::Config(format!(
                    "unknown sweep parameter {other} (expected p, death_factor, N or k)"
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::P => "p",
            SweepParam::DeathFactor => "death_factor",
            SweepParam::HalfCount => "N",
            SweepParam::Resolution => "k",
        }
    }

    /// `base` with the parameter set to `value`, validated.
    pub fn apply(&self, base: &RunConfig, value: f64) -> Result<RunConfig> {
        let mut config = base.clone();
        let as_count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(Error::Range {
                    name: "sweep value",
                    value: v,
                    expected: "positive integer",
                })
            }
        };
        match self {
            SweepParam::P => {
                if config.model.kernel.family.is_none() {
                    return Err(Error::Config(
                        "sweeping p needs a named kernel family".into(),
                    ));
                }
                config.model.kernel.p = Some(value);
            }
            SweepParam::DeathFactor => config.model.death_factor = value,
            SweepParam::HalfCount => config.grid.half_count = Some(as_count(value)?),
            SweepParam::Resolution => config.grid.resolution = Some(as_count(value)?),
        }
        config.validate()?;
        Ok(config)
    }
}

/// One sweep cell. The conjecture columns are filled for two-trait one-way
/// families.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub lambda_eigen: f64,
    pub lambda_n: f64,
    pub lambda_tau: f64,
    pub lambda_gamma: f64,
    pub behavior: String,
    pub conjecture: Option<ConjectureComparison>,
}

fn sweep_cell(config: &RunConfig, value: f64) -> Result<SweepRow> {
    sweep_row(config, &simulate(config)?, value)
}

/// Summary of a finished simulation as a sweep row.
pub fn sweep_row(config: &RunConfig, run: &SimulationRun, value: f64) -> Result<SweepRow> {
    let summary = summarize(run)?;
    let conjecture = match config.kernel_family()? {
        Some(family @ (NamedKernel::SlowToFast(_) | NamedKernel::FastToSlow(_))) => {
            let v = &config.model.features;
            let measured = measure_trajectory(&run.trajectory, &run.op, summary.lambda_n)?;
            Some(evaluate_conjecture(family, v[0], v[1], measured)?)
        }
        _ => None,
    };
    Ok(SweepRow {
        value,
        lambda_eigen: summary.lambda_eigen.unwrap_or(f64::NAN),
        lambda_n: summary.lambda_n,
        lambda_tau: summary.lambda_tau,
        lambda_gamma: summary.lambda_gamma,
        behavior: summary.behavior,
        conjecture,
    })
}

/// Runs every sweep cell in parallel. Cells are independent and their
/// results are collected in input order.
pub fn sweep(base: &RunConfig, param: SweepParam, values: &[f64]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let configs = values
        .iter()
        .map(|&v| param.apply(base, v))
        .collect::<Result<Vec<_>>>()?;
    configs
        .par_iter()
        .zip(values)
        .map(|(c, &v)| sweep_cell(c, v))
        .collect()
}

pub fn write_sweep(path: &Path, config_json: &str, param: SweepParam, rows: &[SweepRow]) -> Result<()> {
    let with_conjecture = rows.iter().any(|r| r.conjecture.is_some());
    let mut columns: Vec<String> = [
        "param",
        "value",
        "lambda_eigen",
        "lambda_n",
        "lambda_tau",
        "lambda_gamma",
        "behavior",
    ]
    .map(String::from)
    .to_vec();
    if with_conjecture {
        columns.extend(CONJECTURE_COLUMNS.iter().map(|s| s.to_string()));
    }
    io::write_csv(
        path,
        config_json,
        &[format!("negligible share below {NEGLIGIBLE_SHARE}")],
        &columns,
        rows.iter().map(|r| {
            let mut out = vec![
                Field::from(param.name()),
                Field::Num(r.value),
                Field::Num(r.lambda_eigen),
                Field::Num(r.lambda_n),
                Field::Num(r.lambda_tau),
                Field::Num(r.lambda_gamma),
                Field::from(r.behavior.as_str()),
            ];
            if with_conjecture {
                out.extend(conjecture_fields(r.conjecture.as_ref()));
            }
            out
        }),
    )
}

/// Columns describing a conjectured row and how a run compares with it.
pub const CONJECTURE_COLUMNS: [&str; 14] = [
    "family",
    "p_low",
    "p_high",
    "N1_predicted",
    "N2_predicted",
    "lambda_predicted",
    "share_1",
    "share_2",
    "behavior_1",
    "behavior_2",
    "lambda_relative_error",
    "lambda_ok",
    "zero_pattern_ok",
    "behavior_ok",
];

/// Cells under [`CONJECTURE_COLUMNS`]; empty without a comparison.
pub fn conjecture_fields(c: Option<&ConjectureComparison>) -> Vec<Field> {
    let Some(c) = c else {
        return CONJECTURE_COLUMNS.iter().map(|_| Field::from("")).collect();
    };
    let flag = |b: bool| Field::from(if b { "true" } else { "false" });
    let share = |i: usize| c.measured.shares.get(i).copied().unwrap_or(f64::NAN);
    let behavior = |i: usize| c.measured.behaviors.get(i).map_or("", |b| b.as_str());
    vec![
        Field::from(c.row.family),
        Field::Num(c.row.p_low),
        Field::Num(c.row.p_high),
        Field::from(c.row.n1.as_str()),
        Field::from(c.row.n2.as_str()),
        Field::Num(c.row.lambda),
        Field::Num(share(0)),
        Field::Num(share(1)),
        Field::from(behavior(0)),
        Field::from(behavior(1)),
        Field::Num(c.lambda_relative_error),
        flag(c.lambda_ok),
        flag(c.zero_pattern_ok),
        match c.behavior_ok {
            Some(b) => flag(b),
            None => Field::from("inconclusive"),
        },
    ]
}

/// Predicted and measured switching point of the fast-to-slow family.
#[derive(Debug, Clone, Serialize)]
pub struct ThresholdReport {
    pub p0: f64,
    pub p0_empirical: f64,
    pub gap: f64,
}

pub fn threshold(config: &RunConfig, v1: f64, v2: f64) -> Result<ThresholdReport> {
    let p0 = critical_p0(v1, v2)?;
    let p0_empirical = empirical_p0(&config.grid()?, v1, v2, config.power_options())?;
    Ok(ThresholdReport {
        p0,
        p0_empirical,
        gap: p0_empirical - p0,
    })
}

/// Conjectured row for a two-trait family with `v = (1, 2)`, checked
/// against the closed forms before any run.
pub fn predicted_lambda(family: NamedKernel) -> Result<f64> {
    Ok(conjecture_row(family, 1.0, 2.0)?.lambda)
}
