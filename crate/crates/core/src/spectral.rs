//! Malthus parameter: trajectory estimators and the dominant eigenpair.
//!
//! The eigenpair is the Perron pair of the step operator `S`: `S N = μ N`,
//! `S* φ = μ φ` and `λ = ln(μ) / dt`. Power iteration runs in windows whose
//! length is a multiple of `k`. When the fastest feature is transported by an
//! exact index shift, `S` is periodic with period `k` and the plain iterates
//! cycle; the windowed average `Σ_t μ^{-t} S^t v` over a whole number of
//! periods is still an eigenvector, so the average is what gets reported.

use crate::dynamics::{moment, Population, Scale, Trajectory, Weight};
use crate::error::{Error, Result};
use crate::operator::StepOperator;

/// Minimum number of samples for the regression estimator.
pub const MIN_REGRESSION_SAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Direct,
    Adjoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerOptions {
    /// Relative tolerance on the estimated remaining error of `λ` and on the
    /// eigen residual per unit time.
    pub tol: f64,
    /// Maximum number of steps.
    pub max_iter: usize,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 1_000_000,
        }
    }
}

/// Outcome of one power iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerResult {
    pub lambda: f64,
    pub vector: Vec<f64>,
    /// `‖S v - μ v‖₁ / (μ ‖v‖₁)` in the quadrature norm.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Spread of `λ` over the last few windows relative to `max(|λ|, 1)`.
    pub oscillation: f64,
}

/// Dominant direct and adjoint eigenvectors with normalizations
/// `Σ w N = 1` and `Σ w N φ = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub lambda: f64,
    pub lambda_adjoint: f64,
    pub n: Vec<f64>,
    pub phi: Vec<f64>,
    pub residual_direct: f64,
    pub residual_adjoint: f64,
    pub iterations: usize,
    pub dt: f64,
    pub features: usize,
    pub nodes: usize,
    /// Quadrature weights `w_m` of the grid the pair lives on.
    pub weights: Vec<f64>,
}

impl EigenPair {
    pub fn n_feature(&self, i: usize) -> &[f64] {
        &self.n[i * self.nodes..(i + 1) * self.nodes]
    }

    pub fn phi_feature(&self, i: usize) -> &[f64] {
        &self.phi[i * self.nodes..(i + 1) * self.nodes]
    }

    /// `Σ w f g` over all features and nodes.
    pub fn pairing(&self, f: &[f64], g: &[f64]) -> f64 {
        let l = self.nodes;
        f.iter()
            .zip(g)
            .enumerate()
            .map(|(idx, (a, b))| self.weights[idx % l] * a * b)
            .sum()
    }
}

fn weighted_l1(v: &[f64], weights: &[f64]) -> f64 {
    let l = weights.len();
    v.iter()
        .enumerate()
        .map(|(idx, x)| weights[idx % l] * x.abs())
        .sum()
}

fn apply(op: &StepOperator, which: Direction, v: &mut [f64]) {
    match which {
        Direction::Direct => op.step_in_place(v),
        Direction::Adjoint => op.adjoint_step_in_place(v),
    }
}

/// Steps per window: the smallest multiple of `k` that is at least 100.
pub fn window_len(op: &StepOperator) -> usize {
    let k = op.resolution();
    k * 100usize.div_ceil(k)
}

/// Windowed power iteration on `S` or `S*`. The starting vector defaults to
/// all ones and must be nonnegative and nonzero.
pub fn power_iterate(
    op: &StepOperator,
    which: Direction,
    opts: PowerOptions,
    start: Option<&[f64]>,
) -> Result<PowerResult> {
    if !(opts.tol > 0.0 && opts.tol.is_finite()) {
        return Err(Error::Range {
            name: "tol",
            value: opts.tol,
            expected: "finite and positive",
        });
    }
    let dim = op.dim();
    let weights = op.weights();
    let dt = op.dt();
    let mut v = match start {
        Some(s) => {
            if s.len() != dim {
                return Err(Error::Length {
                    got: s.len(),
                    expected: dim,
                });
            }
            if let Some(index) = s.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::NonFinite { index });
            }
            s.to_vec()
        }
        None => vec![1.0; dim],
    };
    let norm = weighted_l1(&v, weights);
    if norm <= 0.0 {
        return Err(Error::Undefined("power iteration from a zero vector"));
    }
    v.iter_mut().for_each(|x| *x /= norm);

    let window = window_len(op);
    let mut average = vec![0.0; dim];
    let mut check = vec![0.0; dim];
    let mut lambda = f64::NAN;
    let mut history: Vec<f64> = Vec::new();
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    let mut converged = false;
    let mut prev_change = f64::INFINITY;
    let mut passed_before = false;

    while iterations + window <= opts.max_iter.max(window) {
        // Within a window the iterate is not rescaled; `μ^{-t}` uses the
        // previous window's estimate (or 1 at the start).
        let mu = if lambda.is_finite() {
            (lambda * dt).exp()
        } else {
            1.0
        };
        average.iter_mut().for_each(|a| *a = 0.0);
        let mut factor = 1.0;
        for _ in 0..window {
            apply(op, which, &mut v);
            factor /= mu;
            for (a, x) in average.iter_mut().zip(&v) {
                *a += factor * x;
            }
        }
        iterations += window;
        let growth = weighted_l1(&v, weights);
        if !(growth > 0.0 && growth.is_finite()) {
            return Err(Error::Undefined("dominant eigenvalue of a nilpotent step"));
        }
        let new_lambda = growth.ln() / (window as f64 * dt);
        v.iter_mut().for_each(|x| *x /= growth);

        let scale = new_lambda.abs().max(1.0);
        let change = (new_lambda - lambda).abs() / scale;
        // Remaining error of a geometrically converging sequence: with
        // contraction r per window it is change * r / (1 - r).
        let ratio = change / prev_change;
        let error = if ratio < 0.99 {
            change * ratio / (1.0 - ratio)
        } else {
            100.0 * change
        };
        prev_change = change;
        lambda = new_lambda;
        history.push(lambda);

        let avg_norm = weighted_l1(&average, weights);
        average.iter_mut().for_each(|a| *a /= avg_norm);
        check.copy_from_slice(&average);
        apply(op, which, &mut check);
        let mu = (lambda * dt).exp();
        let diff: f64 = check
            .iter()
            .zip(&average)
            .enumerate()
            .map(|(idx, (s, a))| weights[idx % weights.len()] * (s - mu * a).abs())
            .sum();
        residual = diff / mu;
        // Both tests must hold on two consecutive windows so that a single
        // accidental small change is not taken for convergence.
        let passed = change.max(error) <= opts.tol && residual <= opts.tol * dt;
        if passed && passed_before {
            converged = true;
            break;
        }
        passed_before = passed;
    }
    let tail = &history[history.len().saturating_sub(8)..];
    let (lo, hi) = tail
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let oscillation = if tail.is_empty() {
        f64::NAN
    } else {
        (hi - lo) / lambda.abs().max(1.0)
    };
    Ok(PowerResult {
        lambda,
        vector: average,
        residual,
        iterations,
        converged,
        oscillation,
    })
}

/// Direct and adjoint solves with both normalizations applied.
pub fn solve_eigenproblem(op: &StepOperator, opts: PowerOptions) -> Result<EigenPair> {
    let (direct, adjoint) = rayon::join(
        || power_iterate(op, Direction::Direct, opts, None),
        || power_iterate(op, Direction::Adjoint, opts, None),
    );
    let (direct, adjoint) = (direct?, adjoint?);
    for r in [&direct, &adjoint] {
        if !r.converged {
            return Err(Error::NotConverged {
                iterations: r.iterations,
                lambda: r.lambda,
                oscillation: r.oscillation,
            });
        }
    }
    if (direct.lambda - adjoint.lambda).abs() > 10.0 * opts.tol * direct.lambda.abs().max(1.0) {
        return Err(Error::EigenMismatch {
            direct: direct.lambda,
            adjoint: adjoint.lambda,
        });
    }
    let weights = op.weights();
    let l = op.nodes();
    let mut n = direct.vector;
    let total: f64 = n.iter().enumerate().map(|(i, v)| weights[i % l] * v).sum();
    n.iter_mut().for_each(|v| *v /= total);
    let mut phi = adjoint.vector;
    let pairing: f64 = n
        .iter()
        .zip(&phi)
        .enumerate()
        .map(|(i, (a, b))| weights[i % l] * a * b)
        .sum();
    if pairing.is_nan() || pairing <= 0.0 {
        return Err(Error::Undefined("pairing of the direct and adjoint eigenvectors"));
    }
    phi.iter_mut().for_each(|v| *v /= pairing);
    Ok(EigenPair {
        lambda: direct.lambda,
        lambda_adjoint: adjoint.lambda,
        n,
        phi,
        residual_direct: direct.residual,
        residual_adjoint: adjoint.residual,
        iterations: direct.iterations.max(adjoint.iterations),
        dt: op.dt(),
        features: op.features(),
        nodes: l,
        weights: weights.to_vec(),
    })
}

/// Least-squares slope of `log_mass` against time over `[t/2, t]`.
pub fn estimate_lambda_n(trajectory: &Trajectory, t: f64) -> Result<f64> {
    let eps = 1e-9 * t.abs().max(1.0);
    let window: Vec<(f64, f64)> = trajectory
        .samples
        .iter()
        .filter(|s| s.t >= t / 2.0 - eps && s.t <= t + eps)
        .map(|s| (s.t, s.log_mass))
        .collect();
    if window.len() < MIN_REGRESSION_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_REGRESSION_SAMPLES,
            got: window.len(),
        });
    }
    if window.iter().any(|(_, y)| !y.is_finite()) {
        return Err(Error::Undefined("lambda_n"));
    }
    Ok(slope(&window))
}

fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mt, my) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), (t, y)| (a + t / n, b + y / n));
    let (sty, stt) = points.iter().fold((0.0, 0.0), |(a, b), (t, y)| {
        (a + (t - mt) * (y - my), b + (t - mt) * (t - mt))
    });
    sty / stt
}

/// `λ_n` over `[s/2, s]` for every sample time `s`; NaN where fewer than
/// [`MIN_REGRESSION_SAMPLES`] samples are available or the mass vanishes.
pub fn rolling_lambda_n(trajectory: &Trajectory) -> Vec<f64> {
    let samples = &trajectory.samples;
    let mut out = Vec::with_capacity(samples.len());
    let mut start = 0;
    for (end, s) in samples.iter().enumerate() {
        let eps = 1e-9 * s.t.abs().max(1.0);
        while samples[start].t < s.t / 2.0 - eps {
            start += 1;
        }
        let window: Vec<(f64, f64)> = samples[start..=end]
            .iter()
            .map(|s| (s.t, s.log_mass))
            .collect();
        if window.len() < MIN_REGRESSION_SAMPLES || window.iter().any(|(_, y)| !y.is_finite()) {
            out.push(f64::NAN);
        } else {
            out.push(slope(&window));
        }
    }
    out
}

/// `∫∫ τ n / ∫∫ x n`.
pub fn estimate_lambda_tau(state: &Population, op: &StepOperator) -> Result<f64> {
    let size = moment(state, op, Weight::Size(1.0), Scale::Renormalized);
    if size.is_nan() || size <= 0.0 {
        return Err(Error::Undefined("lambda_tau"));
    }
    Ok(moment(state, op, Weight::Tau, Scale::Renormalized) / size)
}

/// `∫∫ γ n / ∫∫ n`. Equal to `λ` at the steady profile only when the death
/// factor is 1; in general the steady profile gives `(2p - 1) ∫∫ γ N`.
pub fn estimate_lambda_gamma(state: &Population, op: &StepOperator) -> Result<f64> {
    let number = moment(state, op, Weight::One, Scale::Renormalized);
    if number.is_nan() || number <= 0.0 {
        return Err(Error::Undefined("lambda_gamma"));
    }
    Ok(moment(state, op, Weight::Gamma, Scale::Renormalized) / number)
}

/// Which recorded estimator to average.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    Tau,
    Gamma,
}

/// Trapezoidal time average of a recorded estimator over `[t/2, t]`.
pub fn time_average(trajectory: &Trajectory, estimator: Estimator, t: f64) -> Result<f64> {
    let eps = 1e-9 * t.abs().max(1.0);
    let points: Vec<(f64, f64)> = trajectory
        .samples
        .iter()
        .filter(|s| s.t >= t / 2.0 - eps && s.t <= t + eps)
        .map(|s| {
            (
                s.t,
                match estimator {
                    Estimator::Tau => s.lambda_tau,
                    Estimator::Gamma => s.lambda_gamma,
                },
            )
        })
        .collect();
    if points.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: points.len(),
        });
    }
    if points.iter().any(|(_, y)| !y.is_finite()) {
        return Err(Error::Undefined("time average of an undefined estimator"));
    }
    let area: f64 = points
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum();
    Ok(area / (points[points.len() - 1].0 - points[0].0))
}
