//! Relative entropy with respect to the steady profile, its dissipation and
//! long-time behavior classification.
//!
//! Everything here works in the frame `ñ = n e^{-λ t}`, obtained from a
//! [`Population`] by [`renormalized_frame`].

use crate::dynamics::Population;
use crate::error::{Error, Result};
use crate::operator::StepOperator;
use crate::spectral::EigenPair;

/// Convex function `H` of the ratio `u = n / N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EntropyFunction {
    /// `H(u) = u²`.
    Square,
    /// `H(u) = |u|`.
    Abs,
    /// `H(u) = (|u| - C)²₊`.
    ClippedSquare { level: f64 },
}

impl EntropyFunction {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            EntropyFunction::Square => u * u,
            EntropyFunction::Abs => u.abs(),
            EntropyFunction::ClippedSquare { level } => {
                let d = (u.abs() - level).max(0.0);
                d * d
            }
        }
    }

    /// `N H(n / N)` written so that it stays exact for tiny `N`.
    fn perspective(&self, n: f64, big_n: f64) -> f64 {
        match *self {
            EntropyFunction::Square => n * n / big_n,
            EntropyFunction::Abs => n.abs(),
            EntropyFunction::ClippedSquare { level } => {
                let d = (n.abs() - level * big_n).max(0.0);
                d * d / big_n
            }
        }
    }
}

/// `n e^{log_scale - λ t}`: the state in the frame that grows with the
/// population.
pub fn renormalized_frame(state: &Population, pair: &EigenPair) -> Vec<f64> {
    let f = (state.log_scale() - pair.lambda * state.t()).exp();
    state.values().iter().map(|v| v * f).collect()
}

fn check_len(n: &[f64], pair: &EigenPair) -> Result<()> {
    if n.len() != pair.n.len() {
        return Err(Error::Length {
            got: n.len(),
            expected: pair.n.len(),
        });
    }
    Ok(())
}

fn support_error(pair: &EigenPair, idx: usize) -> Error {
    Error::Support {
        feature: idx / pair.nodes,
        node: idx % pair.nodes,
    }
}

/// `Σ w φ N H(n / N)`, with `0/0 = 0` where the steady profile vanishes.
pub fn gre(n: &[f64], pair: &EigenPair, h: EntropyFunction) -> Result<f64> {
    check_len(n, pair)?;
    let l = pair.nodes;
    let mut sum = 0.0;
    for (idx, (&v, &big_n)) in n.iter().zip(&pair.n).enumerate() {
        if big_n <= 0.0 {
            if v != 0.0 {
                return Err(support_error(pair, idx));
            }
            continue;
        }
        sum += pair.weights[idx % l] * pair.phi[idx] * h.perspective(v, big_n);
    }
    Ok(sum)
}

fn ratios(n: &[f64], pair: &EigenPair) -> Result<Vec<f64>> {
    n.iter()
        .zip(&pair.n)
        .enumerate()
        .map(|(idx, (&v, &big_n))| {
            if big_n > 0.0 {
                Ok(v / big_n)
            } else if v == 0.0 {
                Ok(0.0)
            } else {
                Err(support_error(pair, idx))
            }
        })
        .collect()
}

/// Dissipation of the square entropy through division:
/// `Σ_{i,j,m} w_m φ_{i,m} 4p κ_ji γ_{j,m+k} N_{j,m+k} (u_{j,m+k} - u_{i,m})²`
/// with `u = n / N`.
pub fn dissipation(n: &[f64], pair: &EigenPair, op: &StepOperator) -> Result<f64> {
    check_len(n, pair)?;
    let u = ratios(n, pair)?;
    let (mm, l, k) = (pair.features, pair.nodes, op.resolution());
    let gamma = op.gamma();
    let gain = 4.0 * op.death_factor();
    let mut sum = 0.0;
    for i in 0..mm {
        for m in 0..l.saturating_sub(k) {
            let a = i * l + m;
            let mut inner = 0.0;
            for j in 0..mm {
                let kap = op.kappa(j, i);
                let b = j * l + m + k;
                if kap > 0.0 && gamma[b] > 0.0 {
                    let d = u[b] - u[a];
                    inner += kap * gamma[b] * pair.n[b] * d * d;
                }
            }
            sum += pair.weights[m] * pair.phi[a] * inner;
        }
    }
    Ok(gain * sum)
}

/// Entropy lost over one step of `op`, per unit time:
/// `(E(n) - E(S n / μ)) / dt`. For the square entropy this is the full
/// dissipation of the discrete scheme, division and transport included.
pub fn step_dissipation(
    n: &[f64],
    pair: &EigenPair,
    op: &StepOperator,
    h: EntropyFunction,
) -> Result<f64> {
    let before = gre(n, pair, h)?;
    let mu = (pair.lambda * op.dt()).exp();
    let mut next = op.apply(n)?;
    next.iter_mut().for_each(|v| *v /= mu);
    let after = gre(&next, pair, h)?;
    Ok((before - after) / op.dt())
}

/// `ρ = Σ w n_in φ`, the weight of the steady profile in the long-time limit.
pub fn projection(n: &[f64], pair: &EigenPair) -> f64 {
    pair.pairing(n, &pair.phi)
}

/// `Σ w |ñ - ρ N| φ`.
pub fn l1_phi_distance(n: &[f64], pair: &EigenPair, rho: f64) -> Result<f64> {
    check_len(n, pair)?;
    let l = pair.nodes;
    Ok(n.iter()
        .zip(&pair.n)
        .zip(&pair.phi)
        .enumerate()
        .map(|(idx, ((v, big_n), phi))| pair.weights[idx % l] * (v - rho * big_n).abs() * phi)
        .sum())
}

/// `max n / N` over the support of `N`.
pub fn max_ratio(n: &[f64], pair: &EigenPair) -> Result<f64> {
    check_len(n, pair)?;
    Ok(ratios(n, pair)?.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Behavior {
    Converged,
    Oscillating,
    Undecided,
}

impl Behavior {
    pub fn as_str(&self) -> &'static str {
        match self {
            Behavior::Converged => "converged",
            Behavior::Oscillating => "oscillating",
            Behavior::Undecided => "undecided",
        }
    }
}

/// Thresholds of the classification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillationThresholds {
    /// Minimum height of the secondary autocorrelation peak.
    pub peak: f64,
    /// Minimum relative amplitude of an oscillation.
    pub oscillating_amplitude: f64,
    /// Maximum relative amplitude of a converged series.
    pub converged_amplitude: f64,
}

impl Default for OscillationThresholds {
    fn default() -> Self {
        Self {
            peak: 0.5,
            oscillating_amplitude: 1e-2,
            converged_amplitude: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorVerdict {
    pub class: Behavior,
    /// Period in time units when oscillating.
    pub period: Option<f64>,
    /// `(max - min) / |mean|` over the window.
    pub relative_amplitude: f64,
    /// Height of the secondary autocorrelation peak, if any.
    pub peak: Option<f64>,
    /// Filled in by callers that know the steady profile.
    pub final_l1_phi: Option<f64>,
}

/// Minimum number of samples in the analysed window.
pub const MIN_WINDOW_SAMPLES: usize = 32;

/// Classifies the trailing `window` of a uniformly sampled series.
pub fn detect_oscillation(times: &[f64], series: &[f64], window: f64) -> Result<BehaviorVerdict> {
    detect_oscillation_with(times, series, window, OscillationThresholds::default())
}

pub fn detect_oscillation_with(
    times: &[f64],
    series: &[f64],
    window: f64,
    thresholds: OscillationThresholds,
) -> Result<BehaviorVerdict> {
    if times.len() != series.len() {
        return Err(Error::Length {
            got: series.len(),
            expected: times.len(),
        });
    }
    let Some(&t_last) = times.last() else {
        return Err(Error::InsufficientSamples {
            needed: MIN_WINDOW_SAMPLES,
            got: 0,
        });
    };
    let start = times.partition_point(|&t| t < t_last - window - 1e-12);
    let (t, y) = (&times[start..], &series[start..]);
    if t.len() < MIN_WINDOW_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_WINDOW_SAMPLES,
            got: t.len(),
        });
    }
    if let Some(index) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index: start + index });
    }
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let (lo, hi) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let relative_amplitude = if mean != 0.0 {
        (hi - lo) / mean.abs()
    } else if hi == lo {
        0.0
    } else {
        f64::INFINITY
    };

    // Remove the least-squares line before correlating.
    let tm = t.iter().sum::<f64>() / n as f64;
    let (sty, stt) = t.iter().zip(y).fold((0.0, 0.0), |(a, b), (&ti, &yi)| {
        (a + (ti - tm) * (yi - mean), b + (ti - tm) * (ti - tm))
    });
    let slope = if stt > 0.0 { sty / stt } else { 0.0 };
    let d: Vec<f64> = t
        .iter()
        .zip(y)
        .map(|(&ti, &yi)| yi - mean - slope * (ti - tm))
        .collect();
    let var = d.iter().map(|v| v * v).sum::<f64>() / n as f64;

    let (peak, period) = if var > 0.0 {
        secondary_peak(&d, var)
            .map(|(lag, height)| {
                let sample_dt = (t[n - 1] - t[0]) / (n - 1) as f64;
                (Some(height), Some(lag * sample_dt))
            })
            .unwrap_or((None, None))
    } else {
        (None, None)
    };

    let class = if relative_amplitude <= thresholds.converged_amplitude {
        Behavior::Converged
    } else if relative_amplitude >= thresholds.oscillating_amplitude
        && peak.is_some_and(|p| p >= thresholds.peak)
        && period.is_some_and(|p| p <= window / 2.0)
    {
        Behavior::Oscillating
    } else {
        Behavior::Undecided
    };
    Ok(BehaviorVerdict {
        class,
        period: if class == Behavior::Oscillating { period } else { None },
        relative_amplitude,
        peak,
        final_l1_phi: None,
    })
}

/// Unbiased autocorrelation at `lag`, normalized by the variance.
fn autocorrelation(d: &[f64], var: f64, lag: usize) -> f64 {
    let n = d.len();
    let s: f64 = d[..n - lag].iter().zip(&d[lag..]).map(|(a, b)| a * b).sum();
    s / ((n - lag) as f64 * var)
}

/// First autocorrelation maximum after the first zero crossing that reaches
/// 90% of the highest such maximum, with parabolic refinement of the lag.
fn secondary_peak(d: &[f64], var: f64) -> Option<(f64, f64)> {
    let max_lag = d.len() / 2;
    let acf: Vec<f64> = (0..=max_lag).map(|l| autocorrelation(d, var, l)).collect();
    let first_negative = acf.iter().position(|&r| r < 0.0)?;
    let maxima: Vec<usize> = (first_negative.max(1)..max_lag)
        .filter(|&l| acf[l] >= acf[l - 1] && acf[l] >= acf[l + 1] && acf[l] > 0.0)
        .collect();
    let best = maxima.iter().map(|&l| acf[l]).fold(f64::NEG_INFINITY, f64::max);
    let &lag = maxima.iter().find(|&&l| acf[l] >= 0.9 * best)?;
    let (a, b, c) = (acf[lag - 1], acf[lag], acf[lag + 1]);
    let denom = a - 2.0 * b + c;
    let shift = if denom < 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
    Some((lag as f64 + shift.clamp(-0.5, 0.5), b))
}
