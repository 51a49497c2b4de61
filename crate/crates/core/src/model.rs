//! Coefficients of the structured model: traits, growth law, division law,
//! variability kernel and survival probability of newborns.
//!
//! The division rate per unit of time is never supplied directly. It is
//! always produced as `γ(v, x) = β(x) τ(v, x)` from the division rate per unit
//! of size `β` and the growth law `τ`.

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Row-sum tolerance for stochastic kernels.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Strictly increasing positive growth-rate traits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureSet(Vec<f64>);

impl FeatureSet {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Model("feature set is empty".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Model("features must be finite and positive".into()));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Model("features must be strictly increasing".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.0[self.0.len() - 1]
    }

    pub fn min(&self) -> f64 {
        self.0[0]
    }
}

/// Individual growth rate `τ(v, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GrowthLaw {
    /// `τ(v, x) = v x`.
    Linear,
    /// `τ(v, x) = v x^s`.
    Power { exponent: f64 },
    /// Values per feature on every grid node (`values[i][m]`).
    Tabulated { values: Vec<Vec<f64>> },
}

impl GrowthLaw {
    fn rate(&self, feature: usize, v: f64, node: usize, x: f64) -> f64 {
        match self {
            GrowthLaw::Linear => v * x,
            GrowthLaw::Power { exponent } => v * x.powf(*exponent),
            GrowthLaw::Tabulated { values } => values[feature][node],
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, GrowthLaw::Linear)
            || matches!(self, GrowthLaw::Power { exponent } if *exponent == 1.0)
    }
}

/// Division rate per unit of size `β(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DivisionLaw {
    /// `β(x) = c x^e`.
    Power { coefficient: f64, exponent: f64 },
    /// `β(x) = c x^e` for `x ≥ b`, zero below.
    PowerCutoff {
        coefficient: f64,
        exponent: f64,
        threshold: f64,
    },
    /// Values on every grid node.
    Tabulated { values: Vec<f64> },
}

impl DivisionLaw {
    fn rate(&self, node: usize, x: f64) -> f64 {
        match self {
            DivisionLaw::Power {
                coefficient,
                exponent,
            } => coefficient * x.powf(*exponent),
            DivisionLaw::PowerCutoff {
                coefficient,
                exponent,
                threshold,
            } => {
                if x >= *threshold {
                    coefficient * x.powf(*exponent)
                } else {
                    0.0
                }
            }
            DivisionLaw::Tabulated { values } => values[node],
        }
    }

    /// Size below which no division happens.
    pub fn support_threshold(&self) -> f64 {
        match self {
            DivisionLaw::PowerCutoff { threshold, .. } => *threshold,
            _ => 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Model(format!("division law: {what}")));
        match self {
            DivisionLaw::Power {
                coefficient,
                exponent,
            } => {
                if !(coefficient.is_finite() && *coefficient >= 0.0) || !exponent.is_finite() {
                    return bad("coefficient must be nonnegative and exponent finite");
                }
            }
            DivisionLaw::PowerCutoff {
                coefficient,
                exponent,
                threshold,
            } => {
                if !(coefficient.is_finite() && *coefficient >= 0.0) || !exponent.is_finite() {
                    return bad("coefficient must be nonnegative and exponent finite");
                }
                if !(threshold.is_finite() && *threshold >= 0.0) {
                    return bad("threshold must be nonnegative");
                }
            }
            DivisionLaw::Tabulated { values } => {
                if values.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
                    return bad("tabulated values must be finite and nonnegative");
                }
            }
        }
        Ok(())
    }
}

/// Square nonnegative matrix `κ_ij`: probability that a daughter of a
/// feature-`i` mother carries feature `j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Kernel {
    size: usize,
    entries: Vec<f64>,
}

impl Kernel {
    /// Builds a kernel from rows. Rows need not be stochastic here; the model
    /// enforces stochasticity.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let size = rows.len();
        if size == 0 {
            return Err(Error::Model("kernel is empty".into()));
        }
        if let Some(row) = rows.iter().find(|r| r.len() != size) {
            return Err(Error::KernelDimension {
                rows: size,
                cols: row.len(),
                features: size,
            });
        }
        let entries: Vec<f64> = rows.iter().flatten().copied().collect();
        if entries.iter().any(|k| !(k.is_finite() && *k >= 0.0)) {
            return Err(Error::Model("kernel entries must be finite and nonnegative".into()));
        }
        Ok(Self { size, entries })
    }

    pub fn identity(size: usize) -> Self {
        let mut entries = vec![0.0; size * size];
        for i in 0..size {
            entries[i * size + i] = 1.0;
        }
        Self { size, entries }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.size..(i + 1) * self.size]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.size).map(<[f64]>::to_vec).collect()
    }

    pub fn max_row_deviation(&self) -> f64 {
        self.entries
            .chunks(self.size)
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_stochastic(&self) -> bool {
        self.max_row_deviation() <= STOCHASTIC_TOL
    }

    /// Strongly connected components of the graph with an edge `i → j`
    /// whenever `κ_ij > 0`. Returns the component id of every feature and
    /// the number of components; ids follow the order of first appearance.
    pub fn components(&self) -> (Vec<usize>, usize) {
        let mut graph = DiGraph::<(), ()>::with_capacity(self.size, self.size * self.size);
        let nodes: Vec<_> = (0..self.size).map(|_| graph.add_node(())).collect();
        for i in 0..self.size {
            for j in 0..self.size {
                if self.get(i, j) > 0.0 {
                    graph.add_edge(nodes[i], nodes[j], ());
                }
            }
        }
        let sccs = tarjan_scc(&graph);
        let mut raw = vec![0usize; self.size];
        for (id, comp) in sccs.iter().enumerate() {
            for n in comp {
                raw[n.index()] = id;
            }
        }
        // Relabel so ids are ordered by the smallest feature they contain.
        let mut relabel = vec![usize::MAX; sccs.len()];
        let mut next = 0;
        let membership = raw
            .iter()
            .map(|&r| {
                if relabel[r] == usize::MAX {
                    relabel[r] = next;
                    next += 1;
                }
                relabel[r]
            })
            .collect();
        (membership, sccs.len())
    }

    /// Whether the component with the given id has no edge leaving it.
    pub fn is_closed(&self, membership: &[usize], component: usize) -> bool {
        (0..self.size).all(|i| {
            membership[i] != component
                || (0..self.size).all(|j| self.get(i, j) == 0.0 || membership[j] == component)
        })
    }
}

/// Named kernel families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NamedKernel {
    /// Identity: no mixing between features.
    Reducible,
    /// The two-feature swap for `M = 2`, the fixed 3x3 mixing matrix for `M = 3`.
    Irreducible,
    /// `κ_ij = 1/M`.
    Homogeneous,
    /// `[[p, 1-p], [0, 1]]`: only the slow trait mutates.
    SlowToFast(f64),
    /// `[[1, 0], [1-p, p]]`: only the fast trait mutates.
    FastToSlow(f64),
}

impl NamedKernel {
    pub fn parse(name: &str, p: Option<f64>) -> Result<Self> {
        let need_p = || {
            p.ok_or_else(|| Error::Config(format!("kernel family {name} needs a parameter p")))
        };
        Ok(match name {
            "reducible" | "identity" => NamedKernel::Reducible,
            "irreducible" => NamedKernel::Irreducible,
            "homogeneous" => NamedKernel::Homogeneous,
            "slow_to_fast" => NamedKernel::SlowToFast(need_p()?),
            "fast_to_slow" => NamedKernel::FastToSlow(need_p()?),
            other => return Err(Error::Config(format!("unknown kernel family {other}"))),
        })
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            NamedKernel::Reducible => "reducible",
            NamedKernel::Irreducible => "irreducible",
            NamedKernel::Homogeneous => "homogeneous",
            NamedKernel::SlowToFast(_) => "slow_to_fast",
            NamedKernel::FastToSlow(_) => "fast_to_slow",
        }
    }
}

/// Builds one of the named kernels for `size` features.
pub fn build_named_kernel(name: NamedKernel, size: usize) -> Result<Kernel> {
    let check_p = |p: f64| {
        if p > 0.0 && p < 1.0 {
            Ok(p)
        } else {
            Err(Error::Range {
                name: "p",
                value: p,
                expected: "open interval (0, 1)",
            })
        }
    };
    let need_two = || {
        if size == 2 {
            Ok(())
        } else {
            Err(Error::Model(format!(
                "{} kernels are defined for 2 features, got {size}",
                name.family_name()
            )))
        }
    };
    if size == 0 {
        return Err(Error::Model("kernel needs at least one feature".into()));
    }
    match name {
        NamedKernel::Reducible => Ok(Kernel::identity(size)),
        NamedKernel::Homogeneous => Kernel::from_rows(&vec![vec![1.0 / size as f64; size]; size]),
        NamedKernel::Irreducible => match size {
            2 => Kernel::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]),
            3 => Kernel::from_rows(&[
                vec![0.7, 0.2, 0.1],
                vec![0.5, 0.4, 0.1],
                vec![0.3, 0.3, 0.4],
            ]),
            _ => Err(Error::Model(format!(
                "the irreducible family is defined for 2 or 3 features, got {size}"
            ))),
        },
        NamedKernel::SlowToFast(p) => {
            need_two()?;
            let p = check_p(p)?;
            Kernel::from_rows(&[vec![p, 1.0 - p], vec![0.0, 1.0]])
        }
        NamedKernel::FastToSlow(p) => {
            need_two()?;
            let p = check_p(p)?;
            Kernel::from_rows(&[vec![1.0, 0.0], vec![1.0 - p, p]])
        }
    }
}

/// Complete set of coefficients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Model {
    features: FeatureSet,
    growth: GrowthLaw,
    division: DivisionLaw,
    kernel: Kernel,
    death_factor: f64,
}

impl Model {
    pub fn new(
        features: FeatureSet,
        growth: GrowthLaw,
        division: DivisionLaw,
        kernel: Kernel,
        death_factor: f64,
    ) -> Result<Self> {
        if kernel.size() != features.len() {
            return Err(Error::KernelDimension {
                rows: kernel.size(),
                cols: kernel.size(),
                features: features.len(),
            });
        }
        if !kernel.is_stochastic() {
            return Err(Error::Model(format!(
                "kernel rows must sum to 1 (max deviation {:e})",
                kernel.max_row_deviation()
            )));
        }
        if !(death_factor > 0.0 && death_factor <= 1.0) {
            return Err(Error::Range {
                name: "death_factor",
                value: death_factor,
                expected: "half-open interval (0, 1]",
            });
        }
        if let GrowthLaw::Power { exponent } = growth {
            if !exponent.is_finite() {
                return Err(Error::Model("growth exponent must be finite".into()));
            }
        }
        if let GrowthLaw::Tabulated { values } = &growth {
            if values.len() != features.len() {
                return Err(Error::Model(format!(
                    "tabulated growth has {} rows for {} features",
                    values.len(),
                    features.len()
                )));
            }
        }
        division.validate()?;
        Ok(Self {
            features,
            growth,
            division,
            kernel,
            death_factor,
        })
    }

    /// `τ(v, x) = v x`, `β(x) = x^2`, survival 1: the setting of the
    /// three-trait experiments.
    pub fn linear_cubic(features: Vec<f64>, kernel: Kernel) -> Result<Self> {
        Self::new(
            FeatureSet::new(features)?,
            GrowthLaw::Linear,
            DivisionLaw::Power {
                coefficient: 1.0,
                exponent: 2.0,
            },
            kernel,
            1.0,
        )
    }

    pub fn features(&self) -> &FeatureSet {
        &self.features
    }

    pub fn growth(&self) -> &GrowthLaw {
        &self.growth
    }

    pub fn division(&self) -> &DivisionLaw {
        &self.division
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn death_factor(&self) -> f64 {
        self.death_factor
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn with_death_factor(mut self, p: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Range {
                name: "death_factor",
                value: p,
                expected: "half-open interval (0, 1]",
            });
        }
        self.death_factor = p;
        Ok(self)
    }

    /// `τ(v_i, x_m)`.
    pub fn tau(&self, grid: &Grid, i: usize, m: usize) -> f64 {
        self.growth
            .rate(i, self.features.values()[i], m, grid.node(m))
    }

    /// `β(x_m)`.
    pub fn beta(&self, grid: &Grid, m: usize) -> f64 {
        self.division.rate(m, grid.node(m))
    }

    /// `γ(v_i, x_m) = β(x_m) τ(v_i, x_m)`.
    pub fn gamma(&self, grid: &Grid, i: usize, m: usize) -> f64 {
        self.beta(grid, m) * self.tau(grid, i, m)
    }

    /// Checks the grid-dependent invariants: tabulated sizes and positive
    /// growth at every node.
    pub fn check_on_grid(&self, grid: &Grid) -> Result<()> {
        if let GrowthLaw::Tabulated { values } = &self.growth {
            if let Some(row) = values.iter().find(|r| r.len() != grid.len()) {
                return Err(Error::Length {
                    got: row.len(),
                    expected: grid.len(),
                });
            }
        }
        if let DivisionLaw::Tabulated { values } = &self.division {
            if values.len() != grid.len() {
                return Err(Error::Length {
                    got: values.len(),
                    expected: grid.len(),
                });
            }
        }
        for i in 0..self.len() {
            for m in 0..grid.len() {
                let t = self.tau(grid, i, m);
                if !(t.is_finite() && t > 0.0) {
                    return Err(Error::Model(format!(
                        "growth rate must be positive: tau = {t} at feature {i}, node {m}"
                    )));
                }
                let g = self.gamma(grid, i, m);
                if !(g.is_finite() && g >= 0.0) {
                    return Err(Error::Model(format!(
                        "division rate must be finite and nonnegative: gamma = {g} at feature {i}, node {m}"
                    )));
                }
            }
        }
        let top = grid.len() - 1;
        let tail = self.beta(grid, top) * grid.node(top);
        if tail < 10.0 {
            log::warn!(
                "beta(x) x = {tail:.3e} at the largest node; the grid may be too short to contain the population"
            );
        }
        Ok(())
    }

    /// Single-trait model frozen at feature `i`, with the same division law.
    pub fn frozen(&self, i: usize) -> Result<Self> {
        let growth = match &self.growth {
            GrowthLaw::Tabulated { values } => GrowthLaw::Tabulated {
                values: vec![values[i].clone()],
            },
            g => g.clone(),
        };
        Self::new(
            FeatureSet::new(vec![self.features.values()[i]])?,
            growth,
            self.division.clone(),
            Kernel::identity(1),
            self.death_factor,
        )
    }
}

/// Structural facts about a kernel in the context of a model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelReport {
    pub stochastic: bool,
    pub max_row_deviation: f64,
    pub irreducible: bool,
    pub scc_count: usize,
    pub scc_membership: Vec<usize>,
    /// Per component: no edge leaves it.
    pub scc_closed: Vec<bool>,
    /// Sampled check of `2 τ(v_j, x) ≠ τ(v_i, 2x)` on every mixing pair.
    pub heterogeneity_ok: bool,
}

/// Stochasticity, strongly connected components and the heterogeneity check.
pub fn validate_kernel(kernel: &Kernel, model: &Model, grid: &Grid) -> Result<KernelReport> {
    if kernel.size() != model.len() {
        return Err(Error::KernelDimension {
            rows: kernel.size(),
            cols: kernel.size(),
            features: model.len(),
        });
    }
    let (membership, count) = kernel.components();
    let closed: Vec<bool> = (0..count)
        .map(|c| kernel.is_closed(&membership, c))
        .collect();
    let mut heterogeneity_ok = true;
    'pairs: for i in 0..kernel.size() {
        for j in 0..kernel.size() {
            if i == j || kernel.get(i, j) <= 0.0 {
                continue;
            }
            for m in 0..grid.len() {
                let Some(d) = grid.double_index(m) else { break };
                let lhs = 2.0 * model.tau(grid, j, m);
                let rhs = model.tau(grid, i, d);
                if (lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()) {
                    heterogeneity_ok = false;
                    break 'pairs;
                }
            }
        }
    }
    Ok(KernelReport {
        stochastic: kernel.is_stochastic(),
        max_row_deviation: kernel.max_row_deviation(),
        irreducible: count == 1,
        scc_count: count,
        scc_membership: membership,
        scc_closed: closed,
        heterogeneity_ok,
    })
}

/// `γ(v_i, x_m)`.
pub fn gamma_at(model: &Model, grid: &Grid, i: usize, m: usize) -> f64 {
    model.gamma(grid, i, m)
}
