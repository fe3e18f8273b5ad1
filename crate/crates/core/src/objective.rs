//! Data misfit over all gases and its gradient.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{DiffusionProfile, FirnParams};
use crate::error::{FirnError, Result};
use crate::forward::GasSystem;
use crate::mesh::{Mesh, TimeGrid};
use crate::sensitivity::{block_sensitivity_with, SensitivityScheme};

/// End-time observations for one gas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GasData {
    pub ratio: f64,
    /// Concentrations at every mesh node, surface node included.
    pub g: Vec<f64>,
}

/// Observations for all gases on one mesh, with the constants used to fit them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseData {
    pub mesh: Mesh,
    pub grid: TimeGrid,
    pub params: FirnParams,
    pub gases: Vec<GasData>,
}

impl InverseData {
    pub fn new(
        mesh: Mesh,
        grid: TimeGrid,
        params: FirnParams,
        gases: Vec<GasData>,
    ) -> Result<Self> {
        for gas in &gases {
            if gas.g.len() != mesh.len() {
                return Err(FirnError::DimensionMismatch {
                    expected: mesh.len(),
                    actual: gas.g.len(),
                    context: "gas data vs mesh nodes",
                });
            }
        }
        if gases.is_empty() {
            return Err(FirnError::InvalidParameter(
                "inverse data needs at least one gas".into(),
            ));
        }
        params.validate()?;
        Ok(Self {
            mesh,
            grid,
            params,
            gases,
        })
    }

    /// Same observations marched with a different time grid.
    pub fn with_grid(mut self, grid: TimeGrid) -> Self {
        self.grid = grid;
        self
    }

    /// Keeps only the gases at `indices`.
    pub fn select_gases(&self, indices: &[usize]) -> Result<Self> {
        let gases = indices
            .iter()
            .map(|&k| {
                self.gases.get(k).cloned().ok_or_else(|| {
                    FirnError::InvalidParameter(format!("gas index {k} out of range"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.mesh.clone(), self.grid, self.params.clone(), gases)
    }

    pub fn dim(&self) -> usize {
        self.mesh.len()
    }
}

/// Contribution of one gas.
#[derive(Debug, Clone, PartialEq)]
pub struct GasEval {
    pub value: f64,
    pub gradient: Option<Vec<f64>>,
    /// `Lambda(:, end) - g` over all nodes.
    pub residual: Vec<f64>,
}

/// Objective value, optional gradient and per-gas residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEval {
    pub value: f64,
    pub gradient: Option<Vec<f64>>,
    pub residuals: Vec<Vec<f64>>,
}

fn check_profile(d: &[f64], data: &InverseData) -> Result<DiffusionProfile> {
    if d.len() != data.mesh.len() {
        return Err(FirnError::DimensionMismatch {
            expected: data.mesh.len(),
            actual: d.len(),
            context: "profile vs data mesh",
        });
    }
    DiffusionProfile::new(d.to_vec())
}

/// Evaluates one gas.
pub fn evaluate_gas(
    d: &DiffusionProfile,
    gas: &GasData,
    data: &InverseData,
    want_gradient: bool,
    scheme: SensitivityScheme,
) -> Result<GasEval> {
    let (mesh, grid, params) = (&data.mesh, &data.grid, &data.params);
    let d_alpha = d.scaled(gas.ratio);
    let system = GasSystem::new(mesh, grid, params, &d_alpha)?;
    let (end, gradient) = if want_gradient {
        let trace = system.solve_trace(mesh, grid)?;
        let block = block_sensitivity_with(&system, mesh, params, gas.ratio, &trace, scheme)?;
        let end = trace.end().to_vec();
        let interior: Vec<f64> = end[1..]
            .iter()
            .zip(&gas.g[1..])
            .map(|(a, b)| 2.0 * (a - b))
            .collect();
        (end, Some(block.left_multiply(&interior)))
    } else {
        (system.solve_end()?, None)
    };
    let residual: Vec<f64> = end.iter().zip(&gas.g).map(|(a, b)| a - b).collect();
    let value = residual.iter().map(|r| r * r).sum();
    Ok(GasEval {
        value,
        gradient,
        residual,
    })
}

/// `V(d)` and optionally its gradient with the default sensitivity scheme.
pub fn evaluate(d: &[f64], data: &InverseData, want_gradient: bool) -> Result<ObjectiveEval> {
    evaluate_with(d, data, want_gradient, SensitivityScheme::default())
}

/// `V(d)` and optionally its gradient; gases run in parallel and are summed in order.
pub fn evaluate_with(
    d: &[f64],
    data: &InverseData,
    want_gradient: bool,
    scheme: SensitivityScheme,
) -> Result<ObjectiveEval> {
    let profile = check_profile(d, data)?;
    let evals = data
        .gases
        .par_iter()
        .map(|gas| evaluate_gas(&profile, gas, data, want_gradient, scheme))
        .collect::<Result<Vec<_>>>()?;
    Ok(reduce(evals, d.len(), want_gradient))
}

fn reduce(evals: Vec<GasEval>, dim: usize, want_gradient: bool) -> ObjectiveEval {
    let mut value = 0.0;
    let mut gradient = want_gradient.then(|| vec![0.0; dim]);
    let mut residuals = Vec::with_capacity(evals.len());
    for e in evals {
        value += e.value;
        if let (Some(acc), Some(g)) = (gradient.as_mut(), e.gradient.as_ref()) {
            for (a, b) in acc.iter_mut().zip(g) {
                *a += b;
            }
        }
        residuals.push(e.residual);
    }
    ObjectiveEval {
        value,
        gradient,
        residuals,
    }
}

/// Step rule for central differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "scale", rename_all = "snake_case")]
pub enum EpsRule {
    /// `eps_j = scale * (1 + |d_j|)`.
    Relative(f64),
    /// `eps = scale * max_j |d_j|`, or `scale` when `d = 0`.
    MaxScaled(f64),
    Fixed(f64),
}

impl Default for EpsRule {
    fn default() -> Self {
        EpsRule::Relative(1e-6)
    }
}

impl EpsRule {
    pub fn step(&self, d: &[f64], j: usize) -> f64 {
        match *self {
            EpsRule::Relative(s) => s * (1.0 + d[j].abs()),
            EpsRule::MaxScaled(s) => {
                let m = d.iter().fold(0.0f64, |a, b| a.max(b.abs()));
                if m > 0.0 {
                    s * m
                } else {
                    s
                }
            }
            EpsRule::Fixed(e) => e,
        }
    }
}

/// Central-difference gradient of any scalar function.
pub fn fd_gradient_of(
    f: impl Fn(&[f64]) -> Result<f64>,
    d: &[f64],
    rule: EpsRule,
) -> Result<Vec<f64>> {
    let mut x = d.to_vec();
    (0..d.len())
        .map(|j| {
            let eps = rule.step(d, j);
            x[j] = d[j] + eps;
            let up = f(&x)?;
            x[j] = d[j] - eps;
            let down = f(&x)?;
            x[j] = d[j];
            Ok((up - down) / (2.0 * eps))
        })
        .collect()
}

/// Central-difference gradient of `V`: two objective values per node.
pub fn fd_gradient(d: &[f64], data: &InverseData, rule: EpsRule) -> Result<Vec<f64>> {
    check_profile(d, data)?;
    fd_gradient_of(|x| Ok(evaluate(x, data, false)?.value), d, rule)
}

/// A differentiable objective over nodal profiles.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn value(&self, d: &[f64]) -> Result<f64>;
    fn value_and_gradient(&self, d: &[f64]) -> Result<(f64, Vec<f64>)>;
}

/// Which gradient an [`InverseProblem`] hands to the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum GradientBackend {
    #[default]
    Block,
    FiniteDifference {
        eps: EpsRule,
    },
}

/// The misfit objective for a dataset.
#[derive(Debug, Clone)]
pub struct InverseProblem {
    pub data: InverseData,
    pub scheme: SensitivityScheme,
    pub backend: GradientBackend,
}

impl InverseProblem {
    pub fn new(data: InverseData) -> Self {
        Self {
            data,
            scheme: SensitivityScheme::default(),
            backend: GradientBackend::default(),
        }
    }

    pub fn with_scheme(mut self, scheme: SensitivityScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_backend(mut self, backend: GradientBackend) -> Self {
        self.backend = backend;
        self
    }

    pub fn mesh(&self) -> &Mesh {
        &self.data.mesh
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.data.grid
    }
}

impl Objective for InverseProblem {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn value(&self, d: &[f64]) -> Result<f64> {
        Ok(evaluate_with(d, &self.data, false, self.scheme)?.value)
    }

    fn value_and_gradient(&self, d: &[f64]) -> Result<(f64, Vec<f64>)> {
        match self.backend {
            GradientBackend::Block => {
                let e = evaluate_with(d, &self.data, true, self.scheme)?;
                Ok((e.value, e.gradient.expect("gradient requested")))
            }
            GradientBackend::FiniteDifference { eps } => {
                let v = self.value(d)?;
                Ok((v, fd_gradient(d, &self.data, eps)?))
            }
        }
    }
}
