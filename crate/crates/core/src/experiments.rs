//! Mesh-refinement studies, runtime tables and gradient verification.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::FirnParams;
use crate::data::TestCase;
use crate::error::{FirnError, Result};
use crate::forward::{compare_end_states, forward_end_state, EndState, ErrorReport};
use crate::mesh::{Mesh, MeshKind, TimeGrid};
use crate::objective::{evaluate, fd_gradient, EpsRule, InverseData};

/// Time step tied to the mesh parameter `h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DtRule {
    #[default]
    H,
    H2,
}

impl DtRule {
    /// Grid for a mesh parameter of `1/cells`.
    pub fn grid(&self, cells: usize) -> TimeGrid {
        match self {
            DtRule::H => TimeGrid::with_intervals(cells),
            DtRule::H2 => TimeGrid::with_intervals(cells * cells),
        }
    }
}

/// Mesh with parameter `1/cells`.
pub fn build_mesh(kind: MeshKind, cells: usize) -> Result<Mesh> {
    match kind {
        MeshKind::Uniform => Mesh::uniform_cells(cells),
        MeshKind::Adaptive => Mesh::adaptive_cells(cells),
    }
}

/// One forward run with its wall time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedRun {
    pub cells: usize,
    pub nodes: usize,
    pub steps: usize,
    pub runtime_s: f64,
    pub runtime_per_step_s: f64,
    #[serde(skip)]
    pub end: Option<EndState>,
}

pub fn timed_run(
    case: TestCase,
    params: &FirnParams,
    kind: MeshKind,
    cells: usize,
    dt: DtRule,
) -> Result<TimedRun> {
    let mesh = build_mesh(kind, cells)?;
    let grid = dt.grid(cells);
    let d = case.profile(&mesh);
    let start = Instant::now();
    let end = forward_end_state(&mesh, &grid, params, &d)?;
    let runtime_s = start.elapsed().as_secs_f64();
    Ok(TimedRun {
        cells,
        nodes: mesh.len(),
        steps: grid.intervals(),
        runtime_s,
        runtime_per_step_s: runtime_s / grid.intervals() as f64,
        end: Some(end),
    })
}

/// Errors of one mesh against the reference solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub cells: usize,
    pub nodes: usize,
    pub errors: ErrorReport,
    pub runtime_s: f64,
}

/// Setup of a refinement study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub case: TestCase,
    pub params: FirnParams,
    pub kind: MeshKind,
    pub cells: Vec<usize>,
    pub reference_cells: usize,
    /// Errors are measured at the nodes of the uniform mesh with this many cells.
    pub compare_cells: usize,
    pub dt: DtRule,
}

impl ConvergenceStudy {
    pub fn new(case: TestCase, params: FirnParams) -> Self {
        Self {
            case,
            params,
            kind: MeshKind::Uniform,
            cells: vec![16, 32, 64, 128],
            reference_cells: 256,
            compare_cells: 16,
            dt: DtRule::H2,
        }
    }

    /// Runs every mesh and the reference in parallel.
    pub fn run(&self) -> Result<Vec<ConvergenceRow>> {
        let mut all = self.cells.clone();
        all.push(self.reference_cells);
        let runs = all
            .par_iter()
            .map(|&c| timed_run(self.case, &self.params, self.kind, c, self.dt))
            .collect::<Result<Vec<_>>>()?;
        let (reference, runs) = runs.split_last().expect("reference run is present");
        let reference_end = reference.end.as_ref().expect("end state kept");
        let at = Mesh::uniform_cells(self.compare_cells)?;
        runs.iter()
            .map(|r| {
                let end = r.end.as_ref().expect("end state kept");
                Ok(ConvergenceRow {
                    cells: r.cells,
                    nodes: r.nodes,
                    errors: compare_end_states(end, reference_end, Some(&at))?,
                    runtime_s: r.runtime_s,
                })
            })
            .collect()
    }
}

/// Outcome of comparing the block gradient with central differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub gradient: Vec<f64>,
    pub finite_difference: Vec<f64>,
    /// Largest `|g_j - fd_j| / max(|g_j|, |fd_j|)` over components.
    pub max_componentwise: f64,
    /// `max_j |g_j - fd_j| / max_j |fd_j|`.
    pub max_scaled: f64,
    pub block_time_s: f64,
    pub fd_time_s: f64,
    pub speedup: f64,
}

/// Component-wise relative discrepancy between two gradients.
pub fn componentwise_discrepancy(g: &[f64], reference: &[f64]) -> f64 {
    g.iter()
        .zip(reference)
        .map(|(a, b)| {
            let scale = a.abs().max(b.abs());
            if scale == 0.0 {
                0.0
            } else {
                (a - b).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

/// Compares the block gradient with central differences at `d`; `perturb` is
/// added to the block gradient before comparison.
pub fn gradient_check(
    d: &[f64],
    data: &InverseData,
    eps: EpsRule,
    perturb: f64,
) -> Result<GradientCheck> {
    let start = Instant::now();
    let mut gradient = evaluate(d, data, true)?
        .gradient
        .ok_or_else(|| FirnError::InvalidParameter("gradient was not produced".into()))?;
    let block_time_s = start.elapsed().as_secs_f64();
    for g in &mut gradient {
        *g += perturb * g.abs().max(1.0);
    }
    let start = Instant::now();
    let finite_difference = fd_gradient(d, data, eps)?;
    let fd_time_s = start.elapsed().as_secs_f64();
    let fd_max = finite_difference.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let max_scaled = gradient
        .iter()
        .zip(&finite_difference)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / fd_max.max(f64::MIN_POSITIVE);
    Ok(GradientCheck {
        max_componentwise: componentwise_discrepancy(&gradient, &finite_difference),
        max_scaled,
        gradient,
        finite_difference,
        block_time_s,
        fd_time_s,
        speedup: fd_time_s / block_time_s.max(f64::MIN_POSITIVE),
    })
}
