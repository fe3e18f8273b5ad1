//! End-time directional derivatives of the discrete solution with respect
//! to nodal perturbations of the diffusion profile.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::assembly::{
    assemble_a, assemble_s, boundary_constant_c2, ColumnBand, DiffusionProfile, FirnParams,
    JBlockBuilder,
};
use crate::error::{FirnError, Result};
use crate::forward::{ForwardTrace, GasSystem};
use crate::mesh::{Mesh, TimeGrid};

/// Time treatment of the forcing term in the sensitivity recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensitivityScheme {
    /// Exact derivative of the implicit Euler recursion: forcing at the new level only.
    #[default]
    Tangent,
    /// Forcing averaged over the old and new levels.
    Trapezoidal,
}

impl SensitivityScheme {
    /// Forcing state `w` and the surface weight multiplying `c2` for step `i -> i + 1`.
    fn forcing(&self, prev: &[f64], next: &[f64], rho0: f64, rho1: f64, w: &mut [f64]) -> f64 {
        match self {
            SensitivityScheme::Tangent => {
                for (o, &b) in w.iter_mut().zip(next) {
                    *o = 2.0 * b;
                }
                2.0 * rho1
            }
            SensitivityScheme::Trapezoidal => {
                for ((o, &a), &b) in w.iter_mut().zip(prev).zip(next) {
                    *o = a + b;
                }
                rho0 + rho1
            }
        }
    }
}

/// `(n-1) x n` end-time sensitivities, row-major; column `j` is the response to `e_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityBlock {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl SensitivityBlock {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    /// `y^T V` for a vector `y` of length `rows`.
    pub fn left_multiply(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows, "left operand length");
        let mut out = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            for (o, &v) in out
                .iter_mut()
                .zip(&self.data[i * self.cols..(i + 1) * self.cols])
            {
                *o += yi * v;
            }
        }
        out
    }
}

fn check_trace(mesh: &Mesh, grid: &TimeGrid, trace: &ForwardTrace) -> Result<()> {
    if trace.mesh().len() != mesh.len() {
        return Err(FirnError::DimensionMismatch {
            expected: mesh.len(),
            actual: trace.mesh().len(),
            context: "trace nodes vs mesh nodes",
        });
    }
    if trace.steps() != grid.steps() {
        return Err(FirnError::DimensionMismatch {
            expected: grid.steps(),
            actual: trace.steps(),
            context: "trace time levels vs grid",
        });
    }
    Ok(())
}

/// Block sensitivity solve for one gas with ratio `r_alpha` and `D_alpha = r_alpha d`.
pub fn block_sensitivity_solve(
    mesh: &Mesh,
    grid: &TimeGrid,
    params: &FirnParams,
    r_alpha: f64,
    d_alpha: &DiffusionProfile,
    trace: &ForwardTrace,
    scheme: SensitivityScheme,
) -> Result<SensitivityBlock> {
    check_trace(mesh, grid, trace)?;
    let gas = GasSystem::new(mesh, grid, params, d_alpha)?;
    block_sensitivity_with(&gas, mesh, params, r_alpha, trace, scheme)
}

/// Block solve reusing an already factored gas system.
pub fn block_sensitivity_with(
    gas: &GasSystem,
    mesh: &Mesh,
    params: &FirnParams,
    r_alpha: f64,
    trace: &ForwardTrace,
    scheme: SensitivityScheme,
) -> Result<SensitivityBlock> {
    let rows = mesh.interior_len();
    let cols = mesh.len();
    if trace.mesh().len() != cols || trace.steps() != gas.rho().len() {
        return Err(FirnError::DimensionMismatch {
            expected: gas.rho().len(),
            actual: trace.steps(),
            context: "trace vs factored system",
        });
    }
    let c2 = boundary_constant_c2(mesh, params, r_alpha);
    let step = gas.step_scale();
    let rho = gas.rho();
    let mut builder = JBlockBuilder::new(mesh, params, r_alpha);
    let mut band = ColumnBand::zeros(cols);
    let mut w = vec![0.0; rows];
    let mut current = vec![0.0; rows * cols];
    let mut next = vec![0.0; rows * cols];
    for i in 0..rho.len() - 1 {
        let weight = scheme.forcing(
            trace.interior(i),
            trace.interior(i + 1),
            rho[i],
            rho[i + 1],
            &mut w,
        );
        builder.build(&w, &mut band);
        gas.mass().matmul_block_into(&current, cols, &mut next);
        band.sub_scaled_from(step, &mut next);
        let p = c2 * weight;
        next[0] -= step * p;
        if cols > 1 {
            next[1] -= step * p;
        }
        gas.system().solve_block_in_place(&mut next, cols);
        if !next.iter().all(|v| v.is_finite()) {
            return Err(FirnError::NonFinite { step: i + 1 });
        }
        std::mem::swap(&mut current, &mut next);
    }
    Ok(SensitivityBlock {
        rows,
        cols,
        data: current,
    })
}

/// End-time derivative along an arbitrary direction `beta`, built from assembled matrices.
#[allow(clippy::too_many_arguments)]
pub fn single_direction_solve(
    mesh: &Mesh,
    grid: &TimeGrid,
    params: &FirnParams,
    r_alpha: f64,
    d_alpha: &DiffusionProfile,
    beta: &[f64],
    trace: &ForwardTrace,
    scheme: SensitivityScheme,
) -> Result<Vec<f64>> {
    check_trace(mesh, grid, trace)?;
    if beta.len() != mesh.len() {
        return Err(FirnError::DimensionMismatch {
            expected: mesh.len(),
            actual: beta.len(),
            context: "direction vs mesh nodes",
        });
    }
    let gas = GasSystem::new(mesh, grid, params, d_alpha)?;
    let f = params.open_pore_fraction;
    let zf = params.depth;
    let rb = DiffusionProfile::new(beta.iter().map(|b| r_alpha * b).collect())?;
    let mut jmat = assemble_s(mesh, &rb)?.scaled(1.0 / (2.0 * zf * zf * f));
    jmat.add_scaled(
        -params.gravity_factor / (2.0 * zf * f),
        &assemble_a(mesh, &rb)?,
    );
    let c2 = boundary_constant_c2(mesh, params, r_alpha) * (beta[0] + beta[1]);
    let n = mesh.interior_len();
    let step = gas.step_scale();
    let rho = gas.rho();
    let mut v = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..rho.len() - 1 {
        let weight = scheme.forcing(
            trace.interior(i),
            trace.interior(i + 1),
            rho[i],
            rho[i + 1],
            &mut w,
        );
        let jw = jmat.matvec(&w);
        gas.mass().matvec_into(&v, &mut rhs);
        for (r, x) in rhs.iter_mut().zip(&jw) {
            *r -= step * x;
        }
        rhs[0] -= step * c2 * weight;
        gas.system().solve_in_place(&mut rhs);
        v.copy_from_slice(&rhs);
    }
    Ok(v)
}
