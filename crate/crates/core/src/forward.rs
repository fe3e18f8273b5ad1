//! Implicit Euler time marching of the discrete direct problem.

use serde::{Deserialize, Serialize};

use crate::assembly::{
    assemble_c, assemble_mass, boundary_constant_c1, DiffusionProfile, FirnParams,
};
use crate::banded::{TridiagonalLu, TridiagonalMatrix};
use crate::error::{FirnError, Result};
use crate::mesh::{Mesh, TimeGrid};

/// Largest system for which the admissibility check computes an eigenvalue.
pub const EIGEN_CHECK_MAX_DIM: usize = 64;

/// The matrix `M + T_e dt C` together with its reusable LU factors.
#[derive(Debug, Clone)]
pub struct BandedSystem {
    matrix: TridiagonalMatrix,
    lu: TridiagonalLu,
}

impl BandedSystem {
    /// Factorizes once; a zero pivot is reported with the admissibility diagnostic attached.
    pub fn factorize(matrix: TridiagonalMatrix) -> Result<Self> {
        match TridiagonalLu::factorize(&matrix) {
            Ok(lu) => Ok(Self { matrix, lu }),
            Err(FirnError::Singular { pivot, .. }) => {
                let diag = admissibility_of(&matrix);
                Err(FirnError::Singular {
                    pivot,
                    diagnostic: Some(diag.summary()),
                })
            }
            Err(e) => Err(e),
        }
    }

    pub fn matrix(&self) -> &TridiagonalMatrix {
        &self.matrix
    }

    pub fn lu(&self) -> &TridiagonalLu {
        &self.lu
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.lu.solve_in_place(b);
    }

    pub fn solve_block_in_place(&self, b: &mut [f64], cols: usize) {
        self.lu.solve_block_in_place(b, cols);
    }
}

/// Result of the positive-definiteness check on the symmetric part of a system matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtDiagnostic {
    pub positive_definite: bool,
    /// Smallest eigenvalue of `(A + A^T)/2`, computed for small systems only.
    pub min_eigenvalue: Option<f64>,
    /// Smallest pivot of the `LDL^T` factorization of the symmetric part.
    pub min_pivot: f64,
    pub warning: Option<String>,
}

impl DtDiagnostic {
    pub fn summary(&self) -> String {
        match (&self.warning, self.min_eigenvalue) {
            (Some(w), _) => w.clone(),
            (None, Some(l)) => format!("symmetric part positive definite (min eigenvalue {l:.3e})"),
            (None, None) => format!(
                "symmetric part positive definite (min LDL pivot {:.3e})",
                self.min_pivot
            ),
        }
    }
}

/// Checks whether the symmetric part of `M + T_e dt C` is positive definite.
///
/// A failed check is only a warning: positive definiteness is sufficient
/// for invertibility but not necessary.
pub fn check_dt_admissible(system: &BandedSystem) -> DtDiagnostic {
    admissibility_of(system.matrix())
}

fn admissibility_of(matrix: &TridiagonalMatrix) -> DtDiagnostic {
    let sym = matrix.symmetric_part();
    let mut min_pivot = f64::INFINITY;
    let mut prev = 0.0;
    for i in 0..sym.dim() {
        let p = if i == 0 {
            sym.diag[0]
        } else {
            sym.diag[i] - sym.sub[i - 1] * sym.sub[i - 1] / prev
        };
        min_pivot = min_pivot.min(p);
        if p <= 0.0 || !p.is_finite() {
            break;
        }
        prev = p;
    }
    let min_eigenvalue = (sym.dim() <= EIGEN_CHECK_MAX_DIM).then(|| min_eigenvalue_sturm(&sym));
    let positive_definite = min_pivot > 0.0 && min_pivot.is_finite();
    let warning = (!positive_definite).then(|| {
        format!(
            "symmetric part of the system matrix is not positive definite (min LDL pivot {min_pivot:.3e}{}); \
             the time step may be too large",
            min_eigenvalue
                .map(|l| format!(", min eigenvalue {l:.3e}"))
                .unwrap_or_default()
        )
    });
    DtDiagnostic {
        positive_definite,
        min_eigenvalue,
        min_pivot,
        warning,
    }
}

/// Number of eigenvalues of a symmetric tridiagonal matrix below `x`.
fn sturm_count(sym: &TridiagonalMatrix, x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..sym.dim() {
        let b2 = if i == 0 {
            0.0
        } else {
            sym.sub[i - 1] * sym.sub[i - 1]
        };
        q = sym.diag[i] - x - if i == 0 { 0.0 } else { b2 / q };
        if q == 0.0 {
            q = f64::EPSILON * (sym.diag[i].abs() + x.abs()).max(f64::MIN_POSITIVE);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn min_eigenvalue_sturm(sym: &TridiagonalMatrix) -> f64 {
    // Gershgorin interval bounds the spectrum.
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..sym.dim() {
        let mut r = 0.0;
        if i > 0 {
            r += sym.sub[i - 1].abs();
        }
        if i + 1 < sym.dim() {
            r += sym.sup[i].abs();
        }
        lo = lo.min(sym.diag[i] - r);
        hi = hi.max(sym.diag[i] + r);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(sym, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Everything needed to march one gas: mass matrix, factored system,
/// surface constant and sampled atmospheric history.
#[derive(Debug, Clone)]
pub struct GasSystem {
    mass: TridiagonalMatrix,
    system: BandedSystem,
    c1: f64,
    rho: Vec<f64>,
    step: f64,
    first_spacing: f64,
}

impl GasSystem {
    pub fn new(
        mesh: &Mesh,
        grid: &TimeGrid,
        params: &FirnParams,
        d_alpha: &DiffusionProfile,
    ) -> Result<Self> {
        if d_alpha.len() != mesh.len() {
            return Err(FirnError::DimensionMismatch {
                expected: mesh.len(),
                actual: d_alpha.len(),
                context: "diffusion profile vs mesh nodes",
            });
        }
        let mass = assemble_mass(mesh, params.mass_stencil);
        let c = assemble_c(mesh, params, d_alpha)?;
        let step = params.end_time * grid.dt();
        let mut b = mass.clone();
        b.add_scaled(step, &c);
        let system = BandedSystem::factorize(b)?;
        let c1 = boundary_constant_c1(mesh, params, d_alpha)?;
        let rho = grid.times().map(|t| params.rho_atm(t)).collect();
        Ok(Self {
            mass,
            system,
            c1,
            rho,
            step,
            first_spacing: mesh.first_spacing(),
        })
    }

    pub fn mass(&self) -> &TridiagonalMatrix {
        &self.mass
    }

    pub fn system(&self) -> &BandedSystem {
        &self.system
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    /// `T_e * dt`.
    pub fn step_scale(&self) -> f64 {
        self.step
    }

    /// Atmospheric concentration at every time level.
    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn dim(&self) -> usize {
        self.mass.dim()
    }

    /// Advances the interior state from level `i` to `i + 1`; `scratch` has interior length.
    pub fn advance(&self, i: usize, state: &mut [f64], scratch: &mut [f64]) {
        let (r0, r1) = (self.rho[i], self.rho[i + 1]);
        self.mass.matvec_into(state, scratch);
        scratch[0] -= self.step * r1 * self.c1 + (r1 - r0) * self.first_spacing / 6.0;
        self.system.solve_in_place(scratch);
        state.copy_from_slice(scratch);
    }

    /// Runs all steps; `visit(i, interior)` sees every level from `i = 1`.
    pub fn march(&self, mut visit: impl FnMut(usize, &[f64])) -> Result<Vec<f64>> {
        let n = self.dim();
        let mut state = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        for i in 0..self.rho.len() - 1 {
            self.advance(i, &mut state, &mut scratch);
            if !state.iter().all(|v| v.is_finite()) {
                return Err(FirnError::NonFinite { step: i + 1 });
            }
            visit(i + 1, &state);
        }
        Ok(state)
    }

    /// Full trace with the boundary row filled from the atmosphere.
    pub fn solve_trace(&self, mesh: &Mesh, grid: &TimeGrid) -> Result<ForwardTrace> {
        let n = mesh.len();
        let m = grid.steps();
        let mut lambda = vec![0.0; n * m];
        self.march(|i, s| {
            let col = &mut lambda[i * n..(i + 1) * n];
            col[0] = self.rho[i];
            col[1..].copy_from_slice(s);
        })?;
        Ok(ForwardTrace {
            mesh: mesh.clone(),
            grid: *grid,
            lambda,
        })
    }

    /// End-time solution including the boundary node, without storing the history.
    pub fn solve_end(&self) -> Result<Vec<f64>> {
        let interior = self.march(|_, _| {})?;
        let mut out = Vec::with_capacity(interior.len() + 1);
        out.push(*self.rho.last().expect("grid has at least two levels"));
        out.extend(interior);
        Ok(out)
    }
}

/// Solution at every time level; column `i` holds all `n` nodes at `t_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    mesh: Mesh,
    grid: TimeGrid,
    lambda: Vec<f64>,
}

impl ForwardTrace {
    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Column `i` (all nodes at `t_i`).
    pub fn column(&self, i: usize) -> &[f64] {
        let n = self.mesh.len();
        &self.lambda[i * n..(i + 1) * n]
    }

    /// Interior part of column `i`.
    pub fn interior(&self, i: usize) -> &[f64] {
        &self.column(i)[1..]
    }

    pub fn end(&self) -> &[f64] {
        self.column(self.grid.steps() - 1)
    }

    pub fn end_state(&self) -> EndState {
        EndState {
            mesh: self.mesh.clone(),
            values: self.end().to_vec(),
        }
    }

    /// Values at node `k` over all time levels.
    pub fn row(&self, k: usize) -> Vec<f64> {
        (0..self.grid.steps()).map(|i| self.column(i)[k]).collect()
    }

    pub fn steps(&self) -> usize {
        self.grid.steps()
    }
}

/// Runs the direct problem for one gas and keeps every time level.
pub fn forward_solve(
    mesh: &Mesh,
    grid: &TimeGrid,
    params: &FirnParams,
    d_alpha: &DiffusionProfile,
) -> Result<ForwardTrace> {
    params.validate()?;
    GasSystem::new(mesh, grid, params, d_alpha)?.solve_trace(mesh, grid)
}

/// Runs the direct problem for one gas and returns only the end-time solution.
pub fn forward_end_state(
    mesh: &Mesh,
    grid: &TimeGrid,
    params: &FirnParams,
    d_alpha: &DiffusionProfile,
) -> Result<EndState> {
    params.validate()?;
    let values = GasSystem::new(mesh, grid, params, d_alpha)?.solve_end()?;
    Ok(EndState {
        mesh: mesh.clone(),
        values,
    })
}

/// End-time solution on its mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndState {
    pub mesh: Mesh,
    pub values: Vec<f64>,
}

/// Absolute and relative errors between two end-time solutions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub linf_abs: f64,
    pub linf_rel: f64,
    pub l2_abs: f64,
    pub l2_rel: f64,
    pub nodes_compared: usize,
}

/// Compares `a` against the reference `b` at the nodes both meshes share.
pub fn compare_traces(a: &ForwardTrace, b: &ForwardTrace) -> Result<ErrorReport> {
    compare_end_states(&a.end_state(), &b.end_state(), None)
}

/// Compares `a` against the reference `b`, optionally only at the nodes of `at`.
///
/// Relative errors divide by the matching norm of the reference values.
pub fn compare_end_states(a: &EndState, b: &EndState, at: Option<&Mesh>) -> Result<ErrorReport> {
    let pairs = a.mesh.common_nodes(&b.mesh);
    let pairs: Vec<(usize, usize)> = match at {
        Some(sel) => pairs
            .into_iter()
            .filter(|&(i, _)| sel.find_node(a.mesh.nodes()[i]).is_some())
            .collect(),
        None => pairs,
    };
    if pairs.len() <= 2 {
        return Err(FirnError::NoCommonNodes);
    }
    let (mut linf, mut l2, mut ref_inf, mut ref_l2) = (0.0f64, 0.0, 0.0f64, 0.0);
    for &(i, j) in &pairs {
        let diff = (a.values[i] - b.values[j]).abs();
        linf = linf.max(diff);
        l2 += diff * diff;
        ref_inf = ref_inf.max(b.values[j].abs());
        ref_l2 += b.values[j] * b.values[j];
    }
    let (l2, ref_l2) = (l2.sqrt(), ref_l2.sqrt());
    let rel = |x: f64, r: f64| if r > 0.0 { x / r } else { x };
    Ok(ErrorReport {
        linf_abs: linf,
        linf_rel: rel(linf, ref_inf),
        l2_abs: l2,
        l2_rel: rel(l2, ref_l2),
        nodes_compared: pairs.len(),
    })
}

/// Counts sign changes between consecutive differences of `values`.
pub fn sign_changes(values: &[f64]) -> usize {
    sign_changes_above(values, 0.0)
}

/// Sign changes of consecutive differences, skipping differences with `|d| <= floor`.
pub fn sign_changes_above(values: &[f64], floor: f64) -> usize {
    let mut count = 0;
    let mut last = 0.0f64;
    for w in values.windows(2) {
        let d = w[1] - w[0];
        if d.abs() <= floor {
            continue;
        }
        if last != 0.0 && d.signum() != last.signum() {
            count += 1;
        }
        last = d;
    }
    count
}

/// Differences below this fraction of `max |values|` are ignored by [`is_oscillating`].
pub const OSCILLATION_FLOOR: f64 = 1e-10;

/// True when consecutive differences change sign at more than a quarter of the interior nodes.
pub fn is_oscillating(values: &[f64]) -> bool {
    let interior = values.len().saturating_sub(2);
    let scale = values.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    interior > 0 && 4 * sign_changes_above(values, OSCILLATION_FLOOR * scale) > interior
}
