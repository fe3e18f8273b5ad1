//! Slow dense reference implementations for the test suite.
//!
//! Everything here is built from element quadrature and dense storage and does
//! not call the banded assembly, the tridiagonal solver or the block
//! sensitivity code.

use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen};

use crate::assembly::{C1Mode, FirnParams, MassStencil};
use crate::mesh::{Mesh, TimeGrid};
use crate::objective::InverseData;
use crate::optimize::Constraint;

pub type DenseMatrix = DMatrix<f64>;

const GAUSS: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

/// Hat function values and slopes of the two local nodes at reference point `s` in `[0, 1]`.
fn local_hats(s: f64, h: f64) -> ([f64; 2], [f64; 2]) {
    ([1.0 - s, s], [-1.0 / h, 1.0 / h])
}

/// Full `n x n` matrix over all nodes from an element integrand
/// `f(z, phi, dphi, a, b)` evaluated for local indices `a`, `b`.
fn assemble_full(
    mesh: &Mesh,
    f: impl Fn(usize, f64, &[f64; 2], &[f64; 2], usize, usize) -> f64,
) -> DenseMatrix {
    let n = mesh.len();
    let z = mesh.nodes();
    let mut out = DMatrix::zeros(n, n);
    for e in 0..n - 1 {
        let h = z[e + 1] - z[e];
        for &(x, w) in &GAUSS {
            let s = 0.5 * (x + 1.0);
            let (phi, dphi) = local_hats(s, h);
            for a in 0..2 {
                for b in 0..2 {
                    out[(e + a, e + b)] += 0.5 * h * w * f(e, s, &phi, &dphi, a, b);
                }
            }
        }
    }
    out
}

fn interior(full: &DenseMatrix) -> DenseMatrix {
    let n = full.nrows();
    full.view((1, 1), (n - 1, n - 1)).into_owned()
}

/// `<phi_i, phi_j>` over all nodes.
pub fn full_mass(mesh: &Mesh) -> DenseMatrix {
    assemble_full(mesh, |_, _, phi, _, a, b| phi[a] * phi[b])
}

/// Interior mass matrix; the printed stencil drops the left element from the corner.
pub fn dense_mass(mesh: &Mesh, stencil: MassStencil) -> DenseMatrix {
    let mut m = interior(&full_mass(mesh));
    if stencil == MassStencil::Printed && m.nrows() > 1 {
        let z = mesh.nodes();
        m[(0, 0)] = (z[2] - z[1]) / 3.0;
    }
    m
}

/// Full `A` with `<D phi_i, phi_j'>`, `D` replaced by its element mean.
pub fn full_a(mesh: &Mesh, d: &[f64]) -> DenseMatrix {
    assemble_full(mesh, |e, _, phi, dphi, a, b| {
        0.5 * (d[e] + d[e + 1]) * phi[a] * dphi[b]
    })
}

/// Full `S` with `<D phi_i', phi_j'>`, `D` linear on each element.
pub fn full_s(mesh: &Mesh, d: &[f64]) -> DenseMatrix {
    assemble_full(mesh, |e, s, _, dphi, a, b| {
        let dz = d[e] * (1.0 - s) + d[e + 1] * s;
        dz * dphi[a] * dphi[b]
    })
}

/// Interior `(A, S)`.
pub fn dense_assemble_a_s(mesh: &Mesh, d: &[f64]) -> (DenseMatrix, DenseMatrix) {
    (interior(&full_a(mesh, d)), interior(&full_s(mesh, d)))
}

/// Full `K` with `F <phi_i, phi_j'>`.
pub fn full_k(mesh: &Mesh, advection_speed: f64) -> DenseMatrix {
    assemble_full(mesh, |_, _, phi, dphi, a, b| {
        advection_speed * phi[a] * dphi[b]
    })
}

/// Interior `(K, Q, B)`.
pub fn dense_k_q_b(mesh: &Mesh, advection_speed: f64) -> (DenseMatrix, DenseMatrix, DenseMatrix) {
    let k = interior(&full_k(mesh, advection_speed));
    let n = k.nrows();
    let mut b = DMatrix::zeros(n, n);
    b[(n - 1, n - 1)] = advection_speed;
    let q = &b - &k;
    (k, q, b)
}

fn full_c_with_depth(mesh: &Mesh, params: &FirnParams, d: &[f64], zf: f64) -> DenseMatrix {
    let f = params.open_pore_fraction;
    full_mass(mesh) * (params.loss_rate / f) + full_s(mesh, d) * (1.0 / (zf * zf * f))
        - full_a(mesh, d) * (params.gravity_factor / (zf * f))
        - full_k(mesh, params.advection_speed) * (1.0 / zf)
}

/// Interior system matrix `C` for one gas with profile `d`.
pub fn dense_system(mesh: &Mesh, params: &FirnParams, d: &[f64]) -> DenseMatrix {
    let f = params.open_pore_fraction;
    let (_, q, _) = dense_k_q_b(mesh, params.advection_speed);
    let (a, s) = dense_assemble_a_s(mesh, d);
    let zf = params.depth;
    dense_mass(mesh, params.mass_stencil) * (params.loss_rate / f) + s * (1.0 / (zf * zf * f))
        - a * (params.gravity_factor / (zf * f))
        + q * (1.0 / zf)
}

fn c1_depth(params: &FirnParams) -> f64 {
    match params.c1_mode {
        C1Mode::Consistent => params.depth,
        C1Mode::Literal => 1.0,
    }
}

/// Surface coupling: entry `(0, 1)` of the full operator.
pub fn dense_c1(mesh: &Mesh, params: &FirnParams, d: &[f64]) -> f64 {
    full_c_with_depth(mesh, params, d, c1_depth(params))[(0, 1)]
}

/// Derivative of the surface coupling of gas `r` along `e_j`.
pub fn dense_c1_derivative(mesh: &Mesh, params: &FirnParams, r: f64, j: usize) -> f64 {
    let zf = c1_depth(params);
    let f = params.open_pore_fraction;
    let mut e = vec![0.0; mesh.len()];
    e[j] = r;
    let dc = full_s(mesh, &e) * (1.0 / (zf * zf * f))
        - full_a(mesh, &e) * (params.gravity_factor / (zf * f));
    dc[(0, 1)]
}

fn lu_solve(m: &DenseMatrix, b: &DVector<f64>) -> DVector<f64> {
    m.clone()
        .lu()
        .solve(b)
        .expect("dense oracle system is nonsingular")
}

/// Implicit Euler trace over all nodes, one column per time level.
pub fn dense_forward(mesh: &Mesh, grid: &TimeGrid, params: &FirnParams, d: &[f64]) -> DenseMatrix {
    let n = mesh.len();
    let m = grid.steps();
    let mass = dense_mass(mesh, params.mass_stencil);
    let c = dense_system(mesh, params, d);
    let tau = params.end_time * grid.dt();
    let lhs = &mass + &c * tau;
    let c1 = dense_c1(mesh, params, d);
    let z2 = mesh.nodes()[1] - mesh.nodes()[0];
    let rho: Vec<f64> = (0..m).map(|i| params.rho_atm(grid.time(i))).collect();
    let mut out = DMatrix::zeros(n, m);
    let mut state = DVector::zeros(n - 1);
    for i in 0..m - 1 {
        let mut rhs = &mass * &state;
        rhs[0] -= tau * rho[i + 1] * c1 + (rho[i + 1] - rho[i]) * z2 / 6.0;
        state = lu_solve(&lhs, &rhs);
        out[(0, i + 1)] = rho[i + 1];
        out.view_mut((1, i + 1), (n - 1, 1)).copy_from(&state);
    }
    out
}

/// End-time derivative of the interior solution of gas `r` along `beta`,
/// differentiating each implicit Euler step exactly.
pub fn dense_direction_sensitivity(
    mesh: &Mesh,
    grid: &TimeGrid,
    params: &FirnParams,
    r: f64,
    d: &[f64],
    beta: &[f64],
) -> Vec<f64> {
    let n = mesh.len();
    let d_alpha: Vec<f64> = d.iter().map(|x| r * x).collect();
    let rb: Vec<f64> = beta.iter().map(|x| r * x).collect();
    let trace = dense_forward(mesh, grid, params, &d_alpha);
    let mass = dense_mass(mesh, params.mass_stencil);
    let tau = params.end_time * grid.dt();
    let lhs = &mass + dense_system(mesh, params, &d_alpha) * tau;
    let zf = params.depth;
    let f = params.open_pore_fraction;
    let (a, s) = dense_assemble_a_s(mesh, &rb);
    let dc = s * (1.0 / (zf * zf * f)) - a * (params.gravity_factor / (zf * f));
    let dc1: f64 = (0..n)
        .map(|j| beta[j] * dense_c1_derivative(mesh, params, r, j))
        .sum();
    let mut v = DVector::zeros(n - 1);
    for i in 0..grid.steps() - 1 {
        let next = trace.view((1, i + 1), (n - 1, 1)).into_owned();
        let mut rhs = &mass * &v - (&dc * next) * tau;
        rhs[0] -= tau * trace[(0, i + 1)] * dc1;
        v = lu_solve(&lhs, &rhs);
    }
    v.iter().copied().collect()
}

/// Misfit summed over gases from dense forward runs.
pub fn dense_objective(d: &[f64], data: &InverseData) -> f64 {
    data.gases
        .iter()
        .map(|gas| {
            let da: Vec<f64> = d.iter().map(|x| gas.ratio * x).collect();
            let tr = dense_forward(&data.mesh, &data.grid, &data.params, &da);
            let last = tr.ncols() - 1;
            (0..tr.nrows())
                .map(|k| (tr[(k, last)] - gas.g[k]).powi(2))
                .sum::<f64>()
        })
        .sum()
}

/// Misfit gradient assembled one unit direction at a time.
pub fn dense_gradient(d: &[f64], data: &InverseData) -> Vec<f64> {
    let n = d.len();
    let mut grad = vec![0.0; n];
    for gas in &data.gases {
        let da: Vec<f64> = d.iter().map(|x| gas.ratio * x).collect();
        let tr = dense_forward(&data.mesh, &data.grid, &data.params, &da);
        let last = tr.ncols() - 1;
        for (j, g) in grad.iter_mut().enumerate() {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let s =
                dense_direction_sensitivity(&data.mesh, &data.grid, &data.params, gas.ratio, d, &e);
            *g += (1..n)
                .map(|k| 2.0 * (tr[(k, last)] - gas.g[k]) * s[k - 1])
                .sum::<f64>();
        }
    }
    grad
}

/// Central differences with a fixed step.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|j| {
            y[j] = x[j] + eps;
            let up = f(&y);
            y[j] = x[j] - eps;
            let down = f(&y);
            y[j] = x[j];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Smallest eigenvalue of `(M + M^T) / 2`.
pub fn eig_min_symmetric_part(m: &DenseMatrix) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

/// Eigenvalues of a symmetric 3x3 matrix from its characteristic cubic, ascending.
pub fn cubic_eigenvalues(m: &Matrix3<f64>) -> [f64; 3] {
    let tr = m.trace();
    let minors = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)] + m[(0, 0)] * m[(2, 2)]
        - m[(0, 2)] * m[(2, 0)]
        + m[(1, 1)] * m[(2, 2)]
        - m[(1, 2)] * m[(2, 1)];
    let det = m.determinant();
    // lambda^3 - tr lambda^2 + minors lambda - det = 0, shifted to a depressed cubic.
    let shift = tr / 3.0;
    let p = minors - tr * tr / 3.0;
    let q = -2.0 * tr.powi(3) / 27.0 + tr * minors / 3.0 - det;
    if p.abs() < 1e-300 {
        return [shift; 3];
    }
    let r = (-p / 3.0).sqrt();
    let arg = (-q / (2.0 * r.powi(3))).clamp(-1.0, 1.0);
    let theta = arg.acos() / 3.0;
    let mut roots = [0, 1, 2]
        .map(|k| shift + 2.0 * r * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos());
    roots.sort_by(|a, b| a.total_cmp(b));
    roots
}

/// Euclidean projection by enumerating every face of the constraint set.
///
/// Exponential in the length; intended for vectors of a handful of entries.
pub fn exhaustive_projection(x: &[f64], constraint: Constraint) -> Vec<f64> {
    match constraint {
        Constraint::None => x.to_vec(),
        Constraint::Nonneg => x.iter().map(|v| v.max(0.0)).collect(),
        Constraint::NonnegDecreasing => {
            let n = x.len();
            let mut best: Option<(f64, Vec<f64>)> = None;
            for mask in 0u32..(1 << n.saturating_sub(1)) {
                let mut blocks = vec![(0usize, 0usize)];
                for k in 1..n {
                    if mask & (1 << (k - 1)) != 0 {
                        blocks.push((k, k));
                    } else {
                        blocks.last_mut().unwrap().1 = k;
                    }
                }
                for zeros in 0..=blocks.len() {
                    let mut y = vec![0.0; n];
                    for (b, &(lo, hi)) in blocks.iter().enumerate() {
                        if b + zeros < blocks.len() {
                            let mean = x[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
                            y[lo..=hi].iter_mut().for_each(|v| *v = mean);
                        }
                    }
                    let feasible =
                        y.windows(2).all(|w| w[0] >= w[1]) && y.iter().all(|&v| v >= 0.0);
                    if !feasible {
                        continue;
                    }
                    let dist: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
                    if best.as_ref().is_none_or(|(d, _)| dist < *d) {
                        best = Some((dist, y));
                    }
                }
            }
            best.map(|(_, y)| y).unwrap_or_default()
        }
    }
}
