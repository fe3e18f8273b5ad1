//! P1 finite-element matrices for the rescaled firn equation, the system
//! matrix `C`, the surface boundary constants and the structured
//! column products used by the sensitivity solver.
//!
//! Interior row `r` corresponds to node `r + 1`; node 0 carries the
//! atmospheric Dirichlet value and is eliminated. Element `e` joins nodes
//! `e` and `e + 1`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::banded::TridiagonalMatrix;
use crate::error::{FirnError, Result};
use crate::mesh::Mesh;

/// Atmospheric concentration history at the surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Atmosphere {
    /// `amplitude * (Te * t)^exponent`.
    PowerLaw {
        amplitude: f64,
        exponent: f64,
    },
    Zero,
}

impl Atmosphere {
    pub fn rho(&self, t: f64, end_time: f64) -> f64 {
        match *self {
            Atmosphere::PowerLaw {
                amplitude,
                exponent,
            } => amplitude * (end_time * t).powf(exponent),
            Atmosphere::Zero => 0.0,
        }
    }
}

impl Default for Atmosphere {
    fn default() -> Self {
        Atmosphere::PowerLaw {
            amplitude: 2.0,
            exponent: 0.25,
        }
    }
}

/// Which form of the surface constant `c1` to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum C1Mode {
    /// Diffusion and advection terms scaled by the depth, as in the system matrix.
    #[default]
    Consistent,
    /// Same expression with every depth factor set to one.
    Literal,
}

/// Diagonal entry of the mass matrix in the first interior row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MassStencil {
    /// Exact hat-function integrals: `(h_0 + h_1) / 3`.
    #[default]
    Consistent,
    /// Corner entry `2h/6` at both ends of the diagonal.
    Printed,
}

/// Model constants in rescaled form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirnParams {
    /// Open-pore volume fraction `f`.
    pub open_pore_fraction: f64,
    /// Combined decay and trapping rate `G` (1/yr).
    pub loss_rate: f64,
    /// Combined advection velocity `F` (m/yr).
    pub advection_speed: f64,
    /// Gravitational factor `M_alpha` (1/m).
    pub gravity_factor: f64,
    /// Firn depth `z_F` (m).
    pub depth: f64,
    /// End time `T_e` (yr).
    pub end_time: f64,
    /// Per-gas diffusion scale factors `r_alpha`.
    pub gas_ratios: Vec<f64>,
    pub atmosphere: Atmosphere,
    #[serde(default)]
    pub c1_mode: C1Mode,
    #[serde(default)]
    pub mass_stencil: MassStencil,
}

impl FirnParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (
                self.open_pore_fraction > 0.0,
                "open-pore fraction must be positive",
            ),
            (self.loss_rate >= 0.0, "loss rate must be nonnegative"),
            (
                self.advection_speed >= 0.0,
                "advection speed must be nonnegative",
            ),
            (
                self.gravity_factor >= 0.0,
                "gravity factor must be nonnegative",
            ),
            (self.depth > 0.0, "firn depth must be positive"),
            (self.end_time > 0.0, "end time must be positive"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(FirnError::InvalidParameter(msg.into()));
            }
        }
        if self.gas_ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(FirnError::InvalidParameter(
                "gas ratios must be finite and nonnegative".into(),
            ));
        }
        if self.rho_atm(0.0) != 0.0 {
            return Err(FirnError::InvalidParameter(
                "atmospheric concentration must vanish at t = 0".into(),
            ));
        }
        Ok(())
    }

    /// Surface concentration at rescaled time `t`.
    pub fn rho_atm(&self, t: f64) -> f64 {
        self.atmosphere.rho(t, self.end_time)
    }

    /// Copy with a single gas of ratio `r`.
    pub fn single_gas(&self, r: f64) -> Self {
        Self {
            gas_ratios: vec![r],
            ..self.clone()
        }
    }
}

/// Nodal samples of a diffusion coefficient.
///
/// Values must be finite. Negative values are accepted because
/// unconstrained optimizer iterates can leave the physical range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionProfile(Vec<f64>);

impl DiffusionProfile {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FirnError::InvalidParameter(format!(
                "diffusion sample {i} is not finite"
            )));
        }
        Ok(Self(values))
    }

    pub fn from_fn(mesh: &Mesh, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(mesh.nodes().iter().map(|&z| f(z)).collect())
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

    pub fn scaled(&self, r: f64) -> Self {
        Self(self.0.iter().map(|v| r * v).collect())
    }

    pub fn is_nonnegative(&self) -> bool {
        self.0.iter().all(|&v| v >= 0.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        if self.0.len() != mesh.len() {
            return Err(FirnError::DimensionMismatch {
                expected: mesh.len(),
                actual: self.0.len(),
                context: "diffusion profile vs mesh nodes",
            });
        }
        Ok(())
    }
}

/// Adds a 2x2 element block for nodes `(e, e + 1)`, dropping the boundary node.
fn scatter_element(m: &mut TridiagonalMatrix, e: usize, block: [[f64; 2]; 2]) {
    // Node k maps to row k - 1.
    if e == 0 {
        m.diag[0] += block[1][1];
        return;
    }
    let a = e - 1;
    m.diag[a] += block[0][0];
    m.sup[a] += block[0][1];
    m.sub[a] += block[1][0];
    m.diag[a + 1] += block[1][1];
}

/// Mass matrix `<phi_i, phi_j>` on the interior nodes.
pub fn assemble_mass(mesh: &Mesh, stencil: MassStencil) -> TridiagonalMatrix {
    let n = mesh.interior_len();
    let mut m = TridiagonalMatrix::zeros(n);
    for (e, &h) in mesh.spacings().iter().enumerate() {
        scatter_element(&mut m, e, [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]]);
    }
    if stencil == MassStencil::Printed && n > 1 {
        m.diag[0] = mesh.spacings()[1] / 3.0;
    }
    m
}

/// Advection matrices `(K, Q, B)` with `Q = B - K`; only `B(n-1, n-1) = F` is nonzero in `B`.
pub fn assemble_k_q_b(
    mesh: &Mesh,
    advection_speed: f64,
) -> (TridiagonalMatrix, TridiagonalMatrix, TridiagonalMatrix) {
    let n = mesh.interior_len();
    let w = advection_speed / 2.0;
    let mut k = TridiagonalMatrix::zeros(n);
    for e in 0..mesh.spacings().len() {
        scatter_element(&mut k, e, [[-w, w], [-w, w]]);
    }
    let mut b = TridiagonalMatrix::zeros(n);
    b.diag[n - 1] = advection_speed;
    let mut q = b.clone();
    q.add_scaled(-1.0, &k);
    (k, q, b)
}

/// First-order matrix `A(D)` with entries `<D phi_i, phi_j'>`, trapezoidal in `D`.
pub fn assemble_a(mesh: &Mesh, d: &DiffusionProfile) -> Result<TridiagonalMatrix> {
    d.check_mesh(mesh)?;
    let v = d.values();
    let mut a = TridiagonalMatrix::zeros(mesh.interior_len());
    for e in 0..mesh.spacings().len() {
        let w = (v[e] + v[e + 1]) / 4.0;
        scatter_element(&mut a, e, [[-w, w], [-w, w]]);
    }
    Ok(a)
}

/// Stiffness matrix `S(D)` with entries `<D phi_i', phi_j'>`, trapezoidal in `D`.
pub fn assemble_s(mesh: &Mesh, d: &DiffusionProfile) -> Result<TridiagonalMatrix> {
    d.check_mesh(mesh)?;
    let v = d.values();
    let mut s = TridiagonalMatrix::zeros(mesh.interior_len());
    for (e, &h) in mesh.spacings().iter().enumerate() {
        let w = (v[e] + v[e + 1]) / (2.0 * h);
        scatter_element(&mut s, e, [[w, -w], [-w, w]]);
    }
    Ok(s)
}

/// `C = (G/f) M + S/(z_F^2 f) - (M_alpha/(z_F f)) A + Q/z_F` for one gas with `D_alpha`.
pub fn assemble_c(
    mesh: &Mesh,
    params: &FirnParams,
    d_alpha: &DiffusionProfile,
) -> Result<TridiagonalMatrix> {
    let f = params.open_pore_fraction;
    let zf = params.depth;
    let m = assemble_mass(mesh, params.mass_stencil);
    let s = assemble_s(mesh, d_alpha)?;
    let a = assemble_a(mesh, d_alpha)?;
    let (_, q, _) = assemble_k_q_b(mesh, params.advection_speed);
    let mut c = m.scaled(params.loss_rate / f);
    c.add_scaled(1.0 / (zf * zf * f), &s);
    c.add_scaled(-params.gravity_factor / (zf * f), &a);
    c.add_scaled(1.0 / zf, &q);
    Ok(c)
}

/// Surface coupling constant `c1` for `D_alpha`.
pub fn boundary_constant_c1(
    mesh: &Mesh,
    params: &FirnParams,
    d_alpha: &DiffusionProfile,
) -> Result<f64> {
    d_alpha.check_mesh(mesh)?;
    let f = params.open_pore_fraction;
    let z2 = mesh.first_spacing();
    let zf = match params.c1_mode {
        C1Mode::Consistent => params.depth,
        C1Mode::Literal => 1.0,
    };
    let v = d_alpha.values();
    Ok(params.loss_rate * z2 / (6.0 * f)
        - (1.0 / (2.0 * f * zf * zf * z2) + params.gravity_factor / (4.0 * zf * f)) * (v[0] + v[1])
        - params.advection_speed / (2.0 * zf))
}

/// Derivative coefficient `c2` of the surface constant along `e_1` or `e_2`, halved.
///
/// Directions `e_j` with `j >= 3` have a zero coefficient.
pub fn boundary_constant_c2(mesh: &Mesh, params: &FirnParams, r_alpha: f64) -> f64 {
    let f = params.open_pore_fraction;
    let z2 = mesh.first_spacing();
    let zf = match params.c1_mode {
        C1Mode::Consistent => params.depth,
        C1Mode::Literal => 1.0,
    };
    -r_alpha / (4.0 * zf * zf * f * z2) - r_alpha * params.gravity_factor / (8.0 * zf * f)
}

/// An `(n-1) x n` matrix whose column `j` is nonzero only in rows `j-2..=j`.
///
/// `d2[j]`, `d1[j]` and `d0[j]` hold the entries `(j-2, j)`, `(j-1, j)` and `(j, j)`;
/// slots that fall outside the matrix are kept at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnBand {
    pub d2: Vec<f64>,
    pub d1: Vec<f64>,
    pub d0: Vec<f64>,
}

impl ColumnBand {
    pub fn zeros(cols: usize) -> Self {
        Self {
            d2: vec![0.0; cols],
            d1: vec![0.0; cols],
            d0: vec![0.0; cols],
        }
    }

    pub fn cols(&self) -> usize {
        self.d0.len()
    }

    pub fn rows(&self) -> usize {
        self.cols() - 1
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match j.checked_sub(i) {
            Some(0) => self.d0[j],
            Some(1) => self.d1[j],
            Some(2) => self.d2[j],
            _ => 0.0,
        }
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows()).map(|i| self.get(i, j)).collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows(), self.cols(), |i, j| self.get(i, j))
    }

    /// `Y -= alpha * self` for a row-major `(n-1) x n` block.
    pub fn sub_scaled_from(&self, alpha: f64, y: &mut [f64]) {
        let cols = self.cols();
        let rows = self.rows();
        assert_eq!(y.len(), rows * cols, "column band target size");
        for j in 0..cols {
            if j < rows {
                y[j * cols + j] -= alpha * self.d0[j];
            }
            if (1..=rows).contains(&j) {
                y[(j - 1) * cols + j] -= alpha * self.d1[j];
            }
            if j >= 2 {
                y[(j - 2) * cols + j] -= alpha * self.d2[j];
            }
        }
    }
}

/// Element jumps `g_e = V_{e+1} - V_e` with the boundary value `V_0 = 0`.
fn element_jumps(v: &[f64], out: &mut [f64]) {
    let mut prev = 0.0;
    for (o, &x) in out.iter_mut().zip(v) {
        *o = x - prev;
        prev = x;
    }
}

/// Columns `A(e_j) v` for every node `j`, in `O(n)`.
pub fn structured_ae_product(v: &[f64]) -> ColumnBand {
    let mut band = ColumnBand::zeros(v.len() + 1);
    let mut g = vec![0.0; v.len()];
    element_jumps(v, &mut g);
    fill_ae(&g, &mut band, 1.0);
    band
}

/// Columns `S(e_j) v` for every node `j`, in `O(n)`.
pub fn structured_se_product(v: &[f64], spacings: &[f64]) -> Result<ColumnBand> {
    if spacings.len() != v.len() {
        return Err(FirnError::DimensionMismatch {
            expected: v.len(),
            actual: spacings.len(),
            context: "element spacings vs interior vector",
        });
    }
    let mut band = ColumnBand::zeros(v.len() + 1);
    let mut g = vec![0.0; v.len()];
    element_jumps(v, &mut g);
    fill_se(&g, spacings, &mut band, 1.0);
    Ok(band)
}

fn fill_ae(g: &[f64], band: &mut ColumnBand, scale: f64) {
    let ne = g.len();
    let c = scale / 4.0;
    for j in 0..=ne {
        let left = if j >= 1 { g[j - 1] } else { 0.0 };
        let right = if j < ne { g[j] } else { 0.0 };
        band.d2[j] = if j >= 2 { c * left } else { 0.0 };
        band.d1[j] = if j >= 1 { c * (left + right) } else { 0.0 };
        band.d0[j] = if j < ne { c * right } else { 0.0 };
    }
}

fn fill_se(g: &[f64], spacings: &[f64], band: &mut ColumnBand, scale: f64) {
    let ne = g.len();
    for j in 0..=ne {
        let left = if j >= 1 {
            scale * g[j - 1] / (2.0 * spacings[j - 1])
        } else {
            0.0
        };
        let right = if j < ne {
            scale * g[j] / (2.0 * spacings[j])
        } else {
            0.0
        };
        band.d2[j] = if j >= 2 { -left } else { 0.0 };
        band.d1[j] = if j >= 1 { left - right } else { 0.0 };
        band.d0[j] = if j < ne { right } else { 0.0 };
    }
}

/// Reusable workspace for the sensitivity forcing block.
#[derive(Debug, Clone)]
pub struct JBlockBuilder {
    spacings: Vec<f64>,
    coef_s: f64,
    coef_a: f64,
    jumps: Vec<f64>,
}

impl JBlockBuilder {
    pub fn new(mesh: &Mesh, params: &FirnParams, r_alpha: f64) -> Self {
        let f = params.open_pore_fraction;
        let zf = params.depth;
        Self {
            spacings: mesh.spacings().to_vec(),
            coef_s: r_alpha / (2.0 * zf * zf * f),
            coef_a: -r_alpha * params.gravity_factor / (2.0 * zf * f),
            jumps: vec![0.0; mesh.interior_len()],
        }
    }

    /// Overwrites `out` with the forcing columns for `v`.
    pub fn build(&mut self, v: &[f64], out: &mut ColumnBand) {
        assert_eq!(v.len(), self.jumps.len(), "forcing vector length");
        element_jumps(v, &mut self.jumps);
        let ne = self.jumps.len();
        let g = &self.jumps;
        let h = &self.spacings;
        let (cs, ca) = (self.coef_s, self.coef_a / 4.0);
        for j in 0..=ne {
            let (ls, la) = if j >= 1 {
                (cs * g[j - 1] / (2.0 * h[j - 1]), ca * g[j - 1])
            } else {
                (0.0, 0.0)
            };
            let (rs, ra) = if j < ne {
                (cs * g[j] / (2.0 * h[j]), ca * g[j])
            } else {
                (0.0, 0.0)
            };
            out.d2[j] = if j >= 2 { -ls + la } else { 0.0 };
            out.d1[j] = if j >= 1 { ls - rs + la + ra } else { 0.0 };
            out.d0[j] = if j < ne { rs + ra } else { 0.0 };
        }
    }
}

/// `r/(2 z_F^2 f) S(e_j) v - r M_alpha/(2 z_F f) A(e_j) v` for every node `j`.
pub fn structured_j_block(
    v: &[f64],
    mesh: &Mesh,
    params: &FirnParams,
    r_alpha: f64,
) -> Result<ColumnBand> {
    if v.len() != mesh.interior_len() {
        return Err(FirnError::DimensionMismatch {
            expected: mesh.interior_len(),
            actual: v.len(),
            context: "forcing vector vs interior nodes",
        });
    }
    let mut out = ColumnBand::zeros(mesh.len());
    JBlockBuilder::new(mesh, params, r_alpha).build(v, &mut out);
    Ok(out)
}
