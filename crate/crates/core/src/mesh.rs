//! Spatial meshes on the rescaled depth interval `[0, 1]` and the uniform
//! time grid on the rescaled time interval `[0, 1]`.
//!
//! Node coordinates are always built from integer numerators over a common
//! denominator so that band boundaries and the last node `z = 1` are exact.

use serde::{Deserialize, Serialize};

use crate::error::{FirnError, Result};

/// Relative tolerance used when checking that a step divides `[0, 1]`.
const DIVIDES_TOL: f64 = 1e-9;

/// Coordinate tolerance used when matching nodes of two meshes.
pub const NODE_MATCH_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshKind {
    Uniform,
    Adaptive,
}

/// A 1-D node set `0 = z_1 < z_2 < ... < z_n = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    nodes: Vec<f64>,
    spacings: Vec<f64>,
    kind: MeshKind,
}

/// Returns `1/h` as an integer when `h` divides the unit interval.
pub fn cells_for_step(h: f64) -> Result<usize> {
    if !(h.is_finite() && h > 0.0 && h <= 1.0) {
        return Err(FirnError::InvalidMesh(format!(
            "step {h} must lie in (0, 1]"
        )));
    }
    let inv = 1.0 / h;
    let cells = inv.round();
    if (inv - cells).abs() > DIVIDES_TOL * inv {
        return Err(FirnError::InvalidMesh(format!(
            "step {h} does not evenly divide [0, 1]"
        )));
    }
    Ok(cells as usize)
}

impl Mesh {
    /// Uniform mesh with spacing `h`; `1/h` must be (numerically) an integer.
    pub fn uniform(h: f64) -> Result<Self> {
        Self::uniform_cells(cells_for_step(h)?)
    }

    /// Uniform mesh with `cells` equal elements (`cells + 1` nodes).
    pub fn uniform_cells(cells: usize) -> Result<Self> {
        if cells == 0 {
            return Err(FirnError::InvalidMesh(
                "mesh needs at least one cell".into(),
            ));
        }
        let numerators: Vec<u64> = (0..=cells as u64).collect();
        Ok(Self::from_numerators(
            &numerators,
            cells as u64,
            MeshKind::Uniform,
        ))
    }

    /// Five-band graded mesh, finest near the surface:
    /// `h/16` on `[0, 1/16]`, `h/8` on `[1/16, 1/8]`, `h/4` on `[1/8, 1/4]`,
    /// `h/2` on `[1/4, 1/2]` and `h` on `[1/2, 1]`.
    pub fn adaptive(h: f64) -> Result<Self> {
        let coarse = cells_for_step(h)?;
        Self::adaptive_cells(coarse)
    }

    /// Adaptive mesh whose coarsest spacing is `1 / coarse_cells`.
    pub fn adaptive_cells(coarse_cells: usize) -> Result<Self> {
        // Every band holds coarse_cells/2 cells except the first, which holds coarse_cells.
        if coarse_cells < 2 || !coarse_cells.is_multiple_of(2) {
            return Err(FirnError::InvalidMesh(format!(
                "adaptive mesh needs an even number of coarse cells, got {coarse_cells}"
            )));
        }
        let c = coarse_cells as u64;
        // Unit = finest spacing h/16; the interval spans 16/h units.
        let denom = 16 * c;
        let bands: [(u64, u64, u64); 5] = [
            (0, denom / 16, 1),
            (denom / 16, denom / 8, 2),
            (denom / 8, denom / 4, 4),
            (denom / 4, denom / 2, 8),
            (denom / 2, denom, 16),
        ];
        let mut numerators = vec![0u64];
        for (start, end, step) in bands {
            let mut k = start + step;
            while k <= end {
                numerators.push(k);
                k += step;
            }
        }
        Ok(Self::from_numerators(
            &numerators,
            denom,
            MeshKind::Adaptive,
        ))
    }

    /// Arbitrary node set; validated for the mesh invariants.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(FirnError::InvalidMesh(
                "mesh needs at least two nodes".into(),
            ));
        }
        if nodes[0] != 0.0 || nodes[nodes.len() - 1] != 1.0 {
            return Err(FirnError::InvalidMesh(
                "mesh must start at 0 and end at 1".into(),
            ));
        }
        if nodes
            .windows(2)
            .any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
        {
            return Err(FirnError::InvalidMesh(
                "nodes must be strictly increasing".into(),
            ));
        }
        let spacings: Vec<f64> = nodes.windows(2).map(|w| w[1] - w[0]).collect();
        let h0 = spacings[0];
        let kind = if spacings.iter().all(|&s| (s - h0).abs() <= 1e-12 * h0) {
            MeshKind::Uniform
        } else {
            MeshKind::Adaptive
        };
        Ok(Self {
            nodes,
            spacings,
            kind,
        })
    }

    fn from_numerators(numerators: &[u64], denom: u64, kind: MeshKind) -> Self {
        let d = denom as f64;
        let nodes: Vec<f64> = numerators.iter().map(|&k| k as f64 / d).collect();
        let spacings = numerators
            .windows(2)
            .map(|w| (w[1] - w[0]) as f64 / d)
            .collect();
        Self {
            nodes,
            spacings,
            kind,
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn spacings(&self) -> &[f64] {
        &self.spacings
    }

    pub fn kind(&self) -> MeshKind {
        self.kind
    }

    /// Number of nodes `n`.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of unknowns `n - 1` (the surface node carries the Dirichlet value).
    pub fn interior_len(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Coordinate of the second node, `z_2`.
    pub fn first_spacing(&self) -> f64 {
        self.spacings[0]
    }

    /// The common spacing when the mesh is uniform.
    pub fn uniform_spacing(&self) -> Option<f64> {
        match self.kind {
            MeshKind::Uniform => Some(self.spacings[0]),
            MeshKind::Adaptive => None,
        }
    }

    /// Index pairs `(i, j)` with `self.nodes[i] == other.nodes[j]`.
    pub fn common_nodes(&self, other: &Mesh) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.nodes.len() && j < other.nodes.len() {
            let (a, b) = (self.nodes[i], other.nodes[j]);
            if (a - b).abs() <= NODE_MATCH_TOL {
                pairs.push((i, j));
                i += 1;
                j += 1;
            } else if a < b {
                i += 1;
            } else {
                j += 1;
            }
        }
        pairs
    }

    /// Index of the node at coordinate `z`, if any.
    pub fn find_node(&self, z: f64) -> Option<usize> {
        let idx = self.nodes.partition_point(|&x| x < z - NODE_MATCH_TOL);
        (idx < self.nodes.len() && (self.nodes[idx] - z).abs() <= NODE_MATCH_TOL).then_some(idx)
    }
}

/// Uniform grid `t_i = i * dt`, `i = 0..m-1`, with `t_{m-1} = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    dt: f64,
    intervals: usize,
}

impl TimeGrid {
    pub fn new(dt: f64) -> Result<Self> {
        let intervals = cells_for_step(dt)
            .map_err(|_| FirnError::InvalidTimeGrid(format!("step {dt} does not divide [0, 1]")))?;
        Ok(Self::with_intervals(intervals))
    }

    /// Grid with `intervals` equal steps.
    pub fn with_intervals(intervals: usize) -> Self {
        assert!(intervals > 0, "time grid needs at least one step");
        Self {
            dt: 1.0 / intervals as f64,
            intervals,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of time levels `m = 1/dt + 1`.
    pub fn steps(&self) -> usize {
        self.intervals + 1
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    /// `t_i`, exact at both ends.
    pub fn time(&self, i: usize) -> f64 {
        i as f64 / self.intervals as f64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.intervals).map(|i| self.time(i))
    }
}
