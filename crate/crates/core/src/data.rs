//! Reference diffusion profiles, default constants and synthetic end-time data.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::assembly::{Atmosphere, C1Mode, DiffusionProfile, FirnParams, MassStencil};
use crate::error::{FirnError, Result};
use crate::forward::forward_end_state;
use crate::mesh::{Mesh, TimeGrid};
use crate::objective::{GasData, InverseData};

pub const OPEN_PORE_FRACTION: f64 = 0.2;
pub const LOSS_RATE: f64 = 10.03;
pub const ADVECTION_SPEED: f64 = 685.0;
pub const GRAVITY_FACTOR: f64 = 1.8134e-4;

/// Gas ratios of the three-gas inversion experiments.
pub const DEFAULT_GAS_RATIOS: [f64; 3] = [0.5, 1.0, 1.5];

/// Cells of the data-generation mesh.
pub const GENERATION_CELLS: usize = 65;

/// Default constants for depth `z_F` and end time `T_e`, one gas with ratio 1.
pub fn default_params(depth: f64, end_time: f64) -> FirnParams {
    FirnParams {
        open_pore_fraction: OPEN_PORE_FRACTION,
        loss_rate: LOSS_RATE,
        advection_speed: ADVECTION_SPEED,
        gravity_factor: GRAVITY_FACTOR,
        depth,
        end_time,
        gas_ratios: vec![1.0],
        atmosphere: Atmosphere::default(),
        c1_mode: C1Mode::default(),
        mass_stencil: MassStencil::default(),
    }
}

/// Reference CO2 diffusion profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestCase {
    /// `200 - 199.98 z`.
    Case1,
    /// `200 (1 - z)^0.25`.
    Case2a,
    /// `200 (1 - z)^0.5`.
    Case2b,
    /// `200 (1 - z)^0.75`.
    Case2c,
    /// `200 (1 - z)`.
    Case2d,
}

impl TestCase {
    pub const ALL: [TestCase; 5] = [
        TestCase::Case1,
        TestCase::Case2a,
        TestCase::Case2b,
        TestCase::Case2c,
        TestCase::Case2d,
    ];

    pub fn d_true(&self, z: f64) -> f64 {
        let p = match self {
            TestCase::Case1 => return 200.0 - 199.98 * z,
            TestCase::Case2a => 0.25,
            TestCase::Case2b => 0.5,
            TestCase::Case2c => 0.75,
            TestCase::Case2d => 1.0,
        };
        200.0 * (1.0 - z).max(0.0).powf(p)
    }

    pub fn profile(&self, mesh: &Mesh) -> DiffusionProfile {
        DiffusionProfile::from_fn(mesh, |z| self.d_true(z)).expect("closed forms are finite")
    }

    pub fn id(&self) -> &'static str {
        match self {
            TestCase::Case1 => "case1",
            TestCase::Case2a => "case2a",
            TestCase::Case2b => "case2b",
            TestCase::Case2c => "case2c",
            TestCase::Case2d => "case2d",
        }
    }
}

impl fmt::Display for TestCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for TestCase {
    type Err = FirnError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        let key = key.strip_prefix("case").unwrap_or(&key);
        match key {
            "1" => Ok(TestCase::Case1),
            "2a" => Ok(TestCase::Case2a),
            "2b" => Ok(TestCase::Case2b),
            "2c" => Ok(TestCase::Case2c),
            "2d" => Ok(TestCase::Case2d),
            _ => Err(FirnError::InvalidParameter(format!(
                "unknown test case '{s}'"
            ))),
        }
    }
}

/// Runs the direct problem for every gas ratio in `params` and keeps the end-time columns.
pub fn generate_data_on(
    case: TestCase,
    params: &FirnParams,
    mesh: &Mesh,
    grid: &TimeGrid,
) -> Result<InverseData> {
    let d = case.profile(mesh);
    let gases = params
        .gas_ratios
        .iter()
        .map(|&r| {
            let end = forward_end_state(mesh, grid, params, &d.scaled(r))?;
            Ok(GasData {
                ratio: r,
                g: end.values,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    InverseData::new(mesh.clone(), *grid, params.clone(), gases)
}

/// Data on a uniform mesh of `cells` cells with time step `1/cells`.
pub fn generate_data(case: TestCase, params: &FirnParams, cells: usize) -> Result<InverseData> {
    let mesh = Mesh::uniform_cells(cells)?;
    let grid = TimeGrid::with_intervals(cells);
    generate_data_on(case, params, &mesh, &grid)
}

/// Piecewise-linear interpolation of `values` given at `from` onto `to`.
pub fn interpolate_linear(from: &[f64], values: &[f64], to: &[f64]) -> Vec<f64> {
    to.iter()
        .map(|&z| {
            let k = from.partition_point(|&x| x <= z);
            if k == 0 {
                return values[0];
            }
            if k >= from.len() {
                return values[from.len() - 1];
            }
            let (z0, z1) = (from[k - 1], from[k]);
            if z == z0 {
                return values[k - 1];
            }
            let w = (z - z0) / (z1 - z0);
            values[k - 1] + w * (values[k] - values[k - 1])
        })
        .collect()
}

/// Resamples every gas onto `target`, keeping the time grid and constants.
pub fn resample_linear(data: &InverseData, target: &Mesh) -> Result<InverseData> {
    let gases = data
        .gases
        .iter()
        .map(|g| GasData {
            ratio: g.ratio,
            g: interpolate_linear(data.mesh.nodes(), &g.g, target.nodes()),
        })
        .collect();
    InverseData::new(target.clone(), data.grid, data.params.clone(), gases)
}

/// Adds seeded Gaussian noise of standard deviation `sigma` to every sample.
pub fn add_noise(data: &InverseData, sigma: f64, seed: u64) -> Result<InverseData> {
    if sigma == 0.0 {
        return Ok(data.clone());
    }
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| FirnError::InvalidParameter(format!("noise level: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = data.clone();
    for gas in &mut out.gases {
        for v in &mut gas.g {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(out)
}

/// Metadata written next to a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub case: Option<TestCase>,
    pub generation_cells: usize,
    pub dt: f64,
    pub depth: f64,
    pub end_time: f64,
    pub noise_sigma: f64,
    pub seed: Option<u64>,
    pub params: FirnParams,
}

/// Writes `z,g_alpha1,...` rows to `csv_path` and the metadata to `csv_path` with a `.json` extension.
pub fn write_dataset(csv_path: &Path, data: &InverseData, meta: &DatasetMeta) -> Result<()> {
    let mut w = csv::Writer::from_path(csv_path)?;
    let mut header = vec!["z".to_string()];
    header.extend((1..=data.gases.len()).map(|k| format!("g_alpha{k}")));
    w.write_record(&header)?;
    for (k, z) in data.mesh.nodes().iter().enumerate() {
        let mut row = vec![format_float(*z)];
        row.extend(data.gases.iter().map(|g| format_float(g.g[k])));
        w.write_record(&row)?;
    }
    w.flush()?;
    let sidecar = csv_path.with_extension("json");
    std::fs::write(sidecar, serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

/// Reads a dataset written by [`write_dataset`].
pub fn read_dataset(csv_path: &Path) -> Result<(InverseData, DatasetMeta)> {
    let meta: DatasetMeta =
        serde_json::from_str(&std::fs::read_to_string(csv_path.with_extension("json"))?)?;
    let mut r = csv::Reader::from_path(csv_path)?;
    let cols = r.headers()?.len();
    if cols < 2 {
        return Err(FirnError::InvalidParameter(
            "dataset needs a z column and at least one gas".into(),
        ));
    }
    let mut z = Vec::new();
    let mut g = vec![Vec::new(); cols - 1];
    for rec in r.records() {
        let rec = rec?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| FirnError::InvalidParameter(format!("bad number '{s}': {e}")))
        };
        z.push(parse(&rec[0])?);
        for (k, col) in g.iter_mut().enumerate() {
            col.push(parse(&rec[k + 1])?);
        }
    }
    if meta.params.gas_ratios.len() != g.len() {
        return Err(FirnError::DimensionMismatch {
            expected: meta.params.gas_ratios.len(),
            actual: g.len(),
            context: "gas columns vs gas ratios in metadata",
        });
    }
    let mesh = Mesh::from_nodes(z)?;
    let grid = TimeGrid::new(meta.dt)?;
    let gases = meta
        .params
        .gas_ratios
        .iter()
        .zip(g)
        .map(|(&ratio, g)| GasData { ratio, g })
        .collect();
    Ok((
        InverseData::new(mesh, grid, meta.params.clone(), gases)?,
        meta,
    ))
}

/// Shortest decimal text that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}
