use std::ffi::OsString;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use firn::experiments::DtRule;
use firn::optimize::{BetaRule, Constraint, Method, Postprocess};
use firn::{C1Mode, MeshKind, TestCase};

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "firn",
    version,
    about = "Firn gas transport: forward runs, gradient checks and profile inversion"
)]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the direct problem and write the end-time concentration.
    Forward(ForwardArgs),
    /// Mesh-refinement error tables and runtime tables.
    Tables(TablesArgs),
    /// Compare the block gradient with central differences.
    Gradcheck(GradcheckArgs),
    /// Generate a synthetic dataset.
    Generate(GenerateArgs),
    /// Recover the diffusivity profile from a dataset.
    Invert(InvertArgs),
}

/// Mesh parameter written as an exact fraction such as `1/128`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeshStep {
    pub cells: usize,
}

impl FromStr for MeshStep {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let bad = || format!("'{s}' is not of the form 1/N with N a positive integer");
        let (num, den) = match s.split_once('/') {
            Some((p, q)) => (
                p.trim().parse::<usize>().map_err(|_| bad())?,
                q.trim().parse::<usize>().map_err(|_| bad())?,
            ),
            None => {
                let h: f64 = s.parse().map_err(|_| bad())?;
                if !(h > 0.0 && h <= 1.0) {
                    return Err(bad());
                }
                let cells = (1.0 / h).round();
                if ((1.0 / h) - cells).abs() > 1e-9 * cells {
                    return Err(bad());
                }
                return Ok(MeshStep {
                    cells: cells as usize,
                });
            }
        };
        if num == 0 || den == 0 || den % num != 0 {
            return Err(bad());
        }
        Ok(MeshStep { cells: den / num })
    }
}

impl std::fmt::Display for MeshStep {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "1/{}", self.cells)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DtArg {
    /// dt = h.
    H,
    /// dt = h^2.
    H2,
}

impl From<DtArg> for DtRule {
    fn from(d: DtArg) -> Self {
        match d {
            DtArg::H => DtRule::H,
            DtArg::H2 => DtRule::H2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MeshArg {
    Uniform,
    Adaptive,
}

impl From<MeshArg> for MeshKind {
    fn from(m: MeshArg) -> Self {
        match m {
            MeshArg::Uniform => MeshKind::Uniform,
            MeshArg::Adaptive => MeshKind::Adaptive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum C1ModeArg {
    Consistent,
    Literal,
}

impl From<C1ModeArg> for C1Mode {
    fn from(m: C1ModeArg) -> Self {
        match m {
            C1ModeArg::Consistent => C1Mode::Consistent,
            C1ModeArg::Literal => C1Mode::Literal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    /// Steepest descent.
    Sd,
    /// Nonlinear conjugate gradients.
    Ncg,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Sd => Method::Steepest,
            MethodArg::Ncg => Method::Ncg,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BetaArg {
    Hs,
    Fr,
    Pr,
    Hz,
}

impl From<BetaArg> for BetaRule {
    fn from(b: BetaArg) -> Self {
        match b {
            BetaArg::Hs => BetaRule::Hs,
            BetaArg::Fr => BetaRule::Fr,
            BetaArg::Pr => BetaRule::Pr,
            BetaArg::Hz => BetaRule::Hz,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConstraintArg {
    None,
    Nonneg,
    /// Nonnegative and nonincreasing with depth.
    Dec,
}

impl From<ConstraintArg> for Constraint {
    fn from(c: ConstraintArg) -> Self {
        match c {
            ConstraintArg::None => Constraint::None,
            ConstraintArg::Nonneg => Constraint::Nonneg,
            ConstraintArg::Dec => Constraint::NonnegDecreasing,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GradArg {
    Block,
    Fd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StartArg {
    Zero,
    Truth,
}

/// `none`, `clamp` or `polyfit:K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PostprocessArg(pub Postprocess);

impl FromStr for PostprocessArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "none" => Ok(Self(Postprocess::None)),
            "clamp" => Ok(Self(Postprocess::ClampNonneg)),
            other => other
                .strip_prefix("polyfit:")
                .and_then(|k| k.parse().ok())
                .map(|k| Self(Postprocess::Polyfit(k)))
                .ok_or_else(|| format!("'{other}' is not none, clamp or polyfit:K")),
        }
    }
}

/// Point at which the gradient is checked: `zero`, `truth` or a constant value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalPoint {
    Zero,
    Truth,
    Constant(f64),
}

impl FromStr for EvalPoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "zero" => Ok(EvalPoint::Zero),
            "truth" => Ok(EvalPoint::Truth),
            v => v
                .parse()
                .map(EvalPoint::Constant)
                .map_err(|_| format!("'{v}' is not zero, truth or a number")),
        }
    }
}

fn parse_case(s: &str) -> Result<TestCase, String> {
    s.parse().map_err(|e: firn::FirnError| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Firn depth z_F in metres.
    #[arg(long)]
    pub zf: Option<f64>,
    /// End time T_e in years.
    #[arg(long)]
    pub te: Option<f64>,
    /// Form of the surface boundary constant.
    #[arg(long, value_enum, default_value_t = C1ModeArg::Consistent)]
    pub c1_mode: C1ModeArg,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output directory.
    #[arg(long, default_value = "firn-out")]
    pub out: PathBuf,
    /// Also write SVG plots.
    #[arg(long)]
    pub svg: bool,
    /// Seed for anything random.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// File of `key = value` lines using the flag names; flags given on the command line win.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ForwardArgs {
    /// Test case: 1, 2a, 2b, 2c or 2d.
    #[arg(long, value_parser = parse_case)]
    pub case: TestCase,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Mesh parameter, e.g. 1/64.
    #[arg(long, default_value = "1/64")]
    pub h: MeshStep,
    #[arg(long, value_enum, default_value_t = DtArg::H)]
    pub dt: DtArg,
    #[arg(long, value_enum, default_value_t = MeshArg::Uniform)]
    pub mesh: MeshArg,
    /// Also write the full space-time solution.
    #[arg(long)]
    pub trace: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TablesArgs {
    /// Test cases, comma separated.
    #[arg(long, value_parser = parse_case, value_delimiter = ',', default_value = "1,2b")]
    pub case: Vec<TestCase>,
    /// Depths z_F, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,50,100,150")]
    pub zf: Vec<f64>,
    #[arg(long, default_value_t = 150.0)]
    pub te: f64,
    #[arg(long, value_enum, default_value_t = C1ModeArg::Consistent)]
    pub c1_mode: C1ModeArg,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct DatasetArgs {
    /// Test case used to generate data and as the reference profile.
    #[arg(long, value_parser = parse_case, default_value = "2d")]
    pub case: TestCase,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Dataset CSV written by `generate`; generated on the fly when absent.
    #[arg(long, value_name = "CSV")]
    pub data: Option<PathBuf>,
    /// Inversion mesh parameter.
    #[arg(long, default_value = "1/16")]
    pub h: MeshStep,
    /// Time-step rule on the inversion mesh; the dataset's own step is kept when absent.
    #[arg(long, value_enum)]
    pub dt: Option<DtArg>,
    #[arg(long, value_enum, default_value_t = MeshArg::Uniform)]
    pub mesh: MeshArg,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    /// Where to evaluate: zero, truth or a constant.
    #[arg(long, default_value = "zero")]
    pub at: EvalPoint,
    /// Relative finite-difference step.
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
    /// Largest acceptable component-wise discrepancy.
    #[arg(long, default_value_t = 1e-4)]
    pub threshold: f64,
    #[arg(long, hide = true, default_value_t = 0.0)]
    pub corrupt_gradient: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long, value_parser = parse_case, default_value = "2d")]
    pub case: TestCase,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Generation mesh parameter; the time step equals it.
    #[arg(long, default_value = "1/65")]
    pub h: MeshStep,
    /// Gas diffusivity ratios, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,1.5")]
    pub ratios: Vec<f64>,
    /// Standard deviation of added Gaussian noise.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct InvertArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::Ncg)]
    pub method: MethodArg,
    #[arg(long, value_enum, default_value_t = BetaArg::Hz)]
    pub beta: BetaArg,
    #[arg(long, value_enum, default_value_t = ConstraintArg::None)]
    pub constraints: ConstraintArg,
    #[arg(long, value_enum, default_value_t = GradArg::Block)]
    pub grad: GradArg,
    /// Gradient tolerance relative to the initial gradient norm.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    pub max_iters: usize,
    /// Initial profile.
    #[arg(long, value_enum, default_value_t = StartArg::Zero)]
    pub d0: StartArg,
    /// Smoothing of the recovered profile: none, clamp or polyfit:K.
    #[arg(long, default_value = "none")]
    pub postprocess: PostprocessArg,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Splices the contents of a `--config FILE` into the argument list right
/// after the subcommand, so that explicit flags later on take precedence.
pub fn expand_config(args: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let strs: Vec<Option<&str>> = args.iter().map(|a| a.to_str()).collect();
    let mut path = None;
    for (k, a) in strs.iter().enumerate() {
        match a {
            Some("--config") => path = strs.get(k + 1).copied().flatten().map(str::to_owned),
            Some(a) if a.starts_with("--config=") => path = Some(a["--config=".len()..].to_owned()),
            _ => {}
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Config(format!("cannot read config file {path}: {e}")))?;
    let mut extra = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!("{path}:{}: expected key = value", lineno + 1))
        })?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key == "config" {
            return Err(CliError::Config(format!(
                "{path}:{}: config files cannot nest",
                lineno + 1
            )));
        }
        match value {
            "true" => extra.push(OsString::from(format!("--{key}"))),
            "false" => {}
            v => {
                extra.push(OsString::from(format!("--{key}")));
                extra.push(OsString::from(v));
            }
        }
    }
    let sub = strs
        .iter()
        .skip(1)
        .position(|a| a.is_some_and(|a| !a.starts_with('-')))
        .map(|p| p + 1)
        .ok_or_else(|| CliError::Config("--config needs a subcommand".into()))?;
    let mut out = args[..=sub].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[sub + 1..]);
    Ok(out)
}
