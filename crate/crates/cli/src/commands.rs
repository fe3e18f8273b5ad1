use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use firn::data::{
    add_noise, default_params, generate_data, read_dataset, resample_linear, write_dataset,
    DatasetMeta, DEFAULT_GAS_RATIOS, GENERATION_CELLS,
};
use firn::experiments::{build_mesh, gradient_check, timed_run, ConvergenceStudy, DtRule};
use firn::forward::{check_dt_admissible, is_oscillating, GasSystem};
use firn::objective::{EpsRule, GradientBackend};
use firn::optimize::{postprocess_profile, Constraint, Method};
use firn::{
    ncg_minimize, projected_minimize, FirnParams, InverseData, InverseProblem, MeshKind,
    OptimizerConfig, TestCase,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{
    Command, DatasetArgs, EvalPoint, ForwardArgs, GenerateArgs, GradArg, GradcheckArgs, InvertArgs,
    ModelArgs, StartArg, TablesArgs,
};
use crate::error::{CliError, CliResult};
use crate::output::{
    f, prepare_dir, render_table, write_csv, write_json, write_text, LinePlot, Series,
};

pub fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Forward(a) => forward(&a),
        Command::Tables(a) => tables(&a),
        Command::Gradcheck(a) => gradcheck(&a),
        Command::Generate(a) => generate(&a),
        Command::Invert(a) => invert(&a),
    }
}

fn params_from(model: &ModelArgs, zf: f64, te: f64) -> CliResult<FirnParams> {
    let mut p = default_params(model.zf.unwrap_or(zf), model.te.unwrap_or(te));
    p.c1_mode = model.c1_mode.into();
    p.validate()?;
    Ok(p)
}

fn announce(path: &Path) {
    println!("wrote {}", path.display());
}

#[derive(Serialize)]
struct ForwardSummary {
    case: TestCase,
    h: String,
    mesh: MeshKind,
    nodes: usize,
    dt: f64,
    steps: usize,
    runtime_s: f64,
    oscillating: bool,
    dt_diagnostic: String,
    params: FirnParams,
}

fn forward(a: &ForwardArgs) -> CliResult<()> {
    let params = params_from(&a.model, 1.0, 150.0)?;
    let mesh = build_mesh(a.mesh.into(), a.h.cells)?;
    let grid = DtRule::from(a.dt).grid(a.h.cells);
    let d = a.case.profile(&mesh);
    let gas = GasSystem::new(&mesh, &grid, &params, &d)?;
    let diagnostic = check_dt_admissible(gas.system());
    if let Some(w) = &diagnostic.warning {
        eprintln!("warning: {w}");
    }
    prepare_dir(&a.output.out)?;

    let start = Instant::now();
    let end = if a.trace {
        let path = a.output.out.join("trace.csv");
        let file = std::fs::File::create(&path).map_err(CliError::output)?;
        let mut w = std::io::BufWriter::new(file);
        let mut io_err = writeln!(w, "t,z,rho").err();
        let mut emit = |t: f64, values: &mut dyn Iterator<Item = (f64, f64)>| {
            for (z, v) in values {
                if let Err(e) = writeln!(w, "{},{},{}", f(t), f(z), f(v)) {
                    io_err.get_or_insert(e);
                }
            }
        };
        let nodes = mesh.nodes();
        let times: Vec<f64> = grid.times().collect();
        emit(0.0, &mut nodes.iter().map(|&z| (z, 0.0)));
        let interior = gas.march(|i, s| {
            let boundary = std::iter::once((nodes[0], gas.rho()[i]));
            emit(
                times[i],
                &mut boundary.chain(nodes[1..].iter().copied().zip(s.iter().copied())),
            );
        })?;
        if let Some(e) = io_err {
            return Err(CliError::output(e));
        }
        w.flush().map_err(CliError::output)?;
        announce(&path);
        std::iter::once(*gas.rho().last().expect("at least two levels"))
            .chain(interior)
            .collect()
    } else {
        gas.solve_end()?
    };
    let runtime_s = start.elapsed().as_secs_f64();

    let rows = mesh
        .nodes()
        .iter()
        .zip(&end)
        .map(|(z, v)| vec![f(*z), f(*v)]);
    announce(&write_csv(
        &a.output.out.join("solution.csv"),
        &["z", "rho"],
        rows,
    )?);
    let summary = ForwardSummary {
        case: a.case,
        h: a.h.to_string(),
        mesh: a.mesh.into(),
        nodes: mesh.len(),
        dt: grid.dt(),
        steps: grid.intervals(),
        runtime_s,
        oscillating: is_oscillating(&end),
        dt_diagnostic: diagnostic.summary(),
        params: params.clone(),
    };
    announce(&write_json(&a.output.out.join("forward.json"), &summary)?);
    if a.output.svg {
        let plot = LinePlot {
            title: format!("{} at t = T_e, z_F = {}, h = {}", a.case, params.depth, a.h),
            x_label: "rescaled depth z".into(),
            y_label: "concentration".into(),
            series: vec![Series {
                label: a.case.to_string(),
                points: mesh
                    .nodes()
                    .iter()
                    .copied()
                    .zip(end.iter().copied())
                    .collect(),
                color: "#1f77b4",
                dashed: false,
            }],
        };
        announce(&write_text(
            &a.output.out.join("solution.svg"),
            &plot.render(),
        )?);
    }
    println!(
        "{}: {} nodes, {} steps, {:.3} s, surface {:.6}, bottom {:.6e}{}",
        a.case,
        mesh.len(),
        grid.intervals(),
        runtime_s,
        end[0],
        end[end.len() - 1],
        if summary.oscillating {
            ", oscillating"
        } else {
            ""
        }
    );
    Ok(())
}

const UNIFORM_CELLS: [usize; 5] = [16, 32, 64, 128, 256];
const ADAPTIVE_CELLS: [usize; 5] = [4, 8, 16, 32, 64];

fn tables(a: &TablesArgs) -> CliResult<()> {
    prepare_dir(&a.output.out)?;
    let mut combos = Vec::new();
    for &case in &a.case {
        for &zf in &a.zf {
            let mut p = default_params(zf, a.te);
            p.c1_mode = a.c1_mode.into();
            p.validate()?;
            combos.push((case, p));
        }
    }
    let studies = combos
        .par_iter()
        .map(|(case, p)| {
            ConvergenceStudy::new(*case, p.clone())
                .run()
                .map(|rows| (*case, p, rows))
        })
        .collect::<firn::Result<Vec<_>>>()?;

    let header = [
        "case",
        "zf",
        "te",
        "c1_mode",
        "h",
        "nodes",
        "linf_abs",
        "linf_rel",
        "l2_abs",
        "l2_rel",
        "runtime_s",
    ];
    let mut csv_rows = Vec::new();
    let mut text = String::new();
    for (case, p, rows) in &studies {
        let mut shown = Vec::new();
        for r in rows {
            csv_rows.push(vec![
                case.to_string(),
                f(p.depth),
                f(p.end_time),
                format!("{:?}", p.c1_mode).to_lowercase(),
                format!("1/{}", r.cells),
                r.nodes.to_string(),
                f(r.errors.linf_abs),
                f(r.errors.linf_rel),
                f(r.errors.l2_abs),
                f(r.errors.l2_rel),
                f(r.runtime_s),
            ]);
            shown.push(vec![
                format!("1/{}", r.cells),
                format!("{:.8e}", r.errors.linf_abs),
                format!("{:.8e}", r.errors.linf_rel),
                format!("{:.8e}", r.errors.l2_abs),
                format!("{:.8e}", r.errors.l2_rel),
            ]);
        }
        text.push_str(&format!(
            "{case}, z_F = {}, T_e = {} (reference h = 1/256, dt = h^2)\n",
            p.depth, p.end_time
        ));
        text.push_str(&render_table(
            &["h", "Linf abs", "Linf rel", "L2 abs", "L2 rel"],
            &shown,
        ));
        text.push('\n');
    }
    announce(&write_csv(
        &a.output.out.join("errors.csv"),
        &header,
        csv_rows,
    )?);

    let mut runtime_rows = Vec::new();
    let mut runtime_text = Vec::new();
    for (case, p) in &combos {
        for (kind, cells) in [
            (MeshKind::Uniform, UNIFORM_CELLS),
            (MeshKind::Adaptive, ADAPTIVE_CELLS),
        ] {
            for c in cells {
                let runs = [DtRule::H, DtRule::H2]
                    .map(|dt| timed_run(*case, p, kind, c, dt).map(|r| (dt, r)));
                for run in runs {
                    let (dt, r) = run?;
                    let dt_name = match dt {
                        DtRule::H => "h",
                        DtRule::H2 => "h2",
                    };
                    let kind_name = match kind {
                        MeshKind::Uniform => "uniform",
                        MeshKind::Adaptive => "adaptive",
                    };
                    runtime_rows.push(vec![
                        case.to_string(),
                        f(p.depth),
                        f(p.end_time),
                        kind_name.into(),
                        dt_name.into(),
                        format!("1/{c}"),
                        r.nodes.to_string(),
                        r.steps.to_string(),
                        f(r.runtime_s),
                        f(r.runtime_per_step_s),
                    ]);
                    runtime_text.push(vec![
                        case.to_string(),
                        p.depth.to_string(),
                        kind_name.into(),
                        dt_name.into(),
                        format!("1/{c} ({})", r.nodes),
                        r.steps.to_string(),
                        format!("{:.3e}", r.runtime_s),
                        format!("{:.3e}", r.runtime_per_step_s),
                    ]);
                }
            }
        }
    }
    announce(&write_csv(
        &a.output.out.join("runtime.csv"),
        &[
            "case",
            "zf",
            "te",
            "mesh",
            "dt",
            "h",
            "nodes",
            "steps",
            "runtime_s",
            "runtime_per_step_s",
        ],
        runtime_rows,
    )?);
    text.push_str("Runtimes\n");
    text.push_str(&render_table(
        &[
            "case",
            "z_F",
            "mesh",
            "dt",
            "h (nodes)",
            "steps",
            "runtime s",
            "per step s",
        ],
        &runtime_text,
    ));
    announce(&write_text(&a.output.out.join("tables.txt"), &text)?);
    print!("{text}");
    Ok(())
}

struct Dataset {
    data: InverseData,
    truth: Vec<f64>,
    case: TestCase,
}

fn load_dataset(a: &DatasetArgs) -> CliResult<Dataset> {
    let (source, case) = match &a.data {
        Some(path) => {
            let (mut data, meta) = read_dataset(path).map_err(|e| {
                CliError::Config(format!("cannot read dataset {}: {e}", path.display()))
            })?;
            for (flag, value, stored) in [
                ("--zf", a.model.zf, data.params.depth),
                ("--te", a.model.te, data.params.end_time),
            ] {
                if value.is_some_and(|v| v != stored) {
                    return Err(CliError::Config(format!(
                        "{flag} conflicts with the dataset, which was generated with {stored}"
                    )));
                }
            }
            data.params.c1_mode = a.model.c1_mode.into();
            (data, meta.case.unwrap_or(a.case))
        }
        None => {
            let mut p = params_from(&a.model, 5.0, 150.0)?;
            p.gas_ratios = DEFAULT_GAS_RATIOS.to_vec();
            (generate_data(a.case, &p, GENERATION_CELLS)?, a.case)
        }
    };
    let mesh = build_mesh(a.mesh.into(), a.h.cells)?;
    let mut data = resample_linear(&source, &mesh)?;
    if let Some(dt) = a.dt {
        data = data.with_grid(DtRule::from(dt).grid(a.h.cells));
    }
    let truth = case.profile(&data.mesh).into_inner();
    Ok(Dataset { data, truth, case })
}

#[derive(Serialize)]
struct GradcheckReport {
    case: TestCase,
    h: String,
    nodes: usize,
    dt: f64,
    eps: f64,
    at: Vec<f64>,
    max_componentwise: f64,
    max_scaled: f64,
    speedup: f64,
    block_time_s: f64,
    fd_time_s: f64,
    gradient: Vec<f64>,
    finite_difference: Vec<f64>,
    passed: bool,
}

fn gradcheck(a: &GradcheckArgs) -> CliResult<()> {
    let ds = load_dataset(&a.dataset)?;
    if a.eps.is_nan() || a.eps <= 0.0 {
        return Err(CliError::Config("--eps must be positive".into()));
    }
    let n = ds.data.dim();
    let d = match a.at {
        EvalPoint::Zero => vec![0.0; n],
        EvalPoint::Truth => ds.truth.clone(),
        EvalPoint::Constant(c) => vec![c; n],
    };
    let check = gradient_check(&d, &ds.data, EpsRule::Relative(a.eps), a.corrupt_gradient)?;
    let passed = check.max_componentwise <= a.threshold;
    prepare_dir(&a.output.out)?;
    let report = GradcheckReport {
        case: ds.case,
        h: a.dataset.h.to_string(),
        nodes: n,
        dt: ds.data.grid.dt(),
        eps: a.eps,
        at: d,
        max_componentwise: check.max_componentwise,
        max_scaled: check.max_scaled,
        speedup: check.speedup,
        block_time_s: check.block_time_s,
        fd_time_s: check.fd_time_s,
        gradient: check.gradient,
        finite_difference: check.finite_difference,
        passed,
    };
    announce(&write_json(&a.output.out.join("gradcheck.json"), &report)?);
    println!(
        "max component-wise discrepancy {:.3e} (threshold {:.1e}), scaled {:.3e}; block gradient {:.2e} s, finite differences {:.2e} s, speedup {:.1}x",
        report.max_componentwise, a.threshold, report.max_scaled, report.block_time_s, report.fd_time_s, report.speedup
    );
    if passed {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!(
            "gradient discrepancy {:.3e} exceeds {:.1e}",
            report.max_componentwise, a.threshold
        )))
    }
}

fn generate(a: &GenerateArgs) -> CliResult<()> {
    let mut p = params_from(&a.model, 5.0, 150.0)?;
    if a.ratios.is_empty() || a.ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(CliError::Config(
            "--ratios must be nonnegative numbers".into(),
        ));
    }
    if a.noise.is_nan() || a.noise < 0.0 {
        return Err(CliError::Config("--noise must be nonnegative".into()));
    }
    p.gas_ratios = a.ratios.clone();
    let clean = generate_data(a.case, &p, a.h.cells)?;
    let data = add_noise(&clean, a.noise, a.output.seed)?;
    let meta = DatasetMeta {
        case: Some(a.case),
        generation_cells: a.h.cells,
        dt: data.grid.dt(),
        depth: p.depth,
        end_time: p.end_time,
        noise_sigma: a.noise,
        seed: (a.noise > 0.0).then_some(a.output.seed),
        params: p,
    };
    prepare_dir(&a.output.out)?;
    let path = a.output.out.join("data.csv");
    write_dataset(&path, &data, &meta)?;
    announce(&path);
    announce(&path.with_extension("json"));
    Ok(())
}

fn invert(a: &InvertArgs) -> CliResult<()> {
    let ds = load_dataset(&a.dataset)?;
    let backend = match a.grad {
        GradArg::Block => GradientBackend::Block,
        GradArg::Fd => GradientBackend::FiniteDifference {
            eps: EpsRule::default(),
        },
    };
    let method: Method = a.method.into();
    let base = match method {
        Method::Steepest => OptimizerConfig::steepest(),
        Method::Ncg => OptimizerConfig::default(),
    };
    let cfg = OptimizerConfig {
        method,
        beta: a.beta.into(),
        constraints: a.constraints.into(),
        tol_grad: a.tol.unwrap_or(base.tol_grad),
        max_iters: a.max_iters,
        ..base
    };
    if cfg.tol_grad.is_nan() || cfg.tol_grad <= 0.0 {
        return Err(CliError::Config("--tol must be positive".into()));
    }
    let x0 = match a.d0 {
        StartArg::Zero => vec![0.0; ds.data.dim()],
        StartArg::Truth => ds.truth.clone(),
    };
    let nodes = ds.data.mesh.nodes().to_vec();
    let problem = InverseProblem::new(ds.data).with_backend(backend);
    let report = if cfg.constraints == Constraint::None {
        ncg_minimize(&problem, &x0, &cfg)?
    } else {
        projected_minimize(&problem, &x0, &cfg)?
    }
    .with_truth(&ds.truth);
    let smoothed = postprocess_profile(&report.d_final, &nodes, a.postprocess.0)?;

    prepare_dir(&a.output.out)?;
    announce(&write_json(&a.output.out.join("report.json"), &report)?);
    let rows = (0..nodes.len()).map(|k| {
        vec![
            f(nodes[k]),
            f(report.d_final[k]),
            f(smoothed[k]),
            f(ds.truth[k]),
        ]
    });
    announce(&write_csv(
        &a.output.out.join("profile.csv"),
        &["z", "d", "d_postprocessed", "d_true"],
        rows,
    )?);
    if a.output.svg {
        let mut series = vec![
            Series {
                label: "recovered".into(),
                points: nodes
                    .iter()
                    .copied()
                    .zip(report.d_final.iter().copied())
                    .collect(),
                color: "#d62728",
                dashed: false,
            },
            Series {
                label: "true".into(),
                points: nodes
                    .iter()
                    .copied()
                    .zip(ds.truth.iter().copied())
                    .collect(),
                color: "black",
                dashed: true,
            },
        ];
        if smoothed != report.d_final {
            series.push(Series {
                label: "postprocessed".into(),
                points: nodes
                    .iter()
                    .copied()
                    .zip(smoothed.iter().copied())
                    .collect(),
                color: "#2ca02c",
                dashed: false,
            });
        }
        let plot = LinePlot {
            title: format!(
                "{} recovered with {:?}, h = {}",
                ds.case, method, a.dataset.h
            ),
            x_label: "rescaled depth z".into(),
            y_label: "diffusivity".into(),
            series,
        };
        announce(&write_text(
            &a.output.out.join("profile.svg"),
            &plot.render(),
        )?);
    }
    println!(
        "{:?} after {} iterations ({} evaluations, {:.2} s): V = {:.6e}, relative L2 error {:.4e}",
        report.termination,
        report.iterations,
        report.evaluations,
        report.wall_time_s,
        report.value,
        report.l2_relative_error.unwrap_or(f64::NAN)
    );
    Ok(())
}
