//! End-to-end acceptance checks. Prints one line per criterion and exits
//! nonzero if any of them fails.

use std::process::ExitCode;
use std::time::Instant;

use firn::assembly::{
    assemble_a, assemble_k_q_b, assemble_mass, assemble_s, Atmosphere, ColumnBand, JBlockBuilder,
};
use firn::data::{default_params, generate_data, resample_linear, TestCase, DEFAULT_GAS_RATIOS};
use firn::experiments::{gradient_check, timed_run, ConvergenceStudy, DtRule};
use firn::forward::{compare_end_states, forward_end_state, forward_solve, is_oscillating};
use firn::objective::{EpsRule, GasData};
use firn::optimize::{l2_relative_error, Constraint, Method};
use firn::oracles::eig_min_symmetric_part;
use firn::sensitivity::{single_direction_solve, SensitivityScheme};
use firn::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = std::result::Result<String, String>;

/// Name, check and time limit in seconds.
type Criterion = (&'static str, fn() -> Outcome, f64);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: FirnError) -> String {
    e.to_string()
}

/// Reference relative errors against h = 1/256: (z_F, [L-inf rel, L2 rel] for h = 1/16 .. 1/128).
const CASE1_TABLE: [(f64, [[f64; 2]; 4]); 4] = [
    (
        1.0,
        [
            [4.06128811e-2, 4.05599277e-2],
            [1.84383487e-2, 1.85618440e-2],
            [7.79639638e-3, 7.93461018e-3],
            [2.58152757e-3, 2.66015874e-3],
        ],
    ),
    (
        50.0,
        [
            [7.13364341e-1, 7.15890405e-1],
            [1.18943460e-1, 1.18370758e-1],
            [4.32772751e-2, 4.31214297e-2],
            [1.33632000e-2, 1.33231716e-2],
        ],
    ),
    (
        100.0,
        [
            [6.50940351e-1, 7.06231800e-1],
            [7.78525433e-2, 7.78527893e-2],
            [3.61940147e-3, 3.61929213e-3],
            [1.91910503e-3, 1.91900949e-3],
        ],
    ),
    (
        150.0,
        [
            [5.34453174e-1, 6.11540230e-1],
            [1.89839760e-1, 1.90399868e-1],
            [7.98713260e-4, 7.98712987e-4],
            [5.17703968e-5, 5.17705399e-5],
        ],
    ),
];

const CASE2B_TABLE: [(f64, [[f64; 2]; 4]); 4] = [
    (
        1.0,
        [
            [3.99348343e-2, 3.89353916e-2],
            [1.82818228e-2, 1.78432783e-2],
            [7.76166615e-3, 7.57959527e-3],
            [2.57518799e-3, 2.51547961e-3],
        ],
    ),
    (
        50.0,
        [
            [7.08314789e-1, 7.08605819e-1],
            [1.24252658e-1, 1.23651498e-1],
            [4.48872766e-2, 4.47359948e-2],
            [1.38375182e-2, 1.38003108e-2],
        ],
    ),
    (
        100.0,
        [
            [6.49110544e-1, 6.98190073e-1],
            [6.99036637e-2, 6.99013214e-2],
            [4.32587167e-3, 4.32568272e-3],
            [2.11319091e-3, 2.11307403e-3],
        ],
    ),
    (
        150.0,
        [
            [5.33649320e-1, 6.04459704e-1],
            [1.82694037e-1, 1.83095907e-1],
            [8.23105779e-4, 8.23105528e-4],
            [7.87715446e-5, 7.87716930e-5],
        ],
    ),
];

fn matrix_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sizes = [2usize, 4, 8, 16, 32, 64];
    for &c in &sizes {
        let mesh = Mesh::uniform_cells(c).map_err(err)?;
        let m = assemble_mass(&mesh, MassStencil::Consistent);
        ensure(
            m.is_symmetric() && m.to_dense().cholesky().is_some(),
            || format!("M not SPD for {c} cells"),
        )?;
        let (_, q, _) = assemble_k_q_b(&mesh, 685.0);
        for _ in 0..20 {
            let v: Vec<f64> = (0..c).map(|_| rng.random_range(-5.0..5.0)).collect();
            let expected = 685.0 / 2.0 * v[c - 1] * v[c - 1];
            let got = q.quadratic_form(&v);
            ensure((got - expected).abs() <= 1e-10 * expected.max(1.0), || {
                format!("v'Qv = {got}, expected {expected}")
            })?;
        }
    }
    let mut checked = 0;
    for k in 0..100 {
        let c = sizes[k % sizes.len()];
        let mesh = Mesh::uniform_cells(c).map_err(err)?;
        let d: Vec<f64> = (0..=c).map(|_| rng.random_range(0.01..300.0)).collect();
        let p = DiffusionProfile::new(d).map_err(err)?;
        let s = assemble_s(&mesh, &p).map_err(err)?;
        ensure(
            s.is_symmetric() && s.to_dense().cholesky().is_some(),
            || format!("S not SPD, sample {k}"),
        )?;
        let mut dec: Vec<f64> = (0..=c).map(|_| rng.random_range(0.01..10.0)).collect();
        for i in (0..c).rev() {
            dec[i] += dec[i + 1];
        }
        let a = assemble_a(&mesh, &DiffusionProfile::new(dec).map_err(err)?).map_err(err)?;
        let lam = eig_min_symmetric_part(&a.to_dense());
        ensure(lam > 0.0, || {
            format!("A not PD, sample {k}, min eigenvalue {lam:e}")
        })?;
        let scale = rng.random_range(0.0..20.0);
        for (base, scaled) in [
            (
                assemble_a(&mesh, &p).map_err(err)?,
                assemble_a(&mesh, &p.scaled(scale)).map_err(err)?,
            ),
            (s.clone(), assemble_s(&mesh, &p.scaled(scale)).map_err(err)?),
        ] {
            let diff = (scaled.to_dense() - base.to_dense() * scale).abs().max();
            ensure(diff <= 1e-12 * scale.max(1.0) * base.norm_inf(), || {
                format!("homogeneity off by {diff:e}")
            })?;
        }
        checked += 1;
    }
    Ok(format!("{checked} random S and A profiles, n up to 65"))
}

fn norm_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = 0;
    for k in 0..1000 {
        let c = if k % 2 == 0 { 8 } else { 64 };
        let h = 1.0 / c as f64;
        let m = assemble_mass(
            &Mesh::uniform_cells(c).map_err(err)?,
            MassStencil::Consistent,
        );
        let v: Vec<f64> = (0..c).map(|_| rng.random_range(-10.0..10.0)).collect();
        let q = m.quadratic_form(&v);
        let e: f64 = v.iter().map(|x| x * x).sum();
        if !(h / 6.0 * e <= q * (1.0 + 1e-14) && q <= h * e * (1.0 + 1e-14)) {
            violations += 1;
        }
    }
    ensure(violations == 0, || format!("{violations} violations"))?;
    Ok("1000 vectors, 0 violations".into())
}

fn forward_tables() -> Outcome {
    let mut worst = 0.0f64;
    for (case, table) in [
        (TestCase::Case1, CASE1_TABLE),
        (TestCase::Case2b, CASE2B_TABLE),
    ] {
        for (zf, rows) in table {
            let mut best_mode: Option<(f64, C1Mode)> = None;
            let mut problems = Vec::new();
            for mode in [C1Mode::Consistent, C1Mode::Literal] {
                let mut p = default_params(zf, 150.0);
                p.c1_mode = mode;
                let got = ConvergenceStudy::new(case, p).run().map_err(err)?;
                let dev = got
                    .iter()
                    .zip(&rows)
                    .flat_map(|(g, r)| {
                        [g.errors.linf_rel / r[0] - 1.0, g.errors.l2_rel / r[1] - 1.0]
                    })
                    .fold(0.0f64, |a, b| a.max(b.abs()));
                let resolved: Vec<_> = got.iter().filter(|g| zf / (g.cells as f64) < 3.0).collect();
                let decreasing = resolved.windows(2).all(|w| {
                    w[1].errors.linf_rel < w[0].errors.linf_rel
                        && w[1].errors.l2_rel < w[0].errors.l2_rel
                });
                if !decreasing {
                    problems.push(format!("{mode:?} not decreasing"));
                } else if dev > 0.10 {
                    problems.push(format!("{mode:?} off by {:.2}%", 100.0 * dev));
                } else if best_mode.is_none_or(|(d, _)| dev < d) {
                    best_mode = Some((dev, mode));
                }
            }
            let Some((dev, _)) = best_mode else {
                return Err(format!("{case} z_F = {zf}: {}", problems.join(", ")));
            };
            worst = worst.max(dev);
        }
    }
    Ok(format!(
        "32 rows, largest relative deviation from the reference values {worst:.2e}"
    ))
}

fn dt_insensitivity() -> Outcome {
    let p = default_params(150.0, 150.0);
    let mut worst = 0.0f64;
    for c in [16usize, 64, 128, 256] {
        let a = timed_run(TestCase::Case1, &p, MeshKind::Uniform, c, DtRule::H).map_err(err)?;
        let b = timed_run(TestCase::Case1, &p, MeshKind::Uniform, c, DtRule::H2).map_err(err)?;
        let rep = compare_end_states(a.end.as_ref().unwrap(), b.end.as_ref().unwrap(), None)
            .map_err(err)?;
        ensure(rep.l2_rel <= 1e-6, || {
            format!("h = 1/{c}: relative difference {:e}", rep.l2_rel)
        })?;
        worst = worst.max(rep.l2_rel);
    }
    Ok(format!("largest relative difference {worst:.3e}"))
}

fn oscillation_threshold() -> Outcome {
    let p = default_params(150.0, 150.0);
    let run = |c: usize| -> std::result::Result<Vec<f64>, String> {
        let r = timed_run(TestCase::Case1, &p, MeshKind::Uniform, c, DtRule::H).map_err(err)?;
        Ok(r.end.unwrap().values)
    };
    let coarse = run(16)?;
    let fine = run(64)?;
    ensure(is_oscillating(&coarse), || "h = 1/16 not flagged".into())?;
    ensure(!is_oscillating(&fine), || "h = 1/64 flagged".into())?;
    Ok("h = 1/16 oscillates, h = 1/64 does not".into())
}

fn adaptive_parity() -> Outcome {
    let counts: Vec<usize> = [4usize, 8, 16, 32, 64]
        .iter()
        .map(|&c| Mesh::adaptive_cells(c).map(|m| m.len()))
        .collect::<Result<_>>()
        .map_err(err)?;
    ensure(counts == [13, 25, 49, 97, 193], || {
        format!("node counts {counts:?}")
    })?;
    let p = default_params(150.0, 150.0);
    let adaptive =
        timed_run(TestCase::Case1, &p, MeshKind::Adaptive, 16, DtRule::H).map_err(err)?;
    let uniform = timed_run(TestCase::Case1, &p, MeshKind::Uniform, 128, DtRule::H).map_err(err)?;
    let (a, u) = (
        adaptive.end.as_ref().unwrap(),
        uniform.end.as_ref().unwrap(),
    );
    let at = Mesh::uniform_cells(16).map_err(err)?;
    let rep = compare_end_states(a, u, Some(&at)).map_err(err)?;
    let all = compare_end_states(a, u, None).map_err(err)?;
    ensure(rep.l2_rel <= 0.01, || {
        format!("L2 relative difference {:e}", rep.l2_rel)
    })?;
    Ok(format!(
        "node counts {counts:?}, L2 relative difference {:.2e} at the 17 comparison nodes ({:.2e} over all {} shared nodes)",
        rep.l2_rel, all.l2_rel, all.nodes_compared
    ))
}

fn case2d_data(cells: usize, intervals: usize) -> std::result::Result<InverseData, String> {
    let mut p = default_params(5.0, 150.0);
    p.gas_ratios = DEFAULT_GAS_RATIOS.to_vec();
    let generated =
        generate_data(TestCase::Case2d, &p, firn::data::GENERATION_CELLS).map_err(err)?;
    let mesh = Mesh::uniform_cells(cells).map_err(err)?;
    Ok(resample_linear(&generated, &mesh)
        .map_err(err)?
        .with_grid(TimeGrid::with_intervals(intervals)))
}

fn gradient_correctness() -> Outcome {
    let data = case2d_data(16, 16)?;
    let n = data.dim();
    let mut worst = 0.0f64;
    for d in [vec![0.0; n], vec![100.0; n]] {
        let check = gradient_check(&d, &data, EpsRule::Relative(1e-6), 0.0).map_err(err)?;
        ensure(check.max_componentwise <= 1e-5, || {
            format!("discrepancy {:e}", check.max_componentwise)
        })?;
        worst = worst.max(check.max_componentwise);
    }

    let mesh = data.mesh.clone();
    let grid = data.grid;
    let p = data.params.single_gas(1.5);
    let dr = TestCase::Case2d.profile(&mesh).scaled(1.5);
    let trace = forward_solve(&mesh, &grid, &p, &dr).map_err(err)?;
    let block = firn::block_sensitivity_solve(
        &mesh,
        &grid,
        &p,
        1.5,
        &dr,
        &trace,
        SensitivityScheme::Tangent,
    )
    .map_err(err)?;
    let scale = block.as_slice().iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let coef: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let combined = single_direction_solve(
        &mesh,
        &grid,
        &p,
        1.5,
        &dr,
        &coef,
        &trace,
        SensitivityScheme::Tangent,
    )
    .map_err(err)?;
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = single_direction_solve(
            &mesh,
            &grid,
            &p,
            1.5,
            &dr,
            &e,
            &trace,
            SensitivityScheme::Tangent,
        )
        .map_err(err)?;
        for (a, b) in col.iter().zip(block.column(j)) {
            ensure((a - b).abs() <= 1e-12 * scale, || {
                format!("column {j} differs by {:e}", (a - b).abs())
            })?;
        }
    }
    for (k, got) in combined.iter().enumerate() {
        let expected: f64 = (0..n).map(|j| coef[j] * block.get(k, j)).sum();
        ensure((got - expected).abs() <= 1e-12 * scale * n as f64, || {
            format!("linearity off at row {k}")
        })?;
    }
    Ok(format!(
        "max component-wise discrepancy {worst:.2e}; block columns and linear combinations agree"
    ))
}

fn gradient_performance() -> Outcome {
    let data = case2d_data(64, 64)?;
    let d: Vec<f64> = data
        .mesh
        .nodes()
        .iter()
        .map(|z| 150.0 * (1.0 - z))
        .collect();
    let mut best = 0.0f64;
    for _ in 0..3 {
        let check = gradient_check(&d, &data, EpsRule::default(), 0.0).map_err(err)?;
        best = best.max(check.speedup);
    }
    ensure(best >= 5.0, || format!("speedup {best:.1}"))?;

    let p = default_params(5.0, 150.0);
    let time_build = |cells: usize| -> std::result::Result<f64, String> {
        let mesh = Mesh::uniform_cells(cells).map_err(err)?;
        let mut builder = JBlockBuilder::new(&mesh, &p, 1.0);
        let mut band = ColumnBand::zeros(mesh.len());
        let v: Vec<f64> = (0..mesh.interior_len()).map(|k| (k as f64).sin()).collect();
        let reps = 20_000;
        let mut best = f64::INFINITY;
        for _ in 0..5 {
            let start = Instant::now();
            for _ in 0..reps {
                builder.build(std::hint::black_box(&v), &mut band);
                std::hint::black_box(&band);
            }
            best = best.min(start.elapsed().as_secs_f64() / reps as f64);
        }
        Ok(best)
    };
    let ratio = time_build(128)? / time_build(32)?;
    ensure(ratio < 20.0, || {
        format!("forcing build grows {ratio:.1}x from 33 to 129 nodes")
    })?;
    Ok(format!("block gradient {best:.1}x faster than finite differences at 65 nodes; forcing build ratio {ratio:.1}x"))
}

fn inversion_quality() -> Outcome {
    let data = case2d_data(16, firn::data::GENERATION_CELLS)?;
    let truth = TestCase::Case2d.profile(&data.mesh).into_inner();
    let problem = InverseProblem::new(data);
    let cfg = OptimizerConfig::default();
    let rep = ncg_minimize(&problem, &vec![0.0; truth.len()], &cfg).map_err(err)?;
    let err_unconstrained = l2_relative_error(&rep.d_final, &truth);

    let data = case2d_data(64, firn::data::GENERATION_CELLS)?;
    let truth64 = TestCase::Case2d.profile(&data.mesh).into_inner();
    let problem = InverseProblem::new(data);
    let cfg = OptimizerConfig {
        method: Method::Steepest,
        constraints: Constraint::NonnegDecreasing,
        tol_grad: 1e-10,
        max_iters: 5000,
        ..OptimizerConfig::default()
    };
    let rep64 = projected_minimize(&problem, &vec![0.0; truth64.len()], &cfg).map_err(err)?;
    let err_decreasing = l2_relative_error(&rep64.d_final, &truth64);
    let summary = format!(
        "relative error unconstrained h = 1/16 {err_unconstrained:.3} (limit 0.5, {} iterations, {:?}); nonneg decreasing h = 1/64 {err_decreasing:.2e} (limit 5e-2, {} iterations)",
        rep.iterations, rep.termination, rep64.iterations
    );
    ensure(err_unconstrained <= 0.5 && err_decreasing <= 5e-2, || {
        summary.clone()
    })?;
    Ok(summary)
}

fn zero_forcing_exactness() -> Outcome {
    let mesh = Mesh::uniform_cells(16).map_err(err)?;
    let grid = TimeGrid::with_intervals(16);
    let mut p = default_params(5.0, 150.0);
    p.atmosphere = Atmosphere::Zero;
    let d = TestCase::Case2d.profile(&mesh);
    let trace = forward_solve(&mesh, &grid, &p, &d).map_err(err)?;
    ensure(
        (0..grid.steps()).all(|i| trace.column(i).iter().all(|&v| v == 0.0)),
        || "nonzero trace".into(),
    )?;
    let block = firn::block_sensitivity_solve(
        &mesh,
        &grid,
        &p,
        1.0,
        &d,
        &trace,
        SensitivityScheme::Tangent,
    )
    .map_err(err)?;
    ensure(block.as_slice().iter().all(|&v| v == 0.0), || {
        "nonzero sensitivities".into()
    })?;

    let mut p = default_params(5.0, 150.0);
    p.gas_ratios = DEFAULT_GAS_RATIOS.to_vec();
    let gases = p
        .gas_ratios
        .iter()
        .map(|&r| {
            Ok(GasData {
                ratio: r,
                g: forward_end_state(&mesh, &grid, &p, &d.scaled(r))?.values,
            })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(err)?;
    let data = InverseData::new(mesh, grid, p, gases).map_err(err)?;
    let e = evaluate(d.values(), &data, true).map_err(err)?;
    let gnorm = e
        .gradient
        .unwrap()
        .iter()
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    ensure(e.value == 0.0 && gnorm <= 1e-10, || {
        format!("V = {:e}, |grad| = {gnorm:e}", e.value)
    })?;
    Ok("zero forcing gives zero trace and sensitivities; V(d_true) = 0, gradient 0".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("matrix properties", matrix_properties, 10.0),
        ("mass norm equivalence", norm_equivalence, 10.0),
        ("forward convergence tables", forward_tables, 300.0),
        ("time step insensitivity", dt_insensitivity, 300.0),
        ("oscillation threshold", oscillation_threshold, 60.0),
        ("adaptive mesh parity", adaptive_parity, 30.0),
        ("gradient correctness", gradient_correctness, 60.0),
        ("gradient performance", gradient_performance, 120.0),
        ("inversion quality", inversion_quality, 600.0),
        ("zero forcing exactness", zero_forcing_exactness, 60.0),
    ];
    let mut failed = 0;
    for (k, (name, check, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        let outcome = match outcome {
            Ok(_) if secs > *limit => Err(format!("took {secs:.1} s, limit {limit} s")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!(
                "criterion {:>2} PASS  {name}: {detail} [{secs:.1} s]",
                k + 1
            ),
            Err(detail) => {
                failed += 1;
                println!(
                    "criterion {:>2} FAIL  {name}: {detail} [{secs:.1} s]",
                    k + 1
                );
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
