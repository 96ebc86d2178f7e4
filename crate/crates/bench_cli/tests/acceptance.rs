//! Acceptance suite.
//!
//! Runs the eight acceptance criteria in order and prints one
//! `PASS`/`FAIL` line per criterion, followed by the measurements it was
//! decided on. `ACCEPTANCE_ONLY=2,7` restricts the run to some criteria.
//! The process exits with a failure status when any criterion fails.

use bench_cli::cases::BenchmarkCase;
use bench_cli::pipeline::{build_system, Reference, RunOptions, SolveReport};
use bench_cli::sweep::{sweep, SweepFit};
use bench_cli::verify::{verify, Mutation, OPERATOR_TOL, SOLUTION_TOL};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use qtt_fem::domain_coupling::config::ProblemConfig;
use qtt_fem::domain_coupling::{build_boundary_mask, build_connectivity, DomainTopology};
use qtt_fem::elasticity_fem::{
    element_matrix, shape_functions, BoundaryCondition, MaterialModel, PlaneMode, Quadrature, Side, SubdomainMesh,
};
use qtt_fem::qtt_indexing::{GridIndexMap, Ordering};
use qtt_fem::tt_core::{
    tt_add, tt_decompose_modes, tt_dot, tt_hadamard, tt_kron, tt_matmul, tt_matvec, tt_norm, tt_round, tt_scale,
    tt_transpose, tt_zkron, TensorTrain, TtMatrix, TtVector,
};
use qtt_fem::tt_solver::{residual, solve, SolverConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::process::ExitCode;
use std::time::Instant;

struct Outcome {
    passed: bool,
    lines: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { passed: true, lines: Vec::new() }
    }

    fn check(&mut self, ok: bool, line: String) {
        self.passed &= ok;
        self.lines.push(format!("{} {line}", if ok { "ok  " } else { "FAIL" }));
    }

    fn note(&mut self, line: String) {
        self.lines.push(format!("     {line}"));
    }
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let n = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt() / n
}

fn frob(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dense_kron(a: &[f64], ar: usize, ac: usize, b: &[f64], br: usize, bc: usize) -> Vec<f64> {
    let (r, c) = (ar * br, ac * bc);
    let mut out = vec![0.0; r * c];
    for i in 0..ar {
        for j in 0..ac {
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k) * c + j * bc + l] = a[i * ac + j] * b[k * bc + l];
                }
            }
        }
    }
    out
}

fn dense_matmul(a: &[f64], r: usize, k: usize, b: &[f64], c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for l in 0..k {
            let x = a[i * k + l];
            for j in 0..c {
                out[i * c + j] += x * b[l * c + j];
            }
        }
    }
    out
}

// ---------------------------------------------------------------- criterion 1

const TT_CASES: u32 = 256;

fn train_shape() -> impl Strategy<Value = (Vec<usize>, Vec<usize>, u64)> {
    (1usize..=5).prop_flat_map(|d| {
        (
            proptest::collection::vec(2usize..=3, d),
            proptest::collection::vec(1usize..=3, d - 1),
            any::<u64>(),
        )
    })
}

fn run_property<S: Strategy>(
    out: &mut Outcome,
    name: &str,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) {
    let mut runner = TestRunner::new(Config { cases: TT_CASES, failure_persistence: None, ..Config::default() });
    match runner.run(&strategy, test) {
        Ok(()) => out.check(true, format!("{name}: {TT_CASES} instances")),
        Err(e) => out.check(false, format!("{name}: {e}")),
    }
}

fn prop_round_trip((modes, _, seed): (Vec<usize>, Vec<usize>, u64)) -> Result<(), TestCaseError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len: usize = modes.iter().product();
    let dense: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let t = tt_decompose_modes(&dense, &modes, 0.0).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let back = t.to_dense().map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!(rel_err(&back, &dense) < 1e-12);
    Ok(())
}

fn prop_rounding((modes, ranks, seed): (Vec<usize>, Vec<usize>, u64)) -> Result<(), TestCaseError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = TtVector::random(&modes, &ranks, &mut rng);
    let b = TtVector::random(&modes, &ranks, &mut rng);
    // redundant ranks plus a small perturbation give something to truncate
    let t = tt_add(&tt_add(&a, &a).unwrap(), &tt_scale(&b, 1e-3)).unwrap();
    let dt = t.to_dense().unwrap();
    for eps in [0.0, 1e-10, 1e-4, 1e-2, 0.3] {
        let r = tt_round(&t, eps).unwrap();
        let err = frob(&r.to_dense().unwrap().iter().zip(&dt).map(|(x, y)| x - y).collect::<Vec<_>>());
        prop_assert!(err <= (eps + 1e-13) * frob(&dt), "eps {eps}: error {err} norm {}", frob(&dt));
        prop_assert!(r.ranks().iter().zip(t.ranks()).all(|(x, y)| *x <= y));
    }
    Ok(())
}

fn prop_algebra((modes, ranks, seed): (Vec<usize>, Vec<usize>, u64)) -> Result<(), TestCaseError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = TtVector::random(&modes, &ranks, &mut rng);
    let b = TtVector::random(&modes, &ranks, &mut rng);
    let s = rng.gen_range(-3.0..3.0);
    let (da, db) = (a.to_dense().unwrap(), b.to_dense().unwrap());
    let n = da.len();
    let sum: Vec<f64> = da.iter().zip(&db).map(|(x, y)| x + y).collect();
    prop_assert!(rel_err(&tt_add(&a, &b).unwrap().to_dense().unwrap(), &sum) < 1e-12);
    let scaled: Vec<f64> = da.iter().map(|x| s * x).collect();
    prop_assert!(rel_err(&tt_scale(&a, s).to_dense().unwrap(), &scaled) < 1e-12);
    let had: Vec<f64> = da.iter().zip(&db).map(|(x, y)| x * y).collect();
    prop_assert!(rel_err(&tt_hadamard(&a, &b).unwrap().to_dense().unwrap(), &had) < 1e-12);
    let dot: f64 = da.iter().zip(&db).map(|(x, y)| x * y).sum();
    prop_assert!((tt_dot(&a, &b).unwrap() - dot).abs() <= 1e-12 * frob(&da) * frob(&db));
    prop_assert!((tt_norm(&a) - frob(&da)).abs() <= 1e-12 * frob(&da));

    let m = TtMatrix::random(&modes, &modes, &ranks, &mut rng);
    let p = TtMatrix::random(&modes, &modes, &ranks, &mut rng);
    let (dm, dp) = (m.to_dense().unwrap(), p.to_dense().unwrap());
    let mv = dense_matmul(&dm, n, n, &da, 1);
    prop_assert!(rel_err(&tt_matvec(&m, &a).unwrap().to_dense().unwrap(), &mv) < 1e-12);
    let mm = dense_matmul(&dm, n, n, &dp, n);
    prop_assert!(rel_err(&tt_matmul(&m, &p).unwrap().to_dense().unwrap(), &mm) < 1e-12);
    let dt = tt_transpose(&m).to_dense().unwrap();
    for r in 0..n {
        for c in 0..n {
            prop_assert!(dt[r * n + c] == dm[c * n + r]);
        }
    }
    if n * n <= 4096 {
        let k = tt_kron(&a, &b).to_dense().unwrap();
        prop_assert!(rel_err(&k, &dense_kron(&da, n, 1, &db, n, 1)) < 1e-12);
    }
    Ok(())
}

fn prop_zkron((d, seed): (usize, u64)) -> Result<(), TestCaseError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes = vec![2; d];
    let ranks = vec![2; d - 1];
    let grid = GridIndexMap::new(d).unwrap();
    let n = 1usize << d;
    // vectors: zkron(a, b)[z(i, j)] = a[j] b[i]
    let a = TtVector::random(&modes, &ranks, &mut rng);
    let b = TtVector::random(&modes, &ranks, &mut rng);
    let (da, db) = (a.to_dense().unwrap(), b.to_dense().unwrap());
    let z = tt_zkron(&a, &b).unwrap().to_dense().unwrap();
    for j in 0..n {
        for i in 0..n {
            let want = da[j] * db[i];
            prop_assert!((z[grid.zorder(i, j).unwrap()] - want).abs() < 1e-13);
        }
    }
    // matrices: zkron(A, B) = P (A ⊗ B) Pᵀ for the Morton permutation P
    if d <= 3 {
        let a = TtMatrix::random(&modes, &modes, &ranks, &mut rng);
        let b = TtMatrix::random(&modes, &modes, &ranks, &mut rng);
        let kron = dense_kron(&a.to_dense().unwrap(), n, n, &b.to_dense().unwrap(), n, n);
        let z = tt_zkron(&a, &b).unwrap().to_dense().unwrap();
        let nn = n * n;
        for r in 0..nn {
            for c in 0..nn {
                let zr = grid.zorder(r % n, r / n).unwrap();
                let zc = grid.zorder(c % n, c / n).unwrap();
                prop_assert!((z[zr * nn + zc] - kron[r * nn + c]).abs() < 1e-13);
            }
        }
    }
    Ok(())
}

fn criterion_1() -> Outcome {
    let mut out = Outcome::new();
    run_property(&mut out, "round trip", train_shape(), prop_round_trip);
    run_property(&mut out, "rounding contract", train_shape(), prop_rounding);
    run_property(&mut out, "dense homomorphism", train_shape(), prop_algebra);
    run_property(&mut out, "z-Kronecker permutation", (1usize..=5, any::<u64>()), prop_zkron);
    out
}

// ---------------------------------------------------------------- criterion 2

fn criterion_2() -> Outcome {
    let mut out = Outcome::new();
    out.note(format!("tolerances: operator and load {OPERATOR_TOL:.0e}, solution {SOLUTION_TOL:.0e}"));
    for name in ["cantilever", "sen", "lshape"] {
        let case = BenchmarkCase::builtin(name).unwrap();
        let opts = RunOptions::from_config(&case.config).unwrap();
        for d in 2..=4 {
            match verify(&case, d, &opts, Mutation::None) {
                Ok(r) => {
                    let vals: Vec<String> =
                        r.checks.iter().map(|c| format!("{}={:.2e}", c.name, c.value)).collect();
                    let failed: Vec<String> =
                        r.checks.iter().filter(|c| !c.passed).map(|c| format!("{} ({})", c.name, c.detail)).collect();
                    let tail = if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join(", ")) };
                    out.check(r.passed(), format!("{name} d={d}: {}{tail}", vals.join(" ")));
                }
                Err(e) => out.check(false, format!("{name} d={d}: {e}")),
            }
        }
    }
    let square = r#"
name = "square"
d = 3
[material]
youngs_modulus = 1.0
poisson_ratio = 0.3
[[subdomain]]
corners = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
bottom = "clamped"
left = "clamped"
body_force = [0.0, -1.0]
"#;
    let case = BenchmarkCase::from_config(ProblemConfig::parse(square).unwrap());
    let opts = RunOptions::from_config(&case.config).unwrap();
    for d in 2..=4 {
        let r = verify(&case, d, &opts, Mutation::None).unwrap();
        let vals: Vec<String> = r.checks.iter().map(|c| format!("{}={:.2e}", c.name, c.value)).collect();
        out.check(r.passed(), format!("single square d={d}: {}", vals.join(" ")));
    }
    let case = BenchmarkCase::builtin("lshape").unwrap();
    let opts = RunOptions::from_config(&case.config).unwrap();
    let r = verify(&case, 2, &opts, Mutation::DropInterfacePair).unwrap();
    let op = r.checks.iter().find(|c| c.name == "operator").unwrap();
    out.check(
        !r.passed() && op.detail.starts_with("interface mismatch"),
        format!("dropped interface pair detected: {}", op.detail),
    );
    out
}

// ------------------------------------------------------------ criteria 3 to 6

struct CaseSweep {
    case: BenchmarkCase,
    rows: Vec<SolveReport>,
    fit: SweepFit,
    level_params: Vec<usize>,
}

const PUBLISHED_R6: [(&str, usize); 3] = [("cantilever", 39), ("sen", 38), ("lshape", 41)];
const PUBLISHED_ND: [(&str, [usize; 5]); 3] = [
    ("cantilever", [52, 356, 2264, 5988, 16676]),
    ("sen", [52, 356, 1652, 5412, 10756]),
    ("lshape", [52, 356, 2196, 7096, 14116]),
];

fn run_sweeps() -> Result<Vec<CaseSweep>, String> {
    let mut out = Vec::new();
    for name in ["cantilever", "sen", "lshape"] {
        let case = BenchmarkCase::builtin(name).map_err(|e| e.to_string())?;
        let opts = RunOptions::from_config(&case.config).map_err(|e| e.to_string())?;
        let t0 = Instant::now();
        let reference = Reference::compute(&case, case.reference_level()).map_err(|e| e.to_string())?;
        let res = sweep(&case, case.d_min..=case.d_max, &[1e-3], &opts, &reference, |_| {})
            .map_err(|e| e.to_string())?;
        eprintln!("sweep {name}: {:.0} s", t0.elapsed().as_secs_f64());
        let level_params = res.outputs.iter().map(|o| o.level_params).collect();
        let fit = res.fits.into_iter().next().ok_or("no fit")?;
        out.push(CaseSweep { case, rows: res.rows, fit, level_params });
    }
    Ok(out)
}

fn criterion_3(sweeps: &[CaseSweep]) -> Outcome {
    let mut out = Outcome::new();
    for s in sweeps {
        let errs: Vec<String> = s
            .rows
            .iter()
            .map(|r| format!("{}{}:{:.4}", r.d, if r.drift { "*" } else { "" }, r.energy_error))
            .collect();
        out.note(format!("{} E(d) {}", s.case.name, errs.join(" ")));
        let want = s.case.expected_alpha.unwrap();
        match s.fit.alpha {
            Some(a) => out.check(
                (a - want).abs() <= 0.15,
                format!("{} alpha = {a:.3} over {} levels, expected {want} ± 0.15", s.case.name, s.fit.points),
            ),
            None => out.check(false, format!("{}: no alpha fit", s.case.name)),
        }
    }
    let cantilever = &sweeps[0];
    let e2 = cantilever.rows.iter().find(|r| r.d == 2).map(|r| r.energy_error).unwrap_or(f64::NAN);
    out.check((e2 / 0.230).log10().abs() < 1.0, format!("cantilever d=2 E = {e2:.4} within a decade of 0.230"));
    out
}

fn criterion_4(sweeps: &[CaseSweep]) -> Outcome {
    let mut out = Outcome::new();
    for (s, (_, published)) in sweeps.iter().zip(PUBLISHED_R6) {
        let ranks: Vec<String> = s.rows.iter().map(|r| format!("{}:{}", r.d, r.rd)).collect();
        out.note(format!("{} R_d {}", s.case.name, ranks.join(" ")));
        match s.fit.theta {
            Some(t) => out.check(t <= 1.2, format!("{} theta = {t:.3} <= 1.2", s.case.name)),
            None => out.check(false, format!("{}: no theta fit", s.case.name)),
        }
        let r6 = s.rows.iter().find(|r| r.d == 6).map(|r| r.rd);
        let ok = r6.is_some_and(|r| 2 * r >= published && r <= 2 * published);
        out.check(ok, format!("{} R_6 = {r6:?}, within a factor 2 of {published}", s.case.name));
    }
    out
}

fn criterion_5(sweeps: &[CaseSweep]) -> Outcome {
    let mut out = Outcome::new();
    for (s, (_, published)) in sweeps.iter().zip(PUBLISHED_ND) {
        for (d, want) in (2..=6).zip(published) {
            let Some(k) = s.rows.iter().position(|r| r.d == d) else {
                out.check(false, format!("{} d={d}: no row", s.case.name));
                continue;
            };
            let nd = s.rows[k].nd;
            out.check(
                2 * nd >= want && nd <= 2 * want,
                format!(
                    "{} d={d}: N_d = {nd}, published {want} (ratio {:.2}; level-mode count {})",
                    s.case.name,
                    nd as f64 / want as f64,
                    s.level_params[k]
                ),
            );
        }
    }
    out
}

/// Sublinear and log-concave: every log-log slope below one and the slopes
/// non-increasing, up to `slack`.
fn log_concave_sublinear(x: &[f64], y: &[f64], slack: f64) -> (bool, Vec<f64>) {
    let slopes: Vec<f64> = x.windows(2).zip(y.windows(2)).map(|(a, b)| (b[1] / b[0]).ln() / (a[1] / a[0]).ln()).collect();
    let sub = slopes.iter().all(|s| *s < 1.0);
    let concave = slopes.windows(2).all(|w| w[1] <= w[0] + slack);
    (sub && concave, slopes)
}

fn criterion_6(sweeps: &[CaseSweep]) -> Outcome {
    let mut out = Outcome::new();
    for s in sweeps {
        let dofs: Vec<f64> = s.rows.iter().map(|r| r.dofs as f64).collect();
        for (what, y) in [
            ("erank_K", s.rows.iter().map(|r| r.erank_k).collect::<Vec<f64>>()),
            ("erank_f", s.rows.iter().map(|r| r.erank_f).collect()),
        ] {
            let (ok, slopes) = log_concave_sublinear(&dofs, &y, 0.05);
            let ys: Vec<String> = y.iter().map(|v| format!("{v:.2}")).collect();
            let ss: Vec<String> = slopes.iter().map(|v| format!("{v:.2}")).collect();
            out.check(ok, format!("{} {what} [{}], log-log slopes [{}]", s.case.name, ys.join(" "), ss.join(" ")));
        }
    }
    out
}

// ---------------------------------------------------------------- criterion 7

fn criterion_7() -> Outcome {
    let mut out = Outcome::new();
    let mut converged = 0;
    let mut total = 0;
    for name in ["cantilever", "sen", "lshape"] {
        let case = BenchmarkCase::builtin(name).unwrap();
        let opts = RunOptions::from_config(&case.config).unwrap();
        for d in 1..=5 {
            let (_, k, f) = match build_system(&case, d, &opts) {
                Ok(s) => s,
                Err(e) => {
                    out.check(false, format!("{name} d={d}: {e}"));
                    continue;
                }
            };
            for eps in [1e-3, 1e-5, 1e-7] {
                let cfg = SolverConfig { epsilon: eps, max_sweeps: opts.max_sweeps, seed: opts.seed, ..Default::default() };
                let t0 = Instant::now();
                let r = match solve(&k, &f, &cfg) {
                    Ok(r) => r,
                    Err(e) => {
                        out.check(false, format!("{name} d={d} eps={eps:e}: {e}"));
                        continue;
                    }
                };
                total += 1;
                let true_res = residual(&k, &r.u, &f).unwrap();
                let line = format!(
                    "{name} d={d} eps={eps:.0e}: converged={} residual={true_res:.2e} sweeps={} R={} {:.1} s",
                    r.converged,
                    r.sweeps,
                    r.u.ranks().iter().max().unwrap(),
                    t0.elapsed().as_secs_f64()
                );
                if r.converged {
                    converged += 1;
                    out.check(true_res <= eps, line);
                } else {
                    out.note(line);
                }
            }
        }
    }
    out.note(format!("{converged} of {total} runs converged"));

    // determinism: identical inputs give bit-identical trains and reports
    let case = BenchmarkCase::builtin("lshape").unwrap();
    let opts = RunOptions::from_config(&case.config).unwrap();
    let run = || {
        let (_, k, f) = build_system(&case, 4, &opts).unwrap();
        let cfg = SolverConfig { epsilon: 1e-5, max_sweeps: opts.max_sweeps, seed: opts.seed, ..Default::default() };
        let r = solve(&k, &f, &cfg).unwrap();
        let data: Vec<u64> = r.u.cores().iter().flat_map(|c| c.data().iter().map(|v| v.to_bits())).collect();
        (data, r.u.ranks(), r.residual.to_bits(), r.sweeps)
    };
    let (a, b) = (run(), run());
    out.check(a == b, "lshape d=4 eps=1e-5 solved twice: bit-identical solution".into());
    out
}

// ---------------------------------------------------------------- criterion 8

fn criterion_8() -> Outcome {
    let mut out = Outcome::new();

    // rigid-body kernel of the element stiffness on distorted quadrilaterals
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut mismatches = 0;
    for trial in 0..200 {
        let mut c = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        for p in c.iter_mut() {
            p[0] += rng.gen_range(-0.2..0.2);
            p[1] += rng.gen_range(-0.2..0.2);
        }
        let nu = rng.gen_range(0.0..0.45);
        let mode = if trial % 2 == 0 { PlaneMode::PlaneStress } else { PlaneMode::PlaneStrain };
        let mat = MaterialModel::new(rng.gen_range(0.5..100.0), nu, mode).unwrap();
        for quad in [Quadrature::Gauss2, Quadrature::Midpoint] {
            let k = element_matrix(&c, &mat, quad);
            let m = faer::Mat::<f64>::from_fn(8, 8, |i, j| k[i][j]);
            let ev = m.self_adjoint_eigenvalues(faer::Side::Lower).unwrap();
            let top = ev.iter().cloned().fold(0.0, f64::max);
            let zeros = ev.iter().filter(|v| v.abs() < 1e-10 * top).count();
            // one-point integration adds two hourglass modes
            let want = if quad == Quadrature::Gauss2 { 3 } else { 5 };
            mismatches += usize::from(zeros != want);
        }
    }
    out.check(
        mismatches == 0,
        format!("element kernel: dimension 3 (2x2 Gauss) and 5 (one point) on 200 distorted elements, {mismatches} mismatches"),
    );

    // partition of unity on a grid of reference points
    let mut pou: f64 = 0.0;
    for a in 0..=20 {
        for b in 0..=20 {
            let (xi, eta) = (-1.0 + 0.1 * a as f64, -1.0 + 0.1 * b as f64);
            let (v, g) = shape_functions(xi, eta);
            pou = pou.max((v.iter().sum::<f64>() - 1.0).abs());
            pou = pou.max(g.iter().map(|x| x[0]).sum::<f64>().abs());
            pou = pou.max(g.iter().map(|x| x[1]).sum::<f64>().abs());
        }
    }
    out.check(pou < 1e-14, format!("partition of unity: deviation {pou:.1e} on a 21x21 grid"));

    // every combination of side conditions, both orderings, d = 1..3
    let tags = [BoundaryCondition::Free, BoundaryCondition::Clamped, BoundaryCondition::RollerX, BoundaryCondition::RollerY];
    let mut masks = 0;
    let mut mask_ok = true;
    for d in 1..=3 {
        for ordering in [Ordering::Canonical, Ordering::ZOrder] {
            for code in 0..256usize {
                let mut mesh = SubdomainMesh::unit_square([0.0, 0.0], d);
                for (s, side) in Side::ALL.into_iter().enumerate() {
                    mesh = mesh.with_side(side, tags[(code >> (2 * s)) & 3]);
                }
                let m = build_boundary_mask(&mesh, ordering).unwrap();
                for c in 0..2 {
                    let v = m.mask[c].to_dense().unwrap();
                    let twice = tt_hadamard(&m.mask[c], &m.mask[c]).unwrap().to_dense().unwrap();
                    mask_ok &= v.iter().all(|x| x.abs() < 1e-12 || (x - 1.0).abs() < 1e-12);
                    mask_ok &= rel_err(&twice, &v) < 1e-12 || frob(&v) == 0.0 && frob(&twice) == 0.0;
                }
                masks += 1;
            }
        }
    }
    out.check(mask_ok, format!("mask idempotence: {masks} masks, entries 0/1 and M∘M = M"));

    // Π^{(mp)} = Π^{(pm)}ᵀ for every ordered pair of every benchmark, d = 1..3
    let mut pairs = 0;
    let mut dual_ok = true;
    for name in ["cantilever", "sen", "lshape"] {
        let case = BenchmarkCase::builtin(name).unwrap();
        for d in 1..=3 {
            let topo: DomainTopology = case.topology(d).unwrap();
            let n = 1usize << (2 * d);
            for ordering in [Ordering::Canonical, Ordering::ZOrder] {
                for m in 0..topo.q() {
                    for p in (m + 1)..topo.q() {
                        let a = build_connectivity(&topo, m, p, ordering).unwrap();
                        let b = build_connectivity(&topo, p, m, ordering).unwrap();
                        let (da, db) = (a.pi.to_dense().unwrap(), b.pi.to_dense().unwrap());
                        for r in 0..n {
                            for c in 0..n {
                                dual_ok &= da[r * n + c] == db[c * n + r];
                            }
                        }
                        dual_ok &= a.nnz == b.nnz;
                        pairs += 1;
                    }
                }
            }
        }
    }
    out.check(dual_ok, format!("connectivity duality: {pairs} subdomain pairs exactly transposed"));
    out
}

// ---------------------------------------------------------------------- main

const TITLES: [&str; 8] = [
    "TT property suite",
    "assembly equivalence with the conforming oracle",
    "convergence exponents",
    "rank growth",
    "parameter count",
    "effective-rank asymptote",
    "solver contract and determinism",
    "structural invariants",
];

fn main() -> ExitCode {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wanted = |k: usize| only.as_ref().is_none_or(|v| v.contains(&k));
    let mut sweeps: Option<Result<Vec<CaseSweep>, String>> = None;
    let mut results: Vec<(usize, bool, f64)> = Vec::new();
    for k in 1..=8 {
        if !wanted(k) {
            continue;
        }
        let t0 = Instant::now();
        let outcome = match k {
            1 => criterion_1(),
            2 => criterion_2(),
            3..=6 => {
                let t = Instant::now();
                let s = sweeps.get_or_insert_with(run_sweeps);
                let shared = t.elapsed().as_secs_f64();
                match s {
                    Ok(s) => {
                        let mut o = match k {
                            3 => criterion_3(s),
                            4 => criterion_4(s),
                            5 => criterion_5(s),
                            _ => criterion_6(s),
                        };
                        if shared > 0.01 {
                            o.note(format!("shared sweeps at eps=1e-3 took {shared:.0} s"));
                        }
                        o
                    }
                    Err(e) => {
                        let mut o = Outcome::new();
                        o.check(false, format!("sweep failed: {e}"));
                        o
                    }
                }
            }
            7 => criterion_7(),
            _ => criterion_8(),
        };
        let secs = t0.elapsed().as_secs_f64();
        println!("criterion {k} {}: {} ({secs:.1} s)", if outcome.passed { "PASS" } else { "FAIL" }, TITLES[k - 1]);
        for l in &outcome.lines {
            println!("    {l}");
        }
        results.push((k, outcome.passed, secs));
    }
    println!();
    for (k, ok, secs) in &results {
        println!("criterion {k}: {} ({secs:.1} s)", if *ok { "PASS" } else { "FAIL" });
    }
    if results.iter().all(|r| r.1) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
