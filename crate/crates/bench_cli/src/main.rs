use bench_cli::cases::{BenchmarkCase, CASE_NAMES};
use bench_cli::pipeline::{Reference, RunOptions};
use bench_cli::report::{fit_line, format_table, read_csv, write_csv_file};
use bench_cli::sweep::{fit_rows, mark_drift, sweep};
use bench_cli::verify::{verify, Mutation};
use bench_cli::BenchError;
use clap::{Args, Parser, Subcommand, ValueEnum};
use qtt_fem::domain_coupling::config::ProblemConfig;
use qtt_fem::elasticity_fem::{DeterminantRule, Quadrature};
use qtt_fem::qtt_indexing::Ordering;
use std::ops::RangeInclusive;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "qtt-bench", about = "QTT elasticity benchmarks", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one case at one level and tolerance.
    Run(RunArgs),
    /// Solve over a level range and tolerance list and fit growth laws.
    Sweep(RunArgs),
    /// Compare the tensor system with the conforming one at small levels.
    Verify(VerifyArgs),
    /// Print CSV reports as a table with fits.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum QuadratureArg {
    Midpoint,
    Gauss2,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderingArg {
    Canonical,
    Zorder,
}

#[derive(Args)]
struct CaseArgs {
    /// Built-in case: cantilever, sen or lshape. Ignored with --config.
    #[arg(long, default_value = "cantilever")]
    case: String,
    /// Problem file to use instead of a built-in case.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Level or inclusive range such as `2..6`.
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    quadrature: Option<QuadratureArg>,
    #[arg(long, value_enum)]
    ordering: Option<OrderingArg>,
    /// Use the first-order expansion of the Jacobian determinant.
    #[arg(long = "paper-determinant", visible_alias = "expanded-determinant")]
    expanded_determinant: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CaseArgs,
    /// Tolerance, or a comma-separated list for sweeps.
    #[arg(long)]
    eps: Option<String>,
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reference level, `2^L` elements per subdomain side. Defaults to two
    /// above the finest level.
    #[arg(long)]
    ref_level: Option<usize>,
    #[arg(long)]
    max_sweeps: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: CaseArgs,
    /// Corrupt the coupling before checking.
    #[arg(long)]
    drop_interface_pair: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// CSV files written by run or sweep.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Write the merged rows and refitted laws here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_levels(s: &str) -> Result<RangeInclusive<usize>, BenchError> {
    let bad = || BenchError::Argument(format!("cannot read level range {s:?}"));
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (a, b.trim_start_matches('=')),
        None => (s, s),
    };
    let a: usize = a.trim().parse().map_err(|_| bad())?;
    let b: usize = b.trim().parse().map_err(|_| bad())?;
    if a == 0 || a > b {
        return Err(bad());
    }
    Ok(a..=b)
}

fn parse_eps(s: &str) -> Result<Vec<f64>, BenchError> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| *v > 0.0)
                .ok_or_else(|| BenchError::Argument(format!("cannot read tolerance {t:?}")))
        })
        .collect()
}

fn load_case(a: &CaseArgs) -> Result<(BenchmarkCase, RunOptions), BenchError> {
    let case = match &a.config {
        Some(path) => BenchmarkCase::from_config(ProblemConfig::from_file(path)?),
        None => BenchmarkCase::builtin(&a.case)?,
    };
    let mut opts = RunOptions::from_config(&case.config)?;
    if let Some(seed) = a.seed {
        opts.seed = seed;
    }
    if let Some(q) = a.quadrature {
        opts.quadrature = match q {
            QuadratureArg::Midpoint => Quadrature::Midpoint,
            QuadratureArg::Gauss2 => Quadrature::Gauss2,
        };
    }
    if let Some(o) = a.ordering {
        opts.ordering = match o {
            OrderingArg::Canonical => Ordering::Canonical,
            OrderingArg::Zorder => Ordering::ZOrder,
        };
    }
    if a.expanded_determinant {
        opts.determinant = DeterminantRule::Expansion;
    }
    Ok((case, opts))
}

fn levels(a: &CaseArgs, default: RangeInclusive<usize>) -> Result<RangeInclusive<usize>, BenchError> {
    a.d.as_deref().map_or(Ok(default), parse_levels)
}

fn compute_reference(case: &BenchmarkCase, level: usize) -> Result<Reference, BenchError> {
    eprintln!("reference: {} at level {level}", case.name);
    let r = Reference::compute(case, level)?;
    eprintln!(
        "reference: {} iterations, residual {:.1e}, {:.1} s",
        r.report.iterations,
        r.report.residual,
        r.wall_ms / 1e3
    );
    Ok(r)
}

fn cmd_run(a: RunArgs, is_sweep: bool) -> Result<bool, BenchError> {
    let (case, mut opts) = load_case(&a.common)?;
    if let Some(s) = a.max_sweeps {
        opts.max_sweeps = s;
    }
    let eps_list = a.eps.as_deref().map_or(Ok(vec![opts.eps]), parse_eps)?;
    let range = if is_sweep {
        levels(&a.common, case.d_min..=case.d_max)?
    } else {
        let r = levels(&a.common, case.d_max..=case.d_max)?;
        if r.start() != r.end() || eps_list.len() != 1 {
            return Err(BenchError::Argument("run takes one level and one tolerance; use sweep".into()));
        }
        r
    };
    let ref_level = a.ref_level.unwrap_or(range.end() + 2);
    let reference = compute_reference(&case, ref_level)?;
    let result = sweep(&case, range, &eps_list, &opts, &reference, |o| {
        let r = &o.report;
        eprintln!(
            "d={} eps={:e}: E={:.4e} Rd={} sweeps={} residual={:.1e} {:.1} s",
            r.d,
            r.eps,
            r.energy_error,
            r.rd,
            o.sweeps,
            o.residual,
            r.wall_ms / 1e3
        );
    })?;
    print!("{}", format_table(&result.rows));
    let fits = if is_sweep { result.fits } else { Vec::new() };
    for f in &fits {
        println!("{}", fit_line(f));
    }
    if let Some(path) = a.out {
        write_csv_file(&path, &result.rows, &fits)?;
    }
    Ok(result.rows.iter().all(|r| r.converged))
}

fn cmd_verify(a: VerifyArgs) -> Result<bool, BenchError> {
    let (case, opts) = load_case(&a.common)?;
    let range = levels(&a.common, 2..=4)?;
    if *range.end() > 4 {
        return Err(BenchError::Argument("verify runs at levels up to 4".into()));
    }
    let mutation = if a.drop_interface_pair { Mutation::DropInterfacePair } else { Mutation::None };
    let mut ok = true;
    for d in range {
        let r = verify(&case, d, &opts, mutation)?;
        print!("{}", r.summary());
        ok &= r.passed();
    }
    println!("{}", if ok { "verify: pass" } else { "verify: FAIL" });
    Ok(ok)
}

fn cmd_report(a: ReportArgs) -> Result<bool, BenchError> {
    let mut rows = Vec::new();
    for path in &a.inputs {
        rows.extend(read_csv(std::fs::File::open(path)?)?);
    }
    mark_drift(&mut rows);
    let fits = fit_rows(&rows);
    print!("{}", format_table(&rows));
    for f in &fits {
        println!("{}", fit_line(f));
    }
    if let Some(path) = a.out {
        write_csv_file(&path, &rows, &fits)?;
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a, false),
        Command::Sweep(a) => cmd_run(a, true),
        Command::Verify(a) => cmd_verify(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            if matches!(e, BenchError::UnknownCase(_)) {
                eprintln!("cases: {}", CASE_NAMES.join(", "));
            }
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
