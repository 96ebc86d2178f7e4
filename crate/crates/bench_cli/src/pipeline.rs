//! One solve of one case at one level, measured against a reference.

use crate::cases::BenchmarkCase;
use crate::BenchError;
use qtt_fem::domain_coupling::config::ProblemConfig;
use qtt_fem::domain_coupling::{build_global_system, CouplingOptions, GlobalLayout, GlobalSystem};
use qtt_fem::elasticity_fem::{DeterminantRule, ElementOptions, Quadrature};
use qtt_fem::qtt_assembly::AssemblyOptions;
use qtt_fem::qtt_indexing::Ordering;
use qtt_fem::reference_oracle::multigrid::{reference_solve, MultigridConfig, MultigridReport};
use qtt_fem::reference_oracle::{energy_error, l2_error, NodalField, ReferenceSolution};
use qtt_fem::tt_core::{rank_profile, RankProfile, TensorTrain, TtMatrix, TtVector};
use qtt_fem::tt_solver::{solve, SolverConfig};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Discretization and solver settings of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub eps: f64,
    pub seed: u64,
    pub max_sweeps: usize,
    pub quadrature: Quadrature,
    pub ordering: Ordering,
    pub determinant: DeterminantRule,
    pub assembly_eps: f64,
    pub gamma: Option<f64>,
}

impl RunOptions {
    /// Settings recorded in a problem file.
    pub fn from_config(cfg: &ProblemConfig) -> Result<Self, BenchError> {
        let a = cfg.assembly_options()?;
        Ok(RunOptions {
            eps: cfg.solver.eps,
            seed: cfg.solver.seed,
            max_sweeps: cfg.solver.max_sweeps,
            quadrature: a.element.quadrature,
            ordering: a.ordering,
            determinant: a.element.determinant,
            assembly_eps: a.eps,
            gamma: cfg.solver.gamma,
        })
    }

    fn coupling(&self) -> CouplingOptions {
        CouplingOptions {
            assembly: AssemblyOptions {
                element: ElementOptions { quadrature: self.quadrature, determinant: self.determinant },
                ordering: self.ordering,
                eps: self.assembly_eps,
            },
            gamma: self.gamma,
        }
    }
}

/// Overrefined conforming solution used to measure errors.
#[derive(Debug, Clone)]
pub struct Reference {
    /// `2^level` elements per subdomain side.
    pub level: usize,
    pub solution: ReferenceSolution,
    pub report: MultigridReport,
    pub energy_norm: f64,
    pub l2_norm: f64,
    pub wall_ms: f64,
}

impl Reference {
    /// Multigrid solve on the dyadic mesh of `level`. The reference always
    /// integrates with the 2×2 Gauss rule.
    pub fn compute(case: &BenchmarkCase, level: usize) -> Result<Self, BenchError> {
        let t0 = Instant::now();
        let topo = case.topology(1)?;
        let material = case.config.material()?;
        let (solution, report) = reference_solve(&topo, &material, level, &MultigridConfig::default())?;
        let energy_norm = solution.energy_norm();
        let l2_norm = solution.l2_norm();
        Ok(Reference { level, solution, report, energy_norm, l2_norm, wall_ms: t0.elapsed().as_secs_f64() * 1e3 })
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub case: String,
    pub d: usize,
    pub eps: f64,
    pub dofs: usize,
    /// `‖u_QTT − u_ref‖_a / ‖u_ref‖_a` on the reference mesh.
    pub energy_error: f64,
    /// `‖u_QTT − u_ref‖_{L²} / ‖u_ref‖_{L²}`.
    pub l2_error: f64,
    #[serde(rename = "Rd")]
    pub rd: usize,
    #[serde(rename = "Nd")]
    pub nd: usize,
    #[serde(rename = "erank_K")]
    pub erank_k: f64,
    pub erank_f: f64,
    pub erank_u: f64,
    #[serde(rename = "storage_K")]
    pub storage_k: usize,
    pub storage_f: usize,
    pub wall_ms: f64,
    pub converged: bool,
    pub drift: bool,
}

/// Everything a run produces; the report is the CSV part.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: SolveReport,
    /// Final `‖K u − f‖ / ‖f‖`.
    pub residual: f64,
    pub sweeps: usize,
    pub rank_history: Vec<Vec<usize>>,
    pub solution: TtVector,
    pub layout: GlobalLayout,
    pub solution_profile: RankProfile,
    pub operator_profile: RankProfile,
    pub load_profile: RankProfile,
    /// Parameter count with the two binary digits of each level fused into
    /// one mode of size 4 and the subdomain and component digits fused into
    /// one mode of size `2q`.
    pub level_params: usize,
    pub assembly_ms: f64,
    pub solve_ms: f64,
}

/// Assemble the coupled, constrained system of `case` at level `d`.
pub fn build_system(
    case: &BenchmarkCase,
    d: usize,
    opts: &RunOptions,
) -> Result<(GlobalSystem, TtMatrix, TtVector), BenchError> {
    let topo = case.topology(d)?;
    let material = case.config.material()?;
    let global = build_global_system(&topo, &material, opts.coupling())?;
    let (k, f) = global.to_tt()?;
    Ok((global, k, f))
}

/// Parameters of `u` counted over level modes, see [`RunOutput::level_params`].
pub fn level_params(ranks: &[usize], d: usize, q: usize) -> usize {
    let rho = |l: usize| ranks[2 * l];
    let grid: usize = (1..=d).map(|l| 4 * rho(l - 1) * rho(l)).sum();
    grid + 2 * q * rho(d)
}

/// Full pipeline for one level and tolerance.
pub fn run_case(
    case: &BenchmarkCase,
    d: usize,
    opts: &RunOptions,
    reference: &Reference,
) -> Result<RunOutput, BenchError> {
    if d == 0 {
        return Err(BenchError::Argument("level d must be at least 1".into()));
    }
    if !(opts.eps > 0.0) {
        return Err(BenchError::Argument(format!("tolerance must be positive, got {}", opts.eps)));
    }
    let t0 = Instant::now();
    let (global, k, f) = build_system(case, d, opts)?;
    let assembly_ms = t0.elapsed().as_secs_f64() * 1e3;
    let cfg = SolverConfig { epsilon: opts.eps, max_sweeps: opts.max_sweeps, seed: opts.seed, ..Default::default() };
    let t1 = Instant::now();
    let out = solve(&k, &f, &cfg)?;
    let solve_ms = t1.elapsed().as_secs_f64() * 1e3;
    let wall_ms = t0.elapsed().as_secs_f64() * 1e3;

    let field = NodalField::from_tt(&global.layout, &out.u)?;
    let e = energy_error(&field, &reference.solution)?;
    let l2 = l2_error(&field, &reference.solution)?;
    let up = rank_profile(&out.u);
    let kp = rank_profile(&k);
    let fp = rank_profile(&f);
    let report = SolveReport {
        case: case.name.clone(),
        d,
        eps: opts.eps,
        dofs: case.dofs(d),
        energy_error: e / reference.energy_norm,
        l2_error: l2 / reference.l2_norm,
        rd: up.max_rank,
        nd: up.param_count,
        erank_k: kp.effective_rank,
        erank_f: fp.effective_rank,
        erank_u: up.effective_rank,
        storage_k: kp.storage_count,
        storage_f: fp.storage_count,
        wall_ms,
        converged: out.converged,
        drift: false,
    };
    Ok(RunOutput {
        report,
        residual: out.residual,
        sweeps: out.sweeps,
        rank_history: out.rank_history,
        level_params: level_params(&out.u.ranks(), d, case.q()),
        solution: out.u,
        layout: global.layout,
        solution_profile: up,
        operator_profile: kp,
        load_profile: fp,
        assembly_ms,
        solve_ms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_params_of_rank_one_train() {
        // d = 2, one subdomain bit and one component bit
        let ranks = [1, 1, 1, 1, 1, 1, 1];
        assert_eq!(level_params(&ranks, 2, 2), 4 + 4 + 4);
    }

    #[test]
    fn two_square_run_reports_consistent_row() {
        let case = BenchmarkCase::builtin("sen").unwrap();
        let opts = RunOptions::from_config(&case.config).unwrap();
        let reference = Reference::compute(&case, 4).unwrap();
        let out = run_case(&case, 2, &opts, &reference).unwrap();
        let r = &out.report;
        assert_eq!(r.dofs, 64);
        assert!(r.converged && out.residual <= opts.eps);
        assert!(r.energy_error > 0.0 && r.energy_error < 1.0);
        assert_eq!(r.rd, out.solution_profile.max_rank);
        assert_eq!(r.nd, out.solution.cores().iter().map(|c| c.data().len()).sum::<usize>());
        assert!(r.storage_k > 0 && r.storage_f > 0);
    }
}
