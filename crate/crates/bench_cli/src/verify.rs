//! Entry-by-entry comparison of the tensor system with the conforming one.
//!
//! The coupled operator acts on one copy of every interface node per
//! subdomain. Extending a conforming vector to all copies and reading any
//! copy of the result must give the conforming stiffness times that vector;
//! the load must agree the same way, and solving the coupled system must
//! give the conforming solution on every copy. The operator is extracted
//! from its tensor train without a dense buffer, so these checks run on the
//! full benchmark systems.

use crate::cases::BenchmarkCase;
use crate::pipeline::RunOptions;
use crate::BenchError;
use qtt_fem::domain_coupling::{
    apply_dirichlet, build_boundary_mask, concat_blocks, connectivity_table, propagate_masks, ConnectivityOperator,
    DomainTopology, GlobalLayout,
};
use qtt_fem::elasticity_fem::ElementOptions;
use qtt_fem::qtt_assembly::{assemble_subdomain, AssemblyOptions};
use qtt_fem::qtt_indexing::{GridIndexMap, Ordering};
use qtt_fem::reference_oracle::{conforming_solve, solve_triplets, ConformingMesh};
use qtt_fem::tt_core::{tt_round, tt_sub, TensorTrain, TtMatrix};
use std::collections::HashMap;

/// Deliberate defects for checking that verification catches them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mutation {
    #[default]
    None,
    /// Remove one coincident node pair from the first connectivity matrix.
    /// The pair lies in the middle of the shared side.
    DropInterfacePair,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub case: String,
    pub d: usize,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn summary(&self) -> String {
        let mut s = format!("verify {} d={}\n", self.case, self.d);
        for c in &self.checks {
            s += &format!(
                "  {:<9} {} {:.3e} (tolerance {:.0e}){}\n",
                c.name,
                if c.passed { "pass" } else { "FAIL" },
                c.value,
                c.tolerance,
                if c.detail.is_empty() { String::new() } else { format!(": {}", c.detail) }
            );
        }
        s
    }
}

/// Relative Frobenius tolerance of the operator and load comparisons.
pub const OPERATOR_TOL: f64 = 1e-10;
/// Relative L² tolerance of the solution comparison.
pub const SOLUTION_TOL: f64 = 1e-7;
/// Blocks of the extracted operator below this fraction of its norm are
/// skipped; they can only hold rounding noise of the assembly.
const DROP_TOL: f64 = 1e-13;

/// Where each global index of the tensor layout lives on the conforming mesh.
struct CopyMap {
    /// Conforming dof of each global index (`None` for padded subdomains).
    dof: Vec<Option<usize>>,
    /// `(c, m, i, j)` of each global index.
    coords: Vec<(usize, usize, usize, usize)>,
    /// Number of copies of each conforming node.
    copies: Vec<usize>,
}

fn copy_map(layout: &GlobalLayout, mesh: &ConformingMesh) -> CopyMap {
    let side = 1usize << layout.d;
    let len = layout.len();
    let mut dof = vec![None; len];
    let mut coords = vec![(0, 0, 0, 0); len];
    let mut copies = vec![0; mesh.num_nodes()];
    for m in 0..layout.q_padded() {
        for j in 0..side {
            for i in 0..side {
                for c in 0..2 {
                    let g = layout.index(c, m, i, j);
                    coords[g] = (c, m, i, j);
                    if m < layout.q {
                        let node = mesh.node(m, i, j);
                        dof[g] = Some(2 * node + c);
                        if c == 0 {
                            copies[node] += 1;
                        }
                    }
                }
            }
        }
    }
    CopyMap { dof, coords, copies }
}

fn describe(map: &CopyMap, g: usize) -> String {
    let (c, m, i, j) = map.coords[g];
    let shared = map.dof[g].is_some_and(|k| map.copies[k / 2] > 1);
    let kind = if shared { "interface mismatch" } else { "mismatch" };
    format!("{kind} at component {c}, subdomain {m}, node ({i}, {j})")
}

fn drop_pair(
    conn: &mut [Vec<Option<ConnectivityOperator>>],
    topo: &DomainTopology,
    ordering: Ordering,
) -> Result<String, BenchError> {
    let q = topo.q();
    for m in 0..q {
        for p in (m + 1)..q {
            let Some(op) = conn[m][p].as_mut() else { continue };
            let pairs = topo.node_pairs(m, p);
            // a pair in the middle of the side, away from constrained corners
            let Some(&((i, j), (k, l))) = pairs.get(pairs.len() / 2) else { continue };
            let grid = GridIndexMap::new(topo.d()).map_err(|e| BenchError::Argument(e.to_string()))?;
            let r = grid.index(i, j, ordering).map_err(|e| BenchError::Argument(e.to_string()))?;
            let c = grid.index(k, l, ordering).map_err(|e| BenchError::Argument(e.to_string()))?;
            let bits = 2 * topo.d();
            let factors: Vec<Vec<f64>> = (0..bits)
                .map(|b| {
                    let mut f = vec![0.0; 4];
                    f[((r >> b) & 1) * 2 + ((c >> b) & 1)] = 1.0;
                    f
                })
                .collect();
            let unit = TtMatrix::rank_one(&factors, &vec![2; bits], &vec![2; bits])?;
            op.pi = tt_round(&tt_sub(&op.pi, &unit)?, 1e-14)?;
            op.nnz -= 1;
            return Ok(format!("dropped pair ({i}, {j}) of subdomain {m} ~ ({k}, {l}) of subdomain {p}"));
        }
    }
    Err(BenchError::Argument("the case has no interface to corrupt".into()))
}

/// Run the operator, load and solution comparisons of `case` at level `d`.
pub fn verify(case: &BenchmarkCase, d: usize, opts: &RunOptions, mutation: Mutation) -> Result<VerifyReport, BenchError> {
    if !(1..=5).contains(&d) {
        return Err(BenchError::Argument(format!("verification runs at levels 1 to 5, got {d}")));
    }
    let topo = case.topology(d)?;
    let material = case.config.material()?;
    let assembly = AssemblyOptions {
        element: ElementOptions { quadrature: opts.quadrature, determinant: opts.determinant },
        ordering: opts.ordering,
        eps: opts.assembly_eps,
    };
    let systems = topo
        .subdomains
        .iter()
        .map(|s| assemble_subdomain(s, &material, assembly))
        .collect::<Result<Vec<_>, _>>()
        .map_err(qtt_fem::domain_coupling::CouplingError::from)?;
    let mut conn = connectivity_table(&topo, opts.ordering)?;
    let mut checks = Vec::new();
    if mutation == Mutation::DropInterfacePair {
        let what = drop_pair(&mut conn, &topo, opts.ordering)?;
        checks.push(Check { name: "mutation", value: 0.0, tolerance: 0.0, passed: true, detail: what });
    }
    let global = concat_blocks(&systems, &conn, opts.gamma, opts.assembly_eps)?;
    let masks = topo
        .subdomains
        .iter()
        .map(|s| build_boundary_mask(s, opts.ordering))
        .collect::<Result<Vec<_>, _>>()?;
    let masks = propagate_masks(&masks, &conn)?;
    let global = apply_dirichlet(global, &masks)?;
    let (k, f) = global.to_tt()?;
    let layout = global.layout;
    let len = layout.len();

    let mesh = ConformingMesh::new(&topo, (1 << d) - 1, &material, opts.quadrature)?;
    let map = copy_map(&layout, &mesh);
    let fixed = |dof: usize| mesh.fixed[dof / 2][dof % 2];
    let trip = k.to_triplets(DROP_TOL);

    // operator: reduce columns over copies, keep every copy row
    let mut reduced: HashMap<(usize, usize), f64> = HashMap::new();
    let mut constraint_err = 0.0;
    for &(r, c, v) in &trip {
        match (map.dof[r], map.dof[c]) {
            (Some(a), Some(b)) if !fixed(a) && !fixed(b) => *reduced.entry((r, b)).or_insert(0.0) += v,
            (Some(a), _) if fixed(a) => {
                let want = if r == c { global.gamma } else { 0.0 };
                constraint_err += ((v - want) / global.gamma).powi(2);
            }
            (Some(_), Some(_)) => constraint_err += (v / global.gamma).powi(2),
            _ => {}
        }
    }
    let mut conf: HashMap<(usize, usize), f64> = HashMap::new();
    for (a, b, v) in mesh.stiffness_triplets() {
        if !fixed(a) && !fixed(b) {
            *conf.entry((a, b)).or_insert(0.0) += v;
        }
    }
    let mut rows_of_dof: Vec<Vec<usize>> = vec![Vec::new(); mesh.dofs()];
    for g in 0..len {
        if let Some(a) = map.dof[g] {
            rows_of_dof[a].push(g);
        }
    }
    let mut diff2 = 0.0;
    let mut norm2 = 0.0;
    let mut row_err: HashMap<usize, f64> = HashMap::new();
    for (&(a, b), &v) in &conf {
        for &g in &rows_of_dof[a] {
            let got = reduced.remove(&(g, b)).unwrap_or(0.0);
            diff2 += (got - v).powi(2);
            norm2 += v * v;
            *row_err.entry(g).or_insert(0.0) += (got - v).powi(2);
        }
    }
    for (&(g, _), &v) in &reduced {
        // entries outside the conforming pattern
        diff2 += v * v;
        *row_err.entry(g).or_insert(0.0) += v * v;
    }
    let rel = (diff2.sqrt() / norm2.sqrt()).max(constraint_err.sqrt());
    let worst = row_err.iter().max_by(|a, b| a.1.total_cmp(b.1)).map(|(&g, _)| g);
    let passed = rel <= OPERATOR_TOL;
    checks.push(Check {
        name: "operator",
        value: rel,
        tolerance: OPERATOR_TOL,
        passed,
        detail: match (passed, worst) {
            (false, Some(g)) => describe(&map, g),
            _ => String::new(),
        },
    });

    // load
    let fd = f.to_dense()?;
    let rhs = mesh.rhs();
    let (mut ld, mut ln, mut lworst) = (0.0, 0.0, (0.0, 0));
    for g in 0..len {
        let want = map.dof[g].map_or(0.0, |a| rhs[a]);
        let e = (fd[g] - want).powi(2);
        ld += e;
        ln += want * want;
        if e > lworst.0 {
            lworst = (e, g);
        }
    }
    let lrel = (ld / ln.max(f64::MIN_POSITIVE)).sqrt();
    let passed = lrel <= OPERATOR_TOL;
    checks.push(Check {
        name: "load",
        value: lrel,
        tolerance: OPERATOR_TOL,
        passed,
        detail: if passed { String::new() } else { describe(&map, lworst.1) },
    });

    // solution
    let u = solve_triplets(len, &trip, &fd)?;
    let reference = conforming_solve(&topo, &material, (1 << d) - 1, opts.quadrature)?;
    let (mut sd, mut sn, mut sworst) = (0.0, 0.0, (0.0, 0));
    for g in 0..len {
        let want = map.dof[g].map_or(0.0, |a| reference.u[a]);
        let e = (u[g] - want).powi(2);
        sd += e;
        sn += want * want;
        if e > sworst.0 {
            sworst = (e, g);
        }
    }
    let srel = (sd / sn.max(f64::MIN_POSITIVE)).sqrt();
    let passed = srel <= SOLUTION_TOL;
    checks.push(Check {
        name: "solution",
        value: srel,
        tolerance: SOLUTION_TOL,
        passed,
        detail: if passed { String::new() } else { describe(&map, sworst.1) },
    });
    Ok(VerifyReport { case: case.name.clone(), d, checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use qtt_fem::domain_coupling::config::ProblemConfig;

    fn opts(case: &BenchmarkCase) -> RunOptions {
        RunOptions::from_config(&case.config).unwrap()
    }

    #[test]
    fn lshape_passes_at_level_two() {
        let case = BenchmarkCase::builtin("lshape").unwrap();
        let r = verify(&case, 2, &opts(&case), Mutation::None).unwrap();
        assert!(r.passed(), "{}", r.summary());
    }

    #[test]
    fn dropped_interface_pair_is_reported() {
        for name in ["cantilever", "sen", "lshape"] {
            let case = BenchmarkCase::builtin(name).unwrap();
            let r = verify(&case, 2, &opts(&case), Mutation::DropInterfacePair).unwrap();
            assert!(!r.passed());
            let op = r.checks.iter().find(|c| c.name == "operator").unwrap();
            assert!(!op.passed, "{name}");
            assert!(op.detail.starts_with("interface mismatch"), "{name}: {}", op.detail);
        }
    }

    #[test]
    fn clamped_square_under_body_force_passes() {
        let text = r#"
name = "square"
d = 3
[material]
youngs_modulus = 10.0
poisson_ratio = 0.3
[[subdomain]]
corners = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
left = "clamped"
body_force = [0.0, -1.0]
"#;
        let case = BenchmarkCase::from_config(ProblemConfig::parse(text).unwrap());
        let r = verify(&case, 3, &opts(&case), Mutation::None).unwrap();
        assert!(r.passed(), "{}", r.summary());
    }

    #[test]
    fn level_out_of_range_is_rejected() {
        let case = BenchmarkCase::builtin("sen").unwrap();
        assert!(verify(&case, 7, &opts(&case), Mutation::None).is_err());
    }
}
