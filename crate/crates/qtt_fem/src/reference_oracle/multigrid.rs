//! Geometric multigrid on nested dyadic meshes.
//!
//! Level `l` has `2^l` elements per subdomain side, so every coarse node is a
//! fine node and bilinear prolongation is exact for coarse fields. The
//! smoother is a degree-2 Chebyshev iteration on the Jacobi-scaled operator;
//! the coarsest level is factorized once. One V-cycle is used as the
//! preconditioner of a conjugate gradient iteration.

use super::{rel_residual, ConformingMesh, OracleError, ReferenceSolution};
use crate::domain_coupling::DomainTopology;
use crate::elasticity_fem::{MaterialModel, Quadrature};
use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Llt;
use faer::Mat;

/// Multigrid settings.
#[derive(Debug, Clone, PartialEq)]
pub struct MultigridConfig {
    /// Relative residual at which conjugate gradients stops.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Level of the coarsest mesh (`2^coarse_level` elements per side).
    pub coarse_level: usize,
    pub smoothing_degree: usize,
    pub quadrature: Quadrature,
}

impl Default for MultigridConfig {
    fn default() -> Self {
        MultigridConfig {
            tolerance: 1e-10,
            max_iterations: 500,
            coarse_level: 1,
            smoothing_degree: 2,
            quadrature: Quadrature::default(),
        }
    }
}

/// Iteration record of a multigrid solve.
#[derive(Debug, Clone, PartialEq)]
pub struct MultigridReport {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

struct Level {
    mesh: ConformingMesh,
    inv_diag: Vec<f64>,
    lambda_max: f64,
}

/// The hierarchy of nested meshes from the coarsest to the finest.
pub struct Hierarchy {
    levels: Vec<Level>,
    coarse: Llt<usize, f64>,
    degree: usize,
}

impl Hierarchy {
    pub fn new(
        topo: &DomainTopology,
        material: &MaterialModel,
        level: usize,
        cfg: &MultigridConfig,
    ) -> Result<Self, OracleError> {
        if cfg.coarse_level > level {
            return Err(OracleError::Nesting(format!(
                "coarse level {} is finer than target level {level}",
                cfg.coarse_level
            )));
        }
        let mut levels = Vec::new();
        for l in cfg.coarse_level..=level {
            let mesh = ConformingMesh::new(topo, 1 << l, material, cfg.quadrature)?;
            let inv_diag: Vec<f64> = mesh.diagonal().iter().map(|d| 1.0 / d).collect();
            let lambda_max = if l > cfg.coarse_level { estimate_lambda_max(&mesh, &inv_diag) } else { 1.0 };
            levels.push(Level { mesh, inv_diag, lambda_max });
        }
        let coarse_mesh = &levels[0].mesh;
        coarse_mesh.check_constraints()?;
        let coarse = coarse_mesh
            .sparse(true)?
            .sp_cholesky(faer::Side::Lower)
            .map_err(|e| OracleError::Singular(format!("coarse stiffness is not positive definite ({e:?})")))?;
        Ok(Hierarchy { levels, coarse, degree: cfg.smoothing_degree.max(1) })
    }

    pub fn finest(&self) -> &ConformingMesh {
        &self.levels.last().expect("hierarchy has a level").mesh
    }

    fn chebyshev(&self, l: usize, b: &[f64], x: &mut [f64]) {
        let lv = &self.levels[l];
        let hi = 1.1 * lv.lambda_max;
        let lo = 0.1 * lv.lambda_max;
        let theta = 0.5 * (hi + lo);
        let delta = 0.5 * (hi - lo);
        let sigma = theta / delta;
        let mut rho = 1.0 / sigma;
        let n = b.len();
        let mut ax = vec![0.0; n];
        lv.mesh.apply_constrained(x, &mut ax);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let mut d: Vec<f64> = r.iter().zip(&lv.inv_diag).map(|(r, w)| r * w / theta).collect();
        for k in 0..self.degree {
            for (xi, di) in x.iter_mut().zip(&d) {
                *xi += di;
            }
            if k + 1 == self.degree {
                break;
            }
            lv.mesh.apply_constrained(&d, &mut ax);
            for (ri, ai) in r.iter_mut().zip(&ax) {
                *ri -= ai;
            }
            let rho_new = 1.0 / (2.0 * sigma - rho);
            for ((di, ri), w) in d.iter_mut().zip(&r).zip(&lv.inv_diag) {
                *di = rho_new * rho * *di + 2.0 * rho_new / delta * ri * w;
            }
            rho = rho_new;
        }
    }

    fn vcycle(&self, l: usize, b: &[f64]) -> Vec<f64> {
        if l == 0 {
            let rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
            let x = self.coarse.solve(&rhs);
            return (0..b.len()).map(|i| x[(i, 0)]).collect();
        }
        let mesh = &self.levels[l].mesh;
        let mut x = vec![0.0; b.len()];
        self.chebyshev(l, b, &mut x);
        let mut ax = vec![0.0; b.len()];
        mesh.apply_constrained(&x, &mut ax);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let coarse = &self.levels[l - 1].mesh;
        let rc = restrict(coarse, mesh, &r);
        let ec = self.vcycle(l - 1, &rc);
        let ef = prolong(coarse, mesh, &ec);
        for (xi, ei) in x.iter_mut().zip(&ef) {
            *xi += ei;
        }
        self.chebyshev(l, b, &mut x);
        x
    }

    /// Preconditioned conjugate gradients on the finest level.
    pub fn solve(&self, f: &[f64], tol: f64, max_iterations: usize) -> (Vec<f64>, MultigridReport) {
        let top = self.levels.len() - 1;
        let mesh = self.finest();
        let n = f.len();
        let nf = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut x = vec![0.0; n];
        if nf == 0.0 {
            return (x, MultigridReport { iterations: 0, residual: 0.0, converged: true });
        }
        let mut r = f.to_vec();
        let mut z = self.vcycle(top, &r);
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let mut ap = vec![0.0; n];
        let mut res = 1.0;
        for it in 1..=max_iterations {
            mesh.apply_constrained(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            res = r.iter().map(|v| v * v).sum::<f64>().sqrt() / nf;
            if res <= tol {
                return (x, MultigridReport { iterations: it, residual: res, converged: true });
            }
            z = self.vcycle(top, &r);
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        (x, MultigridReport { iterations: max_iterations, residual: res, converged: false })
    }
}

/// Largest eigenvalue of `D⁻¹ A` by power iteration.
fn estimate_lambda_max(mesh: &ConformingMesh, inv_diag: &[f64]) -> f64 {
    let n = inv_diag.len();
    // deterministic start with components in every direction
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 13) as f64 / 13.0).collect();
    let mut av = vec![0.0; n];
    let mut lambda = 1.0;
    for _ in 0..30 {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        mesh.apply_constrained(&v, &mut av);
        for (a, w) in av.iter_mut().zip(inv_diag) {
            *a *= w;
        }
        lambda = v.iter().zip(&av).map(|(a, b)| a * b).sum::<f64>();
        std::mem::swap(&mut v, &mut av);
    }
    // the Rayleigh quotient underestimates; the smoother widens it by 10 %
    lambda.max(v.iter().map(|x| x * x).sum::<f64>().sqrt())
}

/// Bilinear prolongation from `coarse` (`n`) to `fine` (`2n`), restricted
/// to free dofs on both levels.
pub fn prolong(coarse: &ConformingMesh, fine: &ConformingMesh, xc: &[f64]) -> Vec<f64> {
    let mut xc = xc.to_vec();
    coarse.zero_fixed(&mut xc);
    let mut xf = vec![0.0; fine.dofs()];
    let nf = fine.n + 1;
    for m in 0..fine.subdomains.len() {
        for j in 0..nf {
            for i in 0..nf {
                let node = fine.node(m, i, j);
                if fine.owner[node] as usize != m {
                    continue;
                }
                for_each_parent(i, j, |ic, jc, w| {
                    let cn = coarse.node(m, ic, jc);
                    xf[2 * node] += w * xc[2 * cn];
                    xf[2 * node + 1] += w * xc[2 * cn + 1];
                });
            }
        }
    }
    fine.zero_fixed(&mut xf);
    xf
}

/// Transpose of [`prolong`].
pub fn restrict(coarse: &ConformingMesh, fine: &ConformingMesh, rf: &[f64]) -> Vec<f64> {
    let mut rf = rf.to_vec();
    fine.zero_fixed(&mut rf);
    let mut rc = vec![0.0; coarse.dofs()];
    let nf = fine.n + 1;
    for m in 0..fine.subdomains.len() {
        for j in 0..nf {
            for i in 0..nf {
                let node = fine.node(m, i, j);
                if fine.owner[node] as usize != m {
                    continue;
                }
                for_each_parent(i, j, |ic, jc, w| {
                    let cn = coarse.node(m, ic, jc);
                    rc[2 * cn] += w * rf[2 * node];
                    rc[2 * cn + 1] += w * rf[2 * node + 1];
                });
            }
        }
    }
    coarse.zero_fixed(&mut rc);
    rc
}

fn for_each_parent(i: usize, j: usize, mut f: impl FnMut(usize, usize, f64)) {
    let split = |k: usize| -> [(usize, f64); 2] {
        if k % 2 == 0 {
            [(k / 2, 1.0), (k / 2, 0.0)]
        } else {
            [(k / 2, 0.5), (k / 2 + 1, 0.5)]
        }
    };
    for (ic, wi) in split(i) {
        for (jc, wj) in split(j) {
            if wi * wj != 0.0 {
                f(ic, jc, wi * wj);
            }
        }
    }
}

/// Reference solution on the dyadic mesh with `2^level` elements per
/// subdomain side.
pub fn reference_solve(
    topo: &DomainTopology,
    material: &MaterialModel,
    level: usize,
    cfg: &MultigridConfig,
) -> Result<(ReferenceSolution, MultigridReport), OracleError> {
    let coarse_level = cfg.coarse_level.min(level);
    let cfg = MultigridConfig { coarse_level, ..cfg.clone() };
    let h = Hierarchy::new(topo, material, level, &cfg)?;
    let f = h.finest().rhs();
    let (u, report) = h.solve(&f, cfg.tolerance, cfg.max_iterations);
    let mut levels = h.levels;
    let mesh = levels.pop().expect("hierarchy has a level").mesh;
    let residual = rel_residual(&mesh, &u, &f);
    if !report.converged {
        return Err(OracleError::Singular(format!(
            "multigrid stalled at relative residual {:.3e} after {} iterations",
            report.residual, report.iterations
        )));
    }
    Ok((ReferenceSolution { mesh, u, residual }, report))
}
