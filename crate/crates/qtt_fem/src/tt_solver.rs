//! Linear systems `K u = f` with operator, load and solution in TT format.
//!
//! The solver is a one-site alternating scheme with residual-based basis
//! enrichment (AMEn). Each sweep runs left to right over the cores. At core
//! `k` the solution is projected onto the orthonormal interfaces of the other
//! cores, the small local system is solved (dense LU or preconditioned GMRES)
//! and the new core is truncated by SVD. Before moving on, the basis is
//! enriched with a few directions of the current residual, which is tracked
//! by a second low-rank train `z`. Between sweeps both trains are
//! right-orthogonalized again.
//!
//! Local problems are Galerkin projections `Xᵀ K X y = Xᵀ f`, which does not
//! require `K` to be symmetric.

use crate::linalg;
use crate::tt_core::{rank_profile, tt_matvec, tt_norm, tt_sub, Core, TensorTrain, TtError, TtMatrix, TtVector};
use faer::linalg::solvers::Solve;
use faer::Mat;
use rand::SeedableRng;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error(transparent)]
    Tt(#[from] TtError),
}

/// How local systems are solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LocalSolver {
    /// Dense LU of the assembled local matrix.
    Direct,
    /// Restarted GMRES with a block-Jacobi preconditioner.
    Iterative,
    /// Direct up to [`SolverConfig::dense_limit`] unknowns, iterative above.
    #[default]
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Target relative residual `‖K u − f‖ / ‖f‖`.
    pub epsilon: f64,
    pub max_sweeps: usize,
    /// Residual directions added to the basis at every core.
    pub enrichment_rank: usize,
    pub local: LocalSolver,
    /// Largest local system solved densely under [`LocalSolver::Auto`].
    pub dense_limit: usize,
    /// Optional cap on the solution ranks.
    pub max_rank: Option<usize>,
    pub seed: u64,
    /// Evaluate the true residual after every sweep (costly for large ranks).
    pub track_residual: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            epsilon: 1e-6,
            max_sweeps: 40,
            enrichment_rank: 4,
            local: LocalSolver::Auto,
            dense_limit: 1500,
            max_rank: None,
            seed: 0,
            track_residual: false,
        }
    }
}

impl SolverConfig {
    pub fn with_epsilon(epsilon: f64) -> Self {
        SolverConfig { epsilon, ..Default::default() }
    }

    fn validate(&self) -> Result<(), SolverError> {
        if !(self.epsilon > 0.0) {
            return Err(SolverError::Argument(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_sweeps == 0 {
            return Err(SolverError::Argument("max_sweeps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub u: TtVector,
    /// Final `‖K u − f‖ / ‖f‖`.
    pub residual: f64,
    pub sweeps: usize,
    /// Solution bond dimensions after every sweep.
    pub rank_history: Vec<Vec<usize>>,
    /// Largest relative local residual seen during every sweep, measured
    /// before each core update.
    pub local_residuals: Vec<f64>,
    /// True relative residual after every sweep, when tracked.
    pub residual_history: Vec<f64>,
    pub wall_time: Duration,
    pub converged: bool,
}

/// Relative residual `‖K u − f‖ / ‖f‖`, exact up to floating point.
///
/// The difference is formed as a train and its norm is taken through
/// orthogonalization, so no cancellation occurs. `f = 0` gives the absolute
/// norm `‖K u‖`, and `0` when that vanishes too.
pub fn residual(k: &TtMatrix, u: &TtVector, f: &TtVector) -> Result<f64, SolverError> {
    let r = tt_sub(&tt_matvec(k, u)?, f)?;
    let nr = tt_norm(&r);
    let nf = tt_norm(f);
    Ok(if nf > 0.0 { nr / nf } else { nr })
}

/// Operator core with the permutations used by the contractions.
struct OpCore {
    ra0: usize,
    n: usize,
    ra1: usize,
    /// `(a, i, j, b)` in storage order: `a + ra0 (i + n (j + n b))`.
    raw: Vec<f64>,
    /// `[(a + ra0 j), (i + n b)]`, a `(ra0 n) × (n ra1)` matrix.
    hat: Vec<f64>,
    /// `[(j + n b), (a + ra0 i)]`, a `(n ra1) × (ra0 n)` matrix.
    check: Vec<f64>,
}

impl OpCore {
    fn new(c: &Core, n: usize) -> Self {
        let (ra0, ra1) = (c.r0, c.r1);
        let mut hat = vec![0.0; ra0 * n * n * ra1];
        let mut check = vec![0.0; ra0 * n * n * ra1];
        let (rows_h, rows_c) = (ra0 * n, n * ra1);
        for b in 0..ra1 {
            for j in 0..n {
                for i in 0..n {
                    for a in 0..ra0 {
                        let v = c.at(a, i + n * j, b);
                        hat[(a + ra0 * j) + rows_h * (i + n * b)] = v;
                        check[(j + n * b) + rows_c * (a + ra0 * i)] = v;
                    }
                }
            }
        }
        OpCore { ra0, n, ra1, raw: c.data.clone(), hat, check }
    }
}

/// `(t0, ra0, x0)` left interface times a core pair gives `(t1, ra1, x1)`.
fn left_op(phi: &[f64], test: &Core, a: &OpCore, x: &Core) -> Vec<f64> {
    let (t0, t1, x0, x1, n) = (test.r0, test.r1, x.r0, x.r1, a.n);
    // (t0 ra0) × x0 · x0 × (n x1) → (t0, ra0, j, x1)
    let s1 = linalg::gemm(phi, t0 * a.ra0, x0, false, &x.data, x0, n * x1, false);
    let s2 = contract_hat(&s1, t0, a, x1);
    // (t1 × (t0 i)) · ((t0 i) × (ra1 x1))
    linalg::gemm(&test.data, t0 * n, t1, true, &s2, t0 * n, a.ra1 * x1, false)
}

/// `(t0, ra0, j, x1)` contracted with the operator over `(ra0, j)`, giving
/// `(t0, i, ra1, x1)`.
fn contract_hat(s1: &[f64], t0: usize, a: &OpCore, x1: usize) -> Vec<f64> {
    let n = a.n;
    let blk_in = t0 * a.ra0 * n;
    let blk_out = t0 * n * a.ra1;
    let mut out = vec![0.0; blk_out * x1];
    for beta in 0..x1 {
        let r = linalg::gemm(&s1[beta * blk_in..(beta + 1) * blk_in], t0, a.ra0 * n, false, &a.hat, a.ra0 * n, n * a.ra1, false);
        out[beta * blk_out..(beta + 1) * blk_out].copy_from_slice(&r);
    }
    out
}

/// `(t1, ra1, x1)` right interface times a core pair gives `(t0, ra0, x0)`.
fn right_op(phi: &[f64], test: &Core, a: &OpCore, x: &Core) -> Vec<f64> {
    let (t0, t1, x0, x1, n) = (test.r0, test.r1, x.r0, x.r1, a.n);
    let ra1 = a.ra1;
    // (x0 j) × x1 · x1 × (t1 ra1) → (x0, j, t1, b)
    let s1 = linalg::gemm(&x.data, x0 * n, x1, false, phi, t1 * ra1, x1, true);
    // permute to [(x0 + x0 t1), (j + n b)]
    let mut s1p = vec![0.0; s1.len()];
    for b in 0..ra1 {
        for t in 0..t1 {
            for j in 0..n {
                for al in 0..x0 {
                    s1p[(al + x0 * t) + x0 * t1 * (j + n * b)] = s1[al + x0 * (j + n * (t + t1 * b))];
                }
            }
        }
    }
    // → (x0, t1, a, i)
    let s2 = linalg::gemm(&s1p, x0 * t1, n * ra1, false, &a.check, n * ra1, a.ra0 * n, false);
    // permute to [(i + n t1), (a + ra0 x0)]
    let ra0 = a.ra0;
    let mut s2p = vec![0.0; s2.len()];
    for i in 0..n {
        for aa in 0..ra0 {
            for t in 0..t1 {
                for al in 0..x0 {
                    s2p[(i + n * t) + n * t1 * (aa + ra0 * al)] = s2[(al + x0 * t) + x0 * t1 * (aa + ra0 * i)];
                }
            }
        }
    }
    // t0 × (i t1) · (i t1) × (ra0 x0)
    linalg::gemm(&test.data, t0, n * t1, false, &s2p, n * t1, ra0 * x0, false)
}

/// `(t0, rf0)` left interface with a vector core gives `(t1, rf1)`.
fn left_vec(psi: &[f64], test: &Core, f: &Core) -> Vec<f64> {
    let (t0, t1, n) = (test.r0, test.r1, test.n);
    let s1 = linalg::gemm(psi, t0, f.r0, false, &f.data, f.r0, n * f.r1, false);
    linalg::gemm(&test.data, t0 * n, t1, true, &s1, t0 * n, f.r1, false)
}

/// `(t1, rf1)` right interface with a vector core gives `(t0, rf0)`.
fn right_vec(psi: &[f64], test: &Core, f: &Core) -> Vec<f64> {
    let (t0, t1, n) = (test.r0, test.r1, test.n);
    let s1 = linalg::gemm(&f.data, f.r0 * n, f.r1, false, psi, t1, f.r1, true);
    // s1: (rf0, i, t1) as rf0 × (i t1)
    linalg::gemm(&test.data, t0, n * t1, false, &s1, f.r0, n * t1, true)
}

/// Local operator `Φ_L ⊗ A ⊗ Φ_R` applied to `y` of shape `(x0, n, x1)`;
/// result `(t0, n, t1)`.
fn apply_local(phil: &[f64], a: &OpCore, phir: &[f64], y: &[f64], dims: LocalDims) -> Vec<f64> {
    let LocalDims { t0, t1, x0, x1 } = dims;
    let n = a.n;
    let s1 = linalg::gemm(phil, t0 * a.ra0, x0, false, y, x0, n * x1, false);
    let s2 = contract_hat(&s1, t0, a, x1);
    linalg::gemm(&s2, t0 * n, a.ra1 * x1, false, phir, t1, a.ra1 * x1, true)
}

/// Projected load `(t0, n, t1)`.
fn project_rhs(psil: &[f64], f: &Core, psir: &[f64], t0: usize, t1: usize) -> Vec<f64> {
    let n = f.n;
    let s1 = linalg::gemm(psil, t0, f.r0, false, &f.data, f.r0, n * f.r1, false);
    linalg::gemm(&s1, t0 * n, f.r1, false, psir, t1, f.r1, true)
}

#[derive(Debug, Clone, Copy)]
struct LocalDims {
    t0: usize,
    t1: usize,
    x0: usize,
    x1: usize,
}

/// `P(α', α, i, j, b) = Σ_a Φ_L(α', a, α) A(a, i, j, b)`.
fn left_times_core(phil: &[f64], a: &OpCore, r0: usize) -> Vec<f64> {
    let ra0 = a.ra0;
    let mut p = vec![0.0; r0 * r0 * ra0];
    for al in 0..r0 {
        for aa in 0..ra0 {
            for ap in 0..r0 {
                p[(ap + r0 * al) + r0 * r0 * aa] = phil[ap + r0 * (aa + ra0 * al)];
            }
        }
    }
    let n = a.n;
    linalg::gemm(&p, r0 * r0, ra0, false, &a.raw, ra0, n * n * a.ra1, false)
}

/// Dense local matrix with rows `(α', i, β')` and columns `(α, j, β)`,
/// column-major.
fn dense_local(phil: &[f64], a: &OpCore, phir: &[f64], r0: usize, r1: usize) -> Vec<f64> {
    let n = a.n;
    let ra1 = a.ra1;
    let p = left_times_core(phil, a, r0);
    // Φ_R(β', b, β) → [b, (β' + r1 β)]
    let mut q = vec![0.0; ra1 * r1 * r1];
    for be in 0..r1 {
        for b in 0..ra1 {
            for bp in 0..r1 {
                q[b + ra1 * (bp + r1 * be)] = phir[bp + r1 * (b + ra1 * be)];
            }
        }
    }
    // (α', α, i, j, β', β)
    let g = linalg::gemm(&p, r0 * r0 * n * n, ra1, false, &q, ra1, r1 * r1, false);
    let nl = r0 * n * r1;
    let mut out = vec![0.0; nl * nl];
    for be in 0..r1 {
        for bp in 0..r1 {
            for j in 0..n {
                for i in 0..n {
                    for al in 0..r0 {
                        for ap in 0..r0 {
                            let v = g[ap + r0 * (al + r0 * (i + n * (j + n * (bp + r1 * be))))];
                            let row = ap + r0 * (i + n * bp);
                            let col = al + r0 * (j + n * be);
                            out[row + nl * col] = v;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Block-Jacobi preconditioner: for each right index `β`, the block of the
/// local matrix with `β' = β`, factorized by LU.
struct BlockJacobi {
    m: usize,
    blocks: Vec<faer::linalg::solvers::PartialPivLu<f64>>,
}

impl BlockJacobi {
    fn new(phil: &[f64], a: &OpCore, phir: &[f64], r0: usize, r1: usize) -> Self {
        let n = a.n;
        let ra1 = a.ra1;
        let p = left_times_core(phil, a, r0);
        let m = r0 * n;
        let rows = r0 * r0 * n * n;
        let mut blocks = Vec::with_capacity(r1);
        for be in 0..r1 {
            let w: Vec<f64> = (0..ra1).map(|b| phir[be + r1 * (b + ra1 * be)]).collect();
            let g = linalg::gemm(&p, rows, ra1, false, &w, ra1, 1, false);
            let mat = Mat::from_fn(m, m, |row, col| {
                let (ap, i) = (row % r0, row / r0);
                let (al, j) = (col % r0, col / r0);
                g[ap + r0 * (al + r0 * (i + n * j))]
            });
            blocks.push(mat.partial_piv_lu());
        }
        BlockJacobi { m, blocks }
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (be, lu) in self.blocks.iter().enumerate() {
            let rhs = Mat::from_fn(self.m, 1, |i, _| v[be * self.m + i]);
            let x = lu.solve(&rhs);
            for i in 0..self.m {
                let val = x[(i, 0)];
                out[be * self.m + i] = if val.is_finite() { val } else { v[be * self.m + i] };
            }
        }
        out
    }
}

/// Right-preconditioned restarted GMRES. Returns the solution and the
/// achieved relative residual.
fn gmres(
    apply: &dyn Fn(&[f64]) -> Vec<f64>,
    precond: &dyn Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    x0: &[f64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> (Vec<f64>, f64) {
    let nb = linalg::norm2(b);
    if nb == 0.0 {
        return (vec![0.0; b.len()], 0.0);
    }
    let mut x = x0.to_vec();
    let mut iters = 0;
    loop {
        let ax = apply(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = linalg::norm2(&r);
        if beta <= tol * nb || iters >= max_iter {
            return (x, beta / nb);
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|t| t / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::new();
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let (mut cs, mut sn) = (vec![0.0; restart], vec![0.0; restart]);
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k_done = 0;
        for k in 0..restart {
            iters += 1;
            let zk = precond(&v[k]);
            let mut w = apply(&zk);
            z.push(zk);
            for (i, vi) in v.iter().enumerate() {
                let hij = linalg::dot(&w, vi);
                h[i][k] = hij;
                for (wt, vt) in w.iter_mut().zip(vi) {
                    *wt -= hij * vt;
                }
            }
            let hn = linalg::norm2(&w);
            h[k + 1][k] = hn;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let den = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            if den == 0.0 {
                break;
            }
            cs[k] = h[k][k] / den;
            sn[k] = h[k + 1][k] / den;
            h[k][k] = den;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_done = k + 1;
            if g[k + 1].abs() <= tol * nb || hn == 0.0 || iters >= max_iter {
                break;
            }
            v.push(w.iter().map(|t| t / hn).collect());
        }
        // back substitution
        let mut y = vec![0.0; k_done];
        for i in (0..k_done).rev() {
            let mut s = g[i];
            for j in i + 1..k_done {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for (xt, zt) in x.iter_mut().zip(&z[j]) {
                *xt += yj * zt;
            }
        }
        if k_done == 0 {
            return (x, beta / nb);
        }
    }
}

fn local_solve(
    phil: &[f64],
    a: &OpCore,
    phir: &[f64],
    rhs: &[f64],
    x0: &[f64],
    r0: usize,
    r1: usize,
    tol: f64,
    cfg: &SolverConfig,
) -> Vec<f64> {
    let nl = r0 * a.n * r1;
    let direct = match cfg.local {
        LocalSolver::Direct => true,
        LocalSolver::Iterative => false,
        LocalSolver::Auto => nl <= cfg.dense_limit,
    };
    if direct {
        let m = dense_local(phil, a, phir, r0, r1);
        let y = linalg::lu_solve(&m, nl, rhs);
        if y.iter().all(|v| v.is_finite()) {
            return y;
        }
        return x0.to_vec();
    }
    let dims = LocalDims { t0: r0, t1: r1, x0: r0, x1: r1 };
    let apply = |v: &[f64]| apply_local(phil, a, phir, v, dims);
    let pre = BlockJacobi::new(phil, a, phir, r0, r1);
    let precond = |v: &[f64]| pre.apply(v);
    gmres(&apply, &precond, rhs, x0, tol, 40, 400).0
}

fn random_train(modes: &[usize], rank: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<Core> {
    let d = modes.len();
    let mut ranks = vec![1usize; d + 1];
    for l in 1..d {
        // keep ranks feasible near the ends
        let left: usize = modes[..l].iter().product::<usize>().min(rank);
        let right: usize = modes[l..].iter().product::<usize>().min(rank);
        ranks[l] = left.min(right).max(1);
    }
    let inner: Vec<usize> = ranks[1..d].to_vec();
    TtVector::random(modes, &inner, rng).into_cores()
}

/// Solve `K u = f` to relative residual `cfg.epsilon`.
///
/// Non-convergence within `max_sweeps` is reported through
/// [`SolveOutcome::converged`], not as an error.
pub fn solve(k: &TtMatrix, f: &TtVector, cfg: &SolverConfig) -> Result<SolveOutcome, SolverError> {
    cfg.validate()?;
    let start = Instant::now();
    let d = f.order();
    let modes = f.mode_sizes();
    if k.order() != d || k.row_modes() != modes.as_slice() || k.col_modes() != modes.as_slice() {
        return Err(SolverError::Argument("operator modes must match the load vector on both sides".into()));
    }
    let nf = tt_norm(f);
    if nf == 0.0 {
        return Ok(SolveOutcome {
            u: TtVector::zeros(&modes),
            residual: 0.0,
            sweeps: 0,
            rank_history: vec![vec![1; d + 1]],
            local_residuals: vec![],
            residual_history: vec![],
            wall_time: start.elapsed(),
            converged: true,
        });
    }
    let ops: Vec<OpCore> = k.cores().iter().zip(&modes).map(|(c, &n)| OpCore::new(c, n)).collect();
    let fc: Vec<Core> = f.cores().to_vec();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x = random_train(&modes, 2, &mut rng);
    let kick = cfg.enrichment_rank;
    let mut z = random_train(&modes, kick.max(1), &mut rng);
    let eps_core = cfg.epsilon / (d as f64).sqrt();

    let mut rank_history = Vec::new();
    let mut local_residuals = Vec::new();
    let mut residual_history = Vec::new();
    let mut converged = false;
    let mut final_res = f64::INFINITY;
    let mut sweeps = 0;
    // interfaces; index l holds the interface left of core l (left_*) or
    // right of core l − 1 (right_*)
    let one = vec![1.0];
    let mut xax_l: Vec<Vec<f64>> = vec![one.clone(); d + 1];
    let mut xax_r: Vec<Vec<f64>> = vec![one.clone(); d + 1];
    let mut xf_l: Vec<Vec<f64>> = vec![one.clone(); d + 1];
    let mut xf_r: Vec<Vec<f64>> = vec![one.clone(); d + 1];
    let mut zax_l: Vec<Vec<f64>> = vec![one.clone(); d + 1];
    let mut zax_r: Vec<Vec<f64>> = vec![one.clone(); d + 1];
    let mut zf_l: Vec<Vec<f64>> = vec![one.clone(); d + 1];
    let mut zf_r: Vec<Vec<f64>> = vec![one.clone(); d + 1];

    // scale of the solution interfaces stays O(1) because x is kept orthonormal
    let mut tol_scale = 1.0;
    while sweeps < cfg.max_sweeps {
        sweeps += 1;
        // right-orthogonalize x and z, rebuilding the right interfaces
        for l in (1..d).rev() {
            orth_right(&mut x, l);
            if kick > 0 {
                orth_right(&mut z, l);
            }
            xax_r[l] = right_op(&xax_r[l + 1], &x[l], &ops[l], &x[l]);
            xf_r[l] = right_vec(&xf_r[l + 1], &x[l], &fc[l]);
            if kick > 0 {
                zax_r[l] = right_op(&zax_r[l + 1], &z[l], &ops[l], &x[l]);
                zf_r[l] = right_vec(&zf_r[l + 1], &z[l], &fc[l]);
            }
        }
        let mut max_local: f64 = 0.0;
        for l in 0..d {
            let (r0, n, r1) = (x[l].r0, x[l].n, x[l].r1);
            let dims = LocalDims { t0: r0, t1: r1, x0: r0, x1: r1 };
            let rhs = project_rhs(&xf_l[l], &fc[l], &xf_r[l + 1], r0, r1);
            let ax = apply_local(&xax_l[l], &ops[l], &xax_r[l + 1], &x[l].data, dims);
            let nrhs = linalg::norm2(&rhs);
            let res_old = {
                let diff: Vec<f64> = ax.iter().zip(&rhs).map(|(p, q)| p - q).collect();
                if nrhs > 0.0 {
                    linalg::norm2(&diff) / nrhs
                } else {
                    linalg::norm2(&diff)
                }
            };
            max_local = max_local.max(res_old);
            let y = if res_old <= eps_core * tol_scale * 0.1 {
                x[l].data.clone()
            } else {
                local_solve(
                    &xax_l[l],
                    &ops[l],
                    &xax_r[l + 1],
                    &rhs,
                    &x[l].data,
                    r0,
                    r1,
                    eps_core * tol_scale * 0.1,
                    cfg,
                )
            };
            if l == d - 1 {
                x[l] = Core { r0, n, r1, data: y };
                break;
            }
            // truncate: smallest rank whose local residual stays within
            // max(tolerance, 2 × residual of the untruncated solution)
            let full = linalg::svd_truncated(&y, r0 * n, r1, 0.0, cfg.max_rank).map_err(TtError::from)?;
            let local_res = |yy: &[f64]| {
                let ay = apply_local(&xax_l[l], &ops[l], &xax_r[l + 1], yy, dims);
                let diff: Vec<f64> = ay.iter().zip(&rhs).map(|(p, q)| p - q).collect();
                linalg::norm2(&diff) / nrhs.max(f64::MIN_POSITIVE)
            };
            let target = (eps_core * tol_scale).max(2.0 * local_res(&y));
            let (mut lo, mut hi) = (1, full.rank);
            while lo < hi {
                let mid = (lo + hi) / 2;
                if local_res(&truncated(&full, mid, r0 * n, r1).2) <= target {
                    hi = mid;
                } else {
                    lo = mid + 1;
                }
            }
            let (u_keep, svt, y_trunc) = truncated(&full, lo, r0 * n, r1);
            let r = lo;
            // residual directions
            let (u_enr, width) = if kick > 0 {
                let zr0 = z[l].r0;
                let zr1 = z[l].r1;
                // z update: residual projected on both z interfaces
                let zd = LocalDims { t0: zr0, t1: zr1, x0: r0, x1: r1 };
                let zf = project_rhs(&zf_l[l], &fc[l], &zf_r[l + 1], zr0, zr1);
                let za = apply_local(&zax_l[l], &ops[l], &zax_r[l + 1], &y_trunc, zd);
                let zc: Vec<f64> = zf.iter().zip(&za).map(|(p, q)| p - q).collect();
                let zsvd = linalg::svd_truncated(&zc, zr0 * n, zr1, 0.0, Some(kick))
                    .map_err(TtError::from)?;
                let zk = zsvd.rank;
                let mut zdata = zsvd.u;
                // keep a fixed width so the rank of z does not collapse
                if zk < kick.min(zr0 * n) {
                    let target = kick.min(zr0 * n);
                    let extra = random_columns(zr0 * n, target - zk, &mut rng);
                    zdata.extend(extra);
                    let (q, _, kk) = linalg::qr_thin(&zdata, zr0 * n, target);
                    zdata = q;
                    z[l] = Core { r0: zr0, n, r1: kk, data: zdata };
                } else {
                    z[l] = Core { r0: zr0, n, r1: zk, data: zdata };
                }
                fix_next_rank(&mut z, l, &mut rng);
                // enrichment: residual left-projected by x, right-projected by z
                let ed = LocalDims { t0: r0, t1: zr1, x0: r0, x1: r1 };
                let ef = project_rhs(&xf_l[l], &fc[l], &zf_r[l + 1], r0, zr1);
                let ea = apply_local(&xax_l[l], &ops[l], &zax_r[l + 1], &y_trunc, ed);
                let enr: Vec<f64> = ef.iter().zip(&ea).map(|(p, q)| p - q).collect();
                let mut m = u_keep.clone();
                m.extend(enr);
                (m, r + zr1)
            } else {
                (u_keep.clone(), r)
            };
            let (q, rr, kq) = linalg::qr_thin(&u_enr, r0 * n, width);
            // carry = R · [S Vᵀ; 0]
            let mut padded = vec![0.0; width * r1];
            for c in 0..r1 {
                for i in 0..r {
                    padded[i + width * c] = svt[i + r * c];
                }
            }
            let carry = linalg::gemm(&rr, kq, width, false, &padded, width, r1, false);
            x[l] = Core { r0, n, r1: kq, data: q };
            let nx = &x[l + 1];
            let data = linalg::gemm(&carry, kq, r1, false, &nx.data, nx.r0, nx.n * nx.r1, false);
            x[l + 1] = Core { r0: kq, n: nx.n, r1: nx.r1, data };
            // left interfaces
            xax_l[l + 1] = left_op(&xax_l[l], &x[l], &ops[l], &x[l]);
            xf_l[l + 1] = left_vec(&xf_l[l], &x[l], &fc[l]);
            if kick > 0 {
                zax_l[l + 1] = left_op(&zax_l[l], &z[l], &ops[l], &x[l]);
                zf_l[l + 1] = left_vec(&zf_l[l], &z[l], &fc[l]);
            }
        }
        let u = TtVector::from_cores(x.clone())?;
        rank_history.push(u.ranks());
        local_residuals.push(max_local);
        // local residuals only estimate the global one, loosely so for
        // ill-conditioned operators; check once they come close
        let near = max_local <= 10.0 * cfg.epsilon;
        let check = near || cfg.track_residual || sweeps == cfg.max_sweeps;
        if check {
            let res = residual(k, &u, f)?;
            if cfg.track_residual {
                residual_history.push(res);
            }
            final_res = res;
            if res <= cfg.epsilon {
                converged = true;
                break;
            }
            if max_local <= cfg.epsilon {
                // local solves look converged but the global residual does not:
                // tighten the internal tolerances
                tol_scale *= 0.25;
            }
        }
    }
    let u = TtVector::from_cores(x)?;
    if !final_res.is_finite() {
        final_res = residual(k, &u, f)?;
    }
    Ok(SolveOutcome {
        u,
        residual: final_res,
        sweeps,
        rank_history,
        local_residuals,
        residual_history,
        wall_time: start.elapsed(),
        converged,
    })
}

/// Leading `r` terms of an SVD: `U_r`, `S_r V_rᵀ` and their product.
fn truncated(svd: &linalg::TruncatedSvd, r: usize, m: usize, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let u = svd.u[..m * r].to_vec();
    let k = svd.rank;
    let mut svt = vec![0.0; r * n];
    for c in 0..n {
        for i in 0..r {
            svt[i + r * c] = svd.s[i] * svd.vt[i + k * c];
        }
    }
    let y = linalg::gemm(&u, m, r, false, &svt, r, n, false);
    (u, svt, y)
}

fn random_columns(m: usize, k: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<f64> {
    use rand::Rng;
    (0..m * k).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// After replacing core `l` of `z` by one with a different right rank,
/// reshape core `l + 1` to match (its content is rebuilt later anyway).
fn fix_next_rank(z: &mut [Core], l: usize, rng: &mut rand_chacha::ChaCha8Rng) {
    let r = z[l].r1;
    let nx = &z[l + 1];
    if nx.r0 != r {
        let (n, r1) = (nx.n, nx.r1);
        z[l + 1] = Core { r0: r, n, r1, data: random_columns(r * n, r1, rng) };
    }
}

/// Move the non-orthogonal factor of core `l` into core `l − 1`.
fn orth_right(c: &mut [Core], l: usize) {
    let (r0, n, r1) = (c[l].r0, c[l].n, c[l].r1);
    let (lmat, qt, k) = linalg::lq_thin(&c[l].data, r0, n * r1);
    c[l] = Core { r0: k, n, r1, data: qt };
    let p = &c[l - 1];
    let data = linalg::gemm(&p.data, p.r0 * p.n, p.r1, false, &lmat, r0, k, false);
    c[l - 1] = Core { r0: p.r0, n: p.n, r1: k, data };
}

/// Storage and rank summary of a solve, for reports.
pub fn solution_profile(outcome: &SolveOutcome) -> crate::tt_core::RankProfile {
    rank_profile(&outcome.u)
}
