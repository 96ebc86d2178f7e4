//! Arithmetic, rounding and Kronecker-type products of tensor trains.

use super::{check_eps, Core, TensorTrain, TtError, TtMatrix, TtVector};
use crate::linalg;

fn mismatch(what: &str) -> TtError {
    TtError::ModeMismatch(what.to_string())
}

/// Right-orthogonalize cores `1..d` in place (QR sweep from the right).
///
/// Afterwards the Frobenius norm of the whole train equals the norm of the
/// first core.
pub(crate) fn right_orthogonalize(c: &mut [Core]) {
    for l in (1..c.len()).rev() {
        let (r0, n, r1) = (c[l].r0, c[l].n, c[l].r1);
        let (lmat, qt, k) = linalg::lq_thin(&c[l].data, r0, n * r1);
        c[l] = Core { r0: k, n, r1, data: qt };
        let p = &c[l - 1];
        let data = linalg::gemm(&p.data, p.r0 * p.n, p.r1, false, &lmat, r0, k, false);
        c[l - 1] = Core { r0: p.r0, n: p.n, r1: k, data };
    }
}

/// Left-orthogonalize cores `0..d-1` in place (QR sweep from the left).
pub(crate) fn left_orthogonalize(c: &mut [Core]) {
    let d = c.len();
    for l in 0..d.saturating_sub(1) {
        let (r0, n, r1) = (c[l].r0, c[l].n, c[l].r1);
        let (q, r, k) = linalg::qr_thin(&c[l].data, r0 * n, r1);
        c[l] = Core { r0, n, r1: k, data: q };
        let nx = &c[l + 1];
        let data = linalg::gemm(&r, k, r1, false, &nx.data, nx.r0, nx.n * nx.r1, false);
        c[l + 1] = Core { r0: k, n: nx.n, r1: nx.r1, data };
    }
}

fn round_cores(cores: &[Core], eps: f64, cap: Option<usize>) -> Result<Vec<Core>, TtError> {
    let d = cores.len();
    let mut c = cores.to_vec();
    if d == 1 {
        return Ok(c);
    }
    right_orthogonalize(&mut c);
    let nrm = linalg::norm2(&c[0].data);
    let delta = (eps / ((d - 1) as f64).sqrt()).max(super::ROUNDOFF_FLOOR) * nrm;
    for l in 0..d - 1 {
        let (r0, n, r1) = (c[l].r0, c[l].n, c[l].r1);
        let svd = linalg::svd_truncated(&c[l].data, r0 * n, r1, delta, cap)?;
        let r = svd.rank;
        c[l] = Core { r0, n, r1: r, data: svd.u };
        let mut carry = svd.vt;
        for col in 0..r1 {
            for (i, s) in svd.s.iter().enumerate() {
                carry[i + r * col] *= s;
            }
        }
        let nx = &c[l + 1];
        let data = linalg::gemm(&carry, r, r1, false, &nx.data, nx.r0, nx.n * nx.r1, false);
        c[l + 1] = Core { r0: r, n: nx.n, r1: nx.r1, data };
    }
    Ok(c)
}

/// TT rounding: `‖round(t) − t‖ ≤ ε‖t‖`, with ranks never increasing.
///
/// Right-to-left QR orthogonalization followed by a left-to-right sweep of
/// truncated SVDs with per-unfolding threshold `ε/√(d−1)·‖t‖`.
pub fn tt_round<T: TensorTrain>(t: &T, eps: f64) -> Result<T, TtError> {
    check_eps(eps)?;
    Ok(t.with_cores(round_cores(t.cores(), eps, None)?))
}

/// Rounding with an additional hard cap on every bond dimension.
///
/// The accuracy guarantee of [`tt_round`] only holds when the cap is not
/// active.
pub fn tt_round_capped<T: TensorTrain>(t: &T, eps: f64, max_rank: usize) -> Result<T, TtError> {
    check_eps(eps)?;
    Ok(t.with_cores(round_cores(t.cores(), eps, Some(max_rank))?))
}

/// Elementwise sum. Ranks add up (block-diagonal cores).
pub fn tt_add<T: TensorTrain>(a: &T, b: &T) -> Result<T, TtError> {
    if !a.same_modes(b) {
        return Err(mismatch("tt_add operands"));
    }
    let (ac, bc) = (a.cores(), b.cores());
    let d = ac.len();
    if d == 1 {
        let data = ac[0].data.iter().zip(&bc[0].data).map(|(x, y)| x + y).collect();
        return Ok(a.with_cores(vec![Core { r0: 1, n: ac[0].n, r1: 1, data }]));
    }
    let mut cores = Vec::with_capacity(d);
    for l in 0..d {
        let (x, y) = (&ac[l], &bc[l]);
        let n = x.n;
        let r0 = if l == 0 { 1 } else { x.r0 + y.r0 };
        let r1 = if l == d - 1 { 1 } else { x.r1 + y.r1 };
        let mut c = Core::zeros(r0, n, r1);
        let (ox0, ox1) = (0, 0);
        let oy0 = if l == 0 { 0 } else { x.r0 };
        let oy1 = if l == d - 1 { 0 } else { x.r1 };
        for b in 0..x.r1 {
            for k in 0..n {
                for a in 0..x.r0 {
                    *c.at_mut(a + ox0, k, b + ox1) += x.at(a, k, b);
                }
            }
        }
        for b in 0..y.r1 {
            for k in 0..n {
                for a in 0..y.r0 {
                    *c.at_mut(a + oy0, k, b + oy1) += y.at(a, k, b);
                }
            }
        }
        cores.push(c);
    }
    Ok(a.with_cores(cores))
}

/// Multiply every entry by `s` (scales the first core).
pub fn tt_scale<T: TensorTrain>(a: &T, s: f64) -> T {
    let mut cores = a.cores().to_vec();
    for v in cores[0].data.iter_mut() {
        *v *= s;
    }
    a.with_cores(cores)
}

/// `a − b` without rounding.
pub fn tt_sub<T: TensorTrain>(a: &T, b: &T) -> Result<T, TtError> {
    tt_add(a, &tt_scale(b, -1.0))
}

/// Elementwise (Hadamard) product. Ranks multiply.
pub fn tt_hadamard<T: TensorTrain>(a: &T, b: &T) -> Result<T, TtError> {
    if !a.same_modes(b) {
        return Err(mismatch("tt_hadamard operands"));
    }
    let cores = a
        .cores()
        .iter()
        .zip(b.cores())
        .map(|(x, y)| {
            let mut c = Core::zeros(x.r0 * y.r0, x.n, x.r1 * y.r1);
            for b2 in 0..y.r1 {
                for b1 in 0..x.r1 {
                    for k in 0..x.n {
                        for a2 in 0..y.r0 {
                            let yv = y.at(a2, k, b2);
                            for a1 in 0..x.r0 {
                                *c.at_mut(a1 + x.r0 * a2, k, b1 + x.r1 * b2) = x.at(a1, k, b1) * yv;
                            }
                        }
                    }
                }
            }
            c
        })
        .collect();
    Ok(a.with_cores(cores))
}

/// Inner product `⟨a, b⟩` by transfer matrices.
pub fn tt_dot<T: TensorTrain>(a: &T, b: &T) -> Result<f64, TtError> {
    if !a.same_modes(b) {
        return Err(mismatch("tt_dot operands"));
    }
    let mut w = vec![1.0];
    let (mut ra, mut rb) = (1, 1);
    for (x, y) in a.cores().iter().zip(b.cores()) {
        // Y = Wᵀ · X_right : (rb × n·rx1), reinterpreted as (rb·n) × rx1
        let yv = linalg::gemm(&w, ra, rb, true, &x.data, x.r0, x.n * x.r1, false);
        // W' = Yᵀ · Y_left : (rx1 × ry1)
        w = linalg::gemm(&yv, rb * x.n, x.r1, true, &y.data, y.r0 * y.n, y.r1, false);
        ra = x.r1;
        rb = y.r1;
    }
    Ok(w[0])
}

/// Frobenius norm, computed through orthogonalization so that it stays
/// accurate for trains whose terms nearly cancel.
pub fn tt_norm<T: TensorTrain>(a: &T) -> f64 {
    let mut c = a.cores().to_vec();
    right_orthogonalize(&mut c);
    linalg::norm2(&c[0].data)
}

/// Matrix-vector product `A x`. Ranks multiply.
pub fn tt_matvec(a: &TtMatrix, x: &TtVector) -> Result<TtVector, TtError> {
    if a.col_modes() != x.mode_sizes().as_slice() {
        return Err(mismatch("tt_matvec: operator column modes differ from vector modes"));
    }
    let cores = a
        .cores()
        .iter()
        .zip(x.cores())
        .enumerate()
        .map(|(l, (ac, xc))| {
            let (n, m) = (a.row_modes()[l], a.col_modes()[l]);
            let (p0, p1) = (ac.r0, ac.r1);
            let mut c = Core::zeros(p0 * xc.r0, n, p1 * xc.r1);
            for b in 0..xc.r1 {
                for be in 0..p1 {
                    for j in 0..m {
                        for i in 0..n {
                            for al in 0..p0 {
                                let av = ac.at(al, i + n * j, be);
                                if av == 0.0 {
                                    continue;
                                }
                                for aa in 0..xc.r0 {
                                    *c.at_mut(al + p0 * aa, i, be + p1 * b) += av * xc.at(aa, j, b);
                                }
                            }
                        }
                    }
                }
            }
            c
        })
        .collect();
    Ok(TtVector::from_cores(cores).expect("valid ranks"))
}

/// Matrix-matrix product `A B`. Ranks multiply.
pub fn tt_matmul(a: &TtMatrix, b: &TtMatrix) -> Result<TtMatrix, TtError> {
    if a.col_modes() != b.row_modes() {
        return Err(mismatch("tt_matmul: inner modes differ"));
    }
    let d = a.order();
    let mut cores = Vec::with_capacity(d);
    for l in 0..d {
        let (ac, bc) = (&a.cores()[l], &b.cores()[l]);
        let (n, m, p) = (a.row_modes()[l], a.col_modes()[l], b.col_modes()[l]);
        let mut c = Core::zeros(ac.r0 * bc.r0, n * p, ac.r1 * bc.r1);
        for b1 in 0..bc.r1 {
            for a1 in 0..ac.r1 {
                for k in 0..p {
                    for j in 0..m {
                        for b0 in 0..bc.r0 {
                            let bv = bc.at(b0, j + m * k, b1);
                            if bv == 0.0 {
                                continue;
                            }
                            for i in 0..n {
                                for a0 in 0..ac.r0 {
                                    *c.at_mut(a0 + ac.r0 * b0, i + n * k, a1 + ac.r1 * b1) +=
                                        ac.at(a0, i + n * j, a1) * bv;
                                }
                            }
                        }
                    }
                }
            }
        }
        cores.push(c);
    }
    TtMatrix::from_cores(cores, a.row_modes().to_vec(), b.col_modes().to_vec())
}

/// Transpose of a TT operator.
pub fn tt_transpose(a: &TtMatrix) -> TtMatrix {
    let cores = a
        .cores()
        .iter()
        .enumerate()
        .map(|(l, c)| {
            let (n, m) = (a.row_modes()[l], a.col_modes()[l]);
            let mut t = Core::zeros(c.r0, n * m, c.r1);
            for b in 0..c.r1 {
                for i in 0..n {
                    for j in 0..m {
                        for al in 0..c.r0 {
                            *t.at_mut(al, j + m * i, b) = c.at(al, i + n * j, b);
                        }
                    }
                }
            }
            t
        })
        .collect();
    TtMatrix::from_cores(cores, a.col_modes().to_vec(), a.row_modes().to_vec()).expect("valid")
}

/// Diagonal operator `diag(v)` with the ranks of `v`.
pub fn tt_diag(v: &TtVector) -> TtMatrix {
    let modes = v.mode_sizes();
    let cores = v
        .cores()
        .iter()
        .map(|c| {
            let n = c.n;
            let mut t = Core::zeros(c.r0, n * n, c.r1);
            for b in 0..c.r1 {
                for i in 0..n {
                    for a in 0..c.r0 {
                        *t.at_mut(a, i + n * i, b) = c.at(a, i, b);
                    }
                }
            }
            t
        })
        .collect();
    TtMatrix::from_cores(cores, modes.clone(), modes).expect("valid")
}

/// Kronecker product of two trains: the result's dense form is
/// `dense(a) ⊗ dense(b)`, so `b` supplies the less significant digits.
///
/// Realized by concatenating the core lists; no rank growth.
pub fn tt_kron<T: KronProduct>(a: &T, b: &T) -> T {
    T::kron_impl(a, b)
}

/// z-Kronecker product: the Kronecker product conjugated by the
/// bit-interleaving permutation.
///
/// Both operands must have the same number of cores. The result interleaves
/// the cores as `b_1, a_1, b_2, a_2, …`, so digit `2k−1` of the result comes
/// from `b` and digit `2k` from `a`. With `b` acting on the grid index `i` and
/// `a` on `j`, this is exactly the Z-order layout of `a ⊗ b`. Bond dimensions
/// are products of the operands' bond dimensions.
pub fn tt_zkron<T: KronProduct>(a: &T, b: &T) -> Result<T, TtError> {
    if a.order() != b.order() {
        return Err(mismatch("tt_zkron operands need the same number of cores"));
    }
    Ok(T::zkron_impl(a, b))
}

fn interleave(a: &[Core], b: &[Core]) -> Vec<Core> {
    let d = a.len();
    let mut out = Vec::with_capacity(2 * d);
    for l in 0..d {
        let (x, y) = (&a[l], &b[l]);
        // b-core: state (a_{l-1}, b_{l-1}) -> (a_{l-1}, b_l); index b + rb·a
        let ra = x.r0;
        let mut cb = Core::zeros(ra * y.r0, y.n, ra * y.r1);
        for aa in 0..ra {
            for bb1 in 0..y.r1 {
                for k in 0..y.n {
                    for bb0 in 0..y.r0 {
                        *cb.at_mut(bb0 + y.r0 * aa, k, bb1 + y.r1 * aa) = y.at(bb0, k, bb1);
                    }
                }
            }
        }
        out.push(cb);
        // a-core: state (a_{l-1}, b_l) -> (a_l, b_l)
        let rb = y.r1;
        let mut ca = Core::zeros(x.r0 * rb, x.n, x.r1 * rb);
        for bb in 0..rb {
            for a1 in 0..x.r1 {
                for k in 0..x.n {
                    for a0 in 0..x.r0 {
                        *ca.at_mut(bb + rb * a0, k, bb + rb * a1) = x.at(a0, k, a1);
                    }
                }
            }
        }
        out.push(ca);
    }
    out
}

/// Kronecker-type products, implemented for vectors and matrices.
pub trait KronProduct: TensorTrain + Sized {
    fn kron_impl(a: &Self, b: &Self) -> Self;
    fn zkron_impl(a: &Self, b: &Self) -> Self;
}

impl KronProduct for TtVector {
    fn kron_impl(a: &Self, b: &Self) -> Self {
        let mut cores = b.cores().to_vec();
        cores.extend_from_slice(a.cores());
        TtVector::from_cores(cores).expect("valid")
    }

    fn zkron_impl(a: &Self, b: &Self) -> Self {
        TtVector::from_cores(interleave(a.cores(), b.cores())).expect("valid")
    }
}

impl KronProduct for TtMatrix {
    fn kron_impl(a: &Self, b: &Self) -> Self {
        let mut cores = b.cores().to_vec();
        cores.extend_from_slice(a.cores());
        let mut rows = b.row_modes().to_vec();
        rows.extend_from_slice(a.row_modes());
        let mut cols = b.col_modes().to_vec();
        cols.extend_from_slice(a.col_modes());
        TtMatrix::from_cores(cores, rows, cols).expect("valid")
    }

    fn zkron_impl(a: &Self, b: &Self) -> Self {
        let cores = interleave(a.cores(), b.cores());
        let mut rows = Vec::new();
        let mut cols = Vec::new();
        for l in 0..a.order() {
            rows.push(b.row_modes()[l]);
            rows.push(a.row_modes()[l]);
            cols.push(b.col_modes()[l]);
            cols.push(a.col_modes()[l]);
        }
        TtMatrix::from_cores(cores, rows, cols).expect("valid")
    }
}

/// One operator core viewed as an `r0 × r1` block matrix whose blocks are
/// `rows × cols` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreBlock {
    pub r0: usize,
    pub rows: usize,
    pub cols: usize,
    pub r1: usize,
    /// Layout `(a, i + rows·j, b)` as in [`Core`].
    pub data: Vec<f64>,
}

impl CoreBlock {
    pub fn at(&self, a: usize, i: usize, j: usize, b: usize) -> f64 {
        self.data[a + self.r0 * ((i + self.rows * j) + self.rows * self.cols * b)]
    }
}

impl TtMatrix {
    /// Core `l` as a [`CoreBlock`].
    pub fn core_block(&self, l: usize) -> CoreBlock {
        let c = &self.cores()[l];
        CoreBlock { r0: c.r0, rows: self.row_modes()[l], cols: self.col_modes()[l], r1: c.r1, data: c.data.clone() }
    }
}

/// Strong Kronecker product `x ⋈ y` of two core blocks: the block matrix
/// product of `x` (`r0 × r1`) and `y` (`r1 × r2`) where block multiplication
/// is the Kronecker product.
///
/// In keeping with the little-endian core order, `x` supplies the less
/// significant row and column digit: block `(α, γ)` of the result is
/// `Σ_β y_{βγ} ⊗ x_{αβ}`. Folding this product over all cores of a train
/// yields a single `1 × 1` block equal to the dense operator.
pub fn strong_kron(x: &CoreBlock, y: &CoreBlock) -> Result<CoreBlock, TtError> {
    if x.r1 != y.r0 {
        return Err(TtError::Structure(format!("strong_kron: inner ranks {} and {} differ", x.r1, y.r0)));
    }
    let rows = x.rows * y.rows;
    let cols = x.cols * y.cols;
    let mut data = vec![0.0; x.r0 * rows * cols * y.r1];
    for g in 0..y.r1 {
        for jy in 0..y.cols {
            for iy in 0..y.rows {
                for be in 0..x.r1 {
                    let yv = y.at(be, iy, jy, g);
                    if yv == 0.0 {
                        continue;
                    }
                    for jx in 0..x.cols {
                        for ix in 0..x.rows {
                            for al in 0..x.r0 {
                                let i = ix + x.rows * iy;
                                let j = jx + x.cols * jy;
                                data[al + x.r0 * ((i + rows * j) + rows * cols * g)] += x.at(al, ix, jx, be) * yv;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(CoreBlock { r0: x.r0, rows, cols, r1: y.r1, data })
}

/// Sum a sequence of trains, rounding after every accumulation at `eps`.
///
/// The accumulation order is the slice order, so the result is deterministic.
pub fn tt_sum_rounded<T: TensorTrain>(terms: &[T], eps: f64) -> Result<T, TtError> {
    let mut it = terms.iter();
    let first = it.next().ok_or_else(|| TtError::Argument("empty sum".into()))?;
    let mut acc = tt_round(first, eps)?;
    for t in it {
        acc = tt_round(&tt_add(&acc, t)?, eps)?;
    }
    Ok(acc)
}
