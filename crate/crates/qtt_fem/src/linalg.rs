//! Thin wrappers over faer for column-major `f64` buffers.
//!
//! Tensor-train cores are stored as flat column-major slices, so the helpers
//! here take and return plain `Vec<f64>` together with explicit shapes.

use faer::linalg::solvers::Solve;
use faer::{Accum, Mat, MatRef, Par};

/// View a column-major buffer as an `m × n` matrix.
pub(crate) fn view(data: &[f64], m: usize, n: usize) -> MatRef<'_, f64> {
    debug_assert_eq!(data.len(), m * n);
    MatRef::from_column_major_slice(data, m, n)
}

/// Copy any matrix view into a fresh column-major buffer.
pub(crate) fn to_vec(a: MatRef<'_, f64>) -> Vec<f64> {
    let (m, n) = a.shape();
    let mut out = Vec::with_capacity(m * n);
    for j in 0..n {
        for i in 0..m {
            out.push(a[(i, j)]);
        }
    }
    out
}

/// `C = op(A) · op(B)` for column-major buffers, where `op` optionally transposes.
///
/// `a` is stored as `am × an`, `b` as `bm × bn` before the optional transposes.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    a: &[f64],
    am: usize,
    an: usize,
    ta: bool,
    b: &[f64],
    bm: usize,
    bn: usize,
    tb: bool,
) -> Vec<f64> {
    let av = view(a, am, an);
    let bv = view(b, bm, bn);
    let av = if ta { av.transpose() } else { av };
    let bv = if tb { bv.transpose() } else { bv };
    assert_eq!(av.ncols(), bv.nrows(), "inner dimensions differ");
    let (m, n) = (av.nrows(), bv.ncols());
    let mut out = vec![0.0; m * n];
    if m * n == 0 {
        return out;
    }
    if av.ncols() == 0 {
        return out;
    }
    let dst = faer::MatMut::from_column_major_slice_mut(&mut out, m, n);
    faer::linalg::matmul::matmul(dst, Accum::Replace, av, bv, 1.0, Par::Seq);
    out
}

/// Result of a truncated SVD `A ≈ U · diag(s) · Vᵀ`.
pub(crate) struct TruncatedSvd {
    /// `m × r`, column-major.
    pub u: Vec<f64>,
    /// Kept singular values.
    pub s: Vec<f64>,
    /// `r × n`, column-major (already transposed).
    pub vt: Vec<f64>,
    pub rank: usize,
}

/// Smallest rank whose discarded tail has Frobenius norm at most `delta`.
///
/// At least one singular triplet is always kept so that the result is a valid
/// factorization even for the zero matrix.
pub(crate) fn truncation_rank(s: &[f64], delta: f64) -> usize {
    let mut tail = 0.0;
    let mut r = s.len();
    while r > 1 {
        let next = tail + s[r - 1] * s[r - 1];
        if next > delta * delta {
            break;
        }
        tail = next;
        r -= 1;
    }
    r.max(1).min(s.len().max(1))
}

/// Thin SVD of an `m × n` column-major matrix, truncated at tail norm `delta`
/// and at most `max_rank` terms.
pub(crate) fn svd_truncated(
    a: &[f64],
    m: usize,
    n: usize,
    delta: f64,
    max_rank: Option<usize>,
) -> Result<TruncatedSvd, faer::linalg::svd::SvdError> {
    let k = m.min(n);
    if k == 0 {
        return Ok(TruncatedSvd { u: vec![0.0; m], s: vec![0.0], vt: vec![0.0; n], rank: 1 });
    }
    let svd = view(a, m, n).thin_svd()?;
    let s_all: Vec<f64> = (0..k).map(|i| svd.S().column_vector()[i]).collect();
    let mut r = truncation_rank(&s_all, delta);
    if let Some(cap) = max_rank {
        r = r.min(cap.max(1));
    }
    let u = to_vec(svd.U().subcols(0, r));
    let v = svd.V();
    let mut vt = vec![0.0; r * n];
    for j in 0..n {
        for i in 0..r {
            vt[i + r * j] = v[(j, i)];
        }
    }
    Ok(TruncatedSvd { u, s: s_all[..r].to_vec(), vt, rank: r })
}

/// Thin QR of an `m × n` column-major matrix: returns `(Q, R, k)` with
/// `Q` of shape `m × k`, `R` of shape `k × n` and `k = min(m, n)`.
pub(crate) fn qr_thin(a: &[f64], m: usize, n: usize) -> (Vec<f64>, Vec<f64>, usize) {
    let k = m.min(n);
    if k == 0 {
        return (vec![], vec![], 0);
    }
    let qr = view(a, m, n).qr();
    let q = to_vec(qr.compute_thin_Q().as_ref());
    let r = to_vec(qr.thin_R());
    (q, r, k)
}

/// Thin QR of the transpose of an `m × n` column-major matrix.
///
/// Returns `(L, Qt, k)` with `A = L · Qt`, `L` of shape `m × k` and `Qt`
/// (orthonormal rows) of shape `k × n`.
pub(crate) fn lq_thin(a: &[f64], m: usize, n: usize) -> (Vec<f64>, Vec<f64>, usize) {
    let k = m.min(n);
    if k == 0 {
        return (vec![], vec![], 0);
    }
    let qr = view(a, m, n).transpose().qr();
    let q = qr.compute_thin_Q();
    let r = qr.thin_R();
    (to_vec(r.transpose()), to_vec(q.as_ref().transpose()), k)
}

/// Solve the dense square system `A x = b` by partial-pivoting LU.
pub(crate) fn lu_solve(a: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let lu = view(a, n, n).partial_piv_lu();
    let rhs = Mat::from_fn(n, 1, |i, _| b[i]);
    let x = lu.solve(&rhs);
    (0..n).map(|i| x[(i, 0)]).collect()
}

/// Euclidean norm.
pub(crate) fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Inner product.
pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_loops() {
        let a: Vec<f64> = (0..6).map(|v| v as f64).collect(); // 2 × 3
        let b: Vec<f64> = (0..12).map(|v| (v as f64).sin()).collect(); // 3 × 4
        let c = gemm(&a, 2, 3, false, &b, 3, 4, false);
        for i in 0..2 {
            for j in 0..4 {
                let expect: f64 = (0..3).map(|k| a[i + 2 * k] * b[k + 3 * j]).sum();
                assert!((c[i + 2 * j] - expect).abs() < 1e-14);
            }
        }
        let ct = gemm(&b, 3, 4, true, &a, 2, 3, true);
        for i in 0..4 {
            for j in 0..2 {
                assert!((ct[i + 4 * j] - c[j + 2 * i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn truncation_keeps_one_term_for_zero() {
        assert_eq!(truncation_rank(&[0.0, 0.0], 0.0), 1);
        assert_eq!(truncation_rank(&[3.0, 1e-9, 1e-10], 1e-8), 1);
        assert_eq!(truncation_rank(&[3.0, 1.0, 1e-10], 1e-8), 2);
    }

    #[test]
    fn qr_and_lq_reconstruct() {
        let a: Vec<f64> = (0..15).map(|v| ((v * 7 % 5) as f64) - 1.3).collect(); // 5 × 3
        let (q, r, k) = qr_thin(&a, 5, 3);
        let back = gemm(&q, 5, k, false, &r, k, 3, false);
        for (x, y) in back.iter().zip(&a) {
            assert!((x - y).abs() < 1e-12);
        }
        let (l, qt, k) = lq_thin(&a, 3, 5);
        let back = gemm(&l, 3, k, false, &qt, k, 5, false);
        for (x, y) in back.iter().zip(&a) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn lu_solves() {
        let a = vec![4.0, 1.0, 2.0, 3.0]; // [[4,2],[1,3]]
        let x = lu_solve(&a, 2, &[8.0, 7.0]);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14);
    }
}
