//! Tensor trains over generic mode sizes.
//!
//! A tensor train (TT) stores a tensor with `d` modes as a chain of cores.
//! Core `ℓ` of a vector has shape `(r_{ℓ-1}, n_ℓ, r_ℓ)`; core `ℓ` of a matrix
//! has shape `(r_{ℓ-1}, n_ℓ, m_ℓ, r_ℓ)`, with `r_0 = r_d = 1`.
//!
//! # Index convention
//!
//! Cores are little-endian: the first core carries the least significant
//! digit. For binary (QTT) modes a vector entry `x[i]` with
//! `i = Σ_k 2^{k-1} i_k` equals `T_1[i_1] T_2[i_2] ⋯ T_d[i_d]`. Matrix cores
//! use the same convention independently for the row and the column index.
//!
//! Core data is kept column-major in `(r_{ℓ-1}, n_ℓ, r_ℓ)` order, i.e. the
//! entry `(a, k, b)` sits at `a + r_{ℓ-1} (k + n_ℓ b)`. Matrix cores use the
//! fused mode index `k = i + n_ℓ j`. With this layout both the left unfolding
//! `(r_{ℓ-1} n_ℓ) × r_ℓ` and the right unfolding `r_{ℓ-1} × (n_ℓ r_ℓ)` are
//! plain reinterpretations of the buffer.
//!
//! No operation rounds implicitly: sums, products and Kronecker products
//! return the exact (rank-inflated) train and callers decide when to call
//! [`tt_round`].

mod io;
mod ops;

pub(crate) use ops::left_orthogonalize;

pub use io::{read_text, write_text, StoredTrain};
pub use ops::{
    strong_kron, CoreBlock, KronProduct, tt_add, tt_diag, tt_dot, tt_hadamard, tt_kron, tt_matmul, tt_matvec, tt_norm,
    tt_round, tt_round_capped, tt_scale, tt_sub, tt_sum_rounded, tt_transpose, tt_zkron,
};

use crate::linalg;
use rand::Rng;
use thiserror::Error;

/// Largest number of dense entries [`tt_contract`] agrees to materialize.
///
/// This is `2^24` entries: `d = 24` binary vector modes or `d = 12` binary
/// matrix modes.
pub const DENSE_ENTRY_LIMIT: usize = 1 << 24;

/// Relative tail below which singular values count as numerically zero.
pub(crate) const ROUNDOFF_FLOOR: f64 = 4.0 * f64::EPSILON;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum TtError {
    #[error("size error: {0}")]
    Size(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("mode sizes differ: {0}")]
    ModeMismatch(String),

    #[error("refusing to materialize {entries} dense entries (limit {limit})")]
    TooLarge { entries: usize, limit: usize },

    #[error("invalid core structure: {0}")]
    Structure(String),

    #[error("SVD failed to converge")]
    Svd,

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<faer::linalg::svd::SvdError> for TtError {
    fn from(_: faer::linalg::svd::SvdError) -> Self {
        TtError::Svd
    }
}

/// One order-3 core `(r0, n, r1)` in column-major layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Core {
    pub(crate) r0: usize,
    pub(crate) n: usize,
    pub(crate) r1: usize,
    pub(crate) data: Vec<f64>,
}

impl Core {
    /// Build a core from column-major data, checking the length.
    pub fn new(r0: usize, n: usize, r1: usize, data: Vec<f64>) -> Result<Self, TtError> {
        if r0 == 0 || n == 0 || r1 == 0 {
            return Err(TtError::Structure("core dimensions must be positive".into()));
        }
        if data.len() != r0 * n * r1 {
            return Err(TtError::Structure(format!(
                "core data has {} entries, expected {}·{}·{}",
                data.len(),
                r0,
                n,
                r1
            )));
        }
        Ok(Core { r0, n, r1, data })
    }

    pub fn zeros(r0: usize, n: usize, r1: usize) -> Self {
        Core { r0, n, r1, data: vec![0.0; r0 * n * r1] }
    }

    pub fn r0(&self) -> usize {
        self.r0
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r1(&self) -> usize {
        self.r1
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn at(&self, a: usize, k: usize, b: usize) -> f64 {
        self.data[a + self.r0 * (k + self.n * b)]
    }

    #[inline]
    pub(crate) fn at_mut(&mut self, a: usize, k: usize, b: usize) -> &mut f64 {
        &mut self.data[a + self.r0 * (k + self.n * b)]
    }
}

/// Common interface of [`TtVector`] and [`TtMatrix`].
pub trait TensorTrain: Clone {
    fn cores(&self) -> &[Core];

    /// Rebuild an object of the same kind and mode structure from new cores
    /// whose fused mode sizes are unchanged.
    fn with_cores(&self, cores: Vec<Core>) -> Self;

    /// Number of cores `d`.
    fn order(&self) -> usize {
        self.cores().len()
    }

    /// Bond dimensions `(r_0, …, r_d)`.
    fn ranks(&self) -> Vec<usize> {
        let c = self.cores();
        let mut r = Vec::with_capacity(c.len() + 1);
        r.push(c[0].r0);
        r.extend(c.iter().map(|k| k.r1));
        r
    }

    /// Fused mode sizes (row × column for matrices).
    fn fused_modes(&self) -> Vec<usize> {
        self.cores().iter().map(|c| c.n).collect()
    }

    /// Check that mode structures agree, for elementwise operations.
    fn same_modes(&self, other: &Self) -> bool;

    /// Exact dense realization (flattened row-major for matrices).
    fn to_dense(&self) -> Result<Vec<f64>, TtError>;
}

fn validate(cores: &[Core]) -> Result<(), TtError> {
    if cores.is_empty() {
        return Err(TtError::Structure("a tensor train needs at least one core".into()));
    }
    if cores[0].r0 != 1 || cores[cores.len() - 1].r1 != 1 {
        return Err(TtError::Structure("boundary ranks must equal 1".into()));
    }
    for (l, w) in cores.windows(2).enumerate() {
        if w[0].r1 != w[1].r0 {
            return Err(TtError::Structure(format!(
                "rank mismatch between cores {} and {}: {} vs {}",
                l,
                l + 1,
                w[0].r1,
                w[1].r0
            )));
        }
    }
    Ok(())
}

/// Contract all cores into a flat little-endian buffer over the fused modes.
fn contract_cores(cores: &[Core]) -> Result<Vec<f64>, TtError> {
    let entries = cores.iter().try_fold(1usize, |acc, c| acc.checked_mul(c.n));
    let entries = entries.unwrap_or(usize::MAX);
    if entries > DENSE_ENTRY_LIMIT {
        return Err(TtError::TooLarge { entries, limit: DENSE_ENTRY_LIMIT });
    }
    // W has shape (prefix size) × r, column-major, prefix index little-endian.
    let mut w = cores[0].data.clone();
    let mut rows = cores[0].n;
    for c in &cores[1..] {
        w = linalg::gemm(&w, rows, c.r0, false, &c.data, c.r0, c.n * c.r1, false);
        rows *= c.n;
    }
    Ok(w)
}

/// A vector in tensor-train format.
#[derive(Debug, Clone, PartialEq)]
pub struct TtVector {
    cores: Vec<Core>,
}

impl TensorTrain for TtVector {
    fn cores(&self) -> &[Core] {
        &self.cores
    }

    fn with_cores(&self, cores: Vec<Core>) -> Self {
        TtVector { cores }
    }

    fn same_modes(&self, other: &Self) -> bool {
        self.fused_modes() == other.fused_modes()
    }

    fn to_dense(&self) -> Result<Vec<f64>, TtError> {
        contract_cores(&self.cores)
    }
}

impl TtVector {
    pub fn from_cores(cores: Vec<Core>) -> Result<Self, TtError> {
        validate(&cores)?;
        Ok(TtVector { cores })
    }

    pub fn mode_sizes(&self) -> Vec<usize> {
        self.fused_modes()
    }

    /// Total length `Π n_ℓ`.
    pub fn len(&self) -> usize {
        self.cores.iter().map(|c| c.n).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cores_mut(&mut self) -> &mut [Core] {
        &mut self.cores
    }

    pub fn into_cores(self) -> Vec<Core> {
        self.cores
    }

    /// Rank-one train from one factor per mode: `x[i] = Π_ℓ f_ℓ[i_ℓ]`.
    pub fn rank_one(factors: &[Vec<f64>]) -> Result<Self, TtError> {
        if factors.is_empty() {
            return Err(TtError::Structure("need at least one factor".into()));
        }
        let cores = factors
            .iter()
            .map(|f| Core::new(1, f.len(), 1, f.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TtVector { cores })
    }

    pub fn ones(modes: &[usize]) -> Self {
        let f: Vec<Vec<f64>> = modes.iter().map(|&n| vec![1.0; n]).collect();
        TtVector::rank_one(&f).expect("positive modes")
    }

    pub fn zeros(modes: &[usize]) -> Self {
        let f: Vec<Vec<f64>> = modes.iter().map(|&n| vec![0.0; n]).collect();
        TtVector::rank_one(&f).expect("positive modes")
    }

    /// Unit vector `e_index` (rank one).
    pub fn unit(modes: &[usize], mut index: usize) -> Self {
        let f: Vec<Vec<f64>> = modes
            .iter()
            .map(|&n| {
                let mut v = vec![0.0; n];
                v[index % n] = 1.0;
                index /= n;
                v
            })
            .collect();
        TtVector::rank_one(&f).expect("positive modes")
    }

    /// Random train with entries uniform in `[-1, 1]` and internal ranks
    /// `ranks` (length `d - 1`).
    pub fn random<R: Rng>(modes: &[usize], ranks: &[usize], rng: &mut R) -> Self {
        assert_eq!(ranks.len() + 1, modes.len(), "need d-1 internal ranks");
        let mut full = vec![1];
        full.extend_from_slice(ranks);
        full.push(1);
        let cores = modes
            .iter()
            .enumerate()
            .map(|(l, &n)| {
                let len = full[l] * n * full[l + 1];
                let data = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
                Core { r0: full[l], n, r1: full[l + 1], data }
            })
            .collect();
        TtVector { cores }
    }

    /// Evaluate one entry by a chain of small matrix-vector products.
    pub fn entry(&self, mut index: usize) -> f64 {
        let mut v = vec![1.0];
        for c in &self.cores {
            let k = index % c.n;
            index /= c.n;
            let mut next = vec![0.0; c.r1];
            for (b, nb) in next.iter_mut().enumerate() {
                let mut s = 0.0;
                for (a, va) in v.iter().enumerate() {
                    s += va * c.at(a, k, b);
                }
                *nb = s;
            }
            v = next;
        }
        v[0]
    }
}

/// A matrix in tensor-train format.
#[derive(Debug, Clone, PartialEq)]
pub struct TtMatrix {
    cores: Vec<Core>,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

impl TensorTrain for TtMatrix {
    fn cores(&self) -> &[Core] {
        &self.cores
    }

    fn with_cores(&self, cores: Vec<Core>) -> Self {
        TtMatrix { cores, rows: self.rows.clone(), cols: self.cols.clone() }
    }

    fn same_modes(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    fn to_dense(&self) -> Result<Vec<f64>, TtError> {
        let flat = contract_cores(&self.cores)?;
        let nr = self.nrows();
        let nc = self.ncols();
        let mut out = vec![0.0; nr * nc];
        for (f, v) in flat.iter().enumerate() {
            let (r, c) = self.split_fused(f);
            out[r * nc + c] = *v;
        }
        Ok(out)
    }
}

impl TtMatrix {
    /// Build from cores whose fused mode sizes equal `rows[ℓ]·cols[ℓ]`.
    pub fn from_cores(cores: Vec<Core>, rows: Vec<usize>, cols: Vec<usize>) -> Result<Self, TtError> {
        validate(&cores)?;
        if rows.len() != cores.len() || cols.len() != cores.len() {
            return Err(TtError::Structure("one row and column size per core required".into()));
        }
        for (l, c) in cores.iter().enumerate() {
            if c.n != rows[l] * cols[l] {
                return Err(TtError::Structure(format!(
                    "core {} has fused size {}, expected {}×{}",
                    l, c.n, rows[l], cols[l]
                )));
            }
        }
        Ok(TtMatrix { cores, rows, cols })
    }

    pub fn row_modes(&self) -> &[usize] {
        &self.rows
    }

    pub fn col_modes(&self) -> &[usize] {
        &self.cols
    }

    pub fn nrows(&self) -> usize {
        self.rows.iter().product()
    }

    pub fn ncols(&self) -> usize {
        self.cols.iter().product()
    }

    pub fn into_cores(self) -> Vec<Core> {
        self.cores
    }

    /// Entry `(a, i, j, b)` of core `l`.
    #[inline]
    pub fn core_at(&self, l: usize, a: usize, i: usize, j: usize, b: usize) -> f64 {
        self.cores[l].at(a, i + self.rows[l] * j, b)
    }

    /// Map a little-endian fused index to `(row, col)`.
    fn split_fused(&self, mut f: usize) -> (usize, usize) {
        let (mut r, mut c) = (0, 0);
        let (mut rs, mut cs) = (1, 1);
        for l in 0..self.cores.len() {
            let k = f % self.cores[l].n;
            f /= self.cores[l].n;
            r += rs * (k % self.rows[l]);
            c += cs * (k / self.rows[l]);
            rs *= self.rows[l];
            cs *= self.cols[l];
        }
        (r, c)
    }

    /// Identity operator with square modes `modes` (all ranks one).
    pub fn identity(modes: &[usize]) -> Self {
        let cores = modes
            .iter()
            .map(|&n| {
                let mut c = Core::zeros(1, n * n, 1);
                for i in 0..n {
                    c.data[i + n * i] = 1.0;
                }
                c
            })
            .collect();
        TtMatrix { cores, rows: modes.to_vec(), cols: modes.to_vec() }
    }

    /// Zero operator (all ranks one).
    pub fn zeros(rows: &[usize], cols: &[usize]) -> Self {
        let cores = rows.iter().zip(cols).map(|(&n, &m)| Core::zeros(1, n * m, 1)).collect();
        TtMatrix { cores, rows: rows.to_vec(), cols: cols.to_vec() }
    }

    /// Rank-one operator `⊗_ℓ F_ℓ`, where `F_ℓ` is given row-major with shape
    /// `rows[ℓ] × cols[ℓ]`. Factor `ℓ` acts on the ℓ-th least significant digit.
    pub fn rank_one(factors: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> Result<Self, TtError> {
        if factors.len() != rows.len() || factors.len() != cols.len() || factors.is_empty() {
            return Err(TtError::Structure("one factor per mode required".into()));
        }
        let mut cores = Vec::with_capacity(factors.len());
        for (l, f) in factors.iter().enumerate() {
            let (n, m) = (rows[l], cols[l]);
            if f.len() != n * m {
                return Err(TtError::Structure(format!("factor {} has wrong size", l)));
            }
            let mut c = Core::zeros(1, n * m, 1);
            for i in 0..n {
                for j in 0..m {
                    c.data[i + n * j] = f[i * m + j];
                }
            }
            cores.push(c);
        }
        Ok(TtMatrix { cores, rows: rows.to_vec(), cols: cols.to_vec() })
    }

    /// Random train with entries uniform in `[-1, 1]`.
    pub fn random<R: Rng>(rows: &[usize], cols: &[usize], ranks: &[usize], rng: &mut R) -> Self {
        let fused: Vec<usize> = rows.iter().zip(cols).map(|(a, b)| a * b).collect();
        let v = TtVector::random(&fused, ranks, rng);
        TtMatrix { cores: v.cores, rows: rows.to_vec(), cols: cols.to_vec() }
    }

    /// Reinterpret as a vector over the fused modes.
    pub fn as_fused_vector(&self) -> TtVector {
        TtVector { cores: self.cores.clone() }
    }

    /// Evaluate a single entry.
    pub fn entry(&self, mut row: usize, mut col: usize) -> f64 {
        let mut f = 0;
        let mut stride = 1;
        for l in 0..self.cores.len() {
            let i = row % self.rows[l];
            let j = col % self.cols[l];
            row /= self.rows[l];
            col /= self.cols[l];
            f += stride * (i + self.rows[l] * j);
            stride *= self.cores[l].n;
        }
        TtVector { cores: self.cores.clone() }.entry(f)
    }

    /// Evaluate many entries at once by splitting the chain in two halves
    /// and materializing each half's partial contraction.
    ///
    /// Useful for extracting a sparse pattern from an operator that is too
    /// large to contract densely. Each half must stay below
    /// [`DENSE_ENTRY_LIMIT`] fused entries times its bond rank.
    pub fn entries(&self, pairs: &[(usize, usize)]) -> Result<Vec<f64>, TtError> {
        let d = self.cores.len();
        // choose split point balancing the two fused prefix sizes
        let total: f64 = self.cores.iter().map(|c| (c.n as f64).ln()).sum();
        let mut acc = 0.0;
        let mut split = 1;
        for (l, c) in self.cores.iter().enumerate() {
            acc += (c.n as f64).ln();
            if acc >= total / 2.0 {
                split = (l + 1).min(d - 1).max(1);
                break;
            }
        }
        if d == 1 {
            return Ok(pairs.iter().map(|&(r, c)| self.entry(r, c)).collect());
        }
        let left = &self.cores[..split];
        let right = &self.cores[split..];
        let lsize: usize = left.iter().map(|c| c.n).product();
        let rsize: usize = right.iter().map(|c| c.n).product();
        let bond = self.cores[split].r0;
        if lsize.saturating_mul(bond) > 4 * DENSE_ENTRY_LIMIT
            || rsize.saturating_mul(bond) > 4 * DENSE_ENTRY_LIMIT
        {
            return Err(TtError::TooLarge { entries: lsize.max(rsize) * bond, limit: 4 * DENSE_ENTRY_LIMIT });
        }
        // left: lsize × bond col-major
        let mut lw = left[0].data.clone();
        let mut rows = left[0].n;
        for c in &left[1..] {
            lw = linalg::gemm(&lw, rows, c.r0, false, &c.data, c.r0, c.n * c.r1, false);
            rows *= c.n;
        }
        // right: bond × rsize col-major, contracted from the last core backwards
        let last = &right[right.len() - 1];
        let mut rw = last.data.clone(); // r0 × n (since r1 = 1)
        let mut cols = last.n;
        for c in right[..right.len() - 1].iter().rev() {
            // The (r0·n) × cols product is already laid out as r0 × (n·cols)
            // with the new digit k less significant than the old columns.
            rw = linalg::gemm(&c.data, c.r0 * c.n, c.r1, false, &rw, c.r1, cols, false);
            cols *= c.n;
        }
        let mut out = Vec::with_capacity(pairs.len());
        for &(row, col) in pairs {
            let (mut r, mut c) = (row, col);
            let (mut fl, mut fr) = (0usize, 0usize);
            let mut stride = 1;
            for l in 0..d {
                if l == split {
                    stride = 1;
                }
                let i = r % self.rows[l];
                let j = c % self.cols[l];
                r /= self.rows[l];
                c /= self.cols[l];
                let k = i + self.rows[l] * j;
                if l < split {
                    fl += stride * k;
                } else {
                    fr += stride * k;
                }
                stride *= self.cores[l].n;
            }
            let mut s = 0.0;
            for b in 0..bond {
                s += lw[fl + lsize * b] * rw[b + bond * fr];
            }
            out.push(s);
        }
        Ok(out)
    }

    /// Entries as `(row, col, value)` triplets, without a dense buffer.
    ///
    /// After left-orthogonalization the product of the trailing cores for a
    /// fixed set of leading digits has the Frobenius norm of the matching
    /// block, so blocks below `drop_tol · ‖A‖_F` are skipped as a whole. For
    /// banded or block-sparse operators the work grows with the number of
    /// nonzeros rather than with the matrix size.
    pub fn to_triplets(&self, drop_tol: f64) -> Vec<(usize, usize, f64)> {
        let mut c = self.cores.clone();
        left_orthogonalize(&mut c);
        let d = c.len();
        let tol = drop_tol * linalg::norm2(&c[d - 1].data);
        let (mut rs, mut cs) = (vec![1usize; d], vec![1usize; d]);
        for l in 1..d {
            rs[l] = rs[l - 1] * self.rows[l - 1];
            cs[l] = cs[l - 1] * self.cols[l - 1];
        }
        let mut out = Vec::new();
        let mut stack = vec![(d, 0usize, 0usize, vec![1.0])];
        while let Some((l, row, col, v)) = stack.pop() {
            if l == 0 {
                out.push((row, col, v[0]));
                continue;
            }
            let core = &c[l - 1];
            for k in 0..core.n {
                let mut w = vec![0.0; core.r0];
                for (b, &vb) in v.iter().enumerate() {
                    if vb != 0.0 {
                        let base = core.r0 * (k + core.n * b);
                        for (a, wa) in w.iter_mut().enumerate() {
                            *wa += core.data[base + a] * vb;
                        }
                    }
                }
                if linalg::norm2(&w) <= tol {
                    continue;
                }
                let (i, j) = (k % self.rows[l - 1], k / self.rows[l - 1]);
                stack.push((l - 1, row + i * rs[l - 1], col + j * cs[l - 1], w));
            }
        }
        out
    }
}

/// Contract a train into a dense array (flattened row-major for matrices).
pub fn tt_contract<T: TensorTrain>(t: &T) -> Result<Vec<f64>, TtError> {
    t.to_dense()
}

fn check_eps(eps: f64) -> Result<(), TtError> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(TtError::Argument(format!("epsilon must be a finite value ≥ 0, got {eps}")));
    }
    Ok(())
}

/// TT-SVD of a dense tensor given little-endian over `modes`.
///
/// Every unfolding is truncated with tail threshold `ε/√(d−1)·‖t‖`, which
/// bounds the total relative error by `ε`.
pub fn tt_decompose_modes(dense: &[f64], modes: &[usize], eps: f64) -> Result<TtVector, TtError> {
    check_eps(eps)?;
    if modes.is_empty() || modes.contains(&0) {
        return Err(TtError::Size("mode sizes must be positive".into()));
    }
    let total: usize = modes.iter().product();
    if total != dense.len() {
        return Err(TtError::Size(format!("length {} does not match modes (product {})", dense.len(), total)));
    }
    let d = modes.len();
    if d == 1 {
        return Ok(TtVector { cores: vec![Core { r0: 1, n: modes[0], r1: 1, data: dense.to_vec() }] });
    }
    let nrm = linalg::norm2(dense);
    if nrm == 0.0 {
        return Ok(TtVector::zeros(modes));
    }
    // Singular values at round-off level are dropped even for ε = 0.
    let delta = (eps / ((d - 1) as f64).sqrt()).max(ROUNDOFF_FLOOR) * nrm;
    let mut cores = Vec::with_capacity(d);
    let mut rest = dense.to_vec();
    let mut r0 = 1;
    let mut remaining = total;
    for &n in &modes[..d - 1] {
        remaining /= n;
        let m = r0 * n;
        let svd = linalg::svd_truncated(&rest, m, remaining, delta, None)?;
        let r = svd.rank;
        cores.push(Core { r0, n, r1: r, data: svd.u });
        // carry diag(s) Vᵀ
        let mut carry = svd.vt;
        for col in 0..remaining {
            for (i, s) in svd.s.iter().enumerate() {
                carry[i + r * col] *= s;
            }
        }
        rest = carry;
        r0 = r;
    }
    cores.push(Core { r0, n: modes[d - 1], r1: 1, data: rest });
    Ok(TtVector { cores })
}

/// Number of binary digits of a power of two, or a size error.
pub fn binary_order(len: usize) -> Result<usize, TtError> {
    if len < 2 || !len.is_power_of_two() {
        return Err(TtError::Size(format!("length {len} is not a power of two ≥ 2")));
    }
    Ok(len.trailing_zeros() as usize)
}

/// QTT decomposition of a vector of length `2^d`.
pub fn tt_decompose(dense: &[f64], eps: f64) -> Result<TtVector, TtError> {
    let d = binary_order(dense.len())?;
    tt_decompose_modes(dense, &vec![2; d], eps)
}

/// QTT decomposition of a row-major `2^d × 2^d` matrix.
pub fn tt_decompose_matrix(dense: &[f64], n: usize, eps: f64) -> Result<TtMatrix, TtError> {
    check_eps(eps)?;
    if dense.len() != n * n {
        return Err(TtError::Size(format!("expected {}×{} entries, got {}", n, n, dense.len())));
    }
    let d = binary_order(n)?;
    let rows = vec![2; d];
    let shell = TtMatrix::zeros(&rows, &rows);
    let mut fused = vec![0.0; n * n];
    for (f, v) in fused.iter_mut().enumerate() {
        let (r, c) = shell.split_fused(f);
        *v = dense[r * n + c];
    }
    let v = tt_decompose_modes(&fused, &vec![4; d], eps)?;
    TtMatrix::from_cores(v.cores, rows.clone(), rows)
}

/// Rank and storage statistics of a train.
#[derive(Debug, Clone, PartialEq)]
pub struct RankProfile {
    /// Bond dimensions `(r_0, …, r_d)`.
    pub ranks: Vec<usize>,
    /// Maximum internal rank `R_d` (1 for a single core).
    pub max_rank: usize,
    /// Number of stored parameters `N_d`: the exact scalar count of the cores.
    pub param_count: usize,
    /// `r_1 n_1 + Σ_{ℓ=2}^{d-1} r_{ℓ-1} n_ℓ r_ℓ + r_{d-1} n_d`.
    pub storage_count: usize,
    /// Uniform rank giving the same storage: positive root of
    /// `r n_1 + r² Σ_{ℓ=2}^{d-1} n_ℓ + r n_d = storage_count`.
    pub effective_rank: f64,
}

/// Compute the [`RankProfile`] of a train.
pub fn rank_profile<T: TensorTrain>(t: &T) -> RankProfile {
    let ranks = t.ranks();
    let modes = t.fused_modes();
    let d = modes.len();
    let max_rank = ranks[1..d].iter().copied().max().unwrap_or(1);
    let storage_count: usize = t.cores().iter().map(|c| c.r0 * c.n * c.r1).sum();
    let s = storage_count as f64;
    let effective_rank = if d == 1 {
        s / modes[0] as f64
    } else {
        let a: f64 = modes[1..d - 1].iter().map(|&n| n as f64).sum();
        let b = (modes[0] + modes[d - 1]) as f64;
        if a == 0.0 {
            s / b
        } else {
            (-b + (b * b + 4.0 * a * s).sqrt()) / (2.0 * a)
        }
    };
    RankProfile { ranks, max_rank, param_count: storage_count, storage_count, effective_rank }
}

#[cfg(test)]
mod tests;
