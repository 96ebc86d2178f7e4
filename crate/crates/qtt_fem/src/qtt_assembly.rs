//! Subdomain stiffness matrices and load vectors assembled directly in QTT
//! format.
//!
//! For every corner pair `(c1, c2)` the element integrals form a diagonal
//! operator over the (zero-padded) element grid, and the shift operators
//! `V_c` scatter it to node positions:
//!
//! ```text
//! K_αβ = Σ_{c1,c2} V_{c1}ᵀ diag(𝒦^{αβ}_{c1,c2}) V_{c2}
//! ```
//!
//! `V_c` is an element × node selection matrix sending element `(i, j)` to
//! node `(i + a, j + b)`, where `(a, b)` is the node offset of corner `c`.
//! It is the (z-)Kronecker product of two one-dimensional shifts.

use crate::elasticity_fem::{
    element_blocks, traction_load, BoundaryCondition, ElementOptions, FemError, MaterialModel, Side, SubdomainMesh,
    CORNER_OFFSETS,
};
use crate::qtt_indexing::{zorder_permutation, Ordering};
use crate::tt_core::{
    rank_profile, tt_add, tt_decompose, tt_diag, tt_kron, tt_matmul, tt_matvec, tt_round, tt_scale, tt_transpose,
    tt_zkron, Core, RankProfile, TtError, TtMatrix, TtVector,
};
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum AssemblyError {
    #[error(transparent)]
    Fem(#[from] FemError),

    #[error(transparent)]
    Tt(#[from] TtError),

    #[error("grid error: {0}")]
    Grid(String),
}

/// One-dimensional shift `S[i, i + offset] = 1` for `i + offset < 2^d`, as a
/// QTT matrix with `d` binary cores.
///
/// For `offset = 1` the cores track the carry of `i + 1`, which gives rank 2;
/// `offset = 0` is the identity.
pub fn shift_1d(offset: usize, d: usize) -> TtMatrix {
    assert!(offset <= 1 && d >= 1);
    if offset == 0 {
        return TtMatrix::identity(&vec![2; d]);
    }
    let mut cores = Vec::with_capacity(d);
    for l in 0..d {
        let r0 = if l == 0 { 1 } else { 2 };
        let r1 = if l == d - 1 { 1 } else { 2 };
        let mut c = Core::zeros(r0, 4, r1);
        for a in 0..r0 {
            let carry_in = if l == 0 { 1 } else { a };
            for b in 0..r1 {
                for i in 0..2 {
                    for k in 0..2 {
                        // i + carry_in = k + 2 carry_out; no overflow at the top
                        let sum = i + carry_in;
                        let carry_out = sum / 2;
                        let ok = sum % 2 == k && if l == d - 1 { carry_out == 0 } else { carry_out == b };
                        if ok {
                            *c.at_mut(a, i + 2 * k, b) = 1.0;
                        }
                    }
                }
            }
        }
        cores.push(c);
    }
    TtMatrix::from_cores(cores, vec![2; d], vec![2; d]).expect("valid shift")
}

/// Combine a `j`-direction and an `i`-direction factor over the 2D grid.
pub(crate) fn grid_kron<T: crate::tt_core::KronProduct>(j_part: &T, i_part: &T, ordering: Ordering) -> T {
    match ordering {
        Ordering::Canonical => tt_kron(j_part, i_part),
        Ordering::ZOrder => tt_zkron(j_part, i_part).expect("equal core counts"),
    }
}

/// Shift matrix `V_c` of one element corner.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftOperator {
    pub corner: usize,
    pub ordering: Ordering,
    pub op: TtMatrix,
}

/// Build `V_c` (rows: elements, columns: nodes) for corner index `corner`
/// in [`crate::elasticity_fem::CORNERS`] order.
pub fn build_shift_operator(corner: usize, d: usize, ordering: Ordering) -> Result<ShiftOperator, AssemblyError> {
    if corner >= 4 {
        return Err(AssemblyError::Grid(format!("corner index {corner} out of range")));
    }
    if d == 0 {
        return Err(AssemblyError::Grid("level d must be at least 1".into()));
    }
    let (a, b) = CORNER_OFFSETS[corner];
    let op = grid_kron(&shift_1d(b, d), &shift_1d(a, d), ordering);
    Ok(ShiftOperator { corner, ordering, op })
}

/// Reorder a canonical `2^d × 2^d` grid (`i + 2^d j`) into `ordering`.
pub fn reorder_grid(values: &[f64], d: usize, ordering: Ordering) -> Result<Vec<f64>, AssemblyError> {
    let n = 1usize << (2 * d);
    if values.len() != n {
        return Err(AssemblyError::Grid(format!("grid has {} values, expected 4^{d} = {n}", values.len())));
    }
    Ok(match ordering {
        Ordering::Canonical => values.to_vec(),
        Ordering::ZOrder => {
            let perm = zorder_permutation(d).map_err(|e| AssemblyError::Grid(e.to_string()))?;
            perm.iter().map(|&l| values[l]).collect()
        }
    })
}

/// Zero-pad an `n × n` element grid (`n = 2^d − 1`) to `2^d × 2^d`.
pub fn pad_element_grid(values: &[f64], d: usize) -> Result<Vec<f64>, AssemblyError> {
    let side = 1usize << d;
    let n = side - 1;
    if values.len() != n * n {
        return Err(AssemblyError::Grid(format!("element grid has {} values, expected {}", values.len(), n * n)));
    }
    let mut out = vec![0.0; side * side];
    for j in 0..n {
        out[j * side..j * side + n].copy_from_slice(&values[j * n..(j + 1) * n]);
    }
    Ok(out)
}

/// QTT vector of a canonical `2^d × 2^d` grid laid out in `ordering`.
pub fn grid_vector(values: &[f64], d: usize, ordering: Ordering, eps: f64) -> Result<TtVector, AssemblyError> {
    Ok(tt_decompose(&reorder_grid(values, d, ordering)?, eps)?)
}

/// `diag(values)` over a canonical `2^d × 2^d` grid laid out in `ordering`.
pub fn diag_tt(values: &[f64], d: usize, ordering: Ordering, eps: f64) -> Result<TtMatrix, AssemblyError> {
    Ok(tt_diag(&grid_vector(values, d, ordering, eps)?))
}

/// Stiffness blocks and load vector of one subdomain.
#[derive(Debug, Clone, PartialEq)]
pub struct SubdomainSystem {
    pub d: usize,
    pub ordering: Ordering,
    /// `k[α][β]`, each `4^d × 4^d` over the node grid.
    pub k: [[TtMatrix; 2]; 2],
    /// `f[α]` over the node grid.
    pub f: [TtVector; 2],
}

impl SubdomainSystem {
    pub fn k_profiles(&self) -> [[RankProfile; 2]; 2] {
        [
            [rank_profile(&self.k[0][0]), rank_profile(&self.k[0][1])],
            [rank_profile(&self.k[1][0]), rank_profile(&self.k[1][1])],
        ]
    }

    pub fn f_profiles(&self) -> [RankProfile; 2] {
        [rank_profile(&self.f[0]), rank_profile(&self.f[1])]
    }
}

/// Options of [`assemble_subdomain`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyOptions {
    pub element: ElementOptions,
    pub ordering: Ordering,
    /// Overall tolerance; each of the sixteen accumulations rounds at `ε/16`.
    pub eps: f64,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        AssemblyOptions { element: ElementOptions::default(), ordering: Ordering::ZOrder, eps: 1e-12 }
    }
}

/// Unit vector `e_k` of length `2^d` as a rank-one QTT vector.
fn unit_1d(k: usize, d: usize) -> TtVector {
    TtVector::unit(&vec![2; d], k)
}

/// Node-grid load vectors `[f_x, f_y]` of the side tractions.
fn traction_vectors(mesh: &SubdomainMesh, ordering: Ordering) -> Result<Vec<[TtVector; 2]>, AssemblyError> {
    let d = mesh.d;
    let last = mesh.side_nodes() - 1;
    let mut out = Vec::new();
    for side in Side::ALL {
        if !matches!(mesh.side(side), BoundaryCondition::Traction { .. }) {
            continue;
        }
        let (w, dir) = traction_load(mesh, side)?;
        // place the weights along the grid coordinate that varies on the side
        let mut along = vec![0.0; w.len()];
        for (k, v) in w.iter().enumerate() {
            let (i, j) = side.node(k, w.len());
            let pos = match side {
                Side::Bottom | Side::Top => i,
                Side::Right | Side::Left => j,
            };
            along[pos] = *v;
        }
        let along = tt_decompose(&along, 0.0)?;
        let v = match side {
            Side::Bottom => grid_kron(&unit_1d(0, d), &along, ordering),
            Side::Top => grid_kron(&unit_1d(last, d), &along, ordering),
            Side::Left => grid_kron(&along, &unit_1d(0, d), ordering),
            Side::Right => grid_kron(&along, &unit_1d(last, d), ordering),
        };
        out.push([tt_scale(&v, dir[0]), tt_scale(&v, dir[1])]);
    }
    Ok(out)
}

/// Assemble `K^{(m)}` and `f^{(m)}` of one subdomain in QTT format.
///
/// The load vector collects the constant body force and the side
/// tractions. Accumulation runs over `(c1, c2)` in lexicographic order.
pub fn assemble_subdomain(
    mesh: &SubdomainMesh,
    material: &MaterialModel,
    opts: AssemblyOptions,
) -> Result<SubdomainSystem, AssemblyError> {
    let d = mesh.d;
    let eps_acc = opts.eps / 16.0;
    let blocks = element_blocks(mesh, material, opts.element)?;
    let shifts: Vec<TtMatrix> =
        (0..4).map(|c| build_shift_operator(c, d, opts.ordering).map(|s| s.op)).collect::<Result<_, _>>()?;
    let shifts_t: Vec<TtMatrix> = shifts.iter().map(tt_transpose).collect();
    let node_modes = vec![2; 2 * d];

    let mut k: [[Option<TtMatrix>; 2]; 2] = Default::default();
    for (alpha, row) in k.iter_mut().enumerate() {
        for (beta, slot) in row.iter_mut().enumerate() {
            let mut acc: Option<TtMatrix> = None;
            for c1 in 0..4 {
                for c2 in 0..4 {
                    let vals: Vec<f64> = blocks.k[c1][c2].iter().map(|b| b[alpha][beta]).collect();
                    if vals.iter().all(|v| *v == 0.0) {
                        continue;
                    }
                    let dg = diag_tt(&pad_element_grid(&vals, d)?, d, opts.ordering, eps_acc)?;
                    let term = tt_matmul(&tt_matmul(&shifts_t[c1], &dg)?, &shifts[c2])?;
                    acc = Some(match acc {
                        None => tt_round(&term, eps_acc)?,
                        Some(a) => tt_round(&tt_add(&a, &term)?, eps_acc)?,
                    });
                }
            }
            *slot = Some(acc.unwrap_or_else(|| TtMatrix::zeros(&node_modes, &node_modes)));
        }
    }

    let mut f = [TtVector::zeros(&node_modes), TtVector::zeros(&node_modes)];
    if mesh.body_force != [0.0, 0.0] {
        let ones = TtVector::ones(&node_modes);
        let mut acc: Option<TtVector> = None;
        for c1 in 0..4 {
            for c2 in 0..4 {
                let dg = diag_tt(&pad_element_grid(&blocks.g[c1][c2], d)?, d, opts.ordering, eps_acc)?;
                let term = tt_matvec(&tt_matmul(&tt_matmul(&shifts_t[c1], &dg)?, &shifts[c2])?, &ones)?;
                acc = Some(match acc {
                    None => tt_round(&term, eps_acc)?,
                    Some(a) => tt_round(&tt_add(&a, &term)?, eps_acc)?,
                });
            }
        }
        let base = acc.expect("sixteen terms");
        for (a, fa) in f.iter_mut().enumerate() {
            *fa = tt_scale(&base, mesh.body_force[a]);
        }
    }
    for [tx, ty] in traction_vectors(mesh, opts.ordering)? {
        f[0] = tt_round(&tt_add(&f[0], &tx)?, eps_acc)?;
        f[1] = tt_round(&tt_add(&f[1], &ty)?, eps_acc)?;
    }

    let [[kxx, kxy], [kyx, kyy]] = k.map(|r| r.map(|x| x.expect("filled")));
    Ok(SubdomainSystem { d, ordering: opts.ordering, k: [[kxx, kxy], [kyx, kyy]], f })
}
