//! Coupling of subdomain systems into one global QTT system.
//!
//! Subdomains keep their own copies of interface nodes. Copies are tied
//! together by connectivity matrices `Π^{(mp)}` (0/1, rows over the nodes of
//! `m`, columns over the nodes of `p`) and a penalty `γ`:
//!
//! ```text
//! K_{αβ,mm} = K^{(m)}_{αβ} + γ δ_{αβ} Π^{(mm)}
//! K_{αβ,mp} = Π^{(mp)} K^{(p)}_{αβ} − γ δ_{αβ} Π^{(mp)}
//! g^{(m)}_α = f^{(m)}_α + Σ_{p≠m} Π^{(mp)} f^{(p)}_α
//! ```
//!
//! `Π^{(mm)}` is diagonal and counts, for every node of `m`, its copies in
//! other subdomains. Each interface row then holds the conforming equation
//! (both halves of the stiffness and load) plus `γ` times a graph Laplacian
//! over the copies, which forces the copies to agree.
//!
//! Homogeneous Dirichlet conditions are applied blockwise with 0/1 masks
//! `M`: `K_{mp} ← M_m K_{mp} M_p`, plus `γ (I − M_m)` on diagonal blocks.
//!
//! The global layout, from the most significant digit down, is
//! `[component] × [subdomain] × [grid]`; the subdomain axis is padded to a
//! power of two with `γ I` blocks and zero loads.

pub mod config;

use crate::elasticity_fem::{BoundaryCondition, FemError, Point, Side, SubdomainMesh};
use crate::qtt_assembly::{grid_kron, AssemblyError, SubdomainSystem};
use crate::qtt_indexing::{zorder_permutation, Ordering};
use crate::tt_core::{
    rank_profile, tt_add, tt_contract, tt_diag, tt_dot, tt_hadamard, tt_kron, tt_matmul, tt_matvec, tt_round,
    tt_scale, tt_sub, Core, RankProfile, TensorTrain, TtError, TtMatrix, TtVector,
};
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum CouplingError {
    #[error("topology error: {0}")]
    Topology(String),

    #[error("non-conforming interface: {0}")]
    NonConforming(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error(transparent)]
    Fem(#[from] FemError),

    #[error(transparent)]
    Assembly(#[from] AssemblyError),

    #[error(transparent)]
    Tt(#[from] TtError),
}

/// A full side shared by two subdomains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interface {
    pub m: usize,
    pub side_m: Side,
    pub p: usize,
    pub side_p: Side,
    /// Node `k` of `side_m` meets node `2^d − 1 − k` of `side_p` (both in
    /// [`Side::node`] order). Two counterclockwise subdomains meeting along a
    /// side always have `reversed = true`.
    pub reversed: bool,
}

/// Two subdomain corners that coincide without a shared side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PointContact {
    pub m: usize,
    /// Corner index in [`SubdomainMesh::corners`] order.
    pub corner_m: usize,
    pub p: usize,
    pub corner_p: usize,
}

/// Subdomains together with their interfaces and point contacts.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainTopology {
    pub subdomains: Vec<SubdomainMesh>,
    /// Each shared side listed once, with `m < p`.
    pub interfaces: Vec<Interface>,
    /// Each coincident corner pair without a shared side, with `m < p`.
    pub contacts: Vec<PointContact>,
    /// Coordinate tolerance (`1e-12` times the domain diameter).
    pub tolerance: f64,
}

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Node `(i, j)` of corner `c` on a `2^d` grid.
fn corner_node(c: usize, d: usize) -> (usize, usize) {
    let last = (1usize << d) - 1;
    [(0, 0), (last, 0), (last, last), (0, last)][c]
}

/// Distance of `x` from the segment `[a, b]` and its parameter along it.
fn segment_projection(x: Point, a: Point, b: Point) -> (f64, f64) {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = ((x[0] - a[0]) * ab[0] + (x[1] - a[1]) * ab[1]) / len2;
    let tc = t.clamp(0.0, 1.0);
    (dist(x, [a[0] + tc * ab[0], a[1] + tc * ab[1]]), t)
}

impl DomainTopology {
    /// Derive interfaces and point contacts from corner coordinates.
    ///
    /// All subdomains must share the level `d`. Sides that touch along a
    /// positive length without matching end points, and corners lying inside
    /// another subdomain's side, are rejected as non-conforming.
    pub fn new(subdomains: Vec<SubdomainMesh>) -> Result<Self, CouplingError> {
        if subdomains.is_empty() {
            return Err(CouplingError::Topology("no subdomains".into()));
        }
        let d = subdomains[0].d;
        for (m, s) in subdomains.iter().enumerate() {
            s.validate()?;
            if s.d != d {
                return Err(CouplingError::Argument(format!("subdomain {m} has level {} but subdomain 0 has {d}", s.d)));
            }
        }
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for s in &subdomains {
            for c in &s.corners {
                for a in 0..2 {
                    lo[a] = lo[a].min(c[a]);
                    hi[a] = hi[a].max(c[a]);
                }
            }
        }
        let tol = 1e-12 * dist(lo, hi);
        let close = |a: Point, b: Point| dist(a, b) <= tol;

        let mut interfaces = Vec::new();
        for m in 0..subdomains.len() {
            for p in m + 1..subdomains.len() {
                let (sm, sp) = (&subdomains[m], &subdomains[p]);
                for side_m in Side::ALL {
                    let (a, b) = side_m.corners();
                    let (a, b) = (sm.corners[a], sm.corners[b]);
                    for side_p in Side::ALL {
                        let (c, e) = side_p.corners();
                        let (c, e) = (sp.corners[c], sp.corners[e]);
                        let reversed = if close(a, e) && close(b, c) {
                            true
                        } else if close(a, c) && close(b, e) {
                            false
                        } else {
                            // collinear overlap of positive length is a hanging interface
                            let (dc, tc) = segment_projection(c, a, b);
                            let (de, te) = segment_projection(e, a, b);
                            if dc <= tol && de <= tol {
                                let (t0, t1) = (tc.min(te).max(0.0), tc.max(te).min(1.0));
                                if t1 - t0 > 1e-12 {
                                    return Err(CouplingError::NonConforming(format!(
                                        "side {} of subdomain {m} and side {} of subdomain {p} overlap partially",
                                        side_m.name(),
                                        side_p.name()
                                    )));
                                }
                            }
                            continue;
                        };
                        for (idx, side) in [(m, side_m), (p, side_p)] {
                            if subdomains[idx].side(side) != BoundaryCondition::Free {
                                return Err(CouplingError::Topology(format!(
                                    "side {} of subdomain {idx} is an interface but carries the condition '{}'",
                                    side.name(),
                                    subdomains[idx].side(side)
                                )));
                            }
                        }
                        interfaces.push(Interface { m, side_m, p, side_p, reversed });
                    }
                }
            }
        }

        for (k, a) in interfaces.iter().enumerate() {
            for b in &interfaces[k + 1..] {
                let same = |x: usize, sx: Side, y: usize, sy: Side| x == y && sx == sy;
                if same(a.m, a.side_m, b.m, b.side_m)
                    || same(a.m, a.side_m, b.p, b.side_p)
                    || same(a.p, a.side_p, b.m, b.side_m)
                    || same(a.p, a.side_p, b.p, b.side_p)
                {
                    return Err(CouplingError::Topology("a side is shared by more than two subdomains".into()));
                }
            }
        }

        let mut contacts = Vec::new();
        for m in 0..subdomains.len() {
            for p in m + 1..subdomains.len() {
                for cm in 0..4 {
                    for cp in 0..4 {
                        if !close(subdomains[m].corners[cm], subdomains[p].corners[cp]) {
                            continue;
                        }
                        let covered = interfaces.iter().any(|f| {
                            f.m == m && f.p == p && {
                                let (a, b) = f.side_m.corners();
                                cm == a || cm == b
                            }
                        });
                        if !covered {
                            contacts.push(PointContact { m, corner_m: cm, p, corner_p: cp });
                        }
                    }
                }
            }
        }

        // corners strictly inside another subdomain's side are hanging nodes
        for (m, sm) in subdomains.iter().enumerate() {
            for (p, sp) in subdomains.iter().enumerate() {
                if m == p {
                    continue;
                }
                for &c in &sm.corners {
                    for side in Side::ALL {
                        let (a, b) = side.corners();
                        let (a, b) = (sp.corners[a], sp.corners[b]);
                        let (dd, t) = segment_projection(c, a, b);
                        if dd <= tol && !close(c, a) && !close(c, b) && t > 0.0 && t < 1.0 {
                            return Err(CouplingError::NonConforming(format!(
                                "a corner of subdomain {m} lies inside side {} of subdomain {p}",
                                side.name()
                            )));
                        }
                    }
                }
            }
        }

        let topo = DomainTopology { subdomains, interfaces, contacts, tolerance: tol };
        topo.check_interfaces()?;
        Ok(topo)
    }

    /// Number of subdomains `q`.
    pub fn q(&self) -> usize {
        self.subdomains.len()
    }

    /// Common level `d`.
    pub fn d(&self) -> usize {
        self.subdomains[0].d
    }

    /// Rebuild the same topology at another level.
    pub fn with_level(&self, d: usize) -> Result<Self, CouplingError> {
        let subs = self.subdomains.iter().map(|s| SubdomainMesh { d, ..s.clone() }).collect();
        DomainTopology::new(subs)
    }

    /// Coincident node pairs `((i, j) of m, (i, j) of p)` implied by the
    /// interfaces and point contacts between `m` and `p` (either order).
    pub fn node_pairs(&self, m: usize, p: usize) -> Vec<((usize, usize), (usize, usize))> {
        let d = self.d();
        let n = 1usize << d;
        let mut out = Vec::new();
        if m == p {
            return out;
        }
        for f in &self.interfaces {
            let (sm, sp) = if f.m == m && f.p == p {
                (f.side_m, f.side_p)
            } else if f.m == p && f.p == m {
                (f.side_p, f.side_m)
            } else {
                continue;
            };
            for k in 0..n {
                let kp = if f.reversed { n - 1 - k } else { k };
                out.push((sm.node(k, n), sp.node(kp, n)));
            }
        }
        for c in &self.contacts {
            if c.m == m && c.p == p {
                out.push((corner_node(c.corner_m, d), corner_node(c.corner_p, d)));
            } else if c.m == p && c.p == m {
                out.push((corner_node(c.corner_p, d), corner_node(c.corner_m, d)));
            }
        }
        out.sort();
        out.dedup();
        out
    }

    /// Physical check of every pair returned by [`Self::node_pairs`].
    fn check_interfaces(&self) -> Result<(), CouplingError> {
        for m in 0..self.q() {
            for p in m + 1..self.q() {
                for ((i, j), (k, l)) in self.node_pairs(m, p) {
                    let (a, b) = (self.subdomains[m].node(i, j), self.subdomains[p].node(k, l));
                    if dist(a, b) > self.tolerance {
                        return Err(CouplingError::NonConforming(format!(
                            "node ({i}, {j}) of subdomain {m} at {a:?} does not meet node ({k}, {l}) of subdomain {p} at {b:?}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Coincidence by brute-force coordinate comparison of all boundary nodes.
///
/// Independent of the interface bookkeeping; used to verify `Π`.
pub fn coordinate_matching(topo: &DomainTopology, m: usize, p: usize) -> Vec<((usize, usize), (usize, usize))> {
    if m == p {
        return Vec::new();
    }
    let n = 1usize << topo.d();
    let boundary = |s: &SubdomainMesh| {
        let mut v = Vec::new();
        for j in 0..n {
            for i in 0..n {
                if i == 0 || j == 0 || i == n - 1 || j == n - 1 {
                    v.push(((i, j), s.node(i, j)));
                }
            }
        }
        v
    };
    let (bm, bp) = (boundary(&topo.subdomains[m]), boundary(&topo.subdomains[p]));
    let mut out = Vec::new();
    for (a, xa) in &bm {
        for (b, xb) in &bp {
            if dist(*xa, *xb) <= topo.tolerance {
                out.push((*a, *b));
            }
        }
    }
    out.sort();
    out
}

/// One grid coordinate of a relation, as a function of the bits of `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BitExpr {
    Const(usize),
    /// `k`
    Var,
    /// `2^d − 1 − k`, the bitwise complement of `k`
    Not,
}

impl BitExpr {
    fn bit(self, level: usize, k: usize) -> usize {
        match self {
            BitExpr::Const(c) => (c >> level) & 1,
            BitExpr::Var => k,
            BitExpr::Not => 1 - k,
        }
    }

    fn uses_k(self) -> bool {
        !matches!(self, BitExpr::Const(_))
    }

    fn flipped(self) -> BitExpr {
        match self {
            BitExpr::Var => BitExpr::Not,
            BitExpr::Not => BitExpr::Var,
            c => c,
        }
    }
}

/// `(i, j)` of [`Side::node`] as bit expressions of `k`.
fn side_exprs(side: Side, d: usize) -> [BitExpr; 2] {
    let last = (1usize << d) - 1;
    match side {
        Side::Bottom => [BitExpr::Var, BitExpr::Const(0)],
        Side::Right => [BitExpr::Const(last), BitExpr::Var],
        Side::Top => [BitExpr::Not, BitExpr::Const(last)],
        Side::Left => [BitExpr::Const(0), BitExpr::Not],
    }
}

/// The 0/1 matrix `Σ_k e_{row(k)} e_{col(k)}ᵀ` over node grids, built core by
/// core.
///
/// Every grid bit of `row(k)` and `col(k)` at level `ℓ` depends only on bit
/// `ℓ` of `k`, so each bond only has to carry the bits of `k` that are shared
/// between cores on both of its sides. In Z-order the two cores of a level are
/// adjacent and the rank is at most 2.
fn relation_matrix(row: [BitExpr; 2], col: [BitExpr; 2], d: usize, ordering: Ordering) -> TtMatrix {
    // (level, axis) of each core
    let seq: Vec<(usize, usize)> = match ordering {
        Ordering::ZOrder => (0..d).flat_map(|l| [(l, 0), (l, 1)]).collect(),
        Ordering::Canonical => (0..d).map(|l| (l, 0)).chain((0..d).map(|l| (l, 1))).collect(),
    };
    let uses = |pos: usize| {
        let a = seq[pos].1;
        row[a].uses_k() || col[a].uses_k()
    };
    // first and last positions using each level
    let mut span = vec![None::<(usize, usize)>; d];
    for (t, &(l, _)) in seq.iter().enumerate() {
        if uses(t) {
            span[l] = Some(match span[l] {
                None => (t, t),
                Some((a, _)) => (a, t),
            });
        }
    }
    // levels carried across the bond after position t
    let open_after = |t: usize| -> Vec<usize> {
        (0..d).filter(|&l| matches!(span[l], Some((a, b)) if a <= t && t < b)).collect()
    };
    let mut cores = Vec::with_capacity(seq.len());
    let mut left: Vec<usize> = Vec::new();
    for (t, &(l, axis)) in seq.iter().enumerate() {
        let right = open_after(t);
        let (r0, r1) = (1usize << left.len(), 1usize << right.len());
        let mut core = Core::zeros(r0, 4, r1);
        let bit_of = |state: usize, list: &[usize], level: usize| {
            list.iter().position(|&x| x == level).map(|p| (state >> p) & 1)
        };
        for a in 0..r0 {
            for b in 0..r1 {
                // shared pass-through levels must agree
                let consistent = left
                    .iter()
                    .all(|&lv| !right.contains(&lv) || bit_of(a, &left, lv) == bit_of(b, &right, lv));
                if !consistent {
                    continue;
                }
                let ks: Vec<usize> = match (bit_of(a, &left, l), bit_of(b, &right, l)) {
                    (Some(x), _) | (None, Some(x)) => vec![x],
                    (None, None) if uses(t) => vec![0, 1],
                    _ => vec![0],
                };
                for k in ks {
                    let rb = row[axis].bit(l, k);
                    let cb = col[axis].bit(l, k);
                    *core.at_mut(a, rb + 2 * cb, b) += 1.0;
                }
            }
        }
        cores.push(core);
        left = right;
    }
    TtMatrix::from_cores(cores, vec![2; 2 * d], vec![2; 2 * d]).expect("consistent bonds")
}

/// Connectivity between two subdomains.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityOperator {
    pub m: usize,
    pub p: usize,
    /// `Π^{(mp)}`, or the diagonal `Π^{(mm)}` when `m = p`.
    pub pi: TtMatrix,
    /// Number of ones (coincident node pairs, or marked diagonal entries).
    pub nnz: usize,
}

/// Build `Π^{(mp)}` in QTT format.
///
/// For `m ≠ p` it is the sum of one relation matrix per shared side and per
/// point contact. For `m = p` it is the
/// diagonal of `Σ_{p≠m} Π^{(mp)} 1`. The result is checked entrywise against
/// the pairs of [`DomainTopology::node_pairs`], whose coordinates were
/// verified when the topology was built.
pub fn build_connectivity(
    topo: &DomainTopology,
    m: usize,
    p: usize,
    ordering: Ordering,
) -> Result<ConnectivityOperator, CouplingError> {
    let q = topo.q();
    if m >= q || p >= q {
        return Err(CouplingError::Argument(format!("subdomain index out of range (q = {q})")));
    }
    let d = topo.d();
    let modes = vec![2; 2 * d];
    if m == p {
        let ones = TtVector::ones(&modes);
        let mut count = TtVector::zeros(&modes);
        for o in (0..q).filter(|&o| o != m) {
            let c = build_connectivity(topo, m, o, ordering)?;
            if c.nnz > 0 {
                count = tt_round(&tt_add(&count, &tt_matvec(&c.pi, &ones)?)?, 1e-14)?;
            }
        }
        let nnz = (0..q)
            .filter(|&o| o != m)
            .flat_map(|o| topo.node_pairs(m, o).into_iter().map(|(a, _)| a))
            .collect::<std::collections::BTreeSet<_>>()
            .len();
        return Ok(ConnectivityOperator { m, p, pi: tt_diag(&count), nnz });
    }

    let mut terms: Vec<TtMatrix> = Vec::new();
    for f in &topo.interfaces {
        let (sm, sp) = if f.m == m && f.p == p {
            (f.side_m, f.side_p)
        } else if f.m == p && f.p == m {
            (f.side_p, f.side_m)
        } else {
            continue;
        };
        let row = side_exprs(sm, d);
        let mut col = side_exprs(sp, d);
        if f.reversed {
            col = col.map(BitExpr::flipped);
        }
        terms.push(relation_matrix(row, col, d, ordering));
    }
    for c in &topo.contacts {
        let (a, b) = if c.m == m && c.p == p {
            (corner_node(c.corner_m, d), corner_node(c.corner_p, d))
        } else if c.m == p && c.p == m {
            (corner_node(c.corner_p, d), corner_node(c.corner_m, d))
        } else {
            continue;
        };
        let point = |(i, j): (usize, usize)| [BitExpr::Const(i), BitExpr::Const(j)];
        terms.push(relation_matrix(point(a), point(b), d, ordering));
    }
    let pairs = topo.node_pairs(m, p);
    let pi = match terms.split_first() {
        None => TtMatrix::zeros(&modes, &modes),
        Some((first, rest)) => {
            let mut acc = first.clone();
            for t in rest {
                acc = tt_round(&tt_add(&acc, t)?, 1e-14)?;
            }
            acc
        }
    };
    check_relation(&pi, &pairs, d, ordering)?;
    Ok(ConnectivityOperator { m, p, pi, nnz: pairs.len() })
}

/// Index of node `(i, j)` in `ordering`.
fn node_index(i: usize, j: usize, d: usize, ordering: Ordering) -> usize {
    match ordering {
        Ordering::Canonical => i + (j << d),
        Ordering::ZOrder => crate::qtt_indexing::interleave(i, j),
    }
}

/// Verify that `pi` has ones exactly at `pairs`: the listed entries equal 1,
/// and the total mass `1ᵀ Π 1` and Frobenius norm both equal the pair count.
fn check_relation(
    pi: &TtMatrix,
    pairs: &[((usize, usize), (usize, usize))],
    d: usize,
    ordering: Ordering,
) -> Result<(), CouplingError> {
    let idx: Vec<(usize, usize)> =
        pairs.iter().map(|&((i, j), (k, l))| (node_index(i, j, d, ordering), node_index(k, l, d, ordering))).collect();
    let vals = if idx.is_empty() { Vec::new() } else { pi.entries(&idx)? };
    let n = pairs.len() as f64;
    let frob2 = tt_dot(pi, pi)?;
    let modes = vec![2; 2 * d];
    let mass = tt_dot(&tt_matvec(pi, &TtVector::ones(&modes))?, &TtVector::ones(&modes))?;
    let tol = 1e-9 * (1.0 + n);
    if vals.iter().any(|v| (v - 1.0).abs() > 1e-9) || (frob2 - n).abs() > tol || (mass - n).abs() > tol {
        return Err(CouplingError::NonConforming(format!(
            "connectivity operator disagrees with the node coincidence map ({} pairs, ‖Π‖² = {frob2}, 1ᵀΠ1 = {mass})",
            pairs.len()
        )));
    }
    Ok(())
}

/// `(1 − [i = 0])` or `(1 − [i = 2^d − 1])` along one grid direction.
fn exclude_end(d: usize, at_start: bool) -> TtVector {
    // X01 = [0, 1, …, 1] = 1 − e_0, X10 = [1, …, 1, 0] = 1 − e_last
    let n = 1usize << d;
    let modes = vec![2; d];
    let e = TtVector::unit(&modes, if at_start { 0 } else { n - 1 });
    tt_round(&tt_sub(&TtVector::ones(&modes), &e).expect("same modes"), 0.0).expect("rounding")
}

/// Per-component 0/1 node masks of one subdomain: `mask[c]` is zero exactly
/// at nodes whose component `c` is fixed by a side condition.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMask {
    pub mask: [TtVector; 2],
}

/// Build the mask of one subdomain from its side tags with (z-)Kronecker
/// products of the end-excluding generators. A corner between two
/// constrained sides gets both constraints.
pub fn build_boundary_mask(mesh: &SubdomainMesh, ordering: Ordering) -> Result<BoundaryMask, CouplingError> {
    let d = mesh.d;
    let ones = TtVector::ones(&vec![2; d]);
    let mut out = [TtVector::ones(&vec![2; 2 * d]), TtVector::ones(&vec![2; 2 * d])];
    for (c, m) in out.iter_mut().enumerate() {
        for side in Side::ALL {
            if !mesh.side(side).constrains(c) {
                continue;
            }
            let factor = match side {
                Side::Left => grid_kron(&ones, &exclude_end(d, true), ordering),
                Side::Right => grid_kron(&ones, &exclude_end(d, false), ordering),
                Side::Bottom => grid_kron(&exclude_end(d, true), &ones, ordering),
                Side::Top => grid_kron(&exclude_end(d, false), &ones, ordering),
            };
            *m = tt_round(&tt_hadamard(m, &factor)?, 1e-14)?;
        }
    }
    Ok(BoundaryMask { mask: out })
}

/// Masks of all subdomains with constraints shared across coincident nodes:
/// `mask^m ∘ Π_{p≠m} (1 − Π^{(mp)} (1 − mask^p))`.
///
/// Without this a clamped node of one subdomain would stay free in the
/// subdomain holding its other copy.
pub fn propagate_masks(
    masks: &[BoundaryMask],
    connectivity: &[Vec<Option<ConnectivityOperator>>],
) -> Result<Vec<BoundaryMask>, CouplingError> {
    let q = masks.len();
    let mut out = Vec::with_capacity(q);
    for m in 0..q {
        let mut mask = masks[m].mask.clone();
        for (c, mc) in mask.iter_mut().enumerate() {
            let modes = mc.mode_sizes();
            let ones = TtVector::ones(&modes);
            for p in (0..q).filter(|&p| p != m) {
                let Some(op) = &connectivity[m][p] else { continue };
                let fixed_p = tt_sub(&ones, &masks[p].mask[c])?;
                let reached = tt_round(&tt_matvec(&op.pi, &fixed_p)?, 1e-14)?;
                if tt_dot(&reached, &reached)? < 0.5 {
                    continue;
                }
                *mc = tt_round(&tt_hadamard(mc, &tt_sub(&ones, &reached)?)?, 1e-14)?;
            }
        }
        out.push(BoundaryMask { mask });
    }
    Ok(out)
}

/// `[[Π^{(mp)}]]`: connectivity for every adjacent pair and every diagonal.
pub fn connectivity_table(
    topo: &DomainTopology,
    ordering: Ordering,
) -> Result<Vec<Vec<Option<ConnectivityOperator>>>, CouplingError> {
    let q = topo.q();
    let mut table = vec![vec![None; q]; q];
    for m in 0..q {
        for p in 0..q {
            if m != p && topo.node_pairs(m, p).is_empty() {
                continue;
            }
            table[m][p] = Some(build_connectivity(topo, m, p, ordering)?);
        }
    }
    Ok(table)
}

/// `g^{(m)}_α = f^{(m)}_α + Σ_{p≠m} Π^{(mp)} f^{(p)}_α`.
pub fn accumulate_interface_forces(
    systems: &[SubdomainSystem],
    connectivity: &[Vec<Option<ConnectivityOperator>>],
    eps: f64,
) -> Result<Vec<[TtVector; 2]>, CouplingError> {
    let q = systems.len();
    let mut out = Vec::with_capacity(q);
    for m in 0..q {
        let mut g = systems[m].f.clone();
        for p in (0..q).filter(|&p| p != m) {
            let Some(op) = &connectivity[m][p] else { continue };
            for (a, ga) in g.iter_mut().enumerate() {
                *ga = tt_round(&tt_add(ga, &tt_matvec(&op.pi, &systems[p].f[a])?)?, eps)?;
            }
        }
        out.push(g);
    }
    Ok(out)
}

/// Default penalty: mean diagonal entry of the `K^{(m)}_{αα}` blocks.
pub fn default_gamma(systems: &[SubdomainSystem]) -> Result<f64, CouplingError> {
    let mut sum = 0.0;
    let mut count = 0.0;
    for s in systems {
        let modes = vec![2; 2 * s.d];
        let eye = TtMatrix::identity(&modes);
        for a in 0..2 {
            sum += tt_dot(&s.k[a][a], &eye)?;
            count += (1u64 << (2 * s.d)) as f64;
        }
    }
    Ok(sum / count)
}

/// One block `K_{αβ,mp}` of the global operator.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub alpha: usize,
    pub beta: usize,
    pub m: usize,
    pub p: usize,
    pub k: TtMatrix,
}

/// Index layout of the global system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GlobalLayout {
    pub d: usize,
    pub q: usize,
    /// `⌈log₂ q⌉` binary cores for the subdomain axis.
    pub subdomain_bits: usize,
    pub ordering: Ordering,
}

impl GlobalLayout {
    pub fn new(d: usize, q: usize, ordering: Ordering) -> Self {
        let mut b = 0;
        while (1usize << b) < q {
            b += 1;
        }
        GlobalLayout { d, q, subdomain_bits: b, ordering }
    }

    /// Padded number of subdomains `2^b`.
    pub fn q_padded(&self) -> usize {
        1 << self.subdomain_bits
    }

    /// Total number of unknowns `2 · 2^b · 4^d`.
    pub fn len(&self) -> usize {
        2 * self.q_padded() << (2 * self.d)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of physical unknowns `2 · q · 4^d`.
    pub fn dofs(&self) -> usize {
        2 * self.q << (2 * self.d)
    }

    /// Global index of component `c` at node `(i, j)` of subdomain `m`.
    pub fn index(&self, c: usize, m: usize, i: usize, j: usize) -> usize {
        node_index(i, j, self.d, self.ordering) + ((m + (c << self.subdomain_bits)) << (2 * self.d))
    }

    /// Mode sizes of the global train: `2d` grid cores, `b` subdomain
    /// cores, one component core.
    pub fn modes(&self) -> Vec<usize> {
        vec![2; 2 * self.d + self.subdomain_bits + 1]
    }

    /// Component `c` of subdomain `m` over the canonical grid (`i + 2^d j`).
    ///
    /// Contracts only the grid part of `u` after fixing the trailing cores.
    pub fn field(&self, u: &TtVector, c: usize, m: usize) -> Result<Vec<f64>, CouplingError> {
        let g = 2 * self.d;
        let cores = u.cores();
        if cores.len() != g + self.subdomain_bits + 1 {
            return Err(CouplingError::Argument("vector does not match the global layout".into()));
        }
        let digits: Vec<usize> =
            (0..self.subdomain_bits).map(|b| (m >> b) & 1).chain(std::iter::once(c)).collect();
        // right-to-left product of the fixed trailing slices
        let mut w = vec![1.0];
        for (core, &x) in cores[g..].iter().zip(&digits).rev() {
            let mut next = vec![0.0; core.r0()];
            for (a, nx) in next.iter_mut().enumerate() {
                *nx = (0..core.r1()).map(|b| core.at(a, x, b) * w[b]).sum();
            }
            w = next;
        }
        let last = &cores[g - 1];
        let mut data = vec![0.0; last.r0() * last.n()];
        for a in 0..last.r0() {
            for k in 0..last.n() {
                data[a + last.r0() * k] = (0..last.r1()).map(|b| last.at(a, k, b) * w[b]).sum();
            }
        }
        let mut grid: Vec<Core> = cores[..g - 1].to_vec();
        grid.push(Core::new(last.r0(), last.n(), 1, data)?);
        let dense = tt_contract(&TtVector::from_cores(grid)?)?;
        Ok(match self.ordering {
            Ordering::Canonical => dense,
            Ordering::ZOrder => {
                let perm = zorder_permutation(self.d).map_err(|e| CouplingError::Argument(e.to_string()))?;
                let mut out = vec![0.0; dense.len()];
                for (z, &l) in perm.iter().enumerate() {
                    out[l] = dense[z];
                }
                out
            }
        })
    }
}

/// Global system in block form.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalSystem {
    pub layout: GlobalLayout,
    pub gamma: f64,
    /// Rounding tolerance used while building and stacking blocks.
    pub eps: f64,
    pub blocks: Vec<Block>,
    /// `g^{(m)}` per subdomain.
    pub rhs: Vec<[TtVector; 2]>,
    /// Masks applied by [`apply_dirichlet`], if any.
    pub masks: Option<Vec<BoundaryMask>>,
    /// The `Π` table the blocks were built from.
    pub connectivity: Vec<Vec<Option<ConnectivityOperator>>>,
}

/// Assemble the coupled block system.
///
/// `gamma = None` selects [`default_gamma`].
pub fn concat_blocks(
    systems: &[SubdomainSystem],
    connectivity: &[Vec<Option<ConnectivityOperator>>],
    gamma: Option<f64>,
    eps: f64,
) -> Result<GlobalSystem, CouplingError> {
    let q = systems.len();
    if q == 0 {
        return Err(CouplingError::Argument("no subdomain systems".into()));
    }
    let (d, ordering) = (systems[0].d, systems[0].ordering);
    if systems.iter().any(|s| s.d != d || s.ordering != ordering) {
        return Err(CouplingError::Argument("subdomain systems differ in level or ordering".into()));
    }
    if connectivity.len() != q || connectivity.iter().any(|r| r.len() != q) {
        return Err(CouplingError::Argument("connectivity table does not match the subdomain count".into()));
    }
    let gamma = match gamma {
        Some(g) => g,
        None => default_gamma(systems)?,
    };
    if !(gamma > 0.0) {
        return Err(CouplingError::Argument(format!("penalty γ must be positive, got {gamma}")));
    }
    let mut blocks = Vec::new();
    for alpha in 0..2 {
        for beta in 0..2 {
            for m in 0..q {
                for p in 0..q {
                    let k = if m == p {
                        let mut k = systems[m].k[alpha][beta].clone();
                        if let (true, Some(op)) = (alpha == beta, &connectivity[m][m]) {
                            if op.nnz > 0 {
                                k = tt_round(&tt_add(&k, &tt_scale(&op.pi, gamma))?, eps)?;
                            }
                        }
                        k
                    } else {
                        let Some(op) = &connectivity[m][p] else { continue };
                        if op.nnz == 0 {
                            continue;
                        }
                        let mut k = tt_round(&tt_matmul(&op.pi, &systems[p].k[alpha][beta])?, eps)?;
                        if alpha == beta {
                            k = tt_round(&tt_sub(&k, &tt_scale(&op.pi, gamma))?, eps)?;
                        }
                        k
                    };
                    blocks.push(Block { alpha, beta, m, p, k });
                }
            }
        }
    }
    let rhs = accumulate_interface_forces(systems, connectivity, eps)?;
    Ok(GlobalSystem {
        layout: GlobalLayout::new(d, q, ordering),
        gamma,
        eps,
        blocks,
        rhs,
        masks: None,
        connectivity: connectivity.to_vec(),
    })
}

/// Impose homogeneous Dirichlet conditions: `K_{αβ,mp} ← M^m_α K_{αβ,mp}
/// M^p_β`, `γ (I − M^m_α)` added to diagonal blocks, `g^m_α ← M^m_α g^m_α`.
pub fn apply_dirichlet(mut global: GlobalSystem, masks: &[BoundaryMask]) -> Result<GlobalSystem, CouplingError> {
    if masks.len() != global.layout.q {
        return Err(CouplingError::Argument("one mask per subdomain required".into()));
    }
    let eps = global.eps;
    let diag: Vec<[TtMatrix; 2]> = masks.iter().map(|m| m.mask.clone().map(|v| tt_diag(&v))).collect();
    let modes = vec![2; 2 * global.layout.d];
    let eye = TtMatrix::identity(&modes);
    for b in &mut global.blocks {
        let k = tt_matmul(&tt_matmul(&diag[b.m][b.alpha], &b.k)?, &diag[b.p][b.beta])?;
        b.k = tt_round(&k, eps)?;
        if b.m == b.p && b.alpha == b.beta {
            let fixed = tt_scale(&tt_sub(&eye, &diag[b.m][b.alpha])?, global.gamma);
            b.k = tt_round(&tt_add(&b.k, &fixed)?, eps)?;
        }
    }
    for (g, mask) in global.rhs.iter_mut().zip(masks) {
        for a in 0..2 {
            g[a] = tt_round(&tt_hadamard(&g[a], &mask.mask[a])?, eps)?;
        }
    }
    global.masks = Some(masks.to_vec());
    Ok(global)
}

/// `E_{rc}` over `bits` binary cores, or `None` when `bits = 0`.
fn selector(r: usize, c: usize, bits: usize) -> Option<TtMatrix> {
    if bits == 0 {
        return None;
    }
    let factors: Vec<Vec<f64>> = (0..bits)
        .map(|b| {
            let mut f = vec![0.0; 4];
            f[((r >> b) & 1) * 2 + ((c >> b) & 1)] = 1.0;
            f
        })
        .collect();
    Some(TtMatrix::rank_one(&factors, &vec![2; bits], &vec![2; bits]).expect("valid factors"))
}

fn selector_vec(r: usize, bits: usize) -> Option<TtVector> {
    (bits > 0).then(|| TtVector::unit(&vec![2; bits], r))
}

/// `[[K_xx, K_xy], [K_yx, K_yy]]` and `[f_x; f_y]` as trains with one extra
/// most significant component core.
pub fn stack_components(
    k: &[[TtMatrix; 2]; 2],
    f: &[TtVector; 2],
    eps: f64,
) -> Result<(TtMatrix, TtVector), CouplingError> {
    let mut kk: Option<TtMatrix> = None;
    for (a, row) in k.iter().enumerate() {
        for (b, blk) in row.iter().enumerate() {
            let t = tt_kron(&selector(a, b, 1).expect("one bit"), blk);
            kk = Some(match kk {
                None => t,
                Some(acc) => tt_round(&tt_add(&acc, &t)?, eps)?,
            });
        }
    }
    let ff = tt_round(
        &tt_add(&tt_kron(&TtVector::unit(&[2], 0), &f[0]), &tt_kron(&TtVector::unit(&[2], 1), &f[1]))?,
        eps,
    )?;
    Ok((kk.expect("four blocks"), ff))
}

impl GlobalSystem {
    /// Number of physical unknowns.
    pub fn dofs(&self) -> usize {
        self.layout.dofs()
    }

    /// The global operator and load as single trains over
    /// [`GlobalLayout::modes`].
    ///
    /// Padded subdomains contribute `γ I` diagonal blocks and zero loads.
    pub fn to_tt(&self) -> Result<(TtMatrix, TtVector), CouplingError> {
        let lay = self.layout;
        let bits = lay.subdomain_bits;
        let grid_modes = vec![2; 2 * lay.d];
        let place = |k: &TtMatrix, m: usize, p: usize| -> TtMatrix {
            match selector(m, p, bits) {
                Some(s) => tt_kron(&s, k),
                None => k.clone(),
            }
        };
        let place_vec = |v: &TtVector, m: usize| -> TtVector {
            match selector_vec(m, bits) {
                Some(s) => tt_kron(&s, v),
                None => v.clone(),
            }
        };
        let mut per_component: Vec<Vec<TtMatrix>> = vec![Vec::new(); 4];
        for b in &self.blocks {
            per_component[2 * b.alpha + b.beta].push(place(&b.k, b.m, b.p));
        }
        let pad = tt_scale(&TtMatrix::identity(&grid_modes), self.gamma);
        for m in lay.q..lay.q_padded() {
            for a in 0..2 {
                per_component[3 * a].push(place(&pad, m, m));
            }
        }
        let sub_modes: Vec<usize> = vec![2; 2 * lay.d + bits];
        let mut comp: Vec<TtMatrix> = Vec::with_capacity(4);
        for terms in per_component {
            let mut acc: Option<TtMatrix> = None;
            for t in terms {
                acc = Some(match acc {
                    None => t,
                    Some(a) => tt_round(&tt_add(&a, &t)?, self.eps)?,
                });
            }
            comp.push(acc.unwrap_or_else(|| TtMatrix::zeros(&sub_modes, &sub_modes)));
        }
        let mut rhs: Vec<TtVector> = Vec::with_capacity(2);
        for a in 0..2 {
            let mut acc: Option<TtVector> = None;
            for (m, g) in self.rhs.iter().enumerate() {
                let t = place_vec(&g[a], m);
                acc = Some(match acc {
                    None => t,
                    Some(x) => tt_round(&tt_add(&x, &t)?, self.eps)?,
                });
            }
            rhs.push(acc.expect("at least one subdomain"));
        }
        let [kxx, kxy, kyx, kyy]: [TtMatrix; 4] = comp.try_into().expect("four components");
        let [fx, fy]: [TtVector; 2] = rhs.try_into().expect("two components");
        stack_components(&[[kxx, kxy], [kyx, kyy]], &[fx, fy], self.eps)
    }

    /// `Π = Σ_{m≠p} E_{mp} ⊗ Π^{(mp)}` on the global layout, acting on both
    /// components alike.
    pub fn interface_operator(&self) -> Result<TtMatrix, CouplingError> {
        let lay = self.layout;
        let bits = lay.subdomain_bits;
        let modes = vec![2; 2 * lay.d + bits];
        let mut acc: Option<TtMatrix> = None;
        for (m, row) in self.connectivity.iter().enumerate() {
            for (p, op) in row.iter().enumerate() {
                let Some(op) = op.as_ref().filter(|o| m != p && o.nnz > 0) else { continue };
                let t = tt_kron(&selector(m, p, bits).expect("two subdomains need a bit"), &op.pi);
                acc = Some(match acc {
                    None => t,
                    Some(a) => tt_round(&tt_add(&a, &t)?, 1e-14)?,
                });
            }
        }
        let pi = acc.unwrap_or_else(|| TtMatrix::zeros(&modes, &modes));
        Ok(tt_kron(&TtMatrix::identity(&[2]), &pi))
    }

    /// An SPD system `S v = h` with the same solution as `K u = g`.
    ///
    /// With `P = I + Π`, `L = diag(Π 1) − Π` and `W = diag(1 / (1 + Π 1))`
    /// (one over the number of copies of each node), the operator from
    /// [`Self::to_tt`] is `K = M P K_d M + γ M L M + γ (I − M)` for the block
    /// diagonal stiffness `K_d` and the mask `M`. Ranges of `P` (fields
    /// continuous across copies) and `L` (jumps) are orthogonal, and
    ///
    /// ```text
    /// S = W K P W + γ L,   h = W g
    /// ```
    ///
    /// is symmetric, positive definite and solved by the same `u`. `k` and
    /// `g` must be the output of [`Self::to_tt`].
    pub fn symmetric_form(&self, k: &TtMatrix, g: &TtVector) -> Result<(TtMatrix, TtVector), CouplingError> {
        let eps = self.eps;
        let pi = self.interface_operator()?;
        let modes = pi.row_modes().to_vec();
        let ones = TtVector::ones(&modes);
        let count = tt_round(&tt_matvec(&pi, &ones)?, 1e-14)?;
        let w = tt_diag(&inverse_copies(&count)?);
        let eye = TtMatrix::identity(&modes);
        let pw = tt_round(&tt_matmul(&tt_add(&eye, &pi)?, &w)?, 1e-14)?;
        let kpw = tt_round(&tt_matmul(k, &pw)?, eps)?;
        let wkpw = tt_round(&tt_matmul(&w, &kpw)?, eps)?;
        let lap = tt_sub(&tt_diag(&count), &pi)?;
        let s = tt_round(&tt_add(&wkpw, &tt_scale(&lap, self.gamma))?, eps)?;
        let h = tt_round(&tt_matvec(&w, g)?, eps)?;
        Ok((s, h))
    }

    /// Rank profiles of every block.
    pub fn block_profiles(&self) -> Vec<RankProfile> {
        self.blocks.iter().map(|b| rank_profile(&b.k)).collect()
    }
}

/// `1 / (1 + c)` entrywise for a vector `c` with entries in `{0, 1, 2, 3}`
/// (a grid node has at most three copies elsewhere), by the cubic
/// interpolating polynomial through those four points.
fn inverse_copies(c: &TtVector) -> Result<TtVector, CouplingError> {
    let ones = TtVector::ones(&c.mode_sizes());
    let c1 = tt_round(&tt_sub(c, &ones)?, 1e-14)?;
    let c2 = tt_round(&tt_sub(&c1, &ones)?, 1e-14)?;
    let k2 = tt_round(&tt_hadamard(c, &c1)?, 1e-14)?;
    let k3 = tt_round(&tt_hadamard(&k2, &c2)?, 1e-14)?;
    // Newton form: 1 − c/2 + c(c−1)/6 − c(c−1)(c−2)/24
    let terms = [ones, tt_scale(c, -0.5), tt_scale(&k2, 1.0 / 6.0), tt_scale(&k3, -1.0 / 24.0)];
    Ok(crate::tt_core::tt_sum_rounded(&terms, 1e-14)?)
}

/// Options of [`build_global_system`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingOptions {
    pub assembly: crate::qtt_assembly::AssemblyOptions,
    /// Penalty override; `None` uses [`default_gamma`].
    pub gamma: Option<f64>,
}

impl Default for CouplingOptions {
    fn default() -> Self {
        CouplingOptions { assembly: Default::default(), gamma: None }
    }
}

/// Assemble every subdomain, couple, and apply the side conditions.
pub fn build_global_system(
    topo: &DomainTopology,
    material: &crate::elasticity_fem::MaterialModel,
    opts: CouplingOptions,
) -> Result<GlobalSystem, CouplingError> {
    let ordering = opts.assembly.ordering;
    let systems: Vec<SubdomainSystem> = topo
        .subdomains
        .iter()
        .map(|s| crate::qtt_assembly::assemble_subdomain(s, material, opts.assembly))
        .collect::<Result<_, _>>()?;
    let conn = connectivity_table(topo, ordering)?;
    let global = concat_blocks(&systems, &conn, opts.gamma, opts.assembly.eps)?;
    let masks: Vec<BoundaryMask> =
        topo.subdomains.iter().map(|s| build_boundary_mask(s, ordering)).collect::<Result<_, _>>()?;
    let masks = propagate_masks(&masks, &conn)?;
    apply_dirichlet(global, &masks)
}
