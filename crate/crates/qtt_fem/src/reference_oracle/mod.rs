//! Conforming finite element reference.
//!
//! The same geometry as a [`DomainTopology`] is meshed conformally: copies of
//! interface nodes are merged, so every node carries one pair of unknowns.
//! Each subdomain is split into `n × n` bilinear elements through its
//! parameter map. With `n = 2^d − 1` this is the mesh the QTT solver works on;
//! with `n = 2^L` the meshes of successive `L` are nested, which the
//! multigrid solver in [`multigrid`] relies on.
//!
//! Two solvers are provided: a sparse Cholesky factorization for small
//! meshes and a multigrid-preconditioned conjugate gradient method for the
//! overrefined reference solutions. Errors of a coarse solution are measured
//! on the reference mesh after bilinear evaluation of the coarse field at the
//! reference nodes.

pub mod multigrid;

use crate::domain_coupling::{CouplingError, DomainTopology, GlobalLayout};
use crate::elasticity_fem::{
    element_mass, element_matrix, BoundaryCondition, FemError, MaterialModel, Point, Quadrature, Side, SubdomainMesh,
    CORNER_OFFSETS,
};
use crate::tt_core::TtVector;
use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum OracleError {
    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("meshes are not nested: {0}")]
    Nesting(String),

    #[error("sparse factorization failed: {0}")]
    Factorization(String),

    #[error(transparent)]
    Fem(#[from] FemError),

    #[error(transparent)]
    Coupling(#[from] CouplingError),
}

/// Per-element matrices: shared by every element of a subdomain when the
/// subdomain is a parallelogram (all elements are translates), stored per
/// element otherwise.
#[derive(Debug, Clone, PartialEq)]
enum CellData<T> {
    Shared(T),
    PerCell(Vec<T>),
}

impl<T> CellData<T> {
    fn get(&self, cell: usize) -> &T {
        match self {
            CellData::Shared(t) => t,
            CellData::PerCell(v) => &v[cell],
        }
    }
}

/// A conforming mesh of `n × n` elements per subdomain.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformingMesh {
    /// Elements per subdomain side.
    pub n: usize,
    pub subdomains: Vec<SubdomainMesh>,
    pub nodes: Vec<Point>,
    /// `node_of[m][i + (n + 1) j]`: global node of local node `(i, j)`.
    node_of: Vec<Vec<u32>>,
    /// First subdomain listing each node.
    owner: Vec<u32>,
    /// Displacement components fixed to zero.
    pub fixed: Vec<[bool; 2]>,
    /// Consistent nodal forces.
    pub load: Vec<[f64; 2]>,
    stiffness: Vec<CellData<[[f64; 8]; 8]>>,
    mass: Vec<CellData<[[f64; 4]; 4]>>,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl ConformingMesh {
    /// Mesh every subdomain of `topo` with `n` elements per side.
    pub fn new(
        topo: &DomainTopology,
        n: usize,
        material: &MaterialModel,
        quadrature: Quadrature,
    ) -> Result<Self, OracleError> {
        if n == 0 {
            return Err(OracleError::Mesh("at least one element per side is required".into()));
        }
        let q = topo.q();
        let side = n + 1;
        let per = side * side;
        let slot = |m: usize, (i, j): (usize, usize)| m * per + i + side * j;
        let mut parent: Vec<usize> = (0..q * per).collect();
        let union = |a: usize, b: usize, parent: &mut Vec<usize>| {
            let (ra, rb) = (find(parent, a), find(parent, b));
            if ra != rb {
                // keep the smaller slot as representative
                let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
                parent[hi] = lo;
            }
        };
        for f in &topo.interfaces {
            for k in 0..side {
                let kp = if f.reversed { n - k } else { k };
                let a = slot(f.m, f.side_m.node(k, side));
                let b = slot(f.p, f.side_p.node(kp, side));
                union(a, b, &mut parent);
            }
        }
        let corner = |c: usize| [(0, 0), (n, 0), (n, n), (0, n)][c];
        for c in &topo.contacts {
            union(slot(c.m, corner(c.corner_m)), slot(c.p, corner(c.corner_p)), &mut parent);
        }

        let mut id_of_root = vec![u32::MAX; q * per];
        let mut nodes = Vec::new();
        let mut owner = Vec::new();
        let mut node_of = vec![vec![0u32; per]; q];
        let h = 1.0 / n as f64;
        for (m, sub) in topo.subdomains.iter().enumerate() {
            for j in 0..side {
                for i in 0..side {
                    let s = slot(m, (i, j));
                    let r = find(&mut parent, s);
                    let x = sub.map(i as f64 * h, j as f64 * h);
                    if id_of_root[r] == u32::MAX {
                        id_of_root[r] = nodes.len() as u32;
                        nodes.push(x);
                        owner.push(m as u32);
                    } else if dist(nodes[id_of_root[r] as usize], x) > 10.0 * topo.tolerance.max(1e-14) {
                        return Err(OracleError::Mesh(format!(
                            "merged node ({i}, {j}) of subdomain {m} at {x:?} is away from its copy at {:?}",
                            nodes[id_of_root[r] as usize]
                        )));
                    }
                    node_of[m][i + side * j] = id_of_root[r];
                }
            }
        }

        let nn = nodes.len();
        let mut fixed = vec![[false; 2]; nn];
        let mut load = vec![[0.0; 2]; nn];
        let mut stiffness = Vec::with_capacity(q);
        let mut mass = Vec::with_capacity(q);
        for (m, sub) in topo.subdomains.iter().enumerate() {
            for s in Side::ALL {
                let bc = sub.side(s);
                for k in 0..side {
                    let node = node_of[m][{
                        let (i, j) = s.node(k, side);
                        i + side * j
                    }] as usize;
                    for (c, fx) in fixed[node].iter_mut().enumerate() {
                        *fx |= bc.constrains(c);
                    }
                }
                if let BoundaryCondition::Traction { t, direction } = bc {
                    let norm = (direction[0].powi(2) + direction[1].powi(2)).sqrt();
                    if !(norm > 0.0) {
                        return Err(OracleError::Mesh("traction direction must be nonzero".into()));
                    }
                    let he = sub.side_length(s) / n as f64;
                    for k in 0..side {
                        let w = if k == 0 || k == n { 0.5 * t * he } else { t * he };
                        let (i, j) = s.node(k, side);
                        let node = node_of[m][i + side * j] as usize;
                        load[node][0] += w * direction[0] / norm;
                        load[node][1] += w * direction[1] / norm;
                    }
                }
            }
            let c = &sub.corners;
            let parallelogram = dist([c[0][0] + c[2][0], c[0][1] + c[2][1]], [c[1][0] + c[3][0], c[1][1] + c[3][1]])
                <= 1e-13 * dist(c[0], c[2]);
            let corners = |i: usize, j: usize| CORNER_OFFSETS.map(|(a, b)| sub.map((i + a) as f64 * h, (j + b) as f64 * h));
            if parallelogram {
                let x = corners(0, 0);
                stiffness.push(CellData::Shared(element_matrix(&x, material, quadrature)));
                mass.push(CellData::Shared(element_mass(&x, quadrature)));
            } else {
                let mut ks = Vec::with_capacity(n * n);
                let mut ms = Vec::with_capacity(n * n);
                for j in 0..n {
                    for i in 0..n {
                        let x = corners(i, j);
                        ks.push(element_matrix(&x, material, quadrature));
                        ms.push(element_mass(&x, quadrature));
                    }
                }
                stiffness.push(CellData::PerCell(ks));
                mass.push(CellData::PerCell(ms));
            }
        }
        let mut mesh = ConformingMesh {
            n,
            subdomains: topo.subdomains.clone(),
            nodes,
            node_of,
            owner,
            fixed,
            load,
            stiffness,
            mass,
        };
        // body forces: b ∫ φ_a over every element
        for m in 0..q {
            let b = mesh.subdomains[m].body_force;
            if b == [0.0, 0.0] {
                continue;
            }
            for cell in 0..n * n {
                let ids = mesh.cell_nodes(m, cell);
                let me = mesh.mass[m].get(cell);
                for (a, &node) in ids.iter().enumerate() {
                    let w: f64 = me[a].iter().sum();
                    mesh.load[node][0] += w * b[0];
                    mesh.load[node][1] += w * b[1];
                }
            }
        }
        Ok(mesh)
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Unknowns, two per node (`2 node + c`).
    pub fn dofs(&self) -> usize {
        2 * self.nodes.len()
    }

    /// Global node of local node `(i, j)` of subdomain `m`.
    pub fn node(&self, m: usize, i: usize, j: usize) -> usize {
        self.node_of[m][i + (self.n + 1) * j] as usize
    }

    /// First subdomain listing `node`.
    pub fn owner(&self, node: usize) -> usize {
        self.owner[node] as usize
    }

    fn cell_nodes(&self, m: usize, cell: usize) -> [usize; 4] {
        let (i, j) = (cell % self.n, cell / self.n);
        CORNER_OFFSETS.map(|(a, b)| self.node(m, i + a, j + b))
    }

    /// Load vector in dof order, zero at fixed dofs.
    pub fn rhs(&self) -> Vec<f64> {
        let mut f = vec![0.0; self.dofs()];
        for (k, (l, fx)) in self.load.iter().zip(&self.fixed).enumerate() {
            for c in 0..2 {
                if !fx[c] {
                    f[2 * k + c] = l[c];
                }
            }
        }
        f
    }

    /// `y = K x` with the unconstrained stiffness.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        let mut loc = [0.0; 8];
        for m in 0..self.subdomains.len() {
            for cell in 0..self.n * self.n {
                let ids = self.cell_nodes(m, cell);
                for (a, &nd) in ids.iter().enumerate() {
                    loc[2 * a] = x[2 * nd];
                    loc[2 * a + 1] = x[2 * nd + 1];
                }
                let ke = self.stiffness[m].get(cell);
                for (a, &nd) in ids.iter().enumerate() {
                    for c in 0..2 {
                        let row = &ke[2 * a + c];
                        let mut s = 0.0;
                        for (kv, lv) in row.iter().zip(&loc) {
                            s += kv * lv;
                        }
                        y[2 * nd + c] += s;
                    }
                }
            }
        }
    }

    /// `y = M K M x + (I − M) x` for the free-dof mask `M`.
    pub fn apply_constrained(&self, x: &[f64], y: &mut [f64]) {
        let mut xm = x.to_vec();
        self.zero_fixed(&mut xm);
        self.apply(&xm, y);
        for (k, fx) in self.fixed.iter().enumerate() {
            for c in 0..2 {
                if fx[c] {
                    y[2 * k + c] = x[2 * k + c];
                }
            }
        }
    }

    pub fn zero_fixed(&self, v: &mut [f64]) {
        for (k, fx) in self.fixed.iter().enumerate() {
            for c in 0..2 {
                if fx[c] {
                    v[2 * k + c] = 0.0;
                }
            }
        }
    }

    /// Diagonal of the constrained operator.
    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dofs()];
        for m in 0..self.subdomains.len() {
            for cell in 0..self.n * self.n {
                let ke = self.stiffness[m].get(cell);
                for (a, &nd) in self.cell_nodes(m, cell).iter().enumerate() {
                    for c in 0..2 {
                        d[2 * nd + c] += ke[2 * a + c][2 * a + c];
                    }
                }
            }
        }
        for (k, fx) in self.fixed.iter().enumerate() {
            for c in 0..2 {
                if fx[c] {
                    d[2 * k + c] = 1.0;
                }
            }
        }
        d
    }

    /// Assembled stiffness (unconstrained) as a sparse matrix.
    pub fn stiffness_matrix(&self) -> Result<SparseColMat<usize, f64>, OracleError> {
        self.sparse(false)
    }

    /// Element contributions `(row, col, value)` of the unconstrained
    /// stiffness; entries repeat where elements overlap.
    pub fn stiffness_triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(64 * self.subdomains.len() * self.n * self.n);
        for m in 0..self.subdomains.len() {
            for cell in 0..self.n * self.n {
                let ids = self.cell_nodes(m, cell);
                let ke = self.stiffness[m].get(cell);
                for a in 0..8 {
                    for b in 0..8 {
                        out.push((2 * ids[a / 2] + a % 2, 2 * ids[b / 2] + b % 2, ke[a][b]));
                    }
                }
            }
        }
        out
    }

    /// Constrained operator: fixed rows and columns replaced by identity.
    fn sparse(&self, constrained: bool) -> Result<SparseColMat<usize, f64>, OracleError> {
        let mut trip = Vec::with_capacity(64 * self.subdomains.len() * self.n * self.n);
        let is_fixed = |dof: usize| constrained && self.fixed[dof / 2][dof % 2];
        for m in 0..self.subdomains.len() {
            for cell in 0..self.n * self.n {
                let ids = self.cell_nodes(m, cell);
                let ke = self.stiffness[m].get(cell);
                for a in 0..8 {
                    let r = 2 * ids[a / 2] + a % 2;
                    if is_fixed(r) {
                        continue;
                    }
                    for b in 0..8 {
                        let c = 2 * ids[b / 2] + b % 2;
                        if !is_fixed(c) {
                            trip.push(Triplet::new(r, c, ke[a][b]));
                        }
                    }
                }
            }
        }
        if constrained {
            for dof in 0..self.dofs() {
                if is_fixed(dof) {
                    trip.push(Triplet::new(dof, dof, 1.0));
                }
            }
        }
        SparseColMat::try_new_from_triplets(self.dofs(), self.dofs(), &trip)
            .map_err(|e| OracleError::Factorization(format!("{e:?}")))
    }

    /// `eᵀ K e` summed per element (no cancellation across elements).
    pub fn energy(&self, e: &[f64]) -> f64 {
        let mut total = 0.0;
        let mut loc = [0.0; 8];
        for m in 0..self.subdomains.len() {
            for cell in 0..self.n * self.n {
                let ids = self.cell_nodes(m, cell);
                for (a, &nd) in ids.iter().enumerate() {
                    loc[2 * a] = e[2 * nd];
                    loc[2 * a + 1] = e[2 * nd + 1];
                }
                let ke = self.stiffness[m].get(cell);
                let mut s = 0.0;
                for a in 0..8 {
                    for b in 0..8 {
                        s += loc[a] * ke[a][b] * loc[b];
                    }
                }
                total += s;
            }
        }
        total
    }

    /// `∫ |e|²` with the consistent mass form.
    pub fn mass_energy(&self, e: &[f64]) -> f64 {
        let mut total = 0.0;
        for m in 0..self.subdomains.len() {
            for cell in 0..self.n * self.n {
                let ids = self.cell_nodes(m, cell);
                let me = self.mass[m].get(cell);
                for c in 0..2 {
                    for a in 0..4 {
                        for b in 0..4 {
                            total += e[2 * ids[a] + c] * me[a][b] * e[2 * ids[b] + c];
                        }
                    }
                }
            }
        }
        total
    }

    /// Rigid-body check: at least one fixed dof per component and at least
    /// two distinct fixed points (or a fixed point plus a side roller).
    fn check_constraints(&self) -> Result<(), OracleError> {
        for (c, name) in ["u_x", "u_y"].iter().enumerate() {
            if !self.fixed.iter().any(|f| f[c]) {
                return Err(OracleError::Singular(format!(
                    "no boundary condition constrains {name}; the rigid translation is free"
                )));
            }
        }
        let fixed_nodes: Vec<usize> = (0..self.num_nodes()).filter(|&k| self.fixed[k][0] || self.fixed[k][1]).collect();
        let count: usize = self.fixed.iter().map(|f| f[0] as usize + f[1] as usize).sum();
        if fixed_nodes.len() < 2 || count < 3 {
            return Err(OracleError::Singular("constraints do not prevent the rigid rotation".into()));
        }
        Ok(())
    }
}

/// Displacements of a reference computation, two per node.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub mesh: ConformingMesh,
    pub u: Vec<f64>,
    /// `‖K u − f‖ / ‖f‖` on the constrained system.
    pub residual: f64,
}

impl ReferenceSolution {
    /// Energy norm `a(u, u)^{1/2}` of the reference field.
    pub fn energy_norm(&self) -> f64 {
        self.mesh.energy(&self.u).max(0.0).sqrt()
    }

    /// `‖u‖_{L²}` of the reference field.
    pub fn l2_norm(&self) -> f64 {
        self.mesh.mass_energy(&self.u).max(0.0).sqrt()
    }

    /// Component `c` of subdomain `m` on its `(n + 1)²` local grid,
    /// `i + (n + 1) j`.
    pub fn subdomain_field(&self, m: usize, c: usize) -> Vec<f64> {
        let side = self.mesh.n + 1;
        let mut out = vec![0.0; side * side];
        for j in 0..side {
            for i in 0..side {
                out[i + side * j] = self.u[2 * self.mesh.node(m, i, j) + c];
            }
        }
        out
    }
}

fn rel_residual(mesh: &ConformingMesh, u: &[f64], f: &[f64]) -> f64 {
    let mut ku = vec![0.0; u.len()];
    mesh.apply_constrained(u, &mut ku);
    let r: f64 = ku.iter().zip(f).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let nf = f.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nf > 0.0 {
        r / nf
    } else {
        r
    }
}

/// Solve the conforming system on `mesh` by sparse Cholesky.
pub fn direct_solve(mesh: ConformingMesh) -> Result<ReferenceSolution, OracleError> {
    mesh.check_constraints()?;
    let k = mesh.sparse(true)?;
    let llt = k
        .sp_cholesky(faer::Side::Lower)
        .map_err(|e| OracleError::Singular(format!("stiffness is not positive definite ({e:?})")))?;
    let f = mesh.rhs();
    let rhs = Mat::from_fn(f.len(), 1, |i, _| f[i]);
    let x = llt.solve(&rhs);
    let u: Vec<f64> = (0..f.len()).map(|i| x[(i, 0)]).collect();
    let residual = rel_residual(&mesh, &u, &f);
    Ok(ReferenceSolution { mesh, u, residual })
}

/// Solve a general square sparse system given as triplets (repeated
/// entries are summed) by sparse LU.
pub fn solve_triplets(n: usize, entries: &[(usize, usize, f64)], rhs: &[f64]) -> Result<Vec<f64>, OracleError> {
    if rhs.len() != n || entries.iter().any(|&(r, c, _)| r >= n || c >= n) {
        return Err(OracleError::Factorization("triplets or right-hand side do not match the size".into()));
    }
    let trip: Vec<Triplet<usize, usize, f64>> = entries.iter().map(|&(r, c, v)| Triplet::new(r, c, v)).collect();
    let a = SparseColMat::try_new_from_triplets(n, n, &trip).map_err(|e| OracleError::Factorization(format!("{e:?}")))?;
    let lu = a.sp_lu().map_err(|e| OracleError::Factorization(format!("{e:?}")))?;
    let b = Mat::from_fn(n, 1, |i, _| rhs[i]);
    let x = lu.solve(&b);
    let out: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(OracleError::Singular("sparse LU produced non-finite values".into()));
    }
    Ok(out)
}

/// Conforming solve with `n` elements per subdomain side by sparse
/// Cholesky. Use [`multigrid::reference_solve`] for large meshes.
pub fn conforming_solve(
    topo: &DomainTopology,
    material: &MaterialModel,
    n: usize,
    quadrature: Quadrature,
) -> Result<ReferenceSolution, OracleError> {
    direct_solve(ConformingMesh::new(topo, n, material, quadrature)?)
}

/// Nodal displacement field on the `2^d × 2^d` grids of every subdomain,
/// canonical order `i + 2^d j`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField {
    pub d: usize,
    pub values: Vec<[Vec<f64>; 2]>,
}

impl NodalField {
    /// Extract the physical subdomains from a global QTT solution.
    pub fn from_tt(layout: &GlobalLayout, u: &TtVector) -> Result<Self, OracleError> {
        let mut values = Vec::with_capacity(layout.q);
        for m in 0..layout.q {
            values.push([layout.field(u, 0, m)?, layout.field(u, 1, m)?]);
        }
        Ok(NodalField { d: layout.d, values })
    }

    /// Read the field off a solution on the `n = 2^d − 1` conforming mesh.
    pub fn from_reference(sol: &ReferenceSolution) -> Result<Self, OracleError> {
        let side = sol.mesh.n + 1;
        if !side.is_power_of_two() || side < 2 {
            return Err(OracleError::Nesting(format!("{} nodes per side is not a power of two", side)));
        }
        let d = side.trailing_zeros() as usize;
        let values = (0..sol.mesh.subdomains.len()).map(|m| [sol.subdomain_field(m, 0), sol.subdomain_field(m, 1)]).collect();
        Ok(NodalField { d, values })
    }

    /// Bilinear evaluation at every node of `mesh`, in dof order.
    pub fn interpolate(&self, mesh: &ConformingMesh) -> Result<Vec<f64>, OracleError> {
        let nc = (1usize << self.d) - 1;
        if self.values.len() != mesh.subdomains.len() {
            return Err(OracleError::Nesting("field and mesh have different subdomain counts".into()));
        }
        if mesh.n < nc {
            return Err(OracleError::Nesting(format!(
                "target mesh with {} elements per side is coarser than the field ({nc})",
                mesh.n
            )));
        }
        let side_c = nc + 1;
        let side_f = mesh.n + 1;
        let mut out = vec![0.0; mesh.dofs()];
        for (m, vals) in self.values.iter().enumerate() {
            for jf in 0..side_f {
                let y = jf as f64 * nc as f64 / mesh.n as f64;
                let jc = (y.floor() as usize).min(nc - 1);
                let eta = y - jc as f64;
                for i_f in 0..side_f {
                    let node = mesh.node(m, i_f, jf);
                    if mesh.owner[node] as usize != m {
                        continue;
                    }
                    let x = i_f as f64 * nc as f64 / mesh.n as f64;
                    let ic = (x.floor() as usize).min(nc - 1);
                    let xi = x - ic as f64;
                    let w = [(1.0 - xi) * (1.0 - eta), xi * (1.0 - eta), xi * eta, (1.0 - xi) * eta];
                    for c in 0..2 {
                        let mut v = 0.0;
                        for (k, (a, b)) in CORNER_OFFSETS.iter().enumerate() {
                            v += w[k] * vals[c][(ic + a) + side_c * (jc + b)];
                        }
                        out[2 * node + c] = v;
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Energy seminorm `a(e, e)^{1/2}` of `e = I u_test − u_ref` on the
/// reference mesh.
pub fn energy_error(test: &NodalField, reference: &ReferenceSolution) -> Result<f64, OracleError> {
    let e = difference(test, reference)?;
    Ok(reference.mesh.energy(&e).max(0.0).sqrt())
}

/// `‖I u_test − u_ref‖_{L²}` on the reference mesh.
pub fn l2_error(test: &NodalField, reference: &ReferenceSolution) -> Result<f64, OracleError> {
    let e = difference(test, reference)?;
    Ok(reference.mesh.mass_energy(&e).max(0.0).sqrt())
}

fn difference(test: &NodalField, reference: &ReferenceSolution) -> Result<Vec<f64>, OracleError> {
    let mut e = test.interpolate(&reference.mesh)?;
    for (a, b) in e.iter_mut().zip(&reference.u) {
        *a -= b;
    }
    Ok(e)
}
