//! Plane linear elasticity on bilinear quadrilaterals.
//!
//! A subdomain is the image of the unit square under the bilinear map
//! through its four corners. Its `2^d × 2^d` nodes sit at the images of a
//! uniform `(s, t)` lattice, so there are `(2^d − 1)²` elements and element
//! `(i, j)` has node `(i, j)` as its `(−1, −1)` corner.
//!
//! Element quantities are computed for all elements at once through the
//! affine expansion of the element Jacobian in the element indices, which is
//! exact for bilinear subdomain maps.

use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum FemError {
    #[error("inadmissible material: {0}")]
    Material(String),

    #[error("degenerate element ({i}, {j}): Jacobian determinant {det}")]
    Degenerate { i: usize, j: usize, det: f64 },

    #[error("invalid mesh: {0}")]
    Mesh(String),
}

/// 2D reduction of the isotropic law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlaneMode {
    #[default]
    PlaneStress,
    PlaneStrain,
}

impl std::str::FromStr for PlaneMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plane-stress" | "plane_stress" => Ok(PlaneMode::PlaneStress),
            "plane-strain" | "plane_strain" => Ok(PlaneMode::PlaneStrain),
            other => Err(format!("unknown plane mode '{other}'")),
        }
    }
}

impl std::fmt::Display for PlaneMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PlaneMode::PlaneStress => "plane-stress",
            PlaneMode::PlaneStrain => "plane-strain",
        })
    }
}

pub type Mat3 = [[f64; 3]; 3];

/// Isotropic material with its constitutive matrix in Voigt notation
/// `(ε_xx, ε_yy, γ_xy)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialModel {
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    pub mode: PlaneMode,
    c: Mat3,
}

impl MaterialModel {
    pub fn new(youngs_modulus: f64, poisson_ratio: f64, mode: PlaneMode) -> Result<Self, FemError> {
        let c = constitutive_matrix(youngs_modulus, poisson_ratio, mode)?;
        Ok(MaterialModel { youngs_modulus, poisson_ratio, mode, c })
    }

    pub fn c(&self) -> &Mat3 {
        &self.c
    }

    /// Lamé constants `(λ, μ)` of the 3D material.
    pub fn lame(&self) -> (f64, f64) {
        lame(self.youngs_modulus, self.poisson_ratio)
    }
}

pub fn lame(e: f64, nu: f64) -> (f64, f64) {
    (e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)), e / (2.0 * (1.0 + nu)))
}

/// Constitutive matrix `C` with `σ = C ε`.
///
/// Plane stress uses `E/(1−ν²)·[[1,ν,0],[ν,1,0],[0,0,(1−ν)/2]]`; plane
/// strain uses `[[λ+2μ,λ,0],[λ,λ+2μ,0],[0,0,μ]]`.
pub fn constitutive_matrix(e: f64, nu: f64, mode: PlaneMode) -> Result<Mat3, FemError> {
    if !(e > 0.0) || !e.is_finite() {
        return Err(FemError::Material(format!("Young's modulus must be positive, got {e}")));
    }
    if !(nu > -1.0 && nu < 0.5) {
        return Err(FemError::Material(format!("Poisson ratio must lie in (-1, 0.5), got {nu}")));
    }
    Ok(match mode {
        PlaneMode::PlaneStress => {
            let s = e / (1.0 - nu * nu);
            [[s, s * nu, 0.0], [s * nu, s, 0.0], [0.0, 0.0, s * (1.0 - nu) / 2.0]]
        }
        PlaneMode::PlaneStrain => {
            let (l, m) = lame(e, nu);
            [[l + 2.0 * m, l, 0.0], [l, l + 2.0 * m, 0.0], [0.0, 0.0, m]]
        }
    })
}

/// Reference corners in counterclockwise order; corner `k` of an element
/// sits at node `(i, j) + CORNER_OFFSETS[k]`.
pub const CORNERS: [(i8, i8); 4] = [(-1, -1), (1, -1), (1, 1), (-1, 1)];

/// Node offset of each corner relative to the element's `(−1, −1)` node.
pub const CORNER_OFFSETS: [(usize, usize); 4] = [(0, 0), (1, 0), (1, 1), (0, 1)];

/// Values and reference gradients `(∂/∂ξ, ∂/∂η)` of the four bilinear shape
/// functions, in [`CORNERS`] order.
pub fn shape_functions(xi: f64, eta: f64) -> ([f64; 4], [[f64; 2]; 4]) {
    let mut v = [0.0; 4];
    let mut g = [[0.0; 2]; 4];
    for (k, &(a, b)) in CORNERS.iter().enumerate() {
        let (a, b) = (a as f64, b as f64);
        v[k] = (1.0 + a * xi) * (1.0 + b * eta) / 4.0;
        g[k] = [a * (1.0 + b * eta) / 4.0, b * (1.0 + a * xi) / 4.0];
    }
    (v, g)
}

/// Tensor-product quadrature on the reference element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Quadrature {
    /// One point at the element center with weight 4.
    Midpoint,
    /// 2×2 Gauss–Legendre.
    #[default]
    Gauss2,
}

impl std::str::FromStr for Quadrature {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "midpoint" => Ok(Quadrature::Midpoint),
            "gauss2" => Ok(Quadrature::Gauss2),
            other => Err(format!("unknown quadrature '{other}' (expected midpoint or gauss2)")),
        }
    }
}

impl std::fmt::Display for Quadrature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Quadrature::Midpoint => "midpoint",
            Quadrature::Gauss2 => "gauss2",
        })
    }
}

impl Quadrature {
    /// Points `(ξ, η, weight)`.
    pub fn points(&self) -> Vec<(f64, f64, f64)> {
        match self {
            Quadrature::Midpoint => vec![(0.0, 0.0, 4.0)],
            Quadrature::Gauss2 => {
                let g = 1.0 / 3f64.sqrt();
                let mut p = Vec::with_capacity(4);
                for &eta in &[-g, g] {
                    for &xi in &[-g, g] {
                        p.push((xi, eta, 1.0));
                    }
                }
                p
            }
        }
    }
}

/// How `|J^{(i,j)}|` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeterminantRule {
    /// Determinant of the expanded Jacobian.
    #[default]
    Direct,
    /// `|J^{(0,0)}| + i |J^{(1,0)} − J^{(0,0)}| + j |J^{(0,1)} − J^{(0,0)}|`.
    /// Exact only when the element Jacobians do not vary with the indices.
    Expansion,
}

impl std::str::FromStr for DeterminantRule {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(DeterminantRule::Direct),
            "expansion" => Ok(DeterminantRule::Expansion),
            other => Err(format!("unknown determinant rule '{other}' (expected direct or expansion)")),
        }
    }
}

impl std::fmt::Display for DeterminantRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DeterminantRule::Direct => "direct",
            DeterminantRule::Expansion => "expansion",
        })
    }
}

/// Subdomain side, named by where it lies in the reference square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    /// `j = 0`
    Bottom,
    /// `i = 2^d − 1`
    Right,
    /// `j = 2^d − 1`
    Top,
    /// `i = 0`
    Left,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Bottom, Side::Right, Side::Top, Side::Left];

    pub fn name(&self) -> &'static str {
        match self {
            Side::Bottom => "bottom",
            Side::Right => "right",
            Side::Top => "top",
            Side::Left => "left",
        }
    }

    /// Node `(i, j)` number `k` along the side, counterclockwise.
    pub fn node(&self, k: usize, side_nodes: usize) -> (usize, usize) {
        let last = side_nodes - 1;
        match self {
            Side::Bottom => (k, 0),
            Side::Right => (last, k),
            Side::Top => (last - k, last),
            Side::Left => (0, last - k),
        }
    }

    /// Indices `(start corner, end corner)` into the subdomain corner list.
    pub fn corners(&self) -> (usize, usize) {
        match self {
            Side::Bottom => (0, 1),
            Side::Right => (1, 2),
            Side::Top => (2, 3),
            Side::Left => (3, 0),
        }
    }
}

impl std::str::FromStr for Side {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bottom" => Ok(Side::Bottom),
            "right" => Ok(Side::Right),
            "top" => Ok(Side::Top),
            "left" => Ok(Side::Left),
            other => Err(format!("unknown side '{other}'")),
        }
    }
}

/// Condition on an external side.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum BoundaryCondition {
    #[default]
    Free,
    /// `u_x = 0`.
    RollerX,
    /// `u_y = 0`.
    RollerY,
    Clamped,
    /// Surface traction of magnitude `t` along `direction` (normalized).
    Traction { t: f64, direction: [f64; 2] },
}

impl std::str::FromStr for BoundaryCondition {
    type Err = String;

    /// `free`, `clamped`, `roller-x`, `roller-y` or `traction <t> <dx> <dy>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let words: Vec<&str> = s.split_whitespace().collect();
        match words.as_slice() {
            ["free"] => Ok(BoundaryCondition::Free),
            ["clamped"] => Ok(BoundaryCondition::Clamped),
            ["roller-x"] => Ok(BoundaryCondition::RollerX),
            ["roller-y"] => Ok(BoundaryCondition::RollerY),
            ["traction", t, dx, dy] => {
                let num = |w: &str| w.parse::<f64>().map_err(|e| format!("bad number '{w}' in '{s}': {e}"));
                Ok(BoundaryCondition::Traction { t: num(t)?, direction: [num(dx)?, num(dy)?] })
            }
            _ => Err(format!(
                "unknown side condition '{s}' (expected free, clamped, roller-x, roller-y or traction <t> <dx> <dy>)"
            )),
        }
    }
}

impl std::fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundaryCondition::Free => f.write_str("free"),
            BoundaryCondition::Clamped => f.write_str("clamped"),
            BoundaryCondition::RollerX => f.write_str("roller-x"),
            BoundaryCondition::RollerY => f.write_str("roller-y"),
            BoundaryCondition::Traction { t, direction } => {
                write!(f, "traction {:?} {:?} {:?}", t, direction[0], direction[1])
            }
        }
    }
}

impl BoundaryCondition {
    /// Whether the condition fixes displacement component `c` (0 = x).
    pub fn constrains(&self, c: usize) -> bool {
        matches!(
            (self, c),
            (BoundaryCondition::Clamped, _) | (BoundaryCondition::RollerX, 0) | (BoundaryCondition::RollerY, 1)
        )
    }
}

pub type Point = [f64; 2];

/// Bilinear quadrilateral subdomain with `2^d × 2^d` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SubdomainMesh {
    /// Corners mapped to `(−1,−1), (1,−1), (1,1), (−1,1)`, counterclockwise.
    pub corners: [Point; 4],
    pub d: usize,
    /// Conditions in [`Side::ALL`] order.
    pub sides: [BoundaryCondition; 4],
    /// Constant body force intensity.
    pub body_force: [f64; 2],
}

impl SubdomainMesh {
    pub fn new(corners: [Point; 4], d: usize) -> Result<Self, FemError> {
        let m = SubdomainMesh { corners, d, sides: [BoundaryCondition::Free; 4], body_force: [0.0; 2] };
        m.validate()?;
        Ok(m)
    }

    pub fn unit_square(origin: Point, d: usize) -> Self {
        let [x, y] = origin;
        SubdomainMesh {
            corners: [[x, y], [x + 1.0, y], [x + 1.0, y + 1.0], [x, y + 1.0]],
            d,
            sides: [BoundaryCondition::Free; 4],
            body_force: [0.0; 2],
        }
    }

    pub fn with_side(mut self, side: Side, bc: BoundaryCondition) -> Self {
        self.sides[side as usize] = bc;
        self
    }

    pub fn side(&self, side: Side) -> BoundaryCondition {
        self.sides[side as usize]
    }

    /// Checks level range and a positive map Jacobian on the whole square.
    pub fn validate(&self) -> Result<(), FemError> {
        if self.d == 0 || self.d > 15 {
            return Err(FemError::Mesh(format!("level d = {} outside 1..=15", self.d)));
        }
        // det of a bilinear map is affine in each variable, so the corners
        // of the parameter square bound it.
        for &(s, t) in &[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)] {
            let (xs, xt) = self.map_derivatives(s, t);
            let det = xs[0] * xt[1] - xs[1] * xt[0];
            if det <= 0.0 {
                return Err(FemError::Mesh(format!(
                    "bilinear map is not orientation preserving at (s, t) = ({s}, {t}); corners must be counterclockwise"
                )));
            }
        }
        Ok(())
    }

    /// Nodes per side, `2^d`.
    pub fn side_nodes(&self) -> usize {
        1 << self.d
    }

    /// Elements per side, `2^d − 1`.
    pub fn side_elements(&self) -> usize {
        self.side_nodes() - 1
    }

    /// Physical point of parameter `(s, t) ∈ [0, 1]²`.
    pub fn map(&self, s: f64, t: f64) -> Point {
        let w = [(1.0 - s) * (1.0 - t), s * (1.0 - t), s * t, (1.0 - s) * t];
        let mut p = [0.0; 2];
        for (c, wk) in self.corners.iter().zip(w) {
            p[0] += wk * c[0];
            p[1] += wk * c[1];
        }
        p
    }

    /// `(∂X/∂s, ∂X/∂t)`.
    fn map_derivatives(&self, s: f64, t: f64) -> (Point, Point) {
        let c = &self.corners;
        let mut xs = [0.0; 2];
        let mut xt = [0.0; 2];
        for a in 0..2 {
            xs[a] = (1.0 - t) * (c[1][a] - c[0][a]) + t * (c[2][a] - c[3][a]);
            xt[a] = (1.0 - s) * (c[3][a] - c[0][a]) + s * (c[2][a] - c[1][a]);
        }
        (xs, xt)
    }

    /// Coordinates of node `(i, j)`.
    pub fn node(&self, i: usize, j: usize) -> Point {
        let h = 1.0 / self.side_elements() as f64;
        self.map(i as f64 * h, j as f64 * h)
    }

    /// Physical corners of element `(i, j)` in [`CORNERS`] order.
    pub fn element_corners(&self, i: usize, j: usize) -> [Point; 4] {
        CORNER_OFFSETS.map(|(a, b)| self.node(i + a, j + b))
    }

    /// Length of a (straight) side.
    pub fn side_length(&self, side: Side) -> f64 {
        let (a, b) = side.corners();
        let (p, q) = (self.corners[a], self.corners[b]);
        ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt()
    }
}

pub type Mat2 = [[f64; 2]; 2];

/// Element Jacobian data at one reference point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementJacobian {
    /// `J = [[∂x/∂ξ, ∂y/∂ξ], [∂x/∂η, ∂y/∂η]]`.
    pub j: Mat2,
    /// `|J|` according to the requested rule.
    pub det: f64,
    /// Rows `(∂ξ/∂x, ∂η/∂x)` and `(∂ξ/∂y, ∂η/∂y)`.
    pub inv: Mat2,
    /// `Ĵ`: a 3×2 array of 2-vectors so that `B_c = ∇Φ_c · Ĵ` entrywise.
    pub jhat: [[[f64; 2]; 2]; 3],
}

/// Jacobian of element `(i, j)` computed directly from its own corners.
pub fn element_jacobian_direct(corners: &[Point; 4], xi: f64, eta: f64) -> Mat2 {
    let (_, g) = shape_functions(xi, eta);
    let mut j = [[0.0; 2]; 2];
    for (c, gk) in corners.iter().zip(g.iter()) {
        for r in 0..2 {
            j[r][0] += gk[r] * c[0];
            j[r][1] += gk[r] * c[1];
        }
    }
    j
}

fn det2(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

fn sub2(a: &Mat2, b: &Mat2) -> Mat2 {
    [[a[0][0] - b[0][0], a[0][1] - b[0][1]], [a[1][0] - b[1][0], a[1][1] - b[1][1]]]
}

/// The three Jacobians `J^{(0,0)}, J^{(1,0)}, J^{(0,1)}` that seed the
/// expansion, at one reference point.
#[derive(Debug, Clone, Copy)]
struct JacobianSeeds {
    j00: Mat2,
    di: Mat2,
    dj: Mat2,
    det00: f64,
    det_di: f64,
    det_dj: f64,
}

impl JacobianSeeds {
    fn new(mesh: &SubdomainMesh, xi: f64, eta: f64) -> Self {
        let j00 = element_jacobian_direct(&mesh.element_corners(0, 0), xi, eta);
        let (j10, j01) = if mesh.side_elements() > 1 {
            (
                element_jacobian_direct(&mesh.element_corners(1, 0), xi, eta),
                element_jacobian_direct(&mesh.element_corners(0, 1), xi, eta),
            )
        } else {
            // A single element: the expansion never leaves (0, 0), but the
            // differences are still well defined by the bilinear map.
            let h = 1.0;
            let shifted = |di: f64, dj: f64| {
                let p = |a: f64, b: f64| mesh.map((a + di) * h, (b + dj) * h);
                let c = [p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0), p(0.0, 1.0)];
                element_jacobian_direct(&c, xi, eta)
            };
            (shifted(1.0, 0.0), shifted(0.0, 1.0))
        };
        let di = sub2(&j10, &j00);
        let dj = sub2(&j01, &j00);
        JacobianSeeds { j00, di, dj, det00: det2(&j00), det_di: det2(&di), det_dj: det2(&dj) }
    }

    fn at(&self, i: usize, j: usize, rule: DeterminantRule) -> Result<ElementJacobian, FemError> {
        let (fi, fj) = (i as f64, j as f64);
        let mut jm = [[0.0; 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                jm[r][c] = self.j00[r][c] + fi * self.di[r][c] + fj * self.dj[r][c];
            }
        }
        let direct = det2(&jm);
        let det = match rule {
            DeterminantRule::Direct => direct,
            DeterminantRule::Expansion => self.det00 + fi * self.det_di + fj * self.det_dj,
        };
        if !(direct > 0.0) || !(det > 0.0) {
            return Err(FemError::Degenerate { i, j, det: if direct > 0.0 { det } else { direct } });
        }
        // J⁻¹ = [[∂ξ/∂x, ∂η/∂x], [∂ξ/∂y, ∂η/∂y]]
        let inv = [[jm[1][1] / direct, -jm[0][1] / direct], [-jm[1][0] / direct, jm[0][0] / direct]];
        let zero = [0.0, 0.0];
        let jhat = [[inv[0], zero], [zero, inv[1]], [inv[1], inv[0]]];
        Ok(ElementJacobian { j: jm, det, inv, jhat })
    }
}

/// Jacobian of element `(i, j)` at `(ξ, η)` through the affine expansion in
/// the element indices.
pub fn jacobian_expansion(
    mesh: &SubdomainMesh,
    i: usize,
    j: usize,
    xi: f64,
    eta: f64,
    rule: DeterminantRule,
) -> Result<ElementJacobian, FemError> {
    let n = mesh.side_elements();
    if i >= n || j >= n {
        return Err(FemError::Mesh(format!("element ({i}, {j}) outside the {n}×{n} element grid")));
    }
    JacobianSeeds::new(mesh, xi, eta).at(i, j, rule)
}

/// `B_c = ∇Φ_c · Ĵ`, the 3×2 strain-displacement block of corner `c`.
fn b_matrix(grad: &[f64; 2], jhat: &[[[f64; 2]; 2]; 3]) -> [[f64; 2]; 3] {
    let mut b = [[0.0; 2]; 3];
    for r in 0..3 {
        for c in 0..2 {
            b[r][c] = grad[0] * jhat[r][c][0] + grad[1] * jhat[r][c][1];
        }
    }
    b
}

/// `Bᵀ_{1} C B_{2}` for 3×2 blocks.
fn btcb(b1: &[[f64; 2]; 3], c: &Mat3, b2: &[[f64; 2]; 3]) -> Mat2 {
    let mut cb = [[0.0; 2]; 3];
    for r in 0..3 {
        for col in 0..2 {
            cb[r][col] = (0..3).map(|k| c[r][k] * b2[k][col]).sum();
        }
    }
    let mut out = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            out[a][b] = (0..3).map(|k| b1[k][a] * cb[k][b]).sum();
        }
    }
    out
}

/// Options for the element integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ElementOptions {
    pub quadrature: Quadrature,
    pub determinant: DeterminantRule,
}

/// Element integrals for every corner pair, over the element grid.
///
/// Grids are stored canonically (`i + n j` with `n = 2^d − 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct ElementBlocks {
    /// Elements per side.
    pub n: usize,
    /// `k[c1][c2][e]`: 2×2 stiffness block of corner pair `(c1, c2)`.
    pub k: Vec<Vec<Vec<Mat2>>>,
    /// `g[c1][c2][e]`: `∫ Φ_{c1} Φ_{c2} |J|`.
    pub g: Vec<Vec<Vec<f64>>>,
}

/// All sixteen stiffness and load blocks of a subdomain.
pub fn element_blocks(
    mesh: &SubdomainMesh,
    material: &MaterialModel,
    opts: ElementOptions,
) -> Result<ElementBlocks, FemError> {
    mesh.validate()?;
    let n = mesh.side_elements();
    let ne = n * n;
    let mut k = vec![vec![vec![[[0.0; 2]; 2]; ne]; 4]; 4];
    let mut g = vec![vec![vec![0.0; ne]; 4]; 4];
    let c = material.c();
    for (xi, eta, w) in opts.quadrature.points() {
        let seeds = JacobianSeeds::new(mesh, xi, eta);
        let (phi, grad) = shape_functions(xi, eta);
        for jj in 0..n {
            for ii in 0..n {
                let jac = seeds.at(ii, jj, opts.determinant)?;
                let e = ii + n * jj;
                let b: Vec<[[f64; 2]; 3]> = grad.iter().map(|gr| b_matrix(gr, &jac.jhat)).collect();
                let wd = w * jac.det;
                for c1 in 0..4 {
                    for c2 in 0..4 {
                        let blk = btcb(&b[c1], c, &b[c2]);
                        let dst = &mut k[c1][c2][e];
                        for a in 0..2 {
                            for bb in 0..2 {
                                dst[a][bb] += wd * blk[a][bb];
                            }
                        }
                        g[c1][c2][e] += wd * phi[c1] * phi[c2];
                    }
                }
            }
        }
    }
    Ok(ElementBlocks { n, k, g })
}

/// Stiffness block of one corner pair over all elements.
pub fn element_stiffness_block(
    mesh: &SubdomainMesh,
    material: &MaterialModel,
    c1: usize,
    c2: usize,
    opts: ElementOptions,
) -> Result<Vec<Mat2>, FemError> {
    let mut b = element_blocks(mesh, material, opts)?;
    Ok(std::mem::take(&mut b.k[c1][c2]))
}

/// Load weights `G_{c1,c2}` of one corner pair over all elements.
pub fn element_load_block(
    mesh: &SubdomainMesh,
    c1: usize,
    c2: usize,
    opts: ElementOptions,
) -> Result<Vec<f64>, FemError> {
    // The load weights do not depend on the material.
    let mat = MaterialModel::new(1.0, 0.0, PlaneMode::PlaneStress)?;
    let mut b = element_blocks(mesh, &mat, opts)?;
    Ok(std::mem::take(&mut b.g[c1][c2]))
}

/// 8×8 stiffness of a single element with the given corners, DOF order
/// `2 c + α` for corner `c` and component `α`.
pub fn element_matrix(corners: &[Point; 4], material: &MaterialModel, quadrature: Quadrature) -> [[f64; 8]; 8] {
    let mut out = [[0.0; 8]; 8];
    for (xi, eta, w) in quadrature.points() {
        let j = element_jacobian_direct(corners, xi, eta);
        let det = det2(&j);
        let inv = [[j[1][1] / det, -j[0][1] / det], [-j[1][0] / det, j[0][0] / det]];
        let zero = [0.0, 0.0];
        let jhat = [[inv[0], zero], [zero, inv[1]], [inv[1], inv[0]]];
        let (_, grad) = shape_functions(xi, eta);
        let b: Vec<[[f64; 2]; 3]> = grad.iter().map(|g| b_matrix(g, &jhat)).collect();
        for c1 in 0..4 {
            for c2 in 0..4 {
                let blk = btcb(&b[c1], material.c(), &b[c2]);
                for a in 0..2 {
                    for bb in 0..2 {
                        out[2 * c1 + a][2 * c2 + bb] += w * det * blk[a][bb];
                    }
                }
            }
        }
    }
    out
}

/// 4×4 consistent mass-type matrix `∫ Φ_a Φ_b` of one element.
pub fn element_mass(corners: &[Point; 4], quadrature: Quadrature) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for (xi, eta, w) in quadrature.points() {
        let det = det2(&element_jacobian_direct(corners, xi, eta));
        let (phi, _) = shape_functions(xi, eta);
        for a in 0..4 {
            for b in 0..4 {
                out[a][b] += w * det * phi[a] * phi[b];
            }
        }
    }
    out
}

/// Consistent nodal forces of a uniform traction on one side.
///
/// Returns the weights along the side in [`Side::node`] order (already
/// multiplied by `t`) together with the unit force direction. Interior nodes
/// receive `t·h`, the two end nodes `t·h/2`, where `h` is the edge length of
/// one element.
pub fn traction_load(mesh: &SubdomainMesh, side: Side) -> Result<(Vec<f64>, [f64; 2]), FemError> {
    let BoundaryCondition::Traction { t, direction } = mesh.side(side) else {
        return Err(FemError::Mesh(format!("side {} carries no traction", side.name())));
    };
    let norm = (direction[0].powi(2) + direction[1].powi(2)).sqrt();
    if !(norm > 0.0) {
        return Err(FemError::Mesh("traction direction must be nonzero".into()));
    }
    let n = mesh.side_nodes();
    let h = mesh.side_length(side) / mesh.side_elements() as f64;
    let mut w = vec![t * h; n];
    w[0] *= 0.5;
    w[n - 1] *= 0.5;
    Ok((w, [direction[0] / norm, direction[1] / norm]))
}
