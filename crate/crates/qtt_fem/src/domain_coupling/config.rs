//! Problem description files.
//!
//! A problem is a TOML document:
//!
//! ```toml
//! name = "two-squares"
//! d = 3
//!
//! [material]
//! youngs_modulus = 64.0
//! poisson_ratio = 0.0
//! mode = "plane-stress"          # or "plane-strain"
//!
//! [discretization]
//! quadrature = "gauss2"          # or "midpoint"
//! ordering = "zorder"            # or "canonical"
//! determinant = "direct"         # or "expansion"
//! assembly_eps = 1e-12
//!
//! [solver]
//! eps = 1e-3
//! max_sweeps = 40
//! seed = 1
//! # gamma = 32.0                 # penalty override
//!
//! [[subdomain]]
//! corners = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
//! left = "clamped"
//! body_force = [0.0, 0.0]
//!
//! [[subdomain]]
//! corners = [[1.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0]]
//! right = "traction 3.0 0.0 -1.0"
//! ```
//!
//! Corners run counterclockwise starting at the corner mapped to the
//! bottom-left of the reference square. Side conditions are `free`
//! (default), `clamped`, `roller-x` (`u_x = 0`), `roller-y` (`u_y = 0`) or
//! `traction <t> <dx> <dy>`. Sides shared with another subdomain must be
//! free; interfaces are found from the coordinates.

use super::{CouplingError, DomainTopology};
use crate::elasticity_fem::{
    BoundaryCondition, DeterminantRule, ElementOptions, MaterialModel, PlaneMode, Quadrature, Side, SubdomainMesh,
};
use crate::qtt_assembly::AssemblyOptions;
use crate::qtt_indexing::Ordering;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSection {
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    #[serde(default = "default_mode")]
    pub mode: String,
}

fn default_mode() -> String {
    PlaneMode::default().to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationSection {
    #[serde(default = "default_quadrature")]
    pub quadrature: String,
    #[serde(default = "default_ordering")]
    pub ordering: String,
    #[serde(default = "default_determinant")]
    pub determinant: String,
    #[serde(default = "default_assembly_eps")]
    pub assembly_eps: f64,
}

fn default_quadrature() -> String {
    Quadrature::default().to_string()
}
fn default_ordering() -> String {
    Ordering::default().to_string()
}
fn default_determinant() -> String {
    DeterminantRule::default().to_string()
}
fn default_assembly_eps() -> f64 {
    1e-12
}

impl Default for DiscretizationSection {
    fn default() -> Self {
        DiscretizationSection {
            quadrature: default_quadrature(),
            ordering: default_ordering(),
            determinant: default_determinant(),
            assembly_eps: default_assembly_eps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_sweeps")]
    pub max_sweeps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

fn default_eps() -> f64 {
    1e-3
}
fn default_sweeps() -> usize {
    40
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection { eps: default_eps(), max_sweeps: default_sweeps(), seed: 0, gamma: None }
    }
}

fn free() -> String {
    "free".into()
}

fn is_free(s: &str) -> bool {
    s == "free"
}

fn is_zero(v: &[f64; 2]) -> bool {
    *v == [0.0, 0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubdomainSection {
    pub corners: [[f64; 2]; 4],
    #[serde(default = "free", skip_serializing_if = "is_free")]
    pub bottom: String,
    #[serde(default = "free", skip_serializing_if = "is_free")]
    pub right: String,
    #[serde(default = "free", skip_serializing_if = "is_free")]
    pub top: String,
    #[serde(default = "free", skip_serializing_if = "is_free")]
    pub left: String,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub body_force: [f64; 2],
}

/// Parsed problem file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub name: String,
    pub d: usize,
    pub material: MaterialSection,
    #[serde(default)]
    pub discretization: DiscretizationSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(rename = "subdomain")]
    pub subdomains: Vec<SubdomainSection>,
}

fn bad(msg: String) -> CouplingError {
    CouplingError::Argument(msg)
}

impl ProblemConfig {
    /// Parse and validate a TOML document.
    pub fn parse(text: &str) -> Result<Self, CouplingError> {
        let cfg: ProblemConfig = toml::from_str(text).map_err(|e| bad(format!("problem file: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, CouplingError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Print as TOML; [`Self::parse`] of the output gives back `self`.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plain data serializes")
    }

    /// Check every string field and build the topology once.
    pub fn validate(&self) -> Result<(), CouplingError> {
        self.material()?;
        self.assembly_options()?;
        if !(self.solver.eps > 0.0) || self.solver.max_sweeps == 0 {
            return Err(bad("solver needs eps > 0 and max_sweeps ≥ 1".into()));
        }
        if let Some(g) = self.solver.gamma {
            if !(g > 0.0) {
                return Err(bad(format!("gamma must be positive, got {g}")));
            }
        }
        self.topology()?;
        Ok(())
    }

    pub fn material(&self) -> Result<MaterialModel, CouplingError> {
        let mode: PlaneMode = self.material.mode.parse().map_err(bad)?;
        Ok(MaterialModel::new(self.material.youngs_modulus, self.material.poisson_ratio, mode)?)
    }

    pub fn assembly_options(&self) -> Result<AssemblyOptions, CouplingError> {
        let s = &self.discretization;
        Ok(AssemblyOptions {
            element: ElementOptions {
                quadrature: s.quadrature.parse().map_err(bad)?,
                determinant: s.determinant.parse().map_err(bad)?,
            },
            ordering: s.ordering.parse().map_err(bad)?,
            eps: s.assembly_eps,
        })
    }

    /// Subdomain meshes at level `d`.
    pub fn meshes(&self, d: usize) -> Result<Vec<SubdomainMesh>, CouplingError> {
        self.subdomains
            .iter()
            .map(|s| {
                let mut mesh = SubdomainMesh::new(s.corners, d)?;
                for (side, tag) in Side::ALL.into_iter().zip([&s.bottom, &s.right, &s.top, &s.left]) {
                    let bc: BoundaryCondition = tag.parse().map_err(bad)?;
                    mesh = mesh.with_side(side, bc);
                }
                mesh.body_force = s.body_force;
                Ok(mesh)
            })
            .collect()
    }

    pub fn topology(&self) -> Result<DomainTopology, CouplingError> {
        DomainTopology::new(self.meshes(self.d)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: &str = r#"
name = "two"
d = 2

[material]
youngs_modulus = 64.0
poisson_ratio = 0.0

[solver]
eps = 1e-5
gamma = 10.0

[[subdomain]]
corners = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
left = "clamped"

[[subdomain]]
corners = [[1.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0]]
right = "traction 3.0 0.0 -1.0"
bottom = "roller-y"
body_force = [0.0, -1.5]
"#;

    #[test]
    fn parse_defaults_and_tags() {
        let cfg = ProblemConfig::parse(TWO).unwrap();
        assert_eq!(cfg.discretization, DiscretizationSection::default());
        assert_eq!(cfg.solver.max_sweeps, 40);
        let meshes = cfg.meshes(2).unwrap();
        assert_eq!(meshes[0].side(Side::Left), BoundaryCondition::Clamped);
        assert_eq!(meshes[1].side(Side::Right), BoundaryCondition::Traction { t: 3.0, direction: [0.0, -1.0] });
        assert_eq!(meshes[1].side(Side::Bottom), BoundaryCondition::RollerY);
        assert_eq!(meshes[1].body_force, [0.0, -1.5]);
        let topo = cfg.topology().unwrap();
        assert_eq!(topo.interfaces.len(), 1);
    }

    #[test]
    fn print_parse_round_trip() {
        let cfg = ProblemConfig::parse(TWO).unwrap();
        let again = ProblemConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ProblemConfig::parse(&TWO.replace("clamped", "glued")).is_err());
        assert!(ProblemConfig::parse(&TWO.replace("name = \"two\"", "name = \"two\"\nflavour = 1")).is_err());
        assert!(ProblemConfig::parse(&TWO.replace("gamma = 10.0", "gamma = -1.0")).is_err());
        // an interface side may not carry a condition
        let tagged = TWO.replace("left = \"clamped\"", "left = \"clamped\"\nright = \"roller-x\"");
        assert!(matches!(ProblemConfig::parse(&tagged), Err(CouplingError::Topology(_))));
    }
}
