//! The benchmark geometries.
//!
//! Every case is a problem file; the file is the only description of the
//! geometry, the supports and the loads. The expected convergence rate is
//! metadata for the sweep report and never reaches the solver.

use crate::BenchError;
use qtt_fem::domain_coupling::config::ProblemConfig;
use qtt_fem::domain_coupling::DomainTopology;

pub const CASE_NAMES: [&str; 3] = ["cantilever", "sen", "lshape"];

const CANTILEVER: &str = include_str!("../configs/cantilever.toml");
const SEN: &str = include_str!("../configs/sen.toml");
const LSHAPE: &str = include_str!("../configs/lshape.toml");

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkCase {
    pub name: String,
    pub config: ProblemConfig,
    /// Rate `α` in `E ≈ C 2^{-α d}` expected from the regularity of the
    /// exact solution.
    pub expected_alpha: Option<f64>,
    /// Twice the order of the dominant singularity.
    pub singularity_exponent: Option<f64>,
    /// Level range of the convergence sweep.
    pub d_min: usize,
    pub d_max: usize,
}

impl BenchmarkCase {
    /// One of [`CASE_NAMES`].
    pub fn builtin(name: &str) -> Result<Self, BenchError> {
        let (text, alpha, beta) = match name {
            "cantilever" => (CANTILEVER, 1.0, 2.0),
            "sen" => (SEN, 0.5, 0.5),
            "lshape" | "l-shape" => (LSHAPE, 0.9, 0.9),
            _ => return Err(BenchError::UnknownCase(name.into())),
        };
        let mut case = Self::from_config(ProblemConfig::parse(text)?);
        case.expected_alpha = Some(alpha);
        case.singularity_exponent = Some(beta);
        Ok(case)
    }

    /// A user problem file; the sweep runs from `d = 2` (or `d = 1`) up to
    /// the level in the file.
    pub fn from_config(config: ProblemConfig) -> Self {
        BenchmarkCase {
            name: config.name.clone(),
            d_min: config.d.min(2),
            d_max: config.d,
            config,
            expected_alpha: None,
            singularity_exponent: None,
        }
    }

    pub fn q(&self) -> usize {
        self.config.subdomains.len()
    }

    /// Physical unknowns `2 q 4^d`.
    pub fn dofs(&self, d: usize) -> usize {
        2 * self.q() << (2 * d)
    }

    pub fn topology(&self, d: usize) -> Result<DomainTopology, BenchError> {
        Ok(DomainTopology::new(self.config.meshes(d)?)?)
    }

    /// Level of the reference solution: two above the finest sweep level.
    pub fn reference_level(&self) -> usize {
        self.d_max + 2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_cases_have_the_documented_shape() {
        let c = BenchmarkCase::builtin("cantilever").unwrap();
        assert_eq!((c.q(), c.d_max, c.reference_level()), (20, 6, 8));
        let s = BenchmarkCase::builtin("sen").unwrap();
        assert_eq!((s.q(), s.d_max, s.reference_level()), (2, 8, 10));
        let l = BenchmarkCase::builtin("lshape").unwrap();
        assert_eq!((l.q(), l.d_max, l.reference_level()), (3, 8, 10));
        for case in [&c, &s, &l] {
            let m = case.config.material().unwrap();
            assert_eq!((m.youngs_modulus, m.poisson_ratio), (64.0, 0.0));
        }
    }

    #[test]
    fn cantilever_is_twenty_to_one_and_clamped_on_the_left() {
        let c = BenchmarkCase::builtin("cantilever").unwrap();
        let topo = c.topology(2).unwrap();
        let xs: Vec<f64> = topo.subdomains.iter().flat_map(|s| s.corners.map(|p| p[0])).collect();
        let ys: Vec<f64> = topo.subdomains.iter().flat_map(|s| s.corners.map(|p| p[1])).collect();
        let span = |v: &[f64]| v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min);
        assert_eq!(span(&xs) / span(&ys), 20.0);
        assert_eq!(topo.interfaces.len(), 19);
        assert_eq!(c.config.subdomains[0].left, "clamped");
    }

    #[test]
    fn dofs_formula() {
        let s = BenchmarkCase::builtin("sen").unwrap();
        assert_eq!(s.dofs(2), 2 * 2 * 16);
        let c = BenchmarkCase::builtin("cantilever").unwrap();
        assert_eq!(c.dofs(3), 2 * 20 * 64);
    }

    #[test]
    fn unknown_case_is_rejected() {
        assert!(matches!(BenchmarkCase::builtin("beam"), Err(BenchError::UnknownCase(_))));
    }
}
