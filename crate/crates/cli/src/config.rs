//! Run configuration: a JSON file, parsed in two passes. Structure errors come
//! from serde with the path of the offending field; value errors come from
//! the `RunConfig` accessors and are likewise prefixed with a field path.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use slab_rte::quad::double_gauss_legendre;
use slab_rte::solve::SourceSpec;
use slab_rte::uq::Qoi;
use slab_rte::xsec::{sample_xsec, CoefficientLaw, RandomFieldSpec};
use slab_rte::{CrossSections, SlabDomain};

#[derive(Debug, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn new(path: impl Into<String>, message: impl ToString) -> Self {
        Self {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Solve,
    Verify,
    Criticality,
    Uq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverPath {
    #[default]
    Dense,
    Sweep,
    /// Both paths, compared against each other.
    Both,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub length: Option<f64>,
    pub n_cells: Option<usize>,
    pub breakpoints: Option<Vec<f64>>,
}

/// One value for every cell, or one per cell.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Values {
    Constant(f64),
    PerCell(Vec<f64>),
}

impl Values {
    fn expand(&self, n: usize) -> Vec<f64> {
        match self {
            Values::Constant(v) => vec![*v; n],
            Values::PerCell(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomConfig {
    pub sigma_s: CoefficientLaw,
    pub sigma_a: CoefficientLaw,
    #[serde(default)]
    pub sigma_f: Option<CoefficientLaw>,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossSectionConfig {
    pub sigma_s: Option<Values>,
    pub sigma_a: Option<Values>,
    pub sigma_f: Option<Values>,
    pub random: Option<RandomConfig>,
    /// Realization drawn from `random` for single-field commands.
    #[serde(default)]
    pub sample: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub fields: usize,
    pub grids: Vec<usize>,
    pub seed: u64,
    pub sigma_s: CoefficientLaw,
    pub sigma_a: CoefficientLaw,
    pub sigma_f: CoefficientLaw,
    pub criticality_fields: usize,
    pub criticality_cells: usize,
    pub sharp_cells: usize,
    pub sharp_angles: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            fields: 100,
            grids: vec![8, 16, 32],
            seed: 20_240_601,
            sigma_s: CoefficientLaw::uniform(0.05, 2.0),
            sigma_a: CoefficientLaw::log_uniform(0.02, 2.0),
            sigma_f: CoefficientLaw::uniform(0.05, 1.0),
            criticality_fields: 50,
            criticality_cells: 16,
            sharp_cells: 64,
            sharp_angles: 128,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarModel {
    /// Row-major `L_S`.
    pub lsigs: Vec<Vec<f64>>,
    pub fission_ratio: Vec<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticalityConfig {
    pub scalar_model: Option<ScalarModel>,
    /// Spectrum certificates over realizations `0..samples` of the random field.
    #[serde(default)]
    pub samples: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UqSection {
    pub qoi: Qoi,
    pub samples: usize,
}

fn default_angles() -> usize {
    128
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    10_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(default)]
    pub domain: Option<DomainConfig>,
    #[serde(default)]
    pub cross_sections: Option<CrossSectionConfig>,
    #[serde(default = "default_angles")]
    pub angles: usize,
    #[serde(default)]
    pub source: SourceSpec,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub solver: SolverPath,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub criticality: CriticalityConfig,
    #[serde(default)]
    pub uq: Option<UqSection>,
}

/// Cross-sections as configured: a fixed field, or a random one together
/// with the realization used by single-field commands.
#[derive(Debug, Clone)]
pub enum FieldSource {
    Fixed(CrossSections),
    Random { spec: RandomFieldSpec, sample: u64 },
}

impl FieldSource {
    pub fn realize(&self) -> slab_rte::Result<CrossSections> {
        match self {
            FieldSource::Fixed(xs) => Ok(xs.clone()),
            FieldSource::Random { spec, sample } => sample_xsec(spec, *sample),
        }
    }
}

pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::new(
            if path == "." {
                "<root>".to_string()
            } else {
                path
            },
            e.into_inner(),
        )
    })
}

pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("<file>", format!("{}: {e}", path.display())))?;
    parse(&text)
}

impl RunConfig {
    pub fn check_command(&self, command: Command) -> Result<(), ConfigError> {
        match self.command {
            Some(c) if c != command => Err(ConfigError::new(
                "command",
                format!("config is for {c:?}, invoked as {command:?}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn check_solver_settings(&self) -> Result<(), ConfigError> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(ConfigError::new(
                "tol",
                format!("must be positive, got {}", self.tol),
            ));
        }
        if self.max_iter == 0 {
            return Err(ConfigError::new("max_iter", "must be at least 1"));
        }
        double_gauss_legendre(self.angles).map_err(|e| ConfigError::new("angles", e))?;
        Ok(())
    }

    pub fn domain(&self) -> Result<SlabDomain, ConfigError> {
        let d = self
            .domain
            .as_ref()
            .ok_or_else(|| ConfigError::new("domain", "missing"))?;
        match (&d.breakpoints, d.length, d.n_cells) {
            (Some(b), None, None) => {
                SlabDomain::new(b.clone()).map_err(|e| ConfigError::new("domain.breakpoints", e))
            }
            (None, length, Some(n)) => SlabDomain::uniform(length.unwrap_or(1.0), n)
                .map_err(|e| ConfigError::new("domain", e)),
            (None, _, None) => Err(ConfigError::new("domain.n_cells", "missing")),
            _ => Err(ConfigError::new(
                "domain",
                "give either breakpoints or n_cells (with optional length), not both",
            )),
        }
    }

    /// Resolves `cross_sections`, or `None` when the section is absent.
    pub fn field(&self) -> Result<Option<FieldSource>, ConfigError> {
        let Some(xs) = &self.cross_sections else {
            return Ok(None);
        };
        let domain = self.domain()?;
        let n = domain.n_cells();
        if let Some(r) = &xs.random {
            if xs.sigma_s.is_some() || xs.sigma_a.is_some() || xs.sigma_f.is_some() {
                return Err(ConfigError::new(
                    "cross_sections",
                    "give either explicit values or a random field, not both",
                ));
            }
            let spec = RandomFieldSpec {
                domain,
                sigma_s: r.sigma_s,
                sigma_a: r.sigma_a,
                sigma_f: r.sigma_f,
                seed: r.seed,
            };
            spec.validate()
                .map_err(|e| ConfigError::new("cross_sections.random", e))?;
            return Ok(Some(FieldSource::Random {
                spec,
                sample: xs.sample,
            }));
        }
        let values = |name: &str, v: &Option<Values>| -> Result<Vec<f64>, ConfigError> {
            let v = v
                .as_ref()
                .ok_or_else(|| ConfigError::new(format!("cross_sections.{name}"), "missing"))?
                .expand(n);
            if v.len() != n {
                return Err(ConfigError::new(
                    format!("cross_sections.{name}"),
                    format!("expected {n} values, got {}", v.len()),
                ));
            }
            if let Some(i) = v.iter().position(|x| !(*x > 0.0 && x.is_finite())) {
                return Err(ConfigError::new(
                    format!("cross_sections.{name}[{i}]"),
                    format!("must be finite and strictly positive, got {}", v[i]),
                ));
            }
            Ok(v)
        };
        let sigma_s = values("sigma_s", &xs.sigma_s)?;
        let sigma_a = values("sigma_a", &xs.sigma_a)?;
        let sigma_f = match &xs.sigma_f {
            Some(_) => Some(values("sigma_f", &xs.sigma_f)?),
            None => None,
        };
        CrossSections::new(domain, sigma_s, sigma_a, sigma_f)
            .map(|xs| Some(FieldSource::Fixed(xs)))
            .map_err(|e| ConfigError::new("cross_sections", e))
    }

    pub fn required_field(&self) -> Result<FieldSource, ConfigError> {
        self.field()?
            .ok_or_else(|| ConfigError::new("cross_sections", "missing"))
    }

    pub fn source_grid(&self, domain: &SlabDomain) -> Result<slab_rte::GridFunction, ConfigError> {
        self.source
            .grid(domain)
            .map_err(|e| ConfigError::new("source", e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_solve_config() {
        let c = parse(r#"{"domain":{"n_cells":4},"cross_sections":{"sigma_s":0.5,"sigma_a":[0.5,0.5,0.5,0.5]}}"#).unwrap();
        assert_eq!(c.angles, 128);
        assert_eq!(c.solver, SolverPath::Dense);
        let Some(FieldSource::Fixed(xs)) = c.field().unwrap() else {
            panic!()
        };
        assert_eq!(xs.sigma(), vec![1.0; 4]);
    }

    #[test]
    fn structural_errors_name_the_field() {
        let e = parse(r#"{"domain":{"n_cells":"four"}}"#).unwrap_err();
        assert_eq!(e.path, "domain.n_cells");
        let e = parse(r#"{"domain":{"n_cells":4},"toll":1e-9}"#).unwrap_err();
        assert!(e.message.contains("toll"), "{e}");
    }

    #[test]
    fn value_errors_name_the_field() {
        let c = parse(
            r#"{"domain":{"n_cells":3},"cross_sections":{"sigma_s":[0.5,0.0,0.5],"sigma_a":1.0}}"#,
        )
        .unwrap();
        assert_eq!(c.field().unwrap_err().path, "cross_sections.sigma_s[1]");
        let c =
            parse(r#"{"domain":{"n_cells":3},"cross_sections":{"sigma_s":[0.5],"sigma_a":1.0}}"#)
                .unwrap();
        assert_eq!(c.field().unwrap_err().path, "cross_sections.sigma_s");
        let c = parse(r#"{"domain":{"n_cells":3},"angles":3}"#).unwrap();
        assert_eq!(c.check_solver_settings().unwrap_err().path, "angles");
        let c = parse(r#"{"domain":{"breakpoints":[0,0.5,0.4]}}"#).unwrap();
        assert_eq!(c.domain().unwrap_err().path, "domain.breakpoints");
    }

    #[test]
    fn random_field_section() {
        let c = parse(
            r#"{"domain":{"n_cells":8},"cross_sections":{"random":{
                "sigma_s":{"dist":"uniform","lo":0.4,"hi":0.6},
                "sigma_a":{"dist":"log_uniform","lo":0.4,"hi":0.6},"seed":3},"sample":2}}"#,
        )
        .unwrap();
        let Some(FieldSource::Random { sample, .. }) = c.field().unwrap() else {
            panic!()
        };
        assert_eq!(sample, 2);
        let c = parse(
            r#"{"domain":{"n_cells":8},"cross_sections":{"random":{
                "sigma_s":{"dist":"uniform","lo":0.0,"hi":0.6},
                "sigma_a":{"dist":"uniform","lo":0.4,"hi":0.6},"seed":3}}}"#,
        )
        .unwrap();
        assert_eq!(c.field().unwrap_err().path, "cross_sections.random");
    }
}
