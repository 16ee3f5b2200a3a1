//! TOML scenario configs: a structure spec, a mesh spec, a solver block,
//! and an ordered experiment list. Parsing is strict — unknown keys are
//! errors, so a typo cannot silently disable an experiment.

use crate::expr::{Expr, ParseError};
use crate::linalg::Point;
use crate::mesh::{Mesh, MeshRef};
use crate::norms::{Domain, DriftField, FinslerStructure, MetricField, NormError};
use crate::pde::SolverConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Expr(#[from] ParseError),
    #[error(transparent)]
    Norm(#[from] NormError),
    #[error("{0}")]
    Invalid(String),
}

fn default_dim() -> usize {
    2
}
fn default_h() -> f64 {
    1.0 / 16.0
}
fn default_radius() -> f64 {
    1.0
}
fn default_samples() -> usize {
    30
}
fn default_identity_samples() -> usize {
    1000
}
fn default_curvature_samples() -> usize {
    24
}
fn default_liouville_radii() -> Vec<f64> {
    vec![2.0, 4.0, 8.0, 16.0]
}
fn default_gradient_radii() -> Vec<f64> {
    vec![0.5, 1.0]
}
fn default_volume_radii() -> Vec<f64> {
    vec![0.5, 1.0]
}
fn default_seed() -> u64 {
    2026
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyTag {
    Euclidean,
    Riemannian,
    Randers,
    RandersNavigation,
    Quartic,
    SpherePatch,
}

/// Which norm to build, with coefficient expressions in `x`, `y` (and `z`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureSpec {
    pub family: FamilyTag,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Metric coefficient matrix; identity when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<Vec<Vec<String>>>,
    /// Randers drift covector expressions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<Vec<String>>,
    /// Navigation wind (constants), mutually exclusive with `drift`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wind: Option<Vec<f64>>,
    /// Quartic regularization weight.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Log-density of the measure, `dm = e^phi dx`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<String>,
    /// Half-width of the centered coefficient-validity box.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_half_width: Option<f64>,
}

impl StructureSpec {
    pub fn build(&self) -> Result<FinslerStructure, ConfigError> {
        if self.dim != 2 && self.dim != 3 {
            return Err(ConfigError::Invalid(format!(
                "supported dimensions are 2 and 3, got {}",
                self.dim
            )));
        }
        let domain = Domain::centered_box(self.dim, self.domain_half_width.unwrap_or(2.0));
        let metric = match &self.metric {
            Some(rows) => MetricField::parse(rows, self.dim)?,
            None => MetricField::identity(self.dim),
        };
        let mut structure = match self.family {
            FamilyTag::Euclidean => {
                self.forbid(&["metric", "drift", "wind", "epsilon"])?;
                FinslerStructure::euclidean(self.dim)
            }
            FamilyTag::Riemannian => {
                self.forbid(&["drift", "wind", "epsilon"])?;
                FinslerStructure::riemannian(metric, domain)?
            }
            FamilyTag::Randers => {
                self.forbid(&["wind", "epsilon"])?;
                let drift = self.drift.as_ref().ok_or_else(|| {
                    ConfigError::Invalid("randers requires a drift covector".into())
                })?;
                FinslerStructure::randers(metric, DriftField::parse(drift, self.dim)?, domain)?
            }
            FamilyTag::RandersNavigation => {
                self.forbid(&["metric", "drift", "epsilon"])?;
                let wind = self.wind.as_ref().ok_or_else(|| {
                    ConfigError::Invalid("navigation form requires a wind vector".into())
                })?;
                FinslerStructure::randers_navigation(wind, domain)?
            }
            FamilyTag::Quartic => {
                self.forbid(&["drift", "wind"])?;
                FinslerStructure::quartic(metric, self.epsilon.unwrap_or(0.1), domain)?
            }
            FamilyTag::SpherePatch => {
                self.forbid(&["metric", "drift", "wind", "epsilon"])?;
                if self.dim != 2 {
                    return Err(ConfigError::Invalid("the sphere patch is planar".into()));
                }
                FinslerStructure::sphere_patch(domain)?
            }
        };
        if let Some(phi) = &self.density {
            structure = structure.with_density(phi)?;
        }
        Ok(structure)
    }

    fn forbid(&self, fields: &[&str]) -> Result<(), ConfigError> {
        for &f in fields {
            let present = match f {
                "metric" => self.metric.is_some(),
                "drift" => self.drift.is_some(),
                "wind" => self.wind.is_some(),
                "epsilon" => self.epsilon.is_some(),
                _ => false,
            };
            if present {
                return Err(ConfigError::Invalid(format!(
                    "field `{f}` does not apply to family {:?}",
                    self.family
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeshSpec {
    Disk {
        #[serde(default)]
        center: [f64; 2],
        radius: f64,
    },
    Square {
        #[serde(default)]
        center: [f64; 2],
        half_width: f64,
    },
    /// Square chart with a 50% margin around the ball of interest, so
    /// measurement balls of the named radius sit strictly inside.
    BallInSquare {
        #[serde(default)]
        center: [f64; 2],
        radius: f64,
    },
}

impl MeshSpec {
    pub fn build(&self, h: f64) -> MeshRef {
        match self {
            MeshSpec::Disk { center, radius } => {
                Mesh::disk(Point::xy(center[0], center[1]), *radius, h)
            }
            MeshSpec::Square { center, half_width } => {
                Mesh::square(Point::xy(center[0], center[1]), *half_width, h)
            }
            MeshSpec::BallInSquare { center, radius } => {
                Mesh::square(Point::xy(center[0], center[1]), 1.5 * radius, h)
            }
        }
    }

    pub fn center(&self) -> Point {
        match self {
            MeshSpec::Disk { center, .. }
            | MeshSpec::Square { center, .. }
            | MeshSpec::BallInSquare { center, .. } => Point::xy(center[0], center[1]),
        }
    }

    pub fn extent(&self) -> f64 {
        match self {
            MeshSpec::Disk { radius, .. } => *radius,
            MeshSpec::Square { half_width, .. } => *half_width,
            MeshSpec::BallInSquare { radius, .. } => 1.5 * radius,
        }
    }
}

/// One experiment to run; order in the file is execution order.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExperimentSpec {
    /// Dirichlet solve with the given boundary expression; writes the field
    /// and the iteration log.
    Solve { boundary: String },
    /// Positive-harmonic solve, then the gradient statistic on each ball.
    Gradient {
        boundary: String,
        #[serde(default = "default_gradient_radii")]
        radii: Vec<f64>,
    },
    /// Positive-harmonic solve, then the oscillation bound on each ball.
    Harnack {
        boundary: String,
        #[serde(default = "default_gradient_radii")]
        radii: Vec<f64>,
    },
    /// Gradient decay under domain growth, trig boundary profile
    /// `2 + sum cos[k] cos((k+1)t) + sin[k] sin((k+1)t)`; `control` swaps in
    /// the linearly growing profile instead.
    Liouville {
        #[serde(default = "default_liouville_radii")]
        radii: Vec<f64>,
        #[serde(default)]
        cos: Vec<f64>,
        #[serde(default)]
        sin: Vec<f64>,
        #[serde(default)]
        control: bool,
        /// Mesh size for the growing disks; defaults to the scenario `h`
        /// (which can get expensive — the largest disk dominates).
        #[serde(default, skip_serializing_if = "Option::is_none")]
        h: Option<f64>,
    },
    /// Integrated curvature inequality on a solved field.
    Bochner {
        boundary: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bump_radius: Option<f64>,
        /// Permitted discretization slack; mesh-dependent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tolerance: Option<f64>,
    },
    /// Empirical spectral-gap constant over low-frequency samples.
    Poincare {
        #[serde(default = "default_radius")]
        radius: f64,
        #[serde(default = "default_samples")]
        samples: usize,
    },
    /// Empirical embedding constant over low-frequency samples.
    Sobolev {
        #[serde(default = "default_radius")]
        radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        nu: Option<f64>,
        #[serde(default = "default_samples")]
        samples: usize,
    },
    /// Forward-ball measure ratios against the flat power law.
    Volume {
        #[serde(default = "default_volume_radii")]
        radii: Vec<f64>,
    },
    /// Weighted Ricci samples over the chart.
    Curvature {
        #[serde(default)]
        n_list: Vec<f64>,
        #[serde(default = "default_curvature_samples")]
        samples: usize,
    },
    /// Algebraic identity battery on random samples.
    NormCheck {
        #[serde(default = "default_identity_samples")]
        samples: usize,
    },
}

impl ExperimentSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentSpec::Solve { .. } => "solve",
            ExperimentSpec::Gradient { .. } => "gradient",
            ExperimentSpec::Harnack { .. } => "harnack",
            ExperimentSpec::Liouville { .. } => "liouville",
            ExperimentSpec::Bochner { .. } => "bochner",
            ExperimentSpec::Poincare { .. } => "poincare",
            ExperimentSpec::Sobolev { .. } => "sobolev",
            ExperimentSpec::Volume { .. } => "volume",
            ExperimentSpec::Curvature { .. } => "curvature",
            ExperimentSpec::NormCheck { .. } => "norm-check",
        }
    }

    pub fn needs_mesh(&self) -> bool {
        !matches!(
            self,
            ExperimentSpec::Curvature { .. }
                | ExperimentSpec::NormCheck { .. }
                | ExperimentSpec::Liouville { .. }
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_h")]
    pub h: f64,
    /// Output directory; the runner falls back to `out/<name>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    pub structure: StructureSpec,
    pub mesh: MeshSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(rename = "experiments")]
    pub experiments: Vec<ExperimentSpec>,
}

impl ScenarioConfig {
    pub fn from_toml_str(src: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(src)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scenario configs serialize cleanly")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.h > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "mesh size h must be positive, got {}",
                self.h
            )));
        }
        if self.name.is_empty() {
            return Err(ConfigError::Invalid("scenario name must be nonempty".into()));
        }
        if self.experiments.is_empty() {
            return Err(ConfigError::Invalid(
                "scenario lists no experiments".into(),
            ));
        }
        if self.structure.dim != 2 && self.experiments.iter().any(|e| e.needs_mesh()) {
            return Err(ConfigError::Invalid(
                "meshed experiments require a two-dimensional structure".into(),
            ));
        }
        // surface expression errors at validation time, not mid-run
        for e in &self.experiments {
            match e {
                ExperimentSpec::Solve { boundary }
                | ExperimentSpec::Gradient { boundary, .. }
                | ExperimentSpec::Harnack { boundary, .. }
                | ExperimentSpec::Bochner { boundary, .. } => {
                    Expr::parse(boundary, 2)?;
                }
                ExperimentSpec::Sobolev { nu: Some(nu), .. } if *nu <= 2.0 => {
                    return Err(ConfigError::Invalid(format!(
                        "sobolev nu must exceed 2, got {nu}"
                    )));
                }
                ExperimentSpec::Liouville { h: Some(h), .. } if *h <= 0.0 => {
                    return Err(ConfigError::Invalid(format!(
                        "liouville mesh size must be positive, got {h}"
                    )));
                }
                _ => {}
            }
        }
        self.structure.build()?;
        Ok(())
    }

    pub fn boundary_fn(expr: &str) -> Result<impl Fn(Point) -> f64, ConfigError> {
        let parsed = Expr::parse(expr, 2)?;
        Ok(move |p: Point| parsed.eval(&p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
name = "smoke"
seed = 7
h = 0.125

[structure]
family = "randers"
drift = ["0.25", "0"]

[mesh]
shape = "disk"
center = [0.0, 0.0]
radius = 1.5

[solver]
tolerance = 1e-8

[[experiments]]
kind = "solve"
boundary = "2 + 0.5*x"

[[experiments]]
kind = "poincare"
radius = 0.75
"#;

    #[test]
    fn example_parses_builds_and_round_trips() {
        let cfg = ScenarioConfig::from_toml_str(EXAMPLE).unwrap();
        assert_eq!(cfg.name, "smoke");
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.experiments.len(), 2);
        assert_eq!(cfg.experiments[0].kind(), "solve");
        let s = cfg.structure.build().unwrap();
        assert_eq!(s.dim(), 2);
        let echo = cfg.to_toml_string();
        let back = ScenarioConfig::from_toml_str(&echo).unwrap();
        assert_eq!(back.name, cfg.name);
        assert_eq!(back.experiments.len(), cfg.experiments.len());
        assert_eq!(back.solver.tolerance, cfg.solver.tolerance);
    }

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let bad = EXAMPLE.replace("seed = 7", "sed = 7");
        let err = ScenarioConfig::from_toml_str(&bad).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("sed"), "{msg}");
        // toml reports the offending span
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn family_specific_fields_are_policed() {
        let bad = EXAMPLE.replace("family = \"randers\"", "family = \"euclidean\"");
        let err = ScenarioConfig::from_toml_str(&bad).unwrap_err();
        assert!(err.to_string().contains("drift"), "{err}");
    }

    #[test]
    fn bad_boundary_expression_fails_validation() {
        let bad = EXAMPLE.replace("2 + 0.5*x", "2 + 0.5*w");
        assert!(ScenarioConfig::from_toml_str(&bad).is_err());
    }
}
