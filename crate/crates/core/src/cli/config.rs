//! Run configuration read from JSON.

use serde::{Deserialize, Serialize};

use crate::contour::{build_dip_contour, scale_to_variation, Contour, DipParams, HalfPlane, DEFAULT_ORDER};
use crate::error::{Error, Result};
use crate::model::{Coupling, ProblemInstance, RadialTerm, RankTerm, SpaceDim, SpectralInterval};
use crate::rootsolve::{DipFamily, SolverOptions, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::verify::VerifyOptions;
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Solve,
    Verify,
    Scan,
    R0,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Solve => "solve",
            Task::Verify => "verify",
            Task::Scan => "scan",
            Task::R0 => "r0",
        }
    }
}

/// A complex entry written either as a real number or as `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComplexSpec {
    Real(f64),
    Pair([f64; 2]),
}

impl ComplexSpec {
    pub fn value(self) -> C64 {
        match self {
            ComplexSpec::Real(x) => C64::new(x, 0.0),
            ComplexSpec::Pair([re, im]) => C64::new(re, im),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalSpec {
    pub lower: f64,
    #[serde(default)]
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadialTermSpec {
    pub v: Vec<ComplexSpec>,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankTermSpec {
    pub v: Vec<ComplexSpec>,
    pub beta: f64,
    #[serde(default)]
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum CouplingSpec {
    Schrodinger { n: u32, terms: Vec<RadialTermSpec> },
    Direct { terms: Vec<RankTermSpec> },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    #[serde(default)]
    pub eigenvalues: Option<Vec<f64>>,
    /// `"squares:m"` gives `A1 = diag(1, 4, ..., m^2)`.
    #[serde(default)]
    pub generator: Option<String>,
    pub j0: IntervalSpec,
    pub coupling: CouplingSpec,
    #[serde(default = "one")]
    pub epsilon: f64,
    /// Rescales the coupling so that the variation along the configured contour equals
    /// this value (applied before `epsilon` scans).
    #[serde(default)]
    pub target_variation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub depths: Vec<f64>,
    pub spans: Vec<[f64; 2]>,
    #[serde(default)]
    pub r_joins: Vec<f64>,
}

fn default_order() -> usize {
    DEFAULT_ORDER
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContourSpec {
    pub l: i32,
    #[serde(default)]
    pub depth: Option<f64>,
    #[serde(default)]
    pub span: Option<[f64; 2]>,
    #[serde(default)]
    pub r_join: Option<f64>,
    #[serde(default)]
    pub r_max: Option<f64>,
    #[serde(default = "default_order")]
    pub order: usize,
    /// Explicit polyline; overrides the dip parameters.
    #[serde(default)]
    pub vertices: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub family: Option<FamilySpec>,
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    pub epsilons: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub dir: Option<String>,
    /// Grid size of the sigma_min landscape dump (0 disables it).
    #[serde(default)]
    pub landscape: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub instance: InstanceSpec,
    pub contour: ContourSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    pub task: Task,
    #[serde(default)]
    pub scan: Option<ScanSpec>,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub verify: Option<VerifyOptions>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInstance(msg.into())
}

fn vector(v: &[ComplexSpec]) -> Vec<C64> {
    v.iter().map(|c| c.value()).collect()
}

impl RunConfig {
    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn half_plane(&self) -> Result<HalfPlane> {
        HalfPlane::from_sign(self.contour.l).ok_or_else(|| invalid(format!("contour.l must be -1 or +1, got {}", self.contour.l)))
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        match (&self.instance.eigenvalues, &self.instance.generator) {
            (Some(e), None) => Ok(e.clone()),
            (None, Some(g)) => {
                let m = g
                    .strip_prefix("squares:")
                    .and_then(|s| s.trim().parse::<usize>().ok())
                    .ok_or_else(|| invalid(format!("unknown generator `{g}` (expected `squares:m`)")))?;
                Ok((1..=m).map(|i| (i * i) as f64).collect())
            }
            _ => Err(invalid("instance needs exactly one of `eigenvalues` or `generator`")),
        }
    }

    /// The instance with the configured coupling, before `epsilon` and `target_variation`.
    pub fn base_instance(&self) -> Result<ProblemInstance> {
        let a1 = self.eigenvalues()?;
        let j0 = match self.instance.j0.upper {
            Some(u) => SpectralInterval::finite(self.instance.j0.lower, u),
            None => SpectralInterval::half_line(self.instance.j0.lower),
        };
        let coupling = match &self.instance.coupling {
            CouplingSpec::Schrodinger { n, terms } => Coupling::SchrodingerRadial {
                dim: SpaceDim::from_n(*n).ok_or_else(|| invalid(format!("coupling.n must be 1 or 3, got {n}")))?,
                terms: terms
                    .iter()
                    .map(|t| RadialTerm {
                        v: vector(&t.v),
                        alpha: t.alpha,
                    })
                    .collect(),
            },
            CouplingSpec::Direct { terms } => Coupling::DirectRank {
                terms: terms
                    .iter()
                    .map(|t| RankTerm {
                        v: vector(&t.v),
                        beta: t.beta,
                        alpha: t.alpha,
                    })
                    .collect(),
            },
        };
        ProblemInstance::new(a1, j0, coupling)
    }

    pub fn dip(&self) -> Result<DipParams> {
        let c = &self.contour;
        let depth = c.depth.ok_or_else(|| invalid("contour.depth is required without explicit vertices"))?;
        let [x_lo, x_hi] = c.span.ok_or_else(|| invalid("contour.span is required without explicit vertices"))?;
        let finite = self.instance.j0.upper.is_some();
        let r_join = match (c.r_join, finite) {
            (Some(r), _) => r,
            (None, true) => x_hi,
            (None, false) => return Err(invalid("contour.r_join is required on a half-line")),
        };
        let r_max = match (c.r_max, finite) {
            (Some(r), _) => r,
            (None, true) => x_hi,
            (None, false) => return Err(invalid("contour.r_max is required on a half-line")),
        };
        Ok(DipParams {
            depth,
            x_lo,
            x_hi,
            r_join,
            r_max,
        })
    }

    pub fn build_contour(&self, instance: &ProblemInstance) -> Result<Contour> {
        let l = self.half_plane()?;
        match &self.contour.vertices {
            Some(v) => Contour::from_vertices(
                &instance.j0,
                l,
                v.iter().map(|&[re, im]| C64::new(re, im)).collect(),
                self.contour.order,
            ),
            None => build_dip_contour(instance, l, &self.dip()?, self.contour.order),
        }
    }

    /// Instance after `target_variation` (if any) and the configured `epsilon`, and the
    /// contour built for it.
    pub fn instance_and_contour(&self) -> Result<(ProblemInstance, Contour)> {
        let base = self.tuned_instance()?;
        let instance = base.scaled(self.instance.epsilon);
        let contour = self.build_contour(&instance)?;
        Ok((instance, contour))
    }

    /// Instance after `target_variation` only; scans multiply this coupling by `epsilon`.
    pub fn tuned_instance(&self) -> Result<ProblemInstance> {
        let base = self.base_instance()?;
        match self.instance.target_variation {
            Some(target) => {
                let contour = self.build_contour(&base)?;
                Ok(scale_to_variation(&base, &contour, target)?.0)
            }
            None => Ok(base),
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
        }
    }

    pub fn family(&self) -> Result<DipFamily> {
        let f = self
            .contour
            .family
            .as_ref()
            .ok_or_else(|| invalid("task r0 needs contour.family"))?;
        let r_max = match (self.contour.r_max, self.instance.j0.upper) {
            (Some(r), _) => r,
            (None, Some(u)) => u,
            (None, None) => return Err(invalid("contour.r_max is required on a half-line")),
        };
        let r_joins = if f.r_joins.is_empty() {
            vec![self.contour.r_join.unwrap_or(r_max)]
        } else {
            f.r_joins.clone()
        };
        if f.depths.is_empty() || f.spans.is_empty() {
            return Err(invalid("contour.family needs at least one depth and one span"));
        }
        Ok(DipFamily {
            depths: f.depths.clone(),
            spans: f.spans.iter().map(|&[a, b]| (a, b)).collect(),
            r_joins,
            r_max,
            order: self.contour.order,
        })
    }

    pub fn epsilons(&self) -> Result<Vec<f64>> {
        let eps = &self
            .scan
            .as_ref()
            .ok_or_else(|| invalid("task scan needs a `scan` section"))?
            .epsilons;
        if eps.is_empty() {
            return Err(invalid("scan.epsilons is empty"));
        }
        if eps.iter().any(|&e| !(e > 0.0)) || eps.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("scan.epsilons must be positive and strictly increasing"));
        }
        Ok(eps.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "instance": {
            "eigenvalues": [1.0, 2.5],
            "j0": {"lower": 0.0},
            "coupling": {"family": "schrodinger", "n": 3, "terms": [{"v": [0.1, [0.05, 0.0]], "alpha": 0.5}]}
        },
        "contour": {"l": -1, "depth": 1.0, "span": [0.0, 4.0], "r_join": 6.0, "r_max": 45.0},
        "task": "solve"
    }"#;

    #[test]
    fn parses_minimal_config() {
        let cfg = RunConfig::from_json(BASE).unwrap();
        assert_eq!(cfg.task, Task::Solve);
        assert_eq!(cfg.solver.tol, DEFAULT_TOL);
        let (inst, contour) = cfg.instance_and_contour().unwrap();
        assert_eq!(inst.dim(), 2);
        assert_eq!(contour.half_plane, HalfPlane::Lower);
    }

    #[test]
    fn rejects_unknown_keys_with_location() {
        let text = BASE.replace("\"task\": \"solve\"", "\"task\": \"solve\", \"colour\": 1");
        let err = RunConfig::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("colour"));
        assert!(err.line() > 0);
    }

    #[test]
    fn squares_generator_and_scan_grid() {
        let text = BASE
            .replace("\"eigenvalues\": [1.0, 2.5]", "\"generator\": \"squares:3\"")
            .replace("[0.1, [0.05, 0.0]]", "[0.1, 0.05, 0.02]")
            .replace("\"task\": \"solve\"", "\"task\": \"scan\", \"scan\": {\"epsilons\": [0.1, 0.05]}");
        let cfg = RunConfig::from_json(&text).unwrap();
        assert_eq!(cfg.eigenvalues().unwrap(), vec![1.0, 4.0, 9.0]);
        assert!(cfg.epsilons().is_err());
    }
}
