//! Problem instances and coupling models.
//!
//! A [`ProblemInstance`] fixes the finite-dimensional diagonal entry `A1` (as its list of
//! eigenvalues), the spectral interval `J0` of the continuous channel and a [`Coupling`]
//! that determines the spectral-density derivative `K'(mu)`. Every coupling is given in
//! closed form, so `K'` can be evaluated at complex `mu` off the branch cut, which is what
//! the analytic continuation needs.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{op_norm, CMat};
use crate::C64;

/// Spectral interval `(lower, upper)` of the continuous channel; `upper = None` is `+inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralInterval {
    pub lower: f64,
    pub upper: Option<f64>,
}

impl SpectralInterval {
    pub fn half_line(lower: f64) -> Self {
        Self { lower, upper: None }
    }

    pub fn finite(lower: f64, upper: f64) -> Self {
        Self {
            lower,
            upper: Some(upper),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.upper.is_some()
    }

    pub fn contains_open(&self, x: f64) -> bool {
        x > self.lower && self.upper.is_none_or(|u| x < u)
    }

    pub fn contains_closed(&self, x: f64) -> bool {
        x >= self.lower && self.upper.is_none_or(|u| x <= u)
    }
}

/// Space dimension of the radial Schrödinger example; only the cases with exact sphere
/// integrals are supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpaceDim {
    One,
    Three,
}

impl SpaceDim {
    pub fn from_n(n: u32) -> Option<Self> {
        match n {
            1 => Some(SpaceDim::One),
            3 => Some(SpaceDim::Three),
            _ => None,
        }
    }

    pub fn n(self) -> u32 {
        match self {
            SpaceDim::One => 1,
            SpaceDim::Three => 3,
        }
    }
}

/// One Gaussian term `v * exp(-alpha |p|^2)` of the momentum-space form factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialTerm {
    pub v: Vec<C64>,
    pub alpha: f64,
}

/// One rank-one term `w(mu) * v v^*` of a directly specified density.
///
/// On the half-line `w(mu) = beta (mu - e1)^{1/2} exp(-alpha mu)`; on a finite interval
/// `w(mu) = beta ((mu - e1)(e2 - mu))^{1/2}` and `alpha` is unused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTerm {
    pub v: Vec<C64>,
    pub beta: f64,
    #[serde(default)]
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Coupling {
    /// `b(p) = sum_k v_k exp(-alpha_k |p|^2)` coupled to `-Laplacian` on `R^n`.
    SchrodingerRadial { dim: SpaceDim, terms: Vec<RadialTerm> },
    /// Closed-form weights times fixed rank-one projectors.
    DirectRank { terms: Vec<RankTerm> },
}

impl Coupling {
    pub fn zero(dim_m: usize) -> Self {
        Coupling::DirectRank {
            terms: vec![RankTerm {
                v: vec![C64::new(0.0, 0.0); dim_m],
                beta: 0.0,
                alpha: 1.0,
            }],
        }
    }

    /// Replaces `B` by `eps * B`; the density scales as `eps^2`.
    pub fn scaled(&self, eps: f64) -> Self {
        match self {
            Coupling::SchrodingerRadial { dim, terms } => Coupling::SchrodingerRadial {
                dim: *dim,
                terms: terms
                    .iter()
                    .map(|t| RadialTerm {
                        v: t.v.iter().map(|x| x * eps).collect(),
                        alpha: t.alpha,
                    })
                    .collect(),
            },
            Coupling::DirectRank { terms } => Coupling::DirectRank {
                terms: terms
                    .iter()
                    .map(|t| RankTerm {
                        v: t.v.clone(),
                        beta: t.beta * eps * eps,
                        alpha: t.alpha,
                    })
                    .collect(),
            },
        }
    }

    fn vectors(&self) -> Box<dyn Iterator<Item = &Vec<C64>> + '_> {
        match self {
            Coupling::SchrodingerRadial { terms, .. } => Box::new(terms.iter().map(|t| &t.v)),
            Coupling::DirectRank { terms } => Box::new(terms.iter().map(|t| &t.v)),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Coupling::SchrodingerRadial { terms, .. } => {
                terms.iter().all(|t| t.v.iter().all(|x| x.norm() == 0.0))
            }
            Coupling::DirectRank { terms } => terms
                .iter()
                .all(|t| t.beta == 0.0 || t.v.iter().all(|x| x.norm() == 0.0)),
        }
    }
}

/// Finite-dimensional problem: `A1 = diag(a1)` acting on `C^m`, the interval `J0` and the
/// coupling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub a1: Vec<f64>,
    pub j0: SpectralInterval,
    pub coupling: Coupling,
}

/// Value of the continued kernel at one point.
#[derive(Debug, Clone)]
pub struct KernelValue {
    pub mu: C64,
    pub matrix: CMat,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    EmptySpectrum,
    Decreasing { index: usize },
    OutsideInterval { index: usize },
    EmptyInterval,
    VectorLength { term: usize, expected: usize, found: usize },
    NegativeWeight { term: usize },
    NonPositiveDecay { term: usize },
    SchrodingerNeedsHalfLineAtZero,
    NoTerms,
    NonFinite,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptySpectrum => write!(f, "dim_m >= 1 required (empty eigenvalue list)"),
            Violation::Decreasing { index } => {
                write!(f, "eigenvalue {index} is smaller than its predecessor")
            }
            Violation::OutsideInterval { index } => {
                write!(f, "eigenvalue {index} lies outside the open interval J0")
            }
            Violation::EmptyInterval => write!(f, "J0 is empty"),
            Violation::VectorLength {
                term,
                expected,
                found,
            } => write!(f, "coupling term {term} has length {found}, expected {expected}"),
            Violation::NegativeWeight { term } => write!(f, "coupling term {term} has beta < 0"),
            Violation::NonPositiveDecay { term } => {
                write!(f, "coupling term {term} needs a positive decay rate")
            }
            Violation::SchrodingerNeedsHalfLineAtZero => {
                write!(f, "the Schrödinger coupling requires J0 = (0, inf)")
            }
            Violation::NoTerms => write!(f, "coupling has no terms"),
            Violation::NonFinite => write!(f, "non-finite number in the instance"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            return write!(f, "pass");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

/// Principal square root with the cut moved to `(-inf, shift]`.
fn sqrt_shifted(mu: C64, shift: f64) -> C64 {
    (mu - shift).sqrt()
}

impl ProblemInstance {
    pub fn new(a1: Vec<f64>, j0: SpectralInterval, coupling: Coupling) -> Result<Self> {
        let instance = Self { a1, j0, coupling };
        let report = validate_instance(&instance);
        if report.passed() {
            Ok(instance)
        } else {
            Err(Error::InvalidInstance(report.to_string()))
        }
    }

    pub fn dim(&self) -> usize {
        self.a1.len()
    }

    /// `max |lambda_i|`, the norm of the selfadjoint diagonal entry.
    pub fn a1_norm(&self) -> f64 {
        self.a1.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    }

    pub fn with_coupling(&self, coupling: Coupling) -> Self {
        Self {
            a1: self.a1.clone(),
            j0: self.j0,
            coupling,
        }
    }

    pub fn scaled(&self, eps: f64) -> Self {
        self.with_coupling(self.coupling.scaled(eps))
    }

    /// Whether `mu` lies on a branch cut of the continued kernel.
    pub fn on_branch_cut(&self, mu: C64) -> bool {
        if mu.im != 0.0 {
            return false;
        }
        if mu.re < self.j0.lower {
            return true;
        }
        match (&self.coupling, self.j0.upper) {
            (Coupling::DirectRank { .. }, Some(upper)) => mu.re > upper,
            _ => false,
        }
    }

    /// Continued kernel `K'(mu)` without norm computation.
    pub fn kprime_matrix(&self, mu: C64) -> Result<CMat> {
        if self.on_branch_cut(mu) {
            return Err(Error::BranchCutViolation { mu });
        }
        let m = self.dim();
        let mut out = CMat::zeros(m, m);
        match &self.coupling {
            Coupling::SchrodingerRadial { dim, terms } => {
                // K'(mu) = c_n mu^{(n-2)/2} B(mu) B#(mu)^T with B# the conjugate-coefficient
                // continuation of B^*, so that K'(conj mu) = K'(mu)^*.
                let root = sqrt_shifted(mu, 0.0);
                let prefactor = match dim {
                    SpaceDim::Three => C64::new(2.0 * PI, 0.0) * root,
                    SpaceDim::One => {
                        if root.norm() == 0.0 {
                            return Err(Error::BranchCutViolation { mu });
                        }
                        C64::new(1.0, 0.0) / root
                    }
                };
                let mut b = vec![C64::new(0.0, 0.0); m];
                let mut b_sharp = vec![C64::new(0.0, 0.0); m];
                for t in terms {
                    let decay = (-mu * t.alpha).exp();
                    for i in 0..m {
                        b[i] += t.v[i] * decay;
                        b_sharp[i] += t.v[i].conj() * decay;
                    }
                }
                for i in 0..m {
                    for j in 0..m {
                        out[(i, j)] = prefactor * b[i] * b_sharp[j];
                    }
                }
            }
            Coupling::DirectRank { terms } => {
                let e1 = self.j0.lower;
                for t in terms {
                    let w = match self.j0.upper {
                        None => sqrt_shifted(mu, e1) * (-mu * t.alpha).exp() * t.beta,
                        // sqrt(mu - e1) * sqrt(e2 - mu): positive on (e1, e2), cuts along
                        // (-inf, e1] and [e2, inf), conjugation-symmetric.
                        Some(e2) => sqrt_shifted(mu, e1) * (C64::new(e2, 0.0) - mu).sqrt() * t.beta,
                    };
                    for i in 0..m {
                        for j in 0..m {
                            out[(i, j)] += w * t.v[i] * t.v[j].conj();
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Analytic upper bound of `int_{r_max}^{inf} ||K'(mu)|| dmu` along the real axis.
    /// Returns `0` on a finite interval and `inf` if no exponential decay is available.
    pub fn tail_bound(&self, r_max: f64) -> f64 {
        if self.j0.is_finite() {
            return 0.0;
        }
        if self.coupling.is_zero() {
            return 0.0;
        }
        // int_R^inf s^{1/2} e^{-c s} ds <= e^{-cR} (R^{1/2}/c + 1/(2 c^2 R^{1/2}))
        let half_power_tail = |r: f64, c: f64| -> f64 {
            if r <= 0.0 || c <= 0.0 {
                return f64::INFINITY;
            }
            (-c * r).exp() * (r.sqrt() / c + 1.0 / (2.0 * c * c * r.sqrt()))
        };
        match &self.coupling {
            Coupling::SchrodingerRadial { dim, terms } => {
                let s: f64 = terms
                    .iter()
                    .map(|t| t.v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt())
                    .sum();
                let alpha_min = terms
                    .iter()
                    .filter(|t| t.v.iter().any(|x| x.norm() > 0.0))
                    .map(|t| t.alpha)
                    .fold(f64::INFINITY, f64::min);
                if !(alpha_min > 0.0) || r_max <= 0.0 {
                    return f64::INFINITY;
                }
                let c = 2.0 * alpha_min;
                match dim {
                    SpaceDim::Three => 2.0 * PI * s * s * half_power_tail(r_max, c),
                    // int_R^inf s^{-1/2} e^{-cs} ds <= R^{-1/2} e^{-cR} / c
                    SpaceDim::One => s * s * (-c * r_max).exp() / (c * r_max.sqrt()),
                }
            }
            Coupling::DirectRank { terms } => {
                let e1 = self.j0.lower;
                terms
                    .iter()
                    .map(|t| {
                        let v2: f64 = t.v.iter().map(|x| x.norm_sqr()).sum();
                        if t.beta == 0.0 || v2 == 0.0 {
                            return 0.0;
                        }
                        t.beta * v2 * (-t.alpha * e1).exp() * half_power_tail(r_max - e1, t.alpha)
                    })
                    .sum()
            }
        }
    }
}

/// Evaluates the continued kernel `K'(mu)` together with its operator norm.
pub fn eval_kprime(instance: &ProblemInstance, mu: C64) -> Result<KernelValue> {
    let matrix = instance.kprime_matrix(mu)?;
    let norm = op_norm(&matrix);
    Ok(KernelValue { mu, matrix, norm })
}

/// Checks the standing assumptions on an instance; never fails, only reports.
pub fn validate_instance(instance: &ProblemInstance) -> ValidationReport {
    let mut violations = Vec::new();
    let m = instance.a1.len();
    if m == 0 {
        violations.push(Violation::EmptySpectrum);
    }
    let j0 = instance.j0;
    if !j0.lower.is_finite() || j0.upper.is_some_and(|u| !u.is_finite()) {
        violations.push(Violation::NonFinite);
    }
    if j0.upper.is_some_and(|u| u <= j0.lower) {
        violations.push(Violation::EmptyInterval);
    }
    for (i, &x) in instance.a1.iter().enumerate() {
        if !x.is_finite() {
            violations.push(Violation::NonFinite);
            continue;
        }
        if i > 0 && x < instance.a1[i - 1] {
            violations.push(Violation::Decreasing { index: i });
        }
        if !j0.contains_open(x) {
            violations.push(Violation::OutsideInterval { index: i });
        }
    }
    let check_len = |term: usize, v: &Vec<C64>, out: &mut Vec<Violation>| {
        if v.len() != m {
            out.push(Violation::VectorLength {
                term,
                expected: m,
                found: v.len(),
            });
        }
    };
    match &instance.coupling {
        Coupling::SchrodingerRadial { terms, .. } => {
            if terms.is_empty() {
                violations.push(Violation::NoTerms);
            }
            if j0.lower != 0.0 || j0.upper.is_some() {
                violations.push(Violation::SchrodingerNeedsHalfLineAtZero);
            }
            for (k, t) in terms.iter().enumerate() {
                check_len(k, &t.v, &mut violations);
                if !(t.alpha > 0.0) {
                    violations.push(Violation::NonPositiveDecay { term: k });
                }
            }
        }
        Coupling::DirectRank { terms } => {
            if terms.is_empty() {
                violations.push(Violation::NoTerms);
            }
            for (k, t) in terms.iter().enumerate() {
                check_len(k, &t.v, &mut violations);
                if t.beta < 0.0 {
                    violations.push(Violation::NegativeWeight { term: k });
                }
                if !j0.is_finite() && !(t.alpha > 0.0) {
                    violations.push(Violation::NonPositiveDecay { term: k });
                }
            }
        }
    }
    if instance.coupling.vectors().flatten().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
        violations.push(Violation::NonFinite);
    }
    ValidationReport { violations }
}
