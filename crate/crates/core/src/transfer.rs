//! Transfer function on the physical sheet and its continuation through `J0`.
//!
//! On the physical sheet `V1(z) = int_{J0} K'(mu) (z - mu)^{-1} dmu`. Deforming the
//! interval into a contour `Gamma` in the half-plane `l` gives `V1(z, Gamma)`, which is
//! holomorphic off `Gamma` and agrees with `V1(z)` outside the region swept by the
//! deformation; inside that region the two differ by the residue `2 pi i l K'(z)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contour::{check_solvability, tolerance_scale, Contour, HalfPlane, SolvabilityCertificate};
use crate::error::{Error, Result};
use crate::linalg::{diag_real, eigenvalues, identity, solve_right, CMat};
use crate::model::ProblemInstance;
use crate::quadrature::{integrate_adaptive, AdaptiveOptions, EndpointMap, Measure, Path, QuadratureRule, Segment};
use crate::rootsolve::RootSolution;
use crate::C64;

/// Relative tolerance of the adaptive transfer-function quadratures.
pub const TRANSFER_REL_TOL: f64 = 1e-12;
/// Probes closer to the contour than this many local node spacings are rejected.
pub const PROBE_SAFEGUARD_SPACINGS: f64 = 3.0;
/// Relative separation required between the spectrum of an operator argument and the contour.
pub const SPECTRUM_SEPARATION: f64 = 1e-6;
/// Panels closer to a probe than this many panel lengths are refined adaptively.
pub const NEAR_PANEL_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sheet {
    Physical,
    Continued(HalfPlane),
}

#[derive(Debug, Clone)]
pub struct TransferEval {
    pub z: C64,
    pub sheet: Sheet,
    pub m1: CMat,
    pub v1: CMat,
}

#[derive(Debug, Clone)]
pub struct FactorEval {
    pub z: C64,
    pub w1: CMat,
    /// `dist(z, sigma(A1)) <= d0 / 2`, where invertibility of `W1` is guaranteed.
    pub invertible_certified: bool,
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// `diag(A1) - z + v1`.
fn assemble_m1(instance: &ProblemInstance, z: C64, v1: &CMat) -> CMat {
    let mut m1 = v1.clone();
    for (i, &l) in instance.a1.iter().enumerate() {
        m1[(i, i)] += c(l) - z;
    }
    m1
}

/// `V1(z)` on the physical sheet, by adaptive quadrature along `J0` (truncated at `r_max`
/// on a half-line).
pub fn v1_physical(instance: &ProblemInstance, z: C64, r_max: f64) -> Result<CMat> {
    let j0 = instance.j0;
    if z.im == 0.0 && j0.contains_closed(z.re) {
        return Err(Error::ProbeOnSpectrum { z });
    }
    let m = instance.dim();
    if instance.coupling.is_zero() {
        return Ok(CMat::zeros(m, m));
    }
    let (end, map) = match j0.upper {
        Some(u) => (u, EndpointMap::Both),
        None => (r_max, EndpointMap::Start),
    };
    let path = Path {
        segments: vec![Segment::new(c(j0.lower), c(end), map)],
    };
    // Refine the initial panels near the projection of z onto the axis.
    let initial = path.panels_with_cap(|mu| (0.5 * (mu - z).norm()).clamp(1e-3, 4.0));
    let opts = AdaptiveOptions {
        rel_tol: TRANSFER_REL_TOL,
        ..Default::default()
    };
    let like = CMat::zeros(m, m);
    let out = integrate_adaptive(&path, &initial, &opts, Measure::Complex, &like, |mu| {
        let k = instance.kprime_matrix(mu)?;
        Ok(k / (z - mu))
    })?;
    Ok(out.value)
}

/// `M1(z) = A1 - z + V1(z)` on the physical sheet.
pub fn m1_physical(instance: &ProblemInstance, z: C64, r_max: f64) -> Result<TransferEval> {
    let v1 = v1_physical(instance, z, r_max)?;
    Ok(TransferEval {
        z,
        sheet: Sheet::Physical,
        m1: assemble_m1(instance, z, &v1),
        v1,
    })
}

/// An instance together with a contour and the frozen quadrature data along it.
#[derive(Debug, Clone)]
pub struct Continuation<'a> {
    pub instance: &'a ProblemInstance,
    pub contour: &'a Contour,
    pub path: Path,
    pub rule: QuadratureRule,
    /// `w_j K'(mu_j)` at the rule nodes.
    weighted_kernel: Vec<CMat>,
    pub certificate: SolvabilityCertificate,
    pub scale: f64,
}

impl<'a> Continuation<'a> {
    pub fn new(instance: &'a ProblemInstance, contour: &'a Contour) -> Result<Self> {
        let certificate = check_solvability(instance, contour)?;
        let rule = contour.rule(instance)?;
        let weighted_kernel = rule
            .nodes
            .par_iter()
            .zip(rule.weights.par_iter())
            .map(|(&mu, &w)| Ok(instance.kprime_matrix(mu)? * w))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            instance,
            contour,
            path: contour.path(),
            rule,
            weighted_kernel,
            certificate,
            scale: tolerance_scale(instance, certificate.v0),
        })
    }

    pub fn dim(&self) -> usize {
        self.instance.dim()
    }

    /// `w_j K'(mu_j)` at the rule nodes, in node order.
    pub fn weighted_kernel(&self) -> &[CMat] {
        &self.weighted_kernel
    }

    pub fn half_plane(&self) -> HalfPlane {
        self.contour.half_plane
    }

    pub fn d0(&self) -> f64 {
        self.certificate.d0
    }

    /// Minimum admissible probe distance at `z`: a few node spacings of the nearest panel.
    pub fn safeguard(&self, z: C64) -> f64 {
        let nearest = self
            .rule
            .panels
            .iter()
            .map(|p| (self.path.panel_distance(p, z), p))
            .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        match nearest {
            Some((_, p)) => PROBE_SAFEGUARD_SPACINGS * self.path.panel_arc_length(p) / self.rule.order as f64,
            None => 0.0,
        }
    }

    fn check_probe(&self, z: C64) -> Result<()> {
        let distance = self.contour.distance_to(z);
        let safeguard = self.safeguard(z);
        if distance < safeguard || distance == 0.0 {
            return Err(Error::ProbeOnContour { z, distance, safeguard });
        }
        Ok(())
    }

    /// Continued `V1(z, Gamma)`. Panels within `NEAR_PANEL_FACTOR` panel lengths of `z`
    /// are integrated adaptively; on the others the Gauss rule is already exact to
    /// round-off and the frozen rule values are used.
    pub fn v1(&self, z: C64) -> Result<CMat> {
        self.check_probe(z)?;
        let m = self.dim();
        if self.instance.coupling.is_zero() {
            return Ok(CMat::zeros(m, m));
        }
        let order = self.rule.order;
        let mut far = CMat::zeros(m, m);
        let mut near = Vec::new();
        for (i, p) in self.rule.panels.iter().enumerate() {
            if self.path.panel_distance(p, z) < NEAR_PANEL_FACTOR * self.path.panel_arc_length(p) {
                near.push(*p);
                continue;
            }
            for j in i * order..(i + 1) * order {
                let f = C64::new(1.0, 0.0) / (z - self.rule.nodes[j]);
                far.zip_apply(&self.weighted_kernel[j], |a, b| *a += b * f);
            }
        }
        if near.is_empty() {
            return Ok(far);
        }
        let opts = AdaptiveOptions {
            order,
            rel_tol: TRANSFER_REL_TOL,
            abs_tol: TRANSFER_REL_TOL * far.norm(),
            ..Default::default()
        };
        let like = CMat::zeros(m, m);
        let out = integrate_adaptive(&self.path, &near, &opts, Measure::Complex, &like, |mu| {
            Ok(self.instance.kprime_matrix(mu)? / (z - mu))
        })?;
        Ok(far + out.value)
    }

    /// Continued `V1(z, Gamma)` with every rule panel checked against its halves; fully
    /// independent of the frozen rule values, used as a reference.
    pub fn v1_refined(&self, z: C64) -> Result<CMat> {
        self.check_probe(z)?;
        let m = self.dim();
        if self.instance.coupling.is_zero() {
            return Ok(CMat::zeros(m, m));
        }
        let opts = AdaptiveOptions {
            order: self.rule.order,
            rel_tol: TRANSFER_REL_TOL,
            ..Default::default()
        };
        let like = CMat::zeros(m, m);
        let out = integrate_adaptive(&self.path, &self.rule.panels, &opts, Measure::Complex, &like, |mu| {
            Ok(self.instance.kprime_matrix(mu)? / (z - mu))
        })?;
        Ok(out.value)
    }

    pub fn m1_refined(&self, z: C64) -> Result<CMat> {
        Ok(assemble_m1(self.instance, z, &self.v1_refined(z)?))
    }

    pub fn m1(&self, z: C64) -> Result<TransferEval> {
        let v1 = self.v1(z)?;
        Ok(TransferEval {
            z,
            sheet: Sheet::Continued(self.half_plane()),
            m1: assemble_m1(self.instance, z, &v1),
            v1,
        })
    }

    /// `V1(z, Gamma)` from the frozen rule only; accurate when `z` is at least a panel
    /// length away from the contour (e.g. anywhere in the `d0/2`-vicinity of `sigma(A1)`).
    pub fn v1_on_rule(&self, z: C64) -> CMat {
        let m = self.dim();
        let mut acc = CMat::zeros(m, m);
        for (k, &mu) in self.weighted_kernel.iter().zip(self.rule.nodes.iter()) {
            let f = C64::new(1.0, 0.0) / (z - mu);
            acc.zip_apply(k, |a, b| *a += b * f);
        }
        acc
    }

    pub fn m1_on_rule(&self, z: C64) -> CMat {
        assemble_m1(self.instance, z, &self.v1_on_rule(z))
    }

    /// Distance from the spectrum of `y` to the contour; fails if below the separation
    /// threshold.
    pub fn check_separation(&self, y: &CMat) -> Result<f64> {
        let ev = eigenvalues(y)?;
        let distance = ev
            .iter()
            .map(|&z| self.contour.distance_to(z))
            .fold(f64::INFINITY, f64::min);
        if !(distance > SPECTRUM_SEPARATION * self.scale) {
            return Err(Error::SpectrumTouchesContour { distance });
        }
        Ok(distance)
    }

    /// `V1(Y, Gamma) = int K'(mu) (Y - mu)^{-1} dmu` for an operator argument.
    pub fn v1_operator(&self, y: &CMat) -> Result<CMat> {
        self.check_dim(y)?;
        self.check_separation(y)?;
        self.v1_operator_unchecked(y)
    }

    fn check_dim(&self, y: &CMat) -> Result<()> {
        if y.nrows() != self.dim() || y.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: y.nrows(),
            });
        }
        Ok(())
    }

    /// Per-node terms `w_j K'(mu_j) (Y - mu_j)^{-1}` in node order.
    fn resolvent_terms(&self, y: &CMat) -> Result<Vec<CMat>> {
        let m = self.dim();
        self.weighted_kernel
            .par_iter()
            .zip(self.rule.nodes.par_iter())
            .map(|(k, &mu)| {
                if k.iter().all(|z| *z == C64::new(0.0, 0.0)) {
                    return Ok(CMat::zeros(m, m));
                }
                let shifted = y - identity(m) * mu;
                let t = solve_right(k, &shifted).map_err(|_| Error::SpectrumTouchesContour { distance: 0.0 })?;
                if !crate::linalg::is_finite(&t) {
                    return Err(Error::SpectrumTouchesContour { distance: 0.0 });
                }
                Ok(t)
            })
            .collect()
    }

    pub(crate) fn v1_operator_unchecked(&self, y: &CMat) -> Result<CMat> {
        let m = self.dim();
        let mut acc = CMat::zeros(m, m);
        for t in self.resolvent_terms(y)? {
            acc += t;
        }
        Ok(acc)
    }

    /// Precomputes the node terms of `W1(z, Gamma)` for the operator root `h1`.
    pub fn factor_kernel(&self, h1: &CMat) -> Result<FactorKernel> {
        self.check_dim(h1)?;
        self.check_separation(h1)?;
        Ok(FactorKernel {
            nodes: self.rule.nodes.clone(),
            terms: self.resolvent_terms(h1)?,
            dim: self.dim(),
        })
    }

    /// `W1(z, Gamma)` for the given root.
    pub fn w1(&self, root: &RootSolution, z: C64) -> Result<FactorEval> {
        self.check_probe(z)?;
        let kernel = self.factor_kernel(&root.h1)?;
        Ok(self.factor_eval(&kernel, z))
    }

    pub fn factor_eval(&self, kernel: &FactorKernel, z: C64) -> FactorEval {
        let dist = self
            .instance
            .a1
            .iter()
            .map(|&l| (z - c(l)).norm())
            .fold(f64::INFINITY, f64::min);
        FactorEval {
            z,
            w1: kernel.w1(z),
            invertible_certified: dist <= 0.5 * self.d0(),
        }
    }

    /// `dist(z, sigma(A1))`.
    pub fn distance_to_a1(&self, z: C64) -> f64 {
        self.instance
            .a1
            .iter()
            .map(|&l| (z - c(l)).norm())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn a1_matrix(&self) -> CMat {
        diag_real(&self.instance.a1)
    }
}

/// Node terms `c_j = w_j K'(mu_j)(H1 - mu_j)^{-1}`, so that
/// `W1(z) = I - sum_j c_j / (mu_j - z)`.
#[derive(Debug, Clone)]
pub struct FactorKernel {
    nodes: Vec<C64>,
    terms: Vec<CMat>,
    dim: usize,
}

impl FactorKernel {
    pub fn w1(&self, z: C64) -> CMat {
        let mut w = identity(self.dim);
        for (t, &mu) in self.terms.iter().zip(self.nodes.iter()) {
            let f = C64::new(1.0, 0.0) / (mu - z);
            w.zip_apply(t, |a, b| *a -= b * f);
        }
        w
    }
}

/// Continued transfer function `M1(z, Gamma)`.
pub fn m1_continued(instance: &ProblemInstance, contour: &Contour, z: C64) -> Result<TransferEval> {
    Continuation::new(instance, contour)?.m1(z)
}

/// Operator-argument map `V1(Y, Gamma)`.
pub fn v1_of_operator(instance: &ProblemInstance, contour: &Contour, y: &CMat) -> Result<CMat> {
    Continuation::new(instance, contour)?.v1_operator(y)
}

/// Factor `W1(z, Gamma)` of `M1(z, Gamma) = W1(z, Gamma)(H1 - z)`.
pub fn w1_factor(instance: &ProblemInstance, contour: &Contour, root: &RootSolution, z: C64) -> Result<FactorEval> {
    Continuation::new(instance, contour)?.w1(root, z)
}
