//! Deformation contours, the variation of the coupling along them and the solvability
//! certificate for the fixed-point equation.
//!
//! A contour starts at the finite lower end of `J0`, leaves the real axis into the chosen
//! half-plane and, on a half-line interval, rejoins the axis and runs along it up to a
//! truncation point `R_max`. The part of the integral beyond `R_max` is controlled by the
//! analytic tail bound of the coupling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{op_norm, point_segment_distance};
use crate::model::{ProblemInstance, SpectralInterval};
use crate::quadrature::{
    integrate_adaptive, AdaptiveOptions, EndpointMap, Measure, Path, QuadratureRule, Segment,
};
use crate::C64;

/// Relative tolerance for the variation integral.
pub const VARIATION_REL_TOL: f64 = 1e-12;
/// The truncated tail must stay below this fraction of the variation.
pub const TAIL_FRACTION: f64 = 1e-12;
/// Default Gauss–Legendre order per panel.
pub const DEFAULT_ORDER: usize = 20;
/// Default upper bound for the panel length far from the spectrum.
pub const DEFAULT_MAX_PANEL: f64 = 0.5;

/// Half-plane index `l`: `-1` continues from above into the lower half-plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HalfPlane {
    Lower,
    Upper,
}

impl HalfPlane {
    pub fn from_sign(l: i32) -> Option<Self> {
        match l {
            -1 => Some(HalfPlane::Lower),
            1 => Some(HalfPlane::Upper),
            _ => None,
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            HalfPlane::Lower => -1.0,
            HalfPlane::Upper => 1.0,
        }
    }

    pub fn index(self) -> i32 {
        self.sign() as i32
    }

    pub fn opposite(self) -> Self {
        match self {
            HalfPlane::Lower => HalfPlane::Upper,
            HalfPlane::Upper => HalfPlane::Lower,
        }
    }
}

/// Oriented polyline contour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    pub half_plane: HalfPlane,
    pub vertices: Vec<C64>,
    /// Gauss–Legendre nodes per panel.
    pub order: usize,
    /// Quadratic substitution at the anchored endpoint(s).
    pub endpoint_map: bool,
    /// Panel length cap far from the spectrum of `A1`.
    pub max_panel: f64,
    /// Last vertex is the anchored upper end of a finite `J0`.
    pub anchored_end: bool,
}

/// Parameters of the trapezoidal dip family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipParams {
    pub depth: f64,
    pub x_lo: f64,
    pub x_hi: f64,
    /// Rejoin point on the real axis (ignored on a finite interval).
    pub r_join: f64,
    /// Truncation point (ignored on a finite interval).
    pub r_max: f64,
}

fn cross(a: C64, b: C64) -> f64 {
    a.re * b.im - a.im * b.re
}

fn segments_intersect(p1: C64, p2: C64, q1: C64, q2: C64) -> bool {
    let d1 = cross(q2 - q1, p1 - q1);
    let d2 = cross(q2 - q1, p2 - q1);
    let d3 = cross(p2 - p1, q1 - p1);
    let d4 = cross(p2 - p1, q2 - p1);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let scale = 1e-13 * (1.0 + p1.norm() + p2.norm() + q1.norm() + q2.norm());
    point_segment_distance(p1, q1, q2) <= scale
        || point_segment_distance(p2, q1, q2) <= scale
        || point_segment_distance(q1, p1, p2) <= scale
        || point_segment_distance(q2, p1, p2) <= scale
}

impl Contour {
    /// Builds and validates a contour from explicit vertices.
    pub fn from_vertices(j0: &SpectralInterval, half_plane: HalfPlane, vertices: Vec<C64>, order: usize) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(Error::Geometry("a contour needs at least two vertices".into()));
        }
        if order == 0 {
            return Err(Error::Geometry("quadrature order must be positive".into()));
        }
        let tol = 1e-14 * (1.0 + j0.lower.abs());
        if (vertices[0] - C64::new(j0.lower, 0.0)).norm() > tol {
            return Err(Error::Geometry(format!(
                "first vertex {} must be the anchored endpoint {}",
                vertices[0], j0.lower
            )));
        }
        let last = *vertices.last().unwrap();
        match j0.upper {
            Some(upper) => {
                if (last - C64::new(upper, 0.0)).norm() > 1e-14 * (1.0 + upper.abs()) {
                    return Err(Error::Geometry(format!(
                        "last vertex {last} must be the anchored endpoint {upper}"
                    )));
                }
            }
            None => {
                if last.im != 0.0 || last.re <= j0.lower {
                    return Err(Error::Geometry(
                        "on a half-line the contour must end on the real axis at R_max".into(),
                    ));
                }
            }
        }
        for v in &vertices {
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::Geometry("non-finite vertex".into()));
            }
            if v.im != 0.0 && v.im.signum() != half_plane.sign() {
                return Err(Error::Geometry(format!("vertex {v} lies in the wrong half-plane")));
            }
            if v.im == 0.0 && !j0.contains_closed(v.re) {
                return Err(Error::Geometry(format!("real vertex {v} lies outside the closure of J0")));
            }
        }
        let n = vertices.len() - 1;
        for k in 0..n {
            if (vertices[k + 1] - vertices[k]).norm() == 0.0 {
                return Err(Error::Geometry(format!("edge {k} has zero length")));
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let (p1, p2) = (vertices[i], vertices[i + 1]);
                let (q1, q2) = (vertices[j], vertices[j + 1]);
                if j == i + 1 {
                    // Adjacent edges may only share their common vertex.
                    let a = p1 - p2;
                    let b = q2 - q1;
                    let collinear = cross(a, b).abs() <= 1e-14 * a.norm() * b.norm();
                    if collinear && (a * b.conj()).re > 0.0 {
                        return Err(Error::Geometry(format!("edges {i} and {j} overlap")));
                    }
                } else if segments_intersect(p1, p2, q1, q2) {
                    return Err(Error::Geometry(format!("edges {i} and {j} intersect")));
                }
            }
        }
        Ok(Self {
            half_plane,
            vertices,
            order,
            endpoint_map: true,
            max_panel: DEFAULT_MAX_PANEL,
            anchored_end: j0.is_finite(),
        })
    }

    pub fn with_endpoint_map(mut self, on: bool) -> Self {
        self.endpoint_map = on;
        self
    }

    pub fn with_order(mut self, order: usize) -> Self {
        self.order = order.max(1);
        self
    }

    pub fn with_max_panel(mut self, max_panel: f64) -> Self {
        self.max_panel = max_panel;
        self
    }

    /// Truncation point of a half-line contour.
    pub fn r_max(&self) -> Option<f64> {
        if self.anchored_end {
            None
        } else {
            self.vertices.last().map(|v| v.re)
        }
    }

    /// Mirror image in the real axis (the contour for the opposite half-plane).
    pub fn mirror(&self) -> Self {
        Self {
            half_plane: self.half_plane.opposite(),
            vertices: self.vertices.iter().map(|v| v.conj()).collect(),
            ..self.clone()
        }
    }

    pub fn path(&self) -> Path {
        let n = self.vertices.len() - 1;
        let segments = (0..n)
            .map(|k| {
                let start = k == 0 && self.endpoint_map;
                let end = k == n - 1 && self.endpoint_map && self.anchored_end;
                let map = match (start, end) {
                    (true, true) => EndpointMap::Both,
                    (true, false) => EndpointMap::Start,
                    (false, true) => EndpointMap::End,
                    (false, false) => EndpointMap::None,
                };
                Segment::new(self.vertices[k], self.vertices[k + 1], map)
            })
            .collect();
        Path { segments }
    }

    pub fn length(&self) -> f64 {
        self.vertices.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// Exact distance from `z` to the polyline.
    pub fn distance_to(&self, z: C64) -> f64 {
        self.vertices
            .windows(2)
            .map(|w| point_segment_distance(z, w[0], w[1]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Whether `z` lies strictly inside the region swept by deforming the real interval
    /// into the contour (the polygon closed along the real axis).
    pub fn encloses(&self, z: C64) -> bool {
        let v = &self.vertices;
        let mut inside = false;
        for i in 0..v.len() {
            let (a, b) = (v[i], v[(i + 1) % v.len()]);
            if (a.im > z.im) != (b.im > z.im) {
                let x = a.re + (z.im - a.im) / (b.im - a.im) * (b.re - a.re);
                if z.re < x {
                    inside = !inside;
                }
            }
        }
        inside && z.im != 0.0
    }

    /// `d0 = dist(sigma(A1), contour)`.
    pub fn d0(&self, instance: &ProblemInstance) -> f64 {
        instance
            .a1
            .iter()
            .map(|&x| self.distance_to(C64::new(x, 0.0)))
            .fold(f64::INFINITY, f64::min)
    }

    /// Frozen quadrature rule for integrands whose singularities stay near `sigma(A1)`.
    ///
    /// Panels are capped at `min(max_panel, d0/4)` and at half the local distance to the
    /// spectrum, then refined adaptively on `K'(mu) ((A1 - mu)^{-1} + I)`.
    pub fn rule(&self, instance: &ProblemInstance) -> Result<QuadratureRule> {
        let path = self.path();
        let d0 = self.d0(instance);
        let near_cap = self.max_panel.min(0.25 * d0).max(1e-6);
        let spectrum: Vec<C64> = instance.a1.iter().map(|&x| C64::new(x, 0.0)).collect();
        let initial = path.panels_with_cap(|mu| {
            let dist = spectrum
                .iter()
                .map(|s| (mu - s).norm())
                .fold(f64::INFINITY, f64::min);
            near_cap.max(0.25 * dist).min(self.max_panel.max(near_cap) * 8.0)
        });
        let m = instance.dim();
        let like = crate::linalg::CMat::zeros(m, m);
        let opts = AdaptiveOptions {
            order: self.order,
            rel_tol: 1e-13,
            ..Default::default()
        };
        let outcome = integrate_adaptive(&path, &initial, &opts, Measure::Complex, &like, |mu| {
            let k = instance.kprime_matrix(mu)?;
            let mut probe = k.clone();
            for j in 0..m {
                let r = C64::new(1.0, 0.0) / (C64::new(instance.a1[j], 0.0) - mu);
                for i in 0..m {
                    probe[(i, j)] += k[(i, j)] * r;
                }
            }
            Ok(probe)
        })?;
        Ok(QuadratureRule::from_panels(&path, outcome.panels, self.order))
    }
}

/// Trapezoidal dip: anchor, down to `x_lo + i l depth`, along the floor to
/// `x_hi + i l depth`, back up to the axis at `r_join`, then along the axis to `r_max`.
/// On a finite interval the dip rises to the upper anchor instead.
pub fn build_dip_contour(instance: &ProblemInstance, half_plane: HalfPlane, dip: &DipParams, order: usize) -> Result<Contour> {
    let j0 = instance.j0;
    if !(dip.depth > 0.0) || !dip.depth.is_finite() {
        return Err(Error::Geometry(format!(
            "dip depth must be positive (got {}); a contour on the axis is not a deformation",
            dip.depth
        )));
    }
    if dip.x_lo < j0.lower {
        return Err(Error::Geometry(format!(
            "dip start {} lies left of the anchored endpoint {}",
            dip.x_lo, j0.lower
        )));
    }
    if !(dip.x_hi > dip.x_lo) {
        return Err(Error::Geometry("dip span must satisfy x_lo < x_hi".into()));
    }
    let floor = |x: f64| C64::new(x, half_plane.sign() * dip.depth);
    let anchor = C64::new(j0.lower, 0.0);
    let mut vertices = vec![anchor, floor(dip.x_lo), floor(dip.x_hi)];
    match j0.upper {
        Some(upper) => {
            if dip.x_hi > upper {
                return Err(Error::Geometry("dip extends beyond the upper anchor".into()));
            }
            vertices.push(C64::new(upper, 0.0));
        }
        None => {
            if !(dip.r_join > dip.x_hi) {
                return Err(Error::Geometry("rejoin point must lie right of the dip".into()));
            }
            vertices.push(C64::new(dip.r_join, 0.0));
            if dip.r_max > dip.r_join {
                vertices.push(C64::new(dip.r_max, 0.0));
            } else if dip.r_max < dip.r_join {
                return Err(Error::Geometry("R_max must not precede the rejoin point".into()));
            }
        }
    }
    Contour::from_vertices(&j0, half_plane, vertices, order)
}

/// Truncated variation and its certified tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationReport {
    pub value: f64,
    pub tail_bound: f64,
}

/// `V0 = int |dmu| ||K'(mu)||` along the contour.
pub fn variation(instance: &ProblemInstance, contour: &Contour) -> Result<f64> {
    variation_report(instance, contour).map(|r| r.value)
}

pub fn variation_report(instance: &ProblemInstance, contour: &Contour) -> Result<VariationReport> {
    if instance.coupling.is_zero() {
        return Ok(VariationReport {
            value: 0.0,
            tail_bound: 0.0,
        });
    }
    let path = contour.path();
    let initial = path.uniform_panels(contour.max_panel);
    let opts = AdaptiveOptions {
        order: contour.order,
        rel_tol: VARIATION_REL_TOL,
        ..Default::default()
    };
    let outcome = integrate_adaptive(&path, &initial, &opts, Measure::ArcLength, &C64::new(0.0, 0.0), |mu| {
        let k = instance.kprime_matrix(mu)?;
        Ok(C64::new(op_norm(&k), 0.0))
    })?;
    let value = outcome.value.re;
    let tail_bound = match contour.r_max() {
        Some(r_max) => instance.tail_bound(r_max),
        None => 0.0,
    };
    if !(tail_bound <= TAIL_FRACTION * value) {
        return Err(Error::TailBoundFailure {
            r_max: contour.r_max().unwrap_or(f64::NAN),
            bound: tail_bound,
            total: value,
        });
    }
    Ok(VariationReport { value, tail_bound })
}

/// Data of the contraction argument for the fixed-point equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolvabilityCertificate {
    pub v0: f64,
    pub d0: f64,
    /// `d0^2 - 4 V0`
    pub omega: f64,
    /// Radius of the smallest certified ball; `None` when not admissible.
    pub r_min: Option<f64>,
    pub r_max: f64,
    pub admissible: bool,
}

impl SolvabilityCertificate {
    pub fn from_parts(v0: f64, d0: f64) -> Self {
        let omega = d0 * d0 - 4.0 * v0;
        let admissible = v0 < 0.25 * d0 * d0;
        // d0/2 - sqrt(d0^2/4 - V0), written without cancellation.
        let r_min = admissible.then(|| {
            let root = (0.25 * d0 * d0 - v0).sqrt();
            if v0 == 0.0 {
                0.0
            } else {
                v0 / (0.5 * d0 + root)
            }
        });
        Self {
            v0,
            d0,
            omega,
            r_min,
            r_max: d0 - v0.sqrt(),
            admissible,
        }
    }

    /// Contraction factor `r_min / (d0 - r_min)` of the fixed-point map on the ball.
    pub fn contraction_factor(&self) -> Option<f64> {
        self.r_min.map(|r| r / (self.d0 - r))
    }
}

pub fn check_solvability(instance: &ProblemInstance, contour: &Contour) -> Result<SolvabilityCertificate> {
    let v0 = variation(instance, contour)?;
    Ok(SolvabilityCertificate::from_parts(v0, contour.d0(instance)))
}

/// Rescales the coupling by `eps` so that the variation along `contour` equals `target`.
pub fn scale_to_variation(instance: &ProblemInstance, contour: &Contour, target: f64) -> Result<(ProblemInstance, f64)> {
    let v0 = variation(instance, contour)?;
    if !(v0 > 0.0) || !(target >= 0.0) {
        return Err(Error::InvalidInstance("cannot rescale a zero coupling to a positive variation".into()));
    }
    let eps = (target / v0).sqrt();
    Ok((instance.scaled(eps), eps))
}

/// Tolerance scale `1 + ||A1|| + V0`.
pub fn tolerance_scale(instance: &ProblemInstance, v0: f64) -> f64 {
    1.0 + instance.a1_norm() + v0
}
