//! Composite Gauss–Legendre quadrature along polylines in the complex plane.
//!
//! A [`Path`] is a list of straight [`Segment`]s, each parametrised by `s in [0, 1]`.
//! Segments touching an anchored endpoint may carry an [`EndpointMap`], which replaces the
//! linear parametrisation by a quadratic one so that square-root endpoint behaviour of the
//! integrand becomes smooth in `s`.
//!
//! Two integration modes share the same panels:
//! * [`integrate_adaptive`] bisects panels until the Gauss estimate on a panel agrees with
//!   the sum over its halves;
//! * [`QuadratureRule`] freezes a set of nodes and weights so that repeated integrals (the
//!   fixed-point map, factor evaluations on grids) are deterministic discrete sums.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndpointMap {
    None,
    /// `mu = a + (b - a) s^2`
    Start,
    /// `mu = a + (b - a) (1 - (1 - s)^2)`
    End,
    /// `mu = a + (b - a) (3 s^2 - 2 s^3)`
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: C64,
    pub b: C64,
    pub map: EndpointMap,
}

impl Segment {
    pub fn new(a: C64, b: C64, map: EndpointMap) -> Self {
        Self { a, b, map }
    }

    fn phi(&self, s: f64) -> f64 {
        match self.map {
            EndpointMap::None => s,
            EndpointMap::Start => s * s,
            EndpointMap::End => 1.0 - (1.0 - s) * (1.0 - s),
            EndpointMap::Both => s * s * (3.0 - 2.0 * s),
        }
    }

    fn dphi(&self, s: f64) -> f64 {
        match self.map {
            EndpointMap::None => 1.0,
            EndpointMap::Start => 2.0 * s,
            EndpointMap::End => 2.0 * (1.0 - s),
            EndpointMap::Both => 6.0 * s * (1.0 - s),
        }
    }

    fn max_dphi(&self) -> f64 {
        match self.map {
            EndpointMap::None => 1.0,
            EndpointMap::Start | EndpointMap::End => 2.0,
            EndpointMap::Both => 1.5,
        }
    }

    pub fn point(&self, s: f64) -> C64 {
        self.a + (self.b - self.a) * self.phi(s)
    }

    pub fn jacobian(&self, s: f64) -> C64 {
        (self.b - self.a) * self.dphi(s)
    }

    pub fn length(&self) -> f64 {
        (self.b - self.a).norm()
    }

    /// Arc length of the image of `[s0, s1]`.
    pub fn arc_length(&self, s0: f64, s1: f64) -> f64 {
        self.length() * (self.phi(s1) - self.phi(s0)).abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub segments: Vec<Segment>,
}

impl Path {
    /// Straight polyline through `vertices`; `closed` appends the edge back to the start.
    pub fn polyline(vertices: &[C64], closed: bool) -> Self {
        let mut segments: Vec<Segment> = vertices
            .windows(2)
            .map(|w| Segment::new(w[0], w[1], EndpointMap::None))
            .collect();
        if closed && vertices.len() > 2 {
            segments.push(Segment::new(
                vertices[vertices.len() - 1],
                vertices[0],
                EndpointMap::None,
            ));
        }
        Self { segments }
    }

    pub fn length(&self) -> f64 {
        self.segments.iter().map(|s| s.length()).sum()
    }

    pub fn distance_to(&self, z: C64) -> f64 {
        self.segments
            .iter()
            .map(|s| crate::linalg::point_segment_distance(z, s.a, s.b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Splits every segment into panels whose arc length does not exceed `cap(mu)` at the
    /// panel start.
    pub fn panels_with_cap(&self, cap: impl Fn(C64) -> f64) -> Vec<Panel> {
        let mut panels = Vec::new();
        for (k, seg) in self.segments.iter().enumerate() {
            let len = seg.length();
            if len == 0.0 {
                continue;
            }
            let mut s = 0.0;
            while s < 1.0 {
                let c = cap(seg.point(s)).max(1e-12 * len);
                let mut ds = c / (len * seg.max_dphi());
                if s + ds >= 1.0 - 1e-3 * ds {
                    ds = 1.0 - s;
                }
                panels.push(Panel {
                    segment: k,
                    s0: s,
                    s1: (s + ds).min(1.0),
                });
                s += ds;
            }
        }
        panels
    }

    pub fn uniform_panels(&self, max_len: f64) -> Vec<Panel> {
        self.panels_with_cap(|_| max_len)
    }

    pub fn panel_arc_length(&self, p: &Panel) -> f64 {
        self.segments[p.segment].arc_length(p.s0, p.s1)
    }

    pub fn panel_distance(&self, p: &Panel, z: C64) -> f64 {
        let seg = &self.segments[p.segment];
        crate::linalg::point_segment_distance(z, seg.point(p.s0), seg.point(p.s1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Panel {
    pub segment: usize,
    pub s0: f64,
    pub s1: f64,
}

impl Panel {
    fn halves(&self) -> (Panel, Panel) {
        let mid = 0.5 * (self.s0 + self.s1);
        (
            Panel {
                s1: mid,
                ..*self
            },
            Panel {
                s0: mid,
                ..*self
            },
        )
    }
}

/// Whether `dmu` or the arc-length element `|dmu|` is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    Complex,
    ArcLength,
}

/// Values that can be accumulated by the quadrature engine.
pub trait QuadValue: Clone {
    fn zeros_like(&self) -> Self;
    fn add_scaled(&mut self, w: C64, x: &Self);
    fn norm(&self) -> f64;
    fn is_finite(&self) -> bool;
    fn distance(&self, other: &Self) -> f64;
}

impl QuadValue for C64 {
    fn zeros_like(&self) -> Self {
        C64::new(0.0, 0.0)
    }
    fn add_scaled(&mut self, w: C64, x: &Self) {
        *self += w * x;
    }
    fn norm(&self) -> f64 {
        C64::norm(*self)
    }
    fn is_finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
    fn distance(&self, other: &Self) -> f64 {
        (self - other).norm()
    }
}

impl QuadValue for CMat {
    fn zeros_like(&self) -> Self {
        CMat::zeros(self.nrows(), self.ncols())
    }
    fn add_scaled(&mut self, w: C64, x: &Self) {
        self.zip_apply(x, |a, b| *a += w * b);
    }
    fn norm(&self) -> f64 {
        CMat::norm(self)
    }
    fn is_finite(&self) -> bool {
        crate::linalg::is_finite(self)
    }
    fn distance(&self, other: &Self) -> f64 {
        (self - other).norm()
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(order: usize) -> Self {
        let order = NonZeroUsize::new(order.max(1)).expect("order >= 1");
        let rule = GaussLegendre::new(order);
        let (nodes, weights) = rule.as_node_weight_pairs().iter().cloned().unzip();
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Nodes and complex weights of this rule mapped onto panel `p` of `path`.
    fn panel_nodes(&self, path: &Path, p: &Panel, measure: Measure) -> impl Iterator<Item = (C64, C64)> + '_ {
        let seg = path.segments[p.segment];
        let half = 0.5 * (p.s1 - p.s0);
        let mid = 0.5 * (p.s1 + p.s0);
        self.nodes.iter().zip(self.weights.iter()).map(move |(&x, &w)| {
            let s = mid + half * x;
            let jac = seg.jacobian(s);
            let weight = match measure {
                Measure::Complex => jac * (w * half),
                Measure::ArcLength => C64::new(jac.norm() * w * half, 0.0),
            };
            (seg.point(s), weight)
        })
    }

    fn panel_sum<T: QuadValue, F>(&self, path: &Path, p: &Panel, measure: Measure, f: &F, like: &T) -> Result<T>
    where
        F: Fn(C64) -> Result<T>,
    {
        let mut acc = like.zeros_like();
        for (mu, w) in self.panel_nodes(path, p, measure) {
            let v = f(mu)?;
            if !v.is_finite() {
                return Err(Error::NonFiniteIntegrand { mu });
            }
            acc.add_scaled(w, &v);
        }
        Ok(acc)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdaptiveOptions {
    pub order: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_depth: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self {
            order: 20,
            rel_tol: 1e-12,
            abs_tol: 1e-300,
            max_depth: 40,
        }
    }
}

/// Result of an adaptive integration, including the accepted panels.
#[derive(Debug, Clone)]
pub struct AdaptiveOutcome<T> {
    pub value: T,
    pub panels: Vec<Panel>,
    /// Number of panels accepted only because the depth limit was hit.
    pub unconverged: usize,
}

/// Adaptive composite Gauss–Legendre integration over `path`, starting from `initial`.
///
/// A panel is accepted when the `order`-point estimate and the sum over its two halves
/// differ by at most `max(rel_tol * |I|, abs_tol)` times the panel's share of the total
/// arc length; the finer estimate is kept. Summation order is fixed by the panel order,
/// so the result is deterministic.
pub fn integrate_adaptive<T, F>(
    path: &Path,
    initial: &[Panel],
    opts: &AdaptiveOptions,
    measure: Measure,
    like: &T,
    f: F,
) -> Result<AdaptiveOutcome<T>>
where
    T: QuadValue,
    F: Fn(C64) -> Result<T>,
{
    let gauss = GaussRule::new(opts.order);
    let coarse: Vec<T> = initial
        .iter()
        .map(|p| gauss.panel_sum(path, p, measure, &f, like))
        .collect::<Result<_>>()?;
    let mut total0 = like.zeros_like();
    for c in &coarse {
        total0.add_scaled(C64::new(1.0, 0.0), c);
    }
    let total_len: f64 = initial.iter().map(|p| path.panel_arc_length(p)).sum();
    let budget = (opts.rel_tol * total0.norm()).max(opts.abs_tol);

    let mut value = like.zeros_like();
    let mut panels = Vec::with_capacity(initial.len());
    let mut unconverged = 0usize;
    // Explicit stack keeps the accepted panels in path order.
    for (p, est) in initial.iter().zip(coarse) {
        let mut stack = vec![(*p, est, 0usize)];
        while let Some((panel, est, depth)) = stack.pop() {
            let (left, right) = panel.halves();
            let l = gauss.panel_sum(path, &left, measure, &f, like)?;
            let r = gauss.panel_sum(path, &right, measure, &f, like)?;
            let mut fine = l.clone();
            fine.add_scaled(C64::new(1.0, 0.0), &r);
            let share = if total_len > 0.0 {
                (path.panel_arc_length(&panel) / total_len).max(1e-6)
            } else {
                1.0
            };
            let err = fine.distance(&est);
            if err <= budget * share || depth >= opts.max_depth {
                if err > budget * share {
                    unconverged += 1;
                }
                value.add_scaled(C64::new(1.0, 0.0), &fine);
                panels.push(left);
                panels.push(right);
            } else {
                stack.push((right, r, depth + 1));
                stack.push((left, l, depth + 1));
            }
        }
    }
    Ok(AdaptiveOutcome {
        value,
        panels,
        unconverged,
    })
}

/// Frozen nodes and weights along a path.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: Vec<C64>,
    pub weights: Vec<C64>,
    pub panels: Vec<Panel>,
    pub order: usize,
}

impl QuadratureRule {
    pub fn from_panels(path: &Path, panels: Vec<Panel>, order: usize) -> Self {
        let gauss = GaussRule::new(order);
        let mut nodes = Vec::with_capacity(panels.len() * order);
        let mut weights = Vec::with_capacity(panels.len() * order);
        for p in &panels {
            for (mu, w) in gauss.panel_nodes(path, p, Measure::Complex) {
                nodes.push(mu);
                weights.push(w);
            }
        }
        Self {
            nodes,
            weights,
            panels,
            order,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `sum_j w_j f(mu_j)`, summed in node order.
    pub fn integrate<T, F>(&self, like: &T, f: F) -> Result<T>
    where
        T: QuadValue,
        F: Fn(C64) -> Result<T>,
    {
        let mut acc = like.zeros_like();
        for (&mu, &w) in self.nodes.iter().zip(self.weights.iter()) {
            let v = f(mu)?;
            if !v.is_finite() {
                return Err(Error::NonFiniteIntegrand { mu });
            }
            acc.add_scaled(w, &v);
        }
        Ok(acc)
    }

    /// Complex conjugate rule (mirror image in the real axis).
    pub fn conjugate(&self) -> Self {
        Self {
            nodes: self.nodes.iter().map(|z| z.conj()).collect(),
            weights: self.weights.iter().map(|z| z.conj()).collect(),
            panels: self.panels.clone(),
            order: self.order,
        }
    }
}

/// Trapezoidal nodes `z_k` and weights `dz_k` on a positively oriented circle.
pub fn circle_nodes(center: C64, radius: f64, n: usize) -> Vec<(C64, C64)> {
    (0..n)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * (k as f64) / (n as f64);
            let e = C64::from_polar(1.0, theta);
            let z = center + e * radius;
            let dz = C64::new(0.0, 1.0) * e * radius * (2.0 * std::f64::consts::PI / n as f64);
            (z, dz)
        })
        .collect()
}

/// Generic adaptive integration of a matrix-valued function along a path, starting from
/// panels of length at most `max_panel`.
pub fn integrate_matrix<F>(path: &Path, m: usize, max_panel: f64, opts: &AdaptiveOptions, f: F) -> Result<CMat>
where
    F: Fn(C64) -> Result<CMat>,
{
    let panels = path.uniform_panels(max_panel);
    let like = CMat::zeros(m, m);
    Ok(integrate_adaptive(path, &panels, opts, Measure::Complex, &like, f)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn cauchy_integral_on_rectangle() {
        let rect = [c(0.0, -1.0), c(3.0, -1.0), c(3.0, 1.0), c(0.0, 1.0)];
        let path = Path::polyline(&rect, true);
        let center = c(1.2, 0.3);
        let m = 3;
        let v = integrate_matrix(&path, m, 0.5, &AdaptiveOptions::default(), |z| {
            Ok(CMat::identity(m, m) / (z - center))
        })
        .unwrap();
        let expected = CMat::identity(m, m) * c(0.0, 2.0 * std::f64::consts::PI);
        assert!((v - expected).norm() < 1e-10);
    }

    #[test]
    fn zero_integrand() {
        let path = Path::polyline(&[c(0.0, 0.0), c(1.0, -1.0), c(2.0, 0.0)], false);
        let v = integrate_matrix(&path, 2, 0.3, &AdaptiveOptions::default(), |_| Ok(CMat::zeros(2, 2))).unwrap();
        assert_eq!(v, CMat::zeros(2, 2));
    }

    #[test]
    fn endpoint_map_restores_accuracy() {
        // int_0^1 x^{-1/2} dx = 2 with the singular endpoint mapped away.
        let path = Path {
            segments: vec![Segment::new(c(0.0, 0.0), c(1.0, 0.0), EndpointMap::Start)],
        };
        let gauss = GaussRule::new(10);
        let p = Panel { segment: 0, s0: 0.0, s1: 1.0 };
        let v = gauss
            .panel_sum(&path, &p, Measure::Complex, &|z: C64| Ok(z.sqrt().inv()), &c(0.0, 0.0))
            .unwrap();
        assert!((v - c(2.0, 0.0)).norm() < 1e-13);
        let both = Path {
            segments: vec![Segment::new(c(0.0, 0.0), c(1.0, 0.0), EndpointMap::Both)],
        };
        let v = gauss
            .panel_sum(&both, &p, Measure::Complex, &|z: C64| Ok((z * (c(1.0, 0.0) - z)).sqrt()), &c(0.0, 0.0))
            .unwrap();
        assert!((v.re - std::f64::consts::PI / 8.0).abs() < 1e-6);
    }

    #[test]
    fn arc_length_measure() {
        let path = Path::polyline(&[c(0.0, 0.0), c(0.0, -2.0), c(3.0, -2.0)], false);
        let out = integrate_adaptive(
            &path,
            &path.uniform_panels(0.7),
            &AdaptiveOptions::default(),
            Measure::ArcLength,
            &c(0.0, 0.0),
            |_| Ok(c(1.0, 0.0)),
        )
        .unwrap();
        assert!((out.value.re - 5.0).abs() < 1e-13);
    }

    #[test]
    fn non_finite_integrand_is_reported() {
        let path = Path::polyline(&[c(-1.0, 0.0), c(1.0, 0.0)], false);
        let gauss_pole = c(0.0, 0.0);
        // An odd-order rule hits the pole at the midpoint.
        let opts = AdaptiveOptions {
            order: 5,
            ..Default::default()
        };
        let r = integrate_matrix(&path, 1, 2.0, &opts, |z| Ok(CMat::from_element(1, 1, (z - gauss_pole).inv())));
        assert!(matches!(r, Err(Error::NonFiniteIntegrand { .. })));
    }
}
