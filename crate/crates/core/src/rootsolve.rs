//! Fixed-point solution of `X = V1(A1 + X, Gamma)` and the `r0` contour-family search.

use serde::{Deserialize, Serialize};

use crate::contour::{build_dip_contour, check_solvability, Contour, DipParams, HalfPlane, SolvabilityCertificate};
use crate::error::{Error, Result};
use crate::linalg::{diag_real, op_norm, CMat};
use crate::model::ProblemInstance;
use crate::transfer::Continuation;

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RootSolution {
    pub l: HalfPlane,
    pub x: CMat,
    /// `diag(A1) + x`
    pub h1: CMat,
    pub iterations: usize,
    pub final_residual: f64,
    pub certificate: SolvabilityCertificate,
    pub contour_used: Contour,
    pub scale: f64,
    /// `||X_{k+1} - X_k||` for every iteration.
    pub step_norms: Vec<f64>,
}

impl RootSolution {
    /// Ratios of successive step norms (skipping steps already at round-off level).
    pub fn contraction_ratios(&self) -> Vec<f64> {
        let floor = 1e-13 * self.scale;
        self.step_norms
            .windows(2)
            .filter(|w| w[0] > floor && w[1] > floor)
            .map(|w| w[1] / w[0])
            .collect()
    }

    pub fn max_contraction_ratio(&self) -> Option<f64> {
        self.contraction_ratios().into_iter().reduce(f64::max)
    }
}

impl Continuation<'_> {
    /// Contraction iteration from `X0 = 0` on the frozen contour rule.
    pub fn solve(&self, opts: &SolverOptions) -> Result<RootSolution> {
        let cert = self.certificate;
        if !cert.admissible {
            return Err(Error::NotAdmissible {
                v0: cert.v0,
                bound: 0.25 * cert.d0 * cert.d0,
            });
        }
        let a1 = self.a1_matrix();
        let m = self.dim();
        let mut x = CMat::zeros(m, m);
        let mut step_norms = Vec::new();
        let mut converged = false;
        for _ in 0..opts.max_iter {
            let next = self.v1_operator_unchecked(&(&a1 + &x))?;
            let step = op_norm(&(&next - &x));
            x = next;
            step_norms.push(step);
            if step <= opts.tol * self.scale {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::MaxIterExceeded {
                iterations: opts.max_iter,
                last_step: step_norms.last().copied().unwrap_or(f64::NAN),
            });
        }
        let h1 = &a1 + &x;
        let final_residual = op_norm(&(&x - self.v1_operator_unchecked(&h1)?));
        Ok(RootSolution {
            l: self.half_plane(),
            iterations: step_norms.len(),
            x,
            h1,
            final_residual,
            certificate: cert,
            contour_used: self.contour.clone(),
            scale: self.scale,
            step_norms,
        })
    }
}

pub fn solve_fixed_point(instance: &ProblemInstance, contour: &Contour, tol: f64, max_iter: usize) -> Result<RootSolution> {
    Continuation::new(instance, contour)?.solve(&SolverOptions { tol, max_iter })
}

#[derive(Debug, Clone)]
pub struct IndependenceReport {
    pub difference: f64,
    pub scale: f64,
    pub tol: f64,
    pub certificate_a: SolvabilityCertificate,
    pub certificate_b: SolvabilityCertificate,
    pub passed: bool,
    pub solution_a: RootSolution,
    pub solution_b: RootSolution,
}

/// Solves on two admissible contours in the same half-plane and compares the roots.
pub fn contour_independence_check(
    instance: &ProblemInstance,
    l: HalfPlane,
    contour_a: &Contour,
    contour_b: &Contour,
    tol: f64,
) -> Result<IndependenceReport> {
    for c in [contour_a, contour_b] {
        if c.half_plane != l {
            return Err(Error::Geometry("both contours must lie in the requested half-plane".into()));
        }
    }
    let opts = SolverOptions::default();
    let (sa, sb) = rayon::join(
        || Continuation::new(instance, contour_a)?.solve(&opts),
        || Continuation::new(instance, contour_b)?.solve(&opts),
    );
    let (sa, sb) = (sa?, sb?);
    let scale = sa.scale.max(sb.scale);
    let difference = op_norm(&(&sa.x - &sb.x));
    Ok(IndependenceReport {
        difference,
        scale,
        tol,
        certificate_a: sa.certificate,
        certificate_b: sb.certificate,
        passed: difference <= tol * scale,
        solution_a: sa,
        solution_b: sb,
    })
}

/// Dip-parameter grid searched by [`estimate_r0`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DipFamily {
    pub depths: Vec<f64>,
    /// `(x_lo, x_hi)` pairs.
    pub spans: Vec<(f64, f64)>,
    pub r_joins: Vec<f64>,
    pub r_max: f64,
    pub order: usize,
}

#[derive(Debug, Clone)]
pub struct RZeroEstimate {
    /// Smallest `r_min` found; an upper bound for the infimum over all contours.
    pub r0: f64,
    pub argmin: DipParams,
    pub argmin_contour: Contour,
    pub family_grid: DipFamily,
    pub evaluated: usize,
}

const GOLDEN_ITERATIONS: usize = 30;

fn r_min_of(instance: &ProblemInstance, l: HalfPlane, dip: &DipParams, order: usize) -> Option<(f64, Contour)> {
    let contour = build_dip_contour(instance, l, dip, order).ok()?;
    let cert = check_solvability(instance, &contour).ok()?;
    cert.r_min.map(|r| (r, contour))
}

/// Grid search over the dip family followed by golden-section refinement in the depth.
pub fn estimate_r0(instance: &ProblemInstance, l: HalfPlane, family: &DipFamily) -> Result<RZeroEstimate> {
    let mut best: Option<(f64, DipParams, Contour)> = None;
    let mut evaluated = 0usize;
    let mut consider = |dip: DipParams, best: &mut Option<(f64, DipParams, Contour)>| -> f64 {
        evaluated += 1;
        match r_min_of(instance, l, &dip, family.order) {
            Some((r, contour)) => {
                if best.as_ref().is_none_or(|b| r < b.0) {
                    *best = Some((r, dip, contour));
                }
                r
            }
            None => f64::INFINITY,
        }
    };
    let depth_lo = family.depths.iter().copied().fold(f64::INFINITY, f64::min);
    let depth_hi = family.depths.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for &(x_lo, x_hi) in &family.spans {
        for &r_join in &family.r_joins {
            let dip = |depth: f64| DipParams {
                depth,
                x_lo,
                x_hi,
                r_join,
                r_max: family.r_max,
            };
            let mut best_val = f64::INFINITY;
            for &d in &family.depths {
                best_val = best_val.min(consider(dip(d), &mut best));
            }
            if !best_val.is_finite() || !(depth_hi > depth_lo) {
                continue;
            }
            let phi = 0.5 * (5f64.sqrt() - 1.0);
            let (mut a, mut b) = (depth_lo, depth_hi);
            let mut c = b - phi * (b - a);
            let mut d = a + phi * (b - a);
            let mut fc = consider(dip(c), &mut best);
            let mut fd = consider(dip(d), &mut best);
            for _ in 0..GOLDEN_ITERATIONS {
                if fc <= fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - phi * (b - a);
                    fc = consider(dip(c), &mut best);
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + phi * (b - a);
                    fd = consider(dip(d), &mut best);
                }
            }
        }
    }
    let (r0, argmin, argmin_contour) = best.ok_or(Error::NoAdmissibleContour)?;
    Ok(RZeroEstimate {
        r0,
        argmin,
        argmin_contour,
        family_grid: family.clone(),
        evaluated,
    })
}

/// `diag(A1)` convenience for callers holding only the instance.
pub fn a1_matrix(instance: &ProblemInstance) -> CMat {
    diag_real(&instance.a1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eigenvalues;
    use crate::model::{Coupling, RadialTerm, SpaceDim, SpectralInterval};
    use crate::C64;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn instance(a1: Vec<f64>, v: Vec<f64>) -> ProblemInstance {
        ProblemInstance::new(
            a1,
            SpectralInterval::half_line(0.0),
            Coupling::SchrodingerRadial {
                dim: SpaceDim::Three,
                terms: vec![RadialTerm {
                    v: v.into_iter().map(c).collect(),
                    alpha: 0.5,
                }],
            },
        )
        .unwrap()
    }

    fn dip(depth: f64) -> DipParams {
        DipParams {
            depth,
            x_lo: 0.0,
            x_hi: 4.0,
            r_join: 6.0,
            r_max: 45.0,
        }
    }

    #[test]
    fn zero_coupling_is_one_iteration() {
        let inst = instance(vec![1.0, 2.0], vec![0.0, 0.0]);
        let contour = build_dip_contour(&inst, HalfPlane::Lower, &dip(1.0), 20).unwrap();
        let sol = solve_fixed_point(&inst, &contour, 1e-12, 200).unwrap();
        assert_eq!(sol.iterations, 1);
        assert_eq!(op_norm(&sol.x), 0.0);
    }

    #[test]
    fn weak_coupling_solution_properties() {
        let inst = instance(vec![1.0, 2.0], vec![0.1, 0.06]);
        let contour = build_dip_contour(&inst, HalfPlane::Lower, &dip(1.0), 20).unwrap();
        let cont = Continuation::new(&inst, &contour).unwrap();
        let sol = cont.solve(&SolverOptions::default()).unwrap();
        let r_min = sol.certificate.r_min.unwrap();
        assert!(op_norm(&sol.x) <= r_min + 1e-9 * sol.scale);
        assert!(sol.final_residual <= 1e-10 * sol.scale);
        for z in eigenvalues(&sol.h1).unwrap() {
            assert!(z.im <= 1e-8 * sol.scale);
            let near = inst.a1.iter().map(|&l| (z - c(l)).norm()).fold(f64::INFINITY, f64::min);
            assert!(near <= r_min + 1e-8);
            let det = cont.m1(z).unwrap().m1.determinant().norm();
            assert!(det <= 1e-8 * sol.scale);
        }
    }

    #[test]
    fn inadmissible_contour_is_rejected() {
        let inst = instance(vec![1.0, 2.0], vec![3.0, 3.0]);
        let contour = build_dip_contour(&inst, HalfPlane::Lower, &dip(1.0), 20).unwrap();
        assert!(matches!(
            solve_fixed_point(&inst, &contour, 1e-12, 200),
            Err(Error::NotAdmissible { .. })
        ));
    }

    #[test]
    fn identical_contours_agree_exactly() {
        let inst = instance(vec![1.0, 2.0], vec![0.1, 0.06]);
        let contour = build_dip_contour(&inst, HalfPlane::Lower, &dip(1.0), 20).unwrap();
        let rep = contour_independence_check(&inst, HalfPlane::Lower, &contour, &contour, 1e-8).unwrap();
        assert_eq!(rep.difference, 0.0);
        assert!(rep.passed);
    }

    #[test]
    fn r0_zero_coupling_and_mirror_symmetry() {
        let family = DipFamily {
            depths: vec![0.6, 1.0, 1.4],
            spans: vec![(0.0, 4.0)],
            r_joins: vec![6.0],
            r_max: 45.0,
            order: 20,
        };
        let zero = instance(vec![1.0, 2.0], vec![0.0, 0.0]);
        assert_eq!(estimate_r0(&zero, HalfPlane::Lower, &family).unwrap().r0, 0.0);

        let inst = instance(vec![1.0, 2.0], vec![0.1, 0.06]);
        let lo = estimate_r0(&inst, HalfPlane::Lower, &family).unwrap();
        let up = estimate_r0(&inst, HalfPlane::Upper, &family).unwrap();
        assert!((lo.r0 - up.r0).abs() <= 1e-8);
        let single = r_min_of(&inst, HalfPlane::Lower, &dip(1.0), 20).unwrap().0;
        assert!(lo.r0 <= single);
    }

    #[test]
    fn r0_without_admissible_contour() {
        let inst = instance(vec![1.0, 2.0], vec![3.0, 3.0]);
        let family = DipFamily {
            depths: vec![1.0],
            spans: vec![(0.0, 4.0)],
            r_joins: vec![6.0],
            r_max: 45.0,
            order: 20,
        };
        assert!(matches!(
            estimate_r0(&inst, HalfPlane::Lower, &family),
            Err(Error::NoAdmissibleContour)
        ));
    }
}
