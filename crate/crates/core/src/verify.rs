//! Named invariant checks for one instance and contour.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contour::{Contour, HalfPlane};
use crate::error::{Error, Result};
use crate::linalg::{identity, op_norm, sigma_min, CMat, CVec};
use crate::model::ProblemInstance;
use crate::rootsolve::{RootSolution, SolverOptions};
use crate::spectral::{
    basis_family_report, build_projection_family, completeness_report, eigendecompose, omega_operator, sigma_min_landscape,
};
use crate::transfer::{m1_physical, Continuation};
use crate::C64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyOptions {
    pub probes: usize,
    /// Additional continuation probes, checked like the generated ones.
    pub extra_probes: Vec<C64>,
    pub factor_grid: usize,
    pub landscape_grid: usize,
    /// Cluster radius of the projection family; chosen automatically when absent.
    pub projection_radius: Option<f64>,
    pub i0: usize,
    pub omega: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            probes: 20,
            extra_probes: Vec::new(),
            factor_grid: 5,
            landscape_grid: 50,
            projection_radius: None,
            i0: 1,
            omega: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    #[serde(with = "nullable_f64")]
    pub defect: f64,
    #[serde(with = "nullable_f64")]
    pub tolerance: f64,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// Non-finite values are written as `null` and read back as NaN.
mod nullable_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

impl CheckResult {
    fn le(name: &str, defect: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            defect,
            tolerance,
            passed: defect <= tolerance,
            detail: None,
        }
    }

    fn failed(name: &str, err: &Error) -> Self {
        Self {
            name: name.into(),
            defect: f64::NAN,
            tolerance: f64::NAN,
            passed: false,
            detail: Some(err.to_string()),
        }
    }

    fn with_detail(mut self, detail: String) -> Self {
        self.detail = Some(detail);
        self
    }
}

#[derive(Debug, Clone)]
pub struct Verification {
    pub checks: Vec<CheckResult>,
    pub root: Option<RootSolution>,
}

impl Verification {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Up to `count` points inside the region swept by the contour, at least a safeguard
/// away from it.
pub fn swept_probes(cont: &Continuation, count: usize) -> Vec<C64> {
    let v = &cont.contour.vertices;
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for z in v {
        x0 = x0.min(z.re);
        x1 = x1.max(z.re);
        y0 = y0.min(z.im);
        y1 = y1.max(z.im);
    }
    // stay inside the truncated part near the spectrum
    let x1 = x1.min(cont.instance.a1.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 2.0 * cont.d0());
    let n = 24;
    let mut candidates = Vec::new();
    for iy in 1..n {
        for ix in 1..n {
            let z = C64::new(x0 + (x1 - x0) * ix as f64 / n as f64, y0 + (y1 - y0) * iy as f64 / n as f64);
            if cont.contour.encloses(z) && cont.contour.distance_to(z) > 4.0 * cont.safeguard(z) + 1e-3 {
                candidates.push(z);
            }
        }
    }
    if candidates.len() <= count {
        return candidates;
    }
    let stride = candidates.len() as f64 / count as f64;
    (0..count).map(|k| candidates[(k as f64 * stride) as usize]).collect()
}

fn residue_check(cont: &Continuation, probes: &[C64]) -> CheckResult {
    let name = "continuation_residue";
    let r_max = cont.instance.j0.upper.or(cont.contour.r_max()).unwrap_or(f64::INFINITY);
    let jump = C64::new(0.0, 2.0 * std::f64::consts::PI * cont.half_plane().sign());
    let values = probes
        .par_iter()
        .map(|&z| -> Result<f64> {
            let continued = cont.m1(z)?.m1;
            let physical = m1_physical(cont.instance, z, r_max)?.m1;
            let expected = if cont.contour.encloses(z) {
                cont.instance.kprime_matrix(z)? * jump
            } else {
                CMat::zeros(cont.dim(), cont.dim())
            };
            Ok(op_norm(&(continued - physical - expected)))
        })
        .collect::<Result<Vec<f64>>>();
    let worst = match values {
        Ok(v) => v.into_iter().fold(0.0, f64::max),
        Err(e) => return CheckResult::failed(name, &e),
    };
    CheckResult::le(name, worst, 1e-8 * cont.scale).with_detail(format!("{} probes", probes.len()))
}

fn factor_grid(cont: &Continuation, n: usize) -> Vec<C64> {
    let half_side = 0.5 * cont.d0() / std::f64::consts::SQRT_2 * (1.0 - 1e-9);
    let mut centers = cont.instance.a1.clone();
    centers.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    centers.dedup();
    let mut out = Vec::new();
    for c in centers {
        for iy in 0..n {
            for ix in 0..n {
                let t = |i: usize| if n == 1 { 0.0 } else { -1.0 + 2.0 * i as f64 / (n - 1) as f64 };
                out.push(C64::new(c + half_side * t(ix), half_side * t(iy)));
            }
        }
    }
    out
}

/// Runs every invariant check on the given contour.
pub fn run_verification(instance: &ProblemInstance, contour: &Contour, solver: &SolverOptions, opts: &VerifyOptions) -> Verification {
    let mut checks = Vec::new();
    let cont = match Continuation::new(instance, contour) {
        Ok(c) => c,
        Err(e) => {
            checks.push(CheckResult::failed("continuation_setup", &e));
            return Verification { checks, root: None };
        }
    };
    let scale = cont.scale;
    let cert = cont.certificate;
    checks.push(CheckResult {
        name: "admissible".into(),
        defect: cert.v0,
        tolerance: 0.25 * cert.d0 * cert.d0,
        passed: cert.admissible,
        detail: None,
    });

    let mut probes = swept_probes(&cont, opts.probes);
    probes.extend(opts.extra_probes.iter().copied());
    checks.push(residue_check(&cont, &probes));

    let root = match cont.solve(solver) {
        Ok(r) => r,
        Err(e) => {
            checks.push(CheckResult::failed("fixed_point", &e));
            return Verification { checks, root: None };
        }
    };
    let r_min = cert.r_min.unwrap_or(f64::NAN);
    let x_norm = op_norm(&root.x);
    checks.push(CheckResult::le("solution_in_smallest_ball", x_norm - r_min, 1e-9 * scale));
    checks.push(CheckResult::le("fixed_point_residual", root.final_residual, 1e-10 * scale));
    let q = cert.contraction_factor().unwrap_or(f64::NAN);
    checks.push(CheckResult::le(
        "contraction_ratio",
        root.max_contraction_ratio().unwrap_or(0.0),
        q + 0.05,
    ));

    let eig = match eigendecompose(&root.h1) {
        Ok(e) => e,
        Err(e) => {
            checks.push(CheckResult::failed("eigendecomposition", &e));
            return Verification { checks, root: Some(root) };
        }
    };
    checks.push(CheckResult::le("root_vector_chains", eig.max_residual(), 1e-8 * scale));

    // eigenpairs of H1 are zeros of the continued transfer function
    let pairs: Vec<(C64, CVec)> = eig
        .blocks
        .iter()
        .flat_map(|b| b.chains.iter().map(move |ch| (b.value, &ch[0] / C64::new(ch[0].norm(), 0.0))))
        .collect();
    let transport = pairs
        .par_iter()
        .map(|(z, u)| Ok((cont.m1_refined(*z)? * u).norm()))
        .collect::<Result<Vec<f64>>>();
    checks.push(match transport {
        Ok(v) => CheckResult::le("eigenpair_transport", v.into_iter().fold(0.0, f64::max), 1e-8 * scale),
        Err(e) => CheckResult::failed("eigenpair_transport", &e),
    });

    let values = eig.eigenvalues();
    let localization = values
        .iter()
        .map(|&z| cont.distance_to_a1(z) - r_min)
        .fold(f64::NEG_INFINITY, f64::max);
    checks.push(CheckResult::le("localization", localization, 1e-8));

    let half_plane_excess = values
        .iter()
        .map(|z| match cont.half_plane() {
            HalfPlane::Lower => z.im,
            HalfPlane::Upper => -z.im,
        })
        .fold(f64::NEG_INFINITY, f64::max);
    checks.push(CheckResult::le("resonance_half_plane", half_plane_excess, 1e-8 * scale));

    // factorization
    match cont.factor_kernel(&root.h1) {
        Ok(kernel) => {
            let grid = factor_grid(&cont, opts.factor_grid);
            let rows = grid
                .par_iter()
                .map(|&z| -> Result<(f64, f64)> {
                    let f = cont.factor_eval(&kernel, z);
                    let rhs = &f.w1 * (&root.h1 - identity(cont.dim()) * z);
                    Ok((op_norm(&(cont.m1_refined(z)? - rhs)), sigma_min(&f.w1)))
                })
                .collect::<Result<Vec<(f64, f64)>>>();
            match rows {
                Err(e) => checks.push(CheckResult::failed("factorization", &e)),
                Ok(rows) => {
                    let defect = rows.iter().map(|r| r.0).fold(0.0, f64::max);
                    let w_min = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
                    checks.push(CheckResult::le("factorization", defect, 1e-8 * scale));
                    checks.push(CheckResult {
                        name: "factor_invertible".into(),
                        defect: w_min,
                        tolerance: 1e-3,
                        passed: w_min >= 1e-3,
                        detail: None,
                    });
                }
            }
        }
        Err(e) => checks.push(CheckResult::failed("factorization", &e)),
    }

    if opts.landscape_grid > 0 {
        let land = sigma_min_landscape(&cont, opts.landscape_grid);
        let spurious = land.spurious_minima(1e-5 * scale, &values, 2.0);
        let mut c = CheckResult::le("sigma_min_landscape", spurious.len() as f64, 0.0);
        if let Some((z, v)) = spurious.first() {
            c = c.with_detail(format!("spurious minimum {v:e} at {z}"));
        }
        checks.push(c);
    }

    if opts.omega {
        let mirror = contour.mirror();
        match Continuation::new(instance, &mirror).and_then(|m| m.solve(solver)) {
            Ok(other) => {
                let (plus, minus) = match root.l {
                    HalfPlane::Lower => (&other, &root),
                    HalfPlane::Upper => (&root, &other),
                };
                match omega_operator(instance, contour, plus, minus) {
                    Ok(om) => {
                        let s = om.scale;
                        checks.push(CheckResult::le("omega_norm", om.norm, 1.0 - f64::EPSILON));
                        checks.push(CheckResult::le("omega_adjoint", om.adjoint_defect, 1e-8 * s));
                        checks.push(CheckResult::le("moment0", om.moment0_defect, 1e-6 * s));
                        checks.push(CheckResult::le("moment1", om.moment1_defect, 1e-6 * s));
                        checks.push(CheckResult::le("spectrum_conjugation", om.conjugation_defect, 1e-7));
                    }
                    Err(e) => checks.push(CheckResult::failed("omega", &e)),
                }
            }
            Err(e) => checks.push(CheckResult::failed("mirror_root", &e)),
        }
    }

    let completeness = completeness_report(&eig);
    checks.push(
        CheckResult::le("completeness", (completeness.dim - completeness.rank) as f64, 0.0)
            .with_detail(format!("condition number {:e}", completeness.condition_number)),
    );

    let radius = opts.projection_radius.unwrap_or_else(|| default_projection_radius(instance, x_norm, cert.d0));
    match build_projection_family(instance, &root, radius, opts.i0) {
        Ok(fam) => {
            let rep = basis_family_report(&fam);
            checks.push(CheckResult::le(
                "projection_algebra",
                rep.idempotency_defect.max(rep.orthogonality_defect),
                1e-9,
            ));
            checks.push(CheckResult::le("projection_sum", rep.full_sum_defect, 1e-9));
            checks.push(
                CheckResult::le("direct_sum_rank", (rep.dim - rep.direct_sum_rank) as f64, 0.0)
                    .with_detail(format!("C_max {:e} over {} subsets", rep.c_max, rep.subsets_evaluated)),
            );
            let ranks_ok = fam.ranks == fam.enclosed;
            checks.push(CheckResult {
                name: "projection_ranks".into(),
                defect: if ranks_ok { 0.0 } else { 1.0 },
                tolerance: 0.0,
                passed: ranks_ok,
                detail: None,
            });
        }
        Err(e) => checks.push(CheckResult::failed("projection_family", &e)),
    }

    Verification { checks, root: Some(root) }
}

/// Midpoint between `||X||` and half the smallest gap of `sigma(A1)`.
pub fn default_projection_radius(instance: &ProblemInstance, x_norm: f64, d0: f64) -> f64 {
    let mut a = instance.a1.clone();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    a.dedup();
    let half_gap = a.windows(2).map(|w| 0.5 * (w[1] - w[0])).fold(f64::INFINITY, f64::min);
    let upper = if half_gap.is_finite() { half_gap } else { x_norm + 0.5 * d0 };
    0.5 * (x_norm + upper)
}
