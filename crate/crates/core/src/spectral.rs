//! Eigenstructure of the operator roots, Riesz projections, the coupling operator `Omega`
//! and the contour moments of the inverse transfer function.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contour::{Contour, HalfPlane};
use crate::error::{Error, Result};
use crate::linalg::{condition_number, eigenvalues, identity, kernel_basis, op_norm, rank, sigma_min, solve, spectral_matching_distance, CMat, CVec};
use crate::model::ProblemInstance;
use crate::rootsolve::RootSolution;
use crate::transfer::Continuation;
use crate::C64;

/// Relative tolerance used to group numerically equal eigenvalues.
pub const CLUSTER_REL_TOL: f64 = 1e-8;
/// Relative singular-value threshold for kernel dimensions.
pub const KERNEL_REL_TOL: f64 = 1e-10;
pub const ILL_CONDITIONED: f64 = 1e12;
pub const CIRCLE_BASE_NODES: usize = 64;
pub const CIRCLE_MAX_NODES: usize = 1 << 14;
pub const CIRCLE_CHANGE_TOL: f64 = 1e-10;
/// Eigenvalues closer than this (relative) to an integration circle are rejected.
pub const CIRCLE_SEPARATION: f64 = 1e-6;
pub const SUBSET_SAMPLES: usize = 1024;
pub const EXHAUSTIVE_SUBSET_LIMIT: usize = 10;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Orthonormal basis of the column span of `m` (singular values above `tol`).
fn orth(m: &CMat, tol: f64) -> CMat {
    if m.ncols() == 0 {
        return CMat::zeros(m.nrows(), 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > tol)
        .collect();
    CMat::from_fn(m.nrows(), keep.len(), |r, k| u[(r, keep[k])])
}

/// Leading `count` left singular vectors of `m`.
fn leading_directions(m: &CMat, count: usize) -> Vec<CVec> {
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap_or(std::cmp::Ordering::Equal));
    order.into_iter().take(count).map(|i| u.column(i).into_owned()).collect()
}

fn hstack(blocks: &[&CMat], rows: usize) -> CMat {
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMat::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.view_mut((0, at), (rows, b.ncols())).copy_from(*b);
        at += b.ncols();
    }
    out
}

/// One eigenvalue with its algebraic eigenspace.
#[derive(Debug, Clone)]
pub struct EigenBlock {
    pub value: C64,
    pub multiplicity: usize,
    /// Jordan chains `[psi_1, ..., psi_len]` with `(H - value) psi_i = psi_{i-1}`, `psi_0 = 0`.
    pub chains: Vec<Vec<CVec>>,
    /// `||(H - value) psi_i - psi_{i-1}||` in chain order.
    pub residuals: Vec<f64>,
}

impl EigenBlock {
    pub fn geometric_multiplicity(&self) -> usize {
        self.chains.len()
    }

    pub fn root_vectors(&self) -> impl Iterator<Item = &CVec> {
        self.chains.iter().flatten()
    }
}

#[derive(Debug, Clone)]
pub struct EigenStructure {
    pub blocks: Vec<EigenBlock>,
    pub dim: usize,
    pub scale: f64,
    /// Condition number of the column-normalised root-vector matrix.
    pub condition: f64,
    pub ill_conditioned: bool,
}

impl EigenStructure {
    /// Eigenvalues repeated according to algebraic multiplicity.
    pub fn eigenvalues(&self) -> Vec<C64> {
        self.blocks
            .iter()
            .flat_map(|b| std::iter::repeat_n(b.value, b.multiplicity))
            .collect()
    }

    /// Root vectors as unit-norm columns.
    pub fn root_matrix(&self) -> CMat {
        let vectors: Vec<&CVec> = self.blocks.iter().flat_map(|b| b.root_vectors()).collect();
        let mut m = CMat::zeros(self.dim, vectors.len());
        for (k, v) in vectors.iter().enumerate() {
            let n = v.norm();
            let v = if n > 0.0 { *v / c(n) } else { (*v).clone() };
            m.set_column(k, &v);
        }
        m
    }

    pub fn max_residual(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.residuals.iter().copied())
            .fold(0.0, f64::max)
    }
}

/// Splits the kernel of a nilpotent `n` (acting on a small space) into Jordan chains.
fn jordan_chains(n: &CMat, scale: f64) -> Vec<Vec<CVec>> {
    let k = n.nrows();
    let mut powers = vec![identity(k)];
    let mut kernels = vec![CMat::zeros(k, 0)];
    let mut dims = vec![0usize];
    let mut thr = 1.0;
    while *dims.last().expect("non-empty") < k {
        let j = powers.len();
        let p = n * &powers[j - 1];
        thr *= scale;
        let threshold = KERNEL_REL_TOL * thr;
        let mut d = k - rank(&p, threshold);
        d = d.max(dims[j - 1] + 1);
        if j == k {
            d = k;
        }
        let d = d.min(k);
        let basis = kernel_basis(&p, threshold, d);
        kernels.push(basis.columns(0, d).into_owned());
        dims.push(d);
        powers.push(p);
    }
    let top = dims.len() - 1;
    // chains[c] holds the chain vectors from the top down (psi_len, psi_len-1, ...).
    let mut chains: Vec<Vec<CVec>> = Vec::new();
    for j in (1..=top).rev() {
        let existing: Vec<CVec> = chains.iter().map(|ch| ch[ch.len() - j].clone()).collect();
        let existing = if existing.is_empty() { CMat::zeros(k, 0) } else { CMat::from_columns(&existing) };
        let spanned = orth(&hstack(&[&kernels[j - 1], &existing], k), 1e-8);
        let projector = identity(k) - &spanned * spanned.adjoint();
        let candidates = &projector * &kernels[j];
        let count = (dims[j] - dims[j - 1]).saturating_sub(existing.ncols());
        for v in leading_directions(&candidates, count) {
            let mut chain = vec![v];
            for _ in 1..j {
                let next = n * chain.last().expect("non-empty");
                chain.push(next);
            }
            chains.push(chain);
        }
    }
    chains.into_iter().map(|mut ch| {
        ch.reverse();
        ch
    })
    .collect()
}

/// Eigenvalues, algebraic multiplicities and root vectors of a square matrix.
pub fn eigendecompose(h: &CMat) -> Result<EigenStructure> {
    let dim = h.nrows();
    if h.ncols() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: h.ncols() });
    }
    let scale = 1.0 + op_norm(h);
    let mut values = eigenvalues(h)?;
    values.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap_or(std::cmp::Ordering::Equal).then(a.im.partial_cmp(&b.im).unwrap_or(std::cmp::Ordering::Equal)));
    // single-linkage clustering
    let tol = CLUSTER_REL_TOL * scale;
    let mut clusters: Vec<Vec<C64>> = Vec::new();
    let mut assigned = vec![false; values.len()];
    for i in 0..values.len() {
        if assigned[i] {
            continue;
        }
        assigned[i] = true;
        let mut group = vec![values[i]];
        let mut grew = true;
        while grew {
            grew = false;
            for j in 0..values.len() {
                if !assigned[j] && group.iter().any(|g| (g - values[j]).norm() <= tol) {
                    assigned[j] = true;
                    group.push(values[j]);
                    grew = true;
                }
            }
        }
        clusters.push(group);
    }
    let mut blocks = Vec::with_capacity(clusters.len());
    for group in clusters {
        let k = group.len();
        let value = group.iter().sum::<C64>() / c(k as f64);
        let shifted = h - identity(dim) * value;
        let mut power = shifted.clone();
        for _ in 1..k {
            power = &power * &shifted;
        }
        let basis = kernel_basis(&power, 0.0, k).columns(0, k).into_owned();
        let small = basis.adjoint() * &shifted * &basis;
        let chains: Vec<Vec<CVec>> = jordan_chains(&small, scale)
            .into_iter()
            .map(|ch| ch.into_iter().map(|v| &basis * v).collect())
            .collect();
        let mut residuals = Vec::with_capacity(k);
        for ch in &chains {
            for (i, v) in ch.iter().enumerate() {
                let mut r = &shifted * v;
                if i > 0 {
                    r -= &ch[i - 1];
                }
                residuals.push(r.norm());
            }
        }
        blocks.push(EigenBlock {
            value,
            multiplicity: k,
            chains,
            residuals,
        });
    }
    let mut structure = EigenStructure {
        blocks,
        dim,
        scale,
        condition: f64::INFINITY,
        ill_conditioned: true,
    };
    let roots = structure.root_matrix();
    structure.condition = condition_number(&roots);
    structure.ill_conditioned = !(structure.condition <= ILL_CONDITIONED);
    Ok(structure)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: C64,
    pub radius: f64,
}

impl Circle {
    pub fn contains(&self, z: C64) -> bool {
        (z - self.center).norm() < self.radius
    }
}

fn check_circle(h: &CMat, circle: &Circle, scale: f64) -> Result<()> {
    for z in eigenvalues(h)? {
        let distance = ((z - circle.center).norm() - circle.radius).abs();
        if distance <= CIRCLE_SEPARATION * scale {
            return Err(Error::EigenvalueOnCircle {
                eigenvalue: z,
                center: circle.center,
                radius: circle.radius,
                distance,
            });
        }
    }
    Ok(())
}

/// `-(1/2 pi i)` times the sum over circles of the integrals of the components of `f`.
/// The trapezoid rule starts at `base` nodes per circle and is doubled (reusing the
/// previous nodes) until every component changes by less than the tolerance.
fn circle_integrals<F>(circles: &[Circle], m: usize, count: usize, base: usize, f: F) -> Result<Vec<CMat>>
where
    F: Fn(C64) -> Result<Vec<CMat>> + Sync,
{
    // -(1/2 pi i) = i/(2 pi)
    let factor = C64::new(0.0, 1.0 / (2.0 * std::f64::consts::PI));
    // sums of f(z) (z - center) over the nodes with angles 2 pi k / n for the given k
    let partial = |n: usize, odd_only: bool| -> Result<Vec<CMat>> {
        let mut nodes = Vec::new();
        for g in circles {
            for k in (0..n).filter(|k| !odd_only || k % 2 == 1) {
                let e = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / n as f64);
                nodes.push((g.center + e * g.radius, e * g.radius));
            }
        }
        let terms = nodes
            .par_iter()
            .map(|&(z, w)| Ok(f(z)?.into_iter().map(|v| v * w).collect::<Vec<CMat>>()))
            .collect::<Result<Vec<Vec<CMat>>>>()?;
        let mut acc = vec![CMat::zeros(m, m); count];
        for t in terms {
            for (a, v) in acc.iter_mut().zip(t) {
                *a += v;
            }
        }
        Ok(acc)
    };
    // dz = i (z - center) 2 pi / n
    let value = |sums: &[CMat], n: usize| -> Vec<CMat> {
        let w = C64::new(0.0, 2.0 * std::f64::consts::PI / n as f64) * factor;
        sums.iter().map(|s| s * w).collect()
    };
    let mut n = base.max(4);
    let mut sums = partial(n, false)?;
    let mut prev = value(&sums, n);
    while n < CIRCLE_MAX_NODES {
        n *= 2;
        for (s, extra) in sums.iter_mut().zip(partial(n, true)?) {
            *s += extra;
        }
        let next = value(&sums, n);
        let converged = next
            .iter()
            .zip(&prev)
            .all(|(a, b)| (a - b).norm() <= CIRCLE_CHANGE_TOL * (1.0 + a.norm()));
        prev = next;
        if converged {
            break;
        }
    }
    Ok(prev)
}

fn circle_integral<F>(circles: &[Circle], m: usize, base: usize, f: F) -> Result<CMat>
where
    F: Fn(C64) -> Result<CMat> + Sync,
{
    let mut v = circle_integrals(circles, m, 1, base, |z| Ok(vec![f(z)?]))?;
    Ok(v.remove(0))
}

/// Riesz projection `-(1/2 pi i) \oint (H - z)^{-1} dz` over a positively oriented circle.
pub fn riesz_projection(h: &CMat, circle: &Circle, quad_order: usize) -> Result<CMat> {
    let m = h.nrows();
    let scale = 1.0 + op_norm(h);
    check_circle(h, circle, scale)?;
    circle_integral(std::slice::from_ref(circle), m, quad_order, |z| {
        solve(&(h - identity(m) * z), &identity(m))
    })
}

/// Circles of the projection family: an optional big circle over the leading cluster and
/// one circle per subsequent distinct eigenvalue of `A1`.
#[derive(Debug, Clone)]
pub struct ProjectionFamily {
    pub i0: usize,
    pub r: f64,
    pub circles: Vec<Circle>,
    /// Indices (into the sorted eigenvalue list of `A1`) enclosed by each circle.
    pub clusters: Vec<Vec<usize>>,
    pub projections: Vec<CMat>,
    /// Rank of each projection (rounded trace).
    pub ranks: Vec<usize>,
    /// Number of eigenvalues of `H1` (with multiplicity) inside each circle.
    pub enclosed: Vec<usize>,
    pub dim: usize,
}

/// Builds the projection family for `root` with cluster radius `r`; the first `i0 - 1`
/// distinct eigenvalues of `A1` share one circle (1-based `i0 >= 1`).
pub fn build_projection_family(instance: &ProblemInstance, root: &RootSolution, r: f64, i0: usize) -> Result<ProjectionFamily> {
    let x_norm = op_norm(&root.x);
    if !(r > x_norm) {
        return Err(Error::RadiusTooSmall { r, x_norm });
    }
    let mut distinct: Vec<(f64, Vec<usize>)> = Vec::new();
    let mut order: Vec<usize> = (0..instance.a1.len()).collect();
    order.sort_by(|&a, &b| instance.a1[a].partial_cmp(&instance.a1[b]).unwrap_or(std::cmp::Ordering::Equal));
    for idx in order {
        let v = instance.a1[idx];
        match distinct.last_mut() {
            Some((last, members)) if *last == v => members.push(idx),
            _ => distinct.push((v, vec![idx])),
        }
    }
    let i0 = i0.max(1).min(distinct.len() + 1);
    for i in i0.max(2)..=distinct.len() {
        let gap = distinct[i - 1].0 - distinct[i - 2].0;
        if !(gap > 2.0 * r) {
            return Err(Error::GapConditionViolated { index: i, gap, two_r: 2.0 * r });
        }
    }
    let mut circles = Vec::new();
    let mut clusters = Vec::new();
    if i0 > 1 {
        let first = distinct[0].0;
        let last = distinct[i0 - 2].0;
        circles.push(Circle {
            center: c(0.5 * (first + last)),
            radius: 0.5 * (last - first) + r,
        });
        clusters.push(distinct[..i0 - 1].iter().flat_map(|d| d.1.iter().copied()).collect());
    }
    for d in &distinct[i0 - 1..] {
        circles.push(Circle { center: c(d.0), radius: r });
        clusters.push(d.1.clone());
    }
    let m = instance.dim();
    let eig = eigenvalues(&root.h1)?;
    let projections = circles
        .iter()
        .map(|g| riesz_projection(&root.h1, g, CIRCLE_BASE_NODES))
        .collect::<Result<Vec<_>>>()?;
    let ranks = projections.iter().map(|q| q.trace().re.round().max(0.0) as usize).collect();
    let enclosed = circles.iter().map(|g| eig.iter().filter(|&&z| g.contains(z)).count()).collect();
    Ok(ProjectionFamily {
        i0,
        r,
        circles,
        clusters,
        projections,
        ranks,
        enclosed,
        dim: m,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BasisFamilyReport {
    /// `||sum_i Q_i - I||`
    pub full_sum_defect: f64,
    pub idempotency_defect: f64,
    pub orthogonality_defect: f64,
    /// Largest `||sum_{i in S} Q_i||` over the evaluated subsets.
    pub c_max: f64,
    pub subsets_evaluated: usize,
    pub exhaustive: bool,
    /// `||sum_{i <= n} Q_i - I||` for `n = 1..`.
    pub partial_sum_residuals: Vec<f64>,
    /// Rank of the stacked range bases of all projections.
    pub direct_sum_rank: usize,
    pub dim: usize,
}

pub const SUBSET_SEED: u64 = 0x51_6d_65_74;

/// Finite-dimensional diagnostics of the projection family.
pub fn basis_family_report(family: &ProjectionFamily) -> BasisFamilyReport {
    let m = family.dim;
    let q = &family.projections;
    let k = q.len();
    let mut total = CMat::zeros(m, m);
    let mut partial = Vec::with_capacity(k);
    for p in q {
        total += p;
        partial.push(op_norm(&(&total - identity(m))));
    }
    let full_sum_defect = op_norm(&(&total - identity(m)));
    let mut idempotency_defect: f64 = 0.0;
    let mut orthogonality_defect: f64 = 0.0;
    for i in 0..k {
        idempotency_defect = idempotency_defect.max(op_norm(&(&q[i] * &q[i] - &q[i])));
        for j in 0..k {
            if i != j {
                orthogonality_defect = orthogonality_defect.max(op_norm(&(&q[i] * &q[j])));
            }
        }
    }
    let subsets: Vec<Vec<bool>> = if k <= EXHAUSTIVE_SUBSET_LIMIT {
        (0..(1usize << k)).map(|mask| (0..k).map(|i| mask >> i & 1 == 1).collect()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(SUBSET_SEED);
        (0..SUBSET_SAMPLES).map(|_| (0..k).map(|_| rng.gen_bool(0.5)).collect()).collect()
    };
    let c_max = subsets
        .par_iter()
        .map(|s| {
            let mut acc = CMat::zeros(m, m);
            for (p, &on) in q.iter().zip(s) {
                if on {
                    acc += p;
                }
            }
            op_norm(&acc)
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .fold(0.0, f64::max);
    let ranges: Vec<CMat> = q
        .iter()
        .zip(&family.ranks)
        .map(|(p, &r)| orth(p, 0.5).columns(0, r.min(orth(p, 0.5).ncols())).into_owned())
        .collect();
    let refs: Vec<&CMat> = ranges.iter().collect();
    let stacked = hstack(&refs, m);
    BasisFamilyReport {
        full_sum_defect,
        idempotency_defect,
        orthogonality_defect,
        c_max,
        subsets_evaluated: subsets.len(),
        exhaustive: k <= EXHAUSTIVE_SUBSET_LIMIT,
        partial_sum_residuals: partial,
        direct_sum_rank: rank(&stacked, 1e-10),
        dim: m,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletenessReport {
    pub rank: usize,
    pub dim: usize,
    pub condition_number: f64,
    pub complete: bool,
}

/// Rank and conditioning of the root-vector system.
pub fn completeness_report(eig: &EigenStructure) -> CompletenessReport {
    let roots = eig.root_matrix();
    let r = rank(&roots, KERNEL_REL_TOL * roots.ncols().max(1) as f64);
    CompletenessReport {
        rank: r,
        dim: eig.dim,
        condition_number: condition_number(&roots),
        complete: r == eig.dim && roots.ncols() == eig.dim,
    }
}

/// Circles of radius `(r_min + d0/2)/2` around each distinct eigenvalue of `A1`.
pub fn moment_circles(instance: &ProblemInstance, root: &RootSolution) -> Result<Vec<Circle>> {
    let d0 = root.certificate.d0;
    let r_min = root.certificate.r_min.unwrap_or(0.5 * d0);
    let radius = 0.5 * (r_min + 0.5 * d0);
    let mut centers: Vec<f64> = instance.a1.clone();
    centers.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    centers.dedup();
    if centers.windows(2).any(|w| w[1] - w[0] <= 2.0 * radius) {
        return Err(Error::OverlappingCircles);
    }
    Ok(centers.into_iter().map(|x| Circle { center: c(x), radius }).collect())
}

/// `-(1/2 pi i) \oint_gamma z^k M1(z, Gamma)^{-1} dz` over the union of circles `gamma`.
pub fn inverse_transfer_moment(cont: &Continuation, gamma: &[Circle], k: u32) -> Result<CMat> {
    let mut v = inverse_transfer_moments(cont, gamma, k + 1)?;
    Ok(v.remove(k as usize))
}

/// Moments `k = 0..count` of the inverse transfer function, sharing the node solves.
pub fn inverse_transfer_moments(cont: &Continuation, gamma: &[Circle], count: u32) -> Result<Vec<CMat>> {
    let m = cont.dim();
    let floor = 1e-10 * cont.scale;
    circle_integrals(gamma, m, count as usize, CIRCLE_BASE_NODES, |z| {
        let m1 = cont.m1_on_rule(z);
        let s = sigma_min(&m1);
        if !(s > floor) {
            return Err(Error::SingularTransferOnGamma { z, sigma_min: s });
        }
        let inv = solve(&m1, &identity(m))?;
        Ok((0..count).map(|k| &inv * z.powu(k)).collect())
    })
}

#[derive(Debug, Clone)]
pub struct OmegaReport {
    /// `Omega` on the lower-half-plane contour.
    pub omega_minus: CMat,
    /// `Omega` on the mirrored upper-half-plane contour.
    pub omega_plus: CMat,
    pub norm: f64,
    /// `||Omega^- - (Omega^+)^*||`
    pub adjoint_defect: f64,
    /// Largest `||moment0 (I + Omega) - I||` over both half-planes.
    pub moment0_defect: f64,
    /// Largest `||moment1 (I + Omega) - H1||` over both half-planes.
    pub moment1_defect: f64,
    /// Matching distance between `conj(sigma(H1^-))` and `sigma(H1^+)`.
    pub conjugation_defect: f64,
    pub scale: f64,
}

/// `sum_j w_j (Hc^* - mu_j)^{-1} K'(mu_j) (H - mu_j)^{-1}` on the rule of `cont`.
fn omega_on(cont: &Continuation, h: &CMat, h_conj: &CMat) -> Result<CMat> {
    let m = cont.dim();
    cont.check_separation(h)?;
    let left = h_conj.adjoint();
    let terms = cont
        .rule
        .nodes
        .par_iter()
        .zip(cont.weighted_kernel().par_iter())
        .map(|(&mu, k)| {
            let shift = identity(m) * mu;
            let a = solve(&(&left - &shift), k)?;
            crate::linalg::solve_right(&a, &(h - &shift))
        })
        .collect::<Result<Vec<CMat>>>()?;
    let mut acc = CMat::zeros(m, m);
    for t in terms {
        acc += t;
    }
    Ok(acc)
}

/// `Omega` for both half-planes, the adjoint relation and the moment identities.
pub fn omega_operator(instance: &ProblemInstance, contour: &Contour, root_plus: &RootSolution, root_minus: &RootSolution) -> Result<OmegaReport> {
    if root_plus.l != HalfPlane::Upper || root_minus.l != HalfPlane::Lower {
        return Err(Error::Geometry("roots must be supplied as (upper, lower)".into()));
    }
    let (lower, upper) = match contour.half_plane {
        HalfPlane::Lower => (contour.clone(), contour.mirror()),
        HalfPlane::Upper => (contour.mirror(), contour.clone()),
    };
    let cont_minus = Continuation::new(instance, &lower)?;
    let cont_plus = Continuation::new(instance, &upper)?;
    let omega_minus = omega_on(&cont_minus, &root_minus.h1, &root_plus.h1)?;
    let omega_plus = omega_on(&cont_plus, &root_plus.h1, &root_minus.h1)?;
    let adjoint_defect = op_norm(&(&omega_minus - omega_plus.adjoint()));
    let norm = op_norm(&omega_minus).max(op_norm(&omega_plus));
    let m = instance.dim();
    let mut moment0_defect: f64 = 0.0;
    let mut moment1_defect: f64 = 0.0;
    for (cont, root, omega) in [(&cont_minus, root_minus, &omega_minus), (&cont_plus, root_plus, &omega_plus)] {
        let gamma = moment_circles(instance, root)?;
        let ip = identity(m) + omega;
        let moments = inverse_transfer_moments(cont, &gamma, 2)?;
        let (m0, m1) = (&moments[0], &moments[1]);
        moment0_defect = moment0_defect.max(op_norm(&(m0 * &ip - identity(m))));
        moment1_defect = moment1_defect.max(op_norm(&(m1 * &ip - &root.h1)));
    }
    let conj_minus: Vec<C64> = eigenvalues(&root_minus.h1)?.into_iter().map(|z| z.conj()).collect();
    let conjugation_defect = spectral_matching_distance(&conj_minus, &eigenvalues(&root_plus.h1)?);
    Ok(OmegaReport {
        omega_minus,
        omega_plus,
        norm,
        adjoint_defect,
        moment0_defect,
        moment1_defect,
        conjugation_defect,
        scale: cont_minus.scale.max(cont_plus.scale),
    })
}

/// `sigma_min(M1(z, Gamma))` on a grid over the bounding box of the `d0/2`-vicinity of
/// `sigma(A1)`; points outside the vicinity are `None`.
#[derive(Debug, Clone)]
pub struct SigmaLandscape {
    pub nx: usize,
    pub ny: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Row-major `values[iy * nx + ix]`.
    pub values: Vec<Option<f64>>,
}

impl SigmaLandscape {
    pub fn cell(&self) -> (f64, f64) {
        let dx = if self.nx > 1 { self.x[1] - self.x[0] } else { 0.0 };
        let dy = if self.ny > 1 { self.y[1] - self.y[0] } else { 0.0 };
        (dx, dy)
    }

    pub fn point(&self, ix: usize, iy: usize) -> C64 {
        C64::new(self.x[ix], self.y[iy])
    }

    /// Grid points whose value does not exceed any of their (defined) 8 neighbours.
    pub fn local_minima(&self) -> Vec<(C64, f64)> {
        let mut out = Vec::new();
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                let Some(v) = self.values[iy * self.nx + ix] else { continue };
                let mut is_min = true;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let (jx, jy) = (ix as i64 + dx, iy as i64 + dy);
                        if jx < 0 || jy < 0 || jx >= self.nx as i64 || jy >= self.ny as i64 {
                            continue;
                        }
                        if let Some(w) = self.values[jy as usize * self.nx + jx as usize] {
                            if w < v {
                                is_min = false;
                            }
                        }
                    }
                }
                if is_min {
                    out.push((self.point(ix, iy), v));
                }
            }
        }
        out
    }

    /// Local minima below `threshold` farther than `cells` grid cells from every point of
    /// `spectrum`.
    pub fn spurious_minima(&self, threshold: f64, spectrum: &[C64], cells: f64) -> Vec<(C64, f64)> {
        let (dx, dy) = self.cell();
        let reach = cells * dx.hypot(dy);
        self.local_minima()
            .into_iter()
            .filter(|&(z, v)| v < threshold && spectrum.iter().all(|s| (z - s).norm() > reach))
            .collect()
    }
}

pub fn sigma_min_landscape(cont: &Continuation, n: usize) -> SigmaLandscape {
    let half = 0.5 * cont.d0();
    let a1 = &cont.instance.a1;
    let lo = a1.iter().copied().fold(f64::INFINITY, f64::min) - half;
    let hi = a1.iter().copied().fold(f64::NEG_INFINITY, f64::max) + half;
    let axis = |a: f64, b: f64| -> Vec<f64> {
        (0..n)
            .map(|i| if n == 1 { 0.5 * (a + b) } else { a + (b - a) * i as f64 / (n - 1) as f64 })
            .collect()
    };
    let x = axis(lo, hi);
    let y = axis(-half, half);
    let values = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let z = C64::new(x[k % n], y[k / n]);
            (cont.distance_to_a1(z) <= half).then(|| sigma_min(&cont.m1_on_rule(z)))
        })
        .collect();
    SigmaLandscape { nx: n, ny: n, x, y, values }
}
