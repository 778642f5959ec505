//! Small dense complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::C64;

pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub fn diag_real(values: &[f64]) -> CMat {
    let n = values.len();
    let mut m = CMat::zeros(n, n);
    for (i, v) in values.iter().enumerate() {
        m[(i, i)] = C64::new(*v, 0.0);
    }
    m
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Spectral (operator 2-) norm.
pub fn op_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.iter().all(|z| *z == C64::new(0.0, 0.0)) {
        return 0.0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    sv.iter().cloned().fold(0.0, f64::max)
}

pub fn singular_values(m: &CMat) -> Vec<f64> {
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().cloned().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    sv
}

pub fn sigma_min(m: &CMat) -> f64 {
    singular_values(m).last().cloned().unwrap_or(0.0)
}

/// Ratio of the largest to the smallest singular value; `inf` for singular input.
pub fn condition_number(m: &CMat) -> f64 {
    let sv = singular_values(m);
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

pub fn is_finite(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Solves `a * x = b` by partial-pivoting LU.
pub fn solve(a: &CMat, b: &CMat) -> Result<CMat> {
    let lu = a.clone().lu();
    lu.solve(b).ok_or(Error::LinearAlgebra("singular matrix in LU solve"))
}

/// Returns `b * a^{-1}` via a transposed solve.
pub fn solve_right(b: &CMat, a: &CMat) -> Result<CMat> {
    let at = a.transpose();
    let bt = b.transpose();
    Ok(solve(&at, &bt)?.transpose())
}

pub fn inverse(a: &CMat) -> Result<CMat> {
    solve(a, &identity(a.nrows()))
}

/// Eigenvalues of a general complex matrix from the diagonal of its Schur form.
pub fn eigenvalues(m: &CMat) -> Result<Vec<C64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    if n == 1 {
        return Ok(vec![m[(0, 0)]]);
    }
    let schur = m
        .clone()
        .try_schur(f64::EPSILON, 10_000)
        .ok_or(Error::LinearAlgebra("Schur iteration did not converge"))?;
    let (_, t) = schur.unpack();
    Ok((0..n).map(|i| t[(i, i)]).collect())
}

/// Orthonormal basis (as columns) of the numerical kernel of `m`, using singular values
/// below `threshold`. `min_dim` forces at least that many kernel vectors.
pub fn kernel_basis(m: &CMat, threshold: f64, min_dim: usize) -> CMat {
    let n = m.ncols();
    // Pad to square so that all right singular vectors are available.
    let square = if m.nrows() < n {
        let mut padded = CMat::zeros(n, n);
        padded.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
        padded
    } else {
        m.clone()
    };
    let svd = square.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[a]
            .partial_cmp(&svd.singular_values[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let below = order
        .iter()
        .filter(|&&i| svd.singular_values[i] <= threshold)
        .count();
    let dim = below.max(min_dim).min(n);
    let mut basis = CMat::zeros(n, dim);
    for (c, &i) in order.iter().take(dim).enumerate() {
        for r in 0..n {
            basis[(r, c)] = v_t[(i, r)].conj();
        }
    }
    basis
}

/// Numerical rank with an absolute singular-value threshold.
pub fn rank(m: &CMat, threshold: f64) -> usize {
    singular_values(m).iter().filter(|&&s| s > threshold).count()
}

pub fn point_segment_distance(p: C64, a: C64, b: C64) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a) * ab.conj()).re / len2;
    let t = t.clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Greedy minimum-distance matching of two spectra; returns the largest matched distance.
/// Unequal lengths give `inf`.
pub fn spectral_matching_distance(a: &[C64], b: &[C64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(a.len() * b.len());
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            pairs.push(((x - y).norm(), i, j));
        }
    }
    pairs.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for (d, i, j) in pairs {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            worst = worst.max(d);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn norm_of_diagonal() {
        let m = diag_real(&[1.0, -3.0, 2.0]);
        assert!((op_norm(&m) - 3.0).abs() < 1e-14);
        assert!((sigma_min(&m) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn schur_eigenvalues_of_triangular() {
        let m = CMat::from_row_slice(
            3,
            3,
            &[c(1.0, 1.0), c(2.0, 0.0), c(0.0, 3.0), c(0.0, 0.0), c(-1.0, 0.5), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(4.0, 0.0)],
        );
        let mut ev = eigenvalues(&m).unwrap();
        ev.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        assert!((ev[0] - c(-1.0, 0.5)).norm() < 1e-12);
        assert!((ev[1] - c(1.0, 1.0)).norm() < 1e-12);
        assert!((ev[2] - c(4.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn kernel_of_rank_deficient() {
        let m = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)]);
        let k = kernel_basis(&m, 1e-12, 0);
        assert_eq!(k.ncols(), 1);
        assert!((&m * &k).norm() < 1e-14);
    }

    #[test]
    fn segment_distance() {
        let d = point_segment_distance(c(1.0, 0.0), c(0.0, -1.0), c(3.0, -1.0));
        assert!((d - 1.0).abs() < 1e-15);
        let d = point_segment_distance(c(-1.0, 0.0), c(0.0, 0.0), c(3.0, 0.0));
        assert!((d - 1.0).abs() < 1e-15);
    }

    #[test]
    fn right_solve_matches_inverse() {
        let a = CMat::from_row_slice(2, 2, &[c(2.0, 1.0), c(0.5, 0.0), c(-1.0, 0.0), c(3.0, -1.0)]);
        let b = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(0.0, 1.0), c(1.0, 1.0)]);
        let x = solve_right(&b, &a).unwrap();
        assert!((&x * &a - &b).norm() < 1e-13);
    }
}
